"""Mini-batch training with SGD + Nesterov momentum, splits, metrics, and model files.

The recipe is deliberately plain: constant learning rate, no weight decay,
no schedule, no early stopping. Everything is deterministic given (seed,
data, config) in single-threaded mode.
"""

from __future__ import annotations

import csv
import json
import struct
from dataclasses import dataclass

import numpy as np

from . import network, nn
from .model import BaselineConfig, ModelPlan, build_plan

MODEL_MAGIC = b"WRML"
MODEL_FORMAT_VERSION = 1


class TrainingDiverged(RuntimeError):
    """Raised when a non-finite loss appears; carries epoch and batch index."""

    def __init__(self, epoch: int, batch: int, loss: float):
        super().__init__(f"non-finite loss {loss} at epoch {epoch}, batch {batch}")
        self.epoch = epoch
        self.batch = batch


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 0.001
    momentum: float = 0.9
    nesterov: bool = True
    epochs: int = 50
    batch_size: int = 32
    seed: int = 0

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ValueError(f"learning_rate must be > 0, got {self.learning_rate}")
        if not 0.0 <= self.momentum < 1.0:
            raise ValueError(f"momentum must be in [0, 1), got {self.momentum}")
        if self.epochs < 1:
            raise ValueError(f"epochs must be >= 1, got {self.epochs}")
        if self.batch_size < 1:
            raise ValueError(f"batch_size must be >= 1, got {self.batch_size}")


@dataclass(frozen=True)
class SplitSpec:
    test_fraction: float = 0.20
    validation_fraction_of_train: float = 0.20
    seed: int = 0

    def __post_init__(self):
        for v, name in (
            (self.test_fraction, "test_fraction"),
            (self.validation_fraction_of_train, "validation_fraction_of_train"),
        ):
            if not 0.0 < v < 1.0:
                raise ValueError(f"{name} must be in (0, 1), got {v}")


@dataclass(frozen=True)
class EpochRecord:
    epoch: int
    train_loss: float
    train_acc: float
    val_loss: float
    val_acc: float


def split_indices(labels, spec: SplitSpec, n_classes: int = 3):
    """Stratified (train, validation, test) index arrays, deterministic per seed.

    Per class, round(n * test_fraction) samples go to test and
    round(rest * validation_fraction_of_train) of the remainder to
    validation. Splits are disjoint and exhaustive.
    """
    labels = np.asarray(labels)
    rng = np.random.default_rng(spec.seed)
    train, val, test = [], [], []
    for c in range(n_classes):
        idx = np.flatnonzero(labels == c)
        if idx.size == 0:
            raise ValueError(f"class {c} has no samples; cannot split")
        perm = idx[rng.permutation(idx.size)]
        n_test = int(np.floor(idx.size * spec.test_fraction + 0.5))
        rest = idx.size - n_test
        n_val = int(np.floor(rest * spec.validation_fraction_of_train + 0.5))
        test.append(perm[:n_test])
        val.append(perm[n_test : n_test + n_val])
        train.append(perm[n_test + n_val :])
    return (
        np.sort(np.concatenate(train)),
        np.sort(np.concatenate(val)),
        np.sort(np.concatenate(test)),
    )


def split_dataset(samples, spec: SplitSpec):
    """Stratified (train, validation, test) sample lists."""
    labels = [s.label for s in samples]
    tr, va, te = split_indices(labels, spec)
    pick = lambda idx: [samples[i] for i in idx]
    return pick(tr), pick(va), pick(te)


def stack_samples(samples):
    """Stack a sample list into (images (N, S, S, 3) float32, labels (N,))."""
    if not samples:
        raise ValueError("no samples to stack")
    x = np.stack([s.image for s in samples]).astype(np.float32)
    y = np.array([s.label for s in samples], dtype=np.intp)
    return x, y


def sgd_nesterov_step(params, grads, velocity, config: TrainConfig):
    """One SGD step; returns (new params, new velocity), inputs untouched.

    v' = mu*v - lr*g; with Nesterov the lookahead is applied to the
    parameters: theta' = theta + mu*v' - lr*g, otherwise theta' = theta + v'.
    """
    if not (len(params) == len(grads) == len(velocity)):
        raise ValueError(
            f"params/grads/velocity lengths differ: "
            f"{len(params)}/{len(grads)}/{len(velocity)}"
        )
    mu = config.momentum
    lr = config.learning_rate
    new_params, new_velocity = [], []
    for i, (p, g, v) in enumerate(zip(params, grads, velocity)):
        if p.shape != g.shape or p.shape != v.shape:
            raise ValueError(
                f"tensor {i}: shapes differ: param {p.shape}, grad {g.shape}, "
                f"velocity {v.shape}"
            )
        nv = mu * v - lr * g
        np_ = p + mu * nv - lr * g if config.nesterov else p + nv
        new_velocity.append(nv.astype(p.dtype, copy=False))
        new_params.append(np_.astype(p.dtype, copy=False))
    return new_params, new_velocity


def evaluate_arrays(plan: ModelPlan, params, x, y, chunk: int = 256):
    """(mean loss, accuracy, probs) with dropout off; pure w.r.t. params."""
    n = x.shape[0]
    probs = np.empty((n, plan.config.num_classes), dtype=np.float64)
    loss_sum = 0.0
    for start in range(0, n, chunk):
        xb = x[start : start + chunk]
        yb = y[start : start + chunk]
        logits, _ = network.forward(plan, params, xb, train=False)
        p, loss, _ = nn.softmax_crossentropy_batch(logits, yb)
        probs[start : start + chunk] = p
        loss_sum += loss * xb.shape[0]
    preds = np.argmax(probs, axis=1)  # ties -> lowest class index
    acc = float(np.mean(preds == y))
    return loss_sum / n, acc, probs


def evaluate(params, plan: ModelPlan, samples):
    """(accuracy, per-sample probability vectors) over a sample list."""
    x, y = stack_samples(samples)
    _, acc, probs = evaluate_arrays(plan, params, x, y)
    return acc, probs


def train_arrays(plan: ModelPlan, params, x_train, y_train, x_val, y_val, config: TrainConfig):
    """Train on pre-stacked arrays; returns (params, [EpochRecord...]).

    Per-epoch metrics: train loss/accuracy are averaged over the training
    mini-batches as they are visited (dropout active, parameters moving);
    validation is a clean pass with dropout off after each epoch.
    """
    rng = np.random.default_rng(config.seed)
    params = [p.copy() for p in params]
    velocity = [np.zeros_like(p) for p in params]
    n = x_train.shape[0]
    records = []
    for epoch in range(config.epochs):
        order = rng.permutation(n)
        loss_sum = 0.0
        correct = 0
        for bi, start in enumerate(range(0, n, config.batch_size)):
            sel = order[start : start + config.batch_size]
            xb, yb = x_train[sel], y_train[sel]
            logits, caches = network.forward(plan, params, xb, train=True, rng=rng)
            p, loss, grad = nn.softmax_crossentropy_batch(logits, yb)
            if not np.isfinite(loss):
                raise TrainingDiverged(epoch, bi, loss)
            grads = network.backward(plan, params, caches, grad)
            params, velocity = sgd_nesterov_step(params, grads, velocity, config)
            loss_sum += loss * len(sel)
            correct += int(np.sum(np.argmax(p, axis=1) == yb))
        val_loss, val_acc, _ = evaluate_arrays(plan, params, x_val, y_val)
        records.append(
            EpochRecord(
                epoch=epoch,
                train_loss=loss_sum / n,
                train_acc=correct / n,
                val_loss=val_loss,
                val_acc=val_acc,
            )
        )
    return params, records


def train(plan: ModelPlan, params, data, train_config: TrainConfig, split_spec: SplitSpec):
    """Split the data, train on the training split, validate per epoch.

    The test split is left untouched; re-split with the same SplitSpec to
    retrieve it for final reporting.
    """
    if not data:
        raise ValueError("no samples to train on")
    train_s, val_s, _ = split_dataset(data, split_spec)
    x_tr, y_tr = stack_samples(train_s)
    x_va, y_va = stack_samples(val_s)
    return train_arrays(plan, params, x_tr, y_tr, x_va, y_va, train_config)


def overfit_gap(records) -> float:
    """Final-epoch train accuracy minus validation accuracy."""
    if not records:
        raise ValueError("no epoch records")
    last = records[-1]
    return last.train_acc - last.val_acc


METRICS_HEADER = ("epoch", "train_loss", "train_acc", "val_loss", "val_acc")


def write_metrics_csv(records, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(METRICS_HEADER)
        for r in records:
            w.writerow([r.epoch, repr(r.train_loss), repr(r.train_acc), repr(r.val_loss), repr(r.val_acc)])


def read_metrics_csv(path):
    records = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if tuple(header) != METRICS_HEADER:
            raise ValueError(f"unexpected metrics header {header}")
        for row in reader:
            records.append(
                EpochRecord(int(row[0]), float(row[1]), float(row[2]), float(row[3]), float(row[4]))
            )
    return records


def _config_to_dict(config: BaselineConfig) -> dict:
    return {
        "input_size": config.input_size,
        "input_channels": config.input_channels,
        "base_channels": config.base_channels,
        "icf": config.icf,
        "num_blocks": config.num_blocks,
        "fc_neurons": list(config.fc_neurons),
        "dropout_rate": config.dropout_rate,
        "num_classes": config.num_classes,
    }


def _config_from_dict(d: dict) -> BaselineConfig:
    d = dict(d)
    if "fc_neurons" in d:
        d["fc_neurons"] = tuple(d["fc_neurons"])
    return BaselineConfig(**d)


def save_model(plan: ModelPlan, params, path):
    """Write the binary model container (see README for the exact layout)."""
    blob = json.dumps(_config_to_dict(plan.config), sort_keys=True).encode()
    with open(path, "wb") as fh:
        fh.write(MODEL_MAGIC)
        fh.write(struct.pack("<H", MODEL_FORMAT_VERSION))
        fh.write(struct.pack("<I", len(blob)))
        fh.write(blob)
        fh.write(struct.pack("<I", len(params)))
        for t in params:
            arr = np.ascontiguousarray(t, dtype="<f4")
            fh.write(struct.pack("<I", arr.ndim))
            fh.write(struct.pack("<I", arr.size))
            fh.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
            fh.write(arr.tobytes())


def load_model(path):
    """Read a model container back into (plan, params); bit-exact round trip."""
    with open(path, "rb") as fh:
        data = fh.read()

    def need(offset, count, what):
        if offset + count > len(data):
            raise ValueError(f"truncated model file: {what} at byte {offset}")
        return data[offset : offset + count]

    if need(0, 4, "magic") != MODEL_MAGIC:
        raise ValueError(f"magic mismatch at byte 0: {data[:4]!r} != {MODEL_MAGIC!r}")
    (version,) = struct.unpack("<H", need(4, 2, "version"))
    if version != MODEL_FORMAT_VERSION:
        raise ValueError(f"unsupported format version {version} at byte 4")
    (blob_len,) = struct.unpack("<I", need(6, 4, "config length"))
    off = 10
    config = _config_from_dict(json.loads(need(off, blob_len, "config block").decode()))
    off += blob_len
    (n_tensors,) = struct.unpack("<I", need(off, 4, "tensor count"))
    off += 4
    params = []
    for t in range(n_tensors):
        (ndim,) = struct.unpack("<I", need(off, 4, f"tensor {t} dim count"))
        off += 4
        (size,) = struct.unpack("<I", need(off, 4, f"tensor {t} element count"))
        off += 4
        shape = struct.unpack(f"<{ndim}I", need(off, 4 * ndim, f"tensor {t} dims"))
        off += 4 * ndim
        expected = int(np.prod(shape)) if ndim else 1
        if size != expected:
            raise ValueError(
                f"tensor {t}: element count {size} != product of dims {expected} at byte {off}"
            )
        payload = need(off, 4 * size, f"tensor {t} payload")
        off += 4 * size
        params.append(np.frombuffer(payload, dtype="<f4").reshape(shape).copy())
    if off != len(data):
        raise ValueError(f"{len(data) - off} trailing byte(s) after tensor {n_tensors - 1} at byte {off}")
    plan = build_plan(config)
    expected_tensors = 2 * plan.num_param_slots
    if n_tensors != expected_tensors:
        raise ValueError(f"model file has {n_tensors} tensors, plan expects {expected_tensors}")
    for layer in plan.layers:
        if layer.param_slot is None:
            continue
        if layer.kind == "conv3x3":
            want_w = (3, 3, layer.in_channels, layer.out_channels)
            want_b = (layer.out_channels,)
        else:
            want_w = (layer.n_in, layer.n_out)
            want_b = (layer.n_out,)
        got_w = params[2 * layer.param_slot].shape
        got_b = params[2 * layer.param_slot + 1].shape
        if got_w != want_w or got_b != want_b:
            raise ValueError(
                f"{layer.kind} slot {layer.param_slot}: stored shapes {got_w}/{got_b} "
                f"do not match the plan's {want_w}/{want_b}"
            )
    return plan, params
