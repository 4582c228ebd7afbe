"""Ablation sweeps: shrink channel growth (ICF) or the dense-layer widths.

Every sweep point reuses one data split and one training seed so that the
reported differences come from architecture, not sampling. Parameter totals
come straight from model.count_params and are exact.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, replace

from .model import BaselineConfig, build_plan, count_params, init_params
from .training import SplitSpec, TrainConfig, split_dataset, stack_samples, train_arrays

DEFAULT_ICF_GRID = (2.0, 1.9, 1.8, 1.7, 1.6, 1.5, 1.4, 1.3, 1.2, 1.1, 1.0)

SWEEP_HEADER = ("label", "icf", "fc_neurons", "total_params", "train_acc", "val_acc", "status")


@dataclass(frozen=True)
class SweepPoint:
    label: str
    config: BaselineConfig
    total_params: int
    train_accuracy: float | None
    val_accuracy: float | None
    status: str = "ok"


def icf_sweep_points(icf_values, base_config: BaselineConfig):
    """One config per ICF value, everything else held at base_config."""
    for v in icf_values:
        if v < 1.0:
            raise ValueError(f"icf value {v} < 1")
    return [replace(base_config, icf=float(v)) for v in icf_values]


def neuron_schedule(start=(48, 24, 3), step=(6, 3, 0), floor_total=12):
    """Dense-width triples from `start` shrinking by `step` per point.

    The last width stays pinned (it must equal the class count). The
    schedule stops before any hidden width would reach zero or the total
    would drop below floor_total. Default: totals 75, 66, ..., 12.
    """
    if any(s <= 0 for s in start):
        raise ValueError(f"start widths must be positive, got {start}")
    if any(s < 0 for s in step):
        raise ValueError(f"step must be nonnegative, got {step}")
    schedule = [tuple(start)]
    if all(s == 0 for s in step):
        return schedule
    while True:
        nxt = tuple(a - b for a, b in zip(schedule[-1], step))
        if any(w <= 0 for w in nxt) or sum(nxt) < floor_total:
            break
        schedule.append(nxt)
    return schedule


def neuron_sweep_points(base_config: BaselineConfig, start=(48, 24, 3), step=(6, 3, 0), floor_total=12):
    """Configs for the dense-width sweep, all else held at base_config."""
    return [replace(base_config, fc_neurons=fc) for fc in neuron_schedule(start, step, floor_total)]


def _point_label(config: BaselineConfig, mode: str) -> str:
    if mode == "icf":
        return f"icf={config.icf:g}"
    return f"neurons={sum(config.fc_neurons)}"


def run_sweep(configs, data, train_config: TrainConfig, split_spec: SplitSpec, mode: str = "icf"):
    """Train every config on the same split/seed; returns SweepPoints.

    A failing point is recorded with its error in the status column and the
    sweep continues. Points come back sorted by total_params descending.
    """
    train_s, val_s, _ = split_dataset(data, split_spec)
    x_tr, y_tr = stack_samples(train_s)
    x_va, y_va = stack_samples(val_s)
    points = []
    for config in configs:
        plan = build_plan(config)
        _, _, total = count_params(plan)
        label = _point_label(config, mode)
        try:
            params = init_params(plan, train_config.seed)
            _, records = train_arrays(plan, params, x_tr, y_tr, x_va, y_va, train_config)
            last = records[-1]
            points.append(SweepPoint(label, config, total, last.train_acc, last.val_acc))
        except Exception as exc:
            points.append(SweepPoint(label, config, total, None, None, status=f"failed: {exc}"))
    points.sort(key=lambda p: -p.total_params)
    return points


def sweep_report_csv(points) -> str:
    """Render sweep points as the frontier report CSV."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(SWEEP_HEADER)
    for p in points:
        w.writerow(
            [
                p.label,
                repr(p.config.icf),
                "-".join(str(n) for n in p.config.fc_neurons),
                p.total_params,
                "" if p.train_accuracy is None else repr(p.train_accuracy),
                "" if p.val_accuracy is None else repr(p.val_accuracy),
                p.status,
            ]
        )
    return buf.getvalue()
