"""Run a ModelPlan forward and backward over batched inputs.

Backprop is hand-wired per layer kind; there is no autodiff graph. Params
live in the flat list produced by model.init_params, indexed by each layer's
param_slot (weight at 2*slot, bias at 2*slot+1).
"""

from __future__ import annotations

import numpy as np

from . import nn
from .model import ModelPlan


def forward(plan: ModelPlan, params, x, *, train=False, rng=None):
    """Forward pass to logits. x: (N, H, W, C) or (H, W, C).

    Returns (logits, caches). Dropout is active only when train=True, in
    which case rng must be supplied. The final dense layer's softmax
    activation is not applied here; use predict_probs or the cross-entropy
    helpers, which fuse it with the loss.
    """
    a = np.asarray(x)
    single = a.ndim == 3
    if single:
        a = a[None]
    caches = []
    for layer in plan.layers:
        if layer.kind == "conv3x3":
            w, b = params[2 * layer.param_slot], params[2 * layer.param_slot + 1]
            pre = nn.conv3x3_forward(a, w, b)
            caches.append(("conv3x3", a, pre))
            a = nn.relu(pre) if layer.activation == "relu" else pre
        elif layer.kind == "dense":
            w, b = params[2 * layer.param_slot], params[2 * layer.param_slot + 1]
            pre = nn.dense_forward(a, w, b)
            caches.append(("dense", a, pre))
            a = nn.relu(pre) if layer.activation == "relu" else pre
        elif layer.kind == "maxpool2x2":
            a, mask = nn.maxpool2x2_forward(a)
            caches.append(("maxpool2x2", mask))
        elif layer.kind == "relu":
            caches.append(("relu", a))
            a = nn.relu(a)
        elif layer.kind == "flatten":
            caches.append(("flatten", a.shape))
            a = a.reshape(a.shape[0], -1)
        elif layer.kind == "dropout":
            mode = "train" if train else "eval"
            a, mask = nn.dropout(a, layer.rate, mode, rng)
            caches.append(("dropout", mask))
        elif layer.kind == "softmax":
            caches.append(("softmax", None))
            a = nn.softmax(a)
        else:  # pragma: no cover - LayerSpec validates kinds
            raise ValueError(f"unknown layer kind {layer.kind!r}")
    logits = a[0] if single else a
    return logits, caches


def backward(plan: ModelPlan, params, caches, grad_logits):
    """Backward pass from grad_logits; returns grads aligned with params."""
    grads = [np.zeros_like(p) for p in params]
    g = np.asarray(grad_logits)
    if g.ndim == 1:
        g = g[None]
    for layer, cache in zip(reversed(plan.layers), reversed(caches)):
        kind = cache[0]
        if kind == "conv3x3":
            _, x_in, pre = cache
            if layer.activation == "relu":
                g = nn.relu_backward(g, pre)
            w = params[2 * layer.param_slot]
            g, gw, gb = nn.conv3x3_backward(g, x_in, w)
            grads[2 * layer.param_slot] = gw
            grads[2 * layer.param_slot + 1] = gb
        elif kind == "dense":
            _, x_in, pre = cache
            if layer.activation == "relu":
                g = nn.relu_backward(g, pre)
            w = params[2 * layer.param_slot]
            g, gw, gb = nn.dense_backward(g, x_in, w)
            grads[2 * layer.param_slot] = gw
            grads[2 * layer.param_slot + 1] = gb
        elif kind == "maxpool2x2":
            g = nn.maxpool2x2_backward(g, cache[1])
        elif kind == "relu":
            g = nn.relu_backward(g, cache[1])
        elif kind == "flatten":
            g = g.reshape(cache[1])
        elif kind == "dropout":
            g = nn.dropout_backward(g, cache[1])
        elif kind == "softmax":
            raise ValueError(
                "standalone softmax layers have no backward here; "
                "fuse them with the cross-entropy loss"
            )
    return grads


def predict_probs(plan: ModelPlan, params, x):
    """Class probabilities for x (dropout off, softmax applied)."""
    logits, _ = forward(plan, params, x, train=False)
    return nn.softmax(logits)
