"""Layer primitives: forward/backward pairs for every layer kind the CNN uses.

All functions are pure and operate on plain numpy arrays. Image-like tensors
are channels-last, (H, W, C) for a single sample or (N, H, W, C) for a batch;
dense tensors are (n,) or (N, n). Dtype is preserved (float32 in training,
float64 in gradient checks); reductions accumulate at the input precision or
higher.

Conventions pinned here because they are load-bearing for tests:
  - conv is 3x3, stride 1, zero "same" padding (spatial dims preserved);
  - max-pool is 2x2, stride 2; ties go to the first maximum in row-major
    window order;
  - ReLU subgradient at exactly 0 is 0;
  - dropout is inverted (survivors scaled by 1/(1-rate) at train time), so
    eval mode is a bit-exact identity.
"""

from __future__ import annotations

import numpy as np

__all__ = [
    "conv3x3_forward",
    "conv3x3_backward",
    "maxpool2x2_forward",
    "maxpool2x2_backward",
    "dense_forward",
    "dense_backward",
    "relu",
    "relu_backward",
    "dropout",
    "dropout_backward",
    "softmax",
    "softmax_crossentropy",
    "softmax_crossentropy_batch",
]


def _as_batch(x, name):
    """Promote (H, W, C) to (1, H, W, C); return (array, was_unbatched)."""
    x = np.asarray(x)
    if x.ndim == 3:
        return x[None], True
    if x.ndim == 4:
        return x, False
    raise ValueError(f"{name} must have 3 or 4 dimensions, got {x.ndim}")


def conv3x3_forward(x, weights, bias):
    """3x3 convolution, stride 1, zero 'same' padding.

    x: (H, W, Cin) or (N, H, W, Cin); weights: (3, 3, Cin, Cout);
    bias: (Cout,). Returns output with the same spatial dims and Cout
    channels.

    Forward gathers all 3x3 neighborhoods (im2col) and runs one matrix
    product; the backward pass instead decomposes into nine shifted matrix
    products, which avoids materializing windows of the gradient.
    """
    xb, single = _as_batch(x, "conv input")
    weights = np.asarray(weights)
    bias = np.asarray(bias)
    if weights.ndim != 4 or weights.shape[:2] != (3, 3):
        raise ValueError(f"conv weights must be (3, 3, Cin, Cout), got {weights.shape}")
    if xb.shape[3] != weights.shape[2]:
        raise ValueError(
            f"conv input channels {xb.shape[3]} != weight Cin {weights.shape[2]}"
        )
    if bias.shape != (weights.shape[3],):
        raise ValueError(f"conv bias shape {bias.shape} != (Cout,) = ({weights.shape[3]},)")
    xp = np.pad(xb, ((0, 0), (1, 1), (1, 1), (0, 0)))
    win = np.lib.stride_tricks.sliding_window_view(xp, (3, 3), axis=(1, 2))
    # window axes come out as (N, H, W, C, 3, 3); align with (3, 3, C) kernels
    out = np.tensordot(win, weights, axes=([4, 5, 3], [0, 1, 2])) + bias
    out = out.astype(xb.dtype, copy=False)
    return out[0] if single else out


def conv3x3_backward(grad_out, cached_input, weights):
    """Gradients of the 3x3 conv: (grad_input, grad_weights, grad_bias).

    cached_input is the forward-pass input; shapes must be consistent with
    the forward pass that produced grad_out.
    """
    if cached_input is None:
        raise ValueError("conv backward requires the cached forward input")
    gb_, single = _as_batch(grad_out, "conv grad_out")
    xb, _ = _as_batch(cached_input, "conv cached input")
    weights = np.asarray(weights)
    if gb_.shape[:3] != xb.shape[:3]:
        raise ValueError(
            f"conv grad_out spatial/batch dims {gb_.shape[:3]} != input {xb.shape[:3]}"
        )
    if gb_.shape[3] != weights.shape[3]:
        raise ValueError(
            f"conv grad_out channels {gb_.shape[3]} != weight Cout {weights.shape[3]}"
        )
    n, h, w, cin = xb.shape
    cout = weights.shape[3]
    grad_bias = gb_.sum(axis=(0, 1, 2)).astype(weights.dtype, copy=False)
    g_flat = np.ascontiguousarray(gb_).reshape(-1, cout)
    xp = np.pad(xb, ((0, 0), (1, 1), (1, 1), (0, 0)))
    grad_weights = np.empty_like(weights)
    grad_xp = np.zeros_like(xp)
    for ky in range(3):
        for kx in range(3):
            patch = np.ascontiguousarray(xp[:, ky : ky + h, kx : kx + w, :])
            grad_weights[ky, kx] = patch.reshape(-1, cin).T @ g_flat
            grad_xp[:, ky : ky + h, kx : kx + w, :] += (g_flat @ weights[ky, kx].T).reshape(
                n, h, w, cin
            )
    grad_input = np.ascontiguousarray(grad_xp[:, 1:-1, 1:-1, :]).astype(xb.dtype, copy=False)
    if single:
        grad_input = grad_input[0]
    return grad_input, grad_weights, grad_bias


def maxpool2x2_forward(x):
    """2x2 max pool, stride 2. Returns (output, argmax mask).

    The mask records, per output cell, the winning position 0..3 within the
    window in row-major order (ties -> first maximum); it is consumed by
    maxpool2x2_backward.
    """
    xb, single = _as_batch(x, "maxpool input")
    n, h, w, c = xb.shape
    if h % 2 or w % 2:
        raise ValueError(f"maxpool needs even spatial dims, got H={h}, W={w}")
    win = xb.reshape(n, h // 2, 2, w // 2, 2, c).transpose(0, 1, 3, 2, 4, 5)
    win = win.reshape(n, h // 2, w // 2, 4, c)
    mask = np.argmax(win, axis=3).astype(np.int8)  # first max wins on ties
    out = win.max(axis=3)
    if single:
        return out[0], mask[0]
    return out, mask


def maxpool2x2_backward(grad_out, mask):
    """Route grad_out to each window's recorded argmax; zeros elsewhere."""
    gb_, single = _as_batch(grad_out, "maxpool grad_out")
    mb = mask[None] if mask.ndim == 3 else mask
    if gb_.shape != mb.shape:
        raise ValueError(f"maxpool grad_out shape {gb_.shape} != mask shape {mb.shape}")
    n, hh, ww, c = gb_.shape
    win = np.zeros((n, hh, ww, 4, c), dtype=gb_.dtype)
    np.put_along_axis(win, mb[:, :, :, None, :].astype(np.intp), gb_[:, :, :, None, :], axis=3)
    grad_input = (
        win.reshape(n, hh, ww, 2, 2, c)
        .transpose(0, 1, 3, 2, 4, 5)
        .reshape(n, 2 * hh, 2 * ww, c)
    )
    return grad_input[0] if single else grad_input


def dense_forward(x, weights, bias):
    """Affine map y = W^T x + b. x: (n_in,) or (N, n_in); weights: (n_in, n_out)."""
    x = np.asarray(x)
    weights = np.asarray(weights)
    bias = np.asarray(bias)
    if x.shape[-1] != weights.shape[0]:
        raise ValueError(
            f"dense input width {x.shape[-1]} != weight n_in {weights.shape[0]}"
        )
    if bias.shape != (weights.shape[1],):
        raise ValueError(f"dense bias shape {bias.shape} != (n_out,) = ({weights.shape[1]},)")
    return x @ weights + bias


def dense_backward(grad_out, cached_input, weights):
    """Gradients of the affine map: (grad_input, grad_weights, grad_bias)."""
    g = np.asarray(grad_out)
    x = np.asarray(cached_input)
    weights = np.asarray(weights)
    if g.shape[-1] != weights.shape[1]:
        raise ValueError(
            f"dense grad_out width {g.shape[-1]} != weight n_out {weights.shape[1]}"
        )
    grad_input = g @ weights.T
    if x.ndim == 1:
        grad_weights = np.outer(x, g)
        grad_bias = g.copy()
    else:
        grad_weights = x.T @ g
        grad_bias = g.sum(axis=0)
    return grad_input, grad_weights, grad_bias


def relu(x):
    """Elementwise max(0, x)."""
    return np.maximum(np.asarray(x), 0)


def relu_backward(grad_out, cached_input):
    """Mask grad to where the input was strictly positive (subgradient at 0 is 0)."""
    return np.asarray(grad_out) * (np.asarray(cached_input) > 0)


def dropout(x, rate, mode, rng=None):
    """Inverted dropout. Returns (output, mask); mask feeds dropout_backward.

    mode 'eval' (or rate 0) is the identity and returns mask None. In
    'train' mode each element is zeroed with probability `rate` and the
    survivors are scaled by 1/(1-rate); the returned mask already carries
    that scale.
    """
    if not 0.0 <= rate < 1.0:
        raise ValueError(f"dropout rate must be in [0, 1), got {rate}")
    if mode not in ("train", "eval"):
        raise ValueError(f"dropout mode must be 'train' or 'eval', got {mode!r}")
    x = np.asarray(x)
    if mode == "eval" or rate == 0.0:
        return x, None
    if rng is None:
        raise ValueError("dropout in train mode requires an rng")
    keep = (rng.random(x.shape) >= rate).astype(x.dtype)
    mask = keep / np.asarray(1.0 - rate, dtype=x.dtype)
    return x * mask, mask


def dropout_backward(grad_out, mask):
    """Backward of dropout; mask None means the forward was an identity."""
    g = np.asarray(grad_out)
    return g if mask is None else g * mask


def softmax(logits):
    """Numerically stable softmax along the last axis."""
    z = np.asarray(logits)
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def softmax_crossentropy(logits, label):
    """Softmax + cross-entropy for one sample.

    logits: (k,), label: class index. Returns (probabilities, loss,
    grad_logits) where loss = -ln p[label] and grad = p - onehot(label).
    """
    z = np.asarray(logits)
    if z.ndim != 1 or z.shape[0] < 2:
        raise ValueError(f"logits must be 1-D with k >= 2, got shape {z.shape}")
    k = z.shape[0]
    if not 0 <= int(label) < k:
        raise ValueError(f"label {label} outside [0, {k})")
    p = softmax(z)
    # clamp away exact zeros produced by underflow before taking the log
    loss = float(-np.log(max(float(p[int(label)]), np.finfo(np.float64).tiny))) + 0.0  # -0.0 -> 0.0
    grad = p.copy()
    grad[int(label)] -= 1
    return p, loss, grad.astype(z.dtype, copy=False)


def softmax_crossentropy_batch(logits, labels):
    """Mean softmax cross-entropy over a batch.

    logits: (N, k), labels: (N,). Returns (probabilities (N, k), mean loss,
    grad_logits (N, k)) with grad scaled by 1/N for the mean.
    """
    z = np.asarray(logits)
    labels = np.asarray(labels, dtype=np.intp)
    if z.ndim != 2:
        raise ValueError(f"batch logits must be 2-D, got shape {z.shape}")
    n, k = z.shape
    if labels.shape != (n,):
        raise ValueError(f"labels shape {labels.shape} != ({n},)")
    if labels.min() < 0 or labels.max() >= k:
        raise ValueError(f"labels outside [0, {k})")
    p = softmax(z)
    picked = np.maximum(p[np.arange(n), labels], np.finfo(np.float64).tiny)
    loss = float(-np.log(picked).mean()) + 0.0  # -0.0 -> 0.0
    grad = p.copy()
    grad[np.arange(n), labels] -= 1
    grad /= n
    return p, loss, grad.astype(z.dtype, copy=False)
