"""Independent reference implementations used as test oracles.

Everything here is written the slow, obvious way (nested loops, brute-force
tallies, central differences) and must stay independent of the package code
it is used to check.
"""

import math

import numpy as np


def conv3x3_loops(x, w, b):
    """Direct 6-nested-loop 3x3 convolution, stride 1, zero 'same' padding.

    x: (H, W, Cin), w: (3, 3, Cin, Cout), b: (Cout,) -> (H, W, Cout)
    """
    h, wd, cin = x.shape
    cout = w.shape[3]
    out = np.zeros((h, wd, cout), dtype=np.float64)
    for y in range(h):
        for xx in range(wd):
            for o in range(cout):
                acc = float(b[o])
                for ky in range(3):
                    for kx in range(3):
                        sy = y + ky - 1
                        sx = xx + kx - 1
                        if 0 <= sy < h and 0 <= sx < wd:
                            for i in range(cin):
                                acc += float(x[sy, sx, i]) * float(w[ky, kx, i, o])
                out[y, xx, o] = acc
    return out


def maxpool2x2_loops(x):
    """Nested-loop 2x2/stride-2 max pool. x: (H, W, C) with even H, W."""
    h, w, c = x.shape
    out = np.zeros((h // 2, w // 2, c), dtype=np.float64)
    for y in range(h // 2):
        for xx in range(w // 2):
            for i in range(c):
                m = -math.inf
                for dy in range(2):
                    for dx in range(2):
                        v = float(x[2 * y + dy, 2 * xx + dx, i])
                        if v > m:
                            m = v
                out[y, xx, i] = m
    return out


def numerical_grad(f, x, eps=1e-3):
    """Central finite differences of scalar f w.r.t. ndarray x (64-bit)."""
    x = np.asarray(x, dtype=np.float64)
    g = np.zeros_like(x)
    it = np.nditer(x, flags=["multi_index"])
    while not it.finished:
        idx = it.multi_index
        orig = x[idx]
        x[idx] = orig + eps
        fp = f(x)
        x[idx] = orig - eps
        fm = f(x)
        x[idx] = orig
        g[idx] = (fp - fm) / (2.0 * eps)
        it.iternext()
    return g


def max_relative_error(analytic, numeric, floor=1e-8):
    """max |a - n| / max(|a|, |n|, floor) over all entries."""
    a = np.asarray(analytic, dtype=np.float64).ravel()
    n = np.asarray(numeric, dtype=np.float64).ravel()
    denom = np.maximum(np.maximum(np.abs(a), np.abs(n)), floor)
    return float(np.max(np.abs(a - n) / denom))


def tally_confusion(y_true, y_pred, n_classes):
    """Brute-force confusion counts; row = true class."""
    cm = np.zeros((n_classes, n_classes), dtype=np.int64)
    for t, p in zip(y_true, y_pred):
        cm[int(t), int(p)] += 1
    return cm


def tally_f1(y_true, y_pred, n_classes):
    """Per-class precision/recall/F1 plus macro and weighted F1, by tally.

    0/0 ratios are defined as 0. Macro averages over all classes; weighted
    F1 weights by true-class support.
    """
    cm = tally_confusion(y_true, y_pred, n_classes)
    precision, recall, f1 = [], [], []
    for c in range(n_classes):
        tp = cm[c, c]
        fp = cm[:, c].sum() - tp
        fn = cm[c, :].sum() - tp
        p = tp / (tp + fp) if (tp + fp) > 0 else 0.0
        r = tp / (tp + fn) if (tp + fn) > 0 else 0.0
        f = 2 * p * r / (p + r) if (p + r) > 0 else 0.0
        precision.append(p)
        recall.append(r)
        f1.append(f)
    support = cm.sum(axis=1)
    macro = sum(f1) / n_classes
    total = support.sum()
    weighted = sum(s * f for s, f in zip(support, f1)) / total if total else 0.0
    return np.array(precision), np.array(recall), np.array(f1), macro, weighted


def gaussian_nb_posterior(train_x, train_y, query, smoothing):
    """Closed-form Gaussian NB posterior for 1-D features.

    Population variances per class, each increased by
    smoothing * (largest per-feature population variance of the full
    training set). Priors from class frequencies.
    """
    train_x = np.asarray(train_x, dtype=np.float64)
    train_y = np.asarray(train_y)
    classes = sorted(set(int(c) for c in train_y))
    global_var = float(np.var(train_x))
    add = smoothing * global_var
    scores = []
    for c in classes:
        xs = train_x[train_y == c]
        mu = float(np.mean(xs))
        var = float(np.var(xs)) + add
        prior = len(xs) / len(train_x)
        log_pdf = -0.5 * math.log(2.0 * math.pi * var) - (query - mu) ** 2 / (2.0 * var)
        scores.append(math.log(prior) + log_pdf)
    m = max(scores)
    exps = [math.exp(s - m) for s in scores]
    z = sum(exps)
    return np.array([e / z for e in exps])


def best_stump_accuracy(x, y):
    """Brute-force best single-feature threshold split (depth-1 tree).

    Returns the highest training accuracy achievable by one axis-aligned
    split with majority-vote leaves.
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y)
    n, d = x.shape
    best = max(np.mean(y == c) for c in set(y.tolist()))  # no-split majority
    for f in range(d):
        vals = np.unique(x[:, f])
        for a, bnd in zip(vals[:-1], vals[1:]):
            thr = (a + bnd) / 2.0
            left = y[x[:, f] < thr]
            right = y[x[:, f] >= thr]
            acc = 0
            for side in (left, right):
                if len(side):
                    acc += max(np.sum(side == c) for c in set(side.tolist()))
            best = max(best, acc / n)
    return best
