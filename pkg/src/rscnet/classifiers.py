"""From-scratch classical classifiers for the weather-fusion stage.

Gaussian Naive Bayes, a Gini random forest, and an RBF-kernel SVM trained
with sequential minimal optimization, all with fit/predict interfaces, plus
stratified k-fold cross-validation and grid search. Every fit is a pure
function of (data, hyperparameters, seed).
"""

from __future__ import annotations

import itertools
import math
import warnings
from dataclasses import dataclass

import numpy as np


def accuracy_score(y_true, y_pred) -> float:
    y_true = np.asarray(y_true)
    y_pred = np.asarray(y_pred)
    return float(np.mean(y_true == y_pred))


def _check_all_classes(y, n_classes):
    present = np.unique(y)
    missing = [c for c in range(n_classes) if c not in present]
    if missing:
        raise ValueError(f"class(es) {missing} absent from training data")


# ---------------------------------------------------------------------------
# Gaussian Naive Bayes

class GaussianNBClassifier:
    """Gaussian NB with frequency priors and variance smoothing.

    Each per-class per-feature population variance is increased by
    var_smoothing times the largest per-feature variance of the whole
    training set, which keeps constant features finite.
    """

    def __init__(self, var_smoothing: float = 0.01, n_classes: int = 3):
        if var_smoothing < 0:
            raise ValueError(f"var_smoothing must be >= 0, got {var_smoothing}")
        self.var_smoothing = var_smoothing
        self.n_classes = n_classes
        self.log_priors_ = None
        self.means_ = None
        self.variances_ = None

    def fit(self, X, y):
        X = np.asarray(X, dtype=np.float64)
        y = np.asarray(y)
        _check_all_classes(y, self.n_classes)
        add = self.var_smoothing * float(np.max(np.var(X, axis=0)))
        means, variances, priors = [], [], []
        for c in range(self.n_classes):
            xc = X[y == c]
            means.append(xc.mean(axis=0))
            variances.append(xc.var(axis=0) + add)
            priors.append(len(xc) / len(X))
        self.means_ = np.array(means)
        self.variances_ = np.array(variances)
        if np.any(self.variances_ <= 0):
            raise ValueError("zero variance after smoothing; increase var_smoothing")
        self.log_priors_ = np.log(priors)
        return self

    def log_posteriors(self, X):
        """Unnormalized per-class log scores, shape (N, n_classes)."""
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        scores = np.empty((X.shape[0], self.n_classes))
        for c in range(self.n_classes):
            var = self.variances_[c]
            log_pdf = -0.5 * (np.log(2 * np.pi * var) + (X - self.means_[c]) ** 2 / var)
            scores[:, c] = self.log_priors_[c] + log_pdf.sum(axis=1)
        return scores

    def predict_proba(self, X):
        s = self.log_posteriors(X)
        s = s - s.max(axis=1, keepdims=True)
        e = np.exp(s)
        return e / e.sum(axis=1, keepdims=True)

    def predict(self, X):
        return np.argmax(self.log_posteriors(X), axis=1)


# ---------------------------------------------------------------------------
# Random forest

class _TreeNode:
    __slots__ = ("feature", "threshold", "left", "right", "prediction")

    def __init__(self, prediction, feature=None, threshold=None, left=None, right=None):
        self.prediction = prediction
        self.feature = feature
        self.threshold = threshold
        self.left = left
        self.right = right


def _gini_best_split(x, y_onehot, min_leaf):
    """Best threshold of one feature by Gini impurity; None if no valid split.

    x is presorted ascending with y_onehot aligned. Returns (weighted
    impurity, threshold).
    """
    m = x.shape[0]
    prefix = np.cumsum(y_onehot, axis=0)
    total = prefix[-1]
    n_left = np.arange(1, m, dtype=np.float64)
    left = prefix[:-1].astype(np.float64)
    right = (total - prefix[:-1]).astype(np.float64)
    n_right = m - n_left
    gini_l = 1.0 - np.sum((left / n_left[:, None]) ** 2, axis=1)
    gini_r = 1.0 - np.sum((right / n_right[:, None]) ** 2, axis=1)
    weighted = (n_left * gini_l + n_right * gini_r) / m
    valid = (x[:-1] < x[1:]) & (n_left >= min_leaf) & (n_right >= min_leaf)
    if not np.any(valid):
        return None
    weighted = np.where(valid, weighted, np.inf)
    i = int(np.argmin(weighted))
    return float(weighted[i]), (float(x[i]) + float(x[i + 1])) / 2.0


class DecisionTreeClassifier:
    """Gini decision tree with per-node feature subsampling."""

    def __init__(self, max_depth=None, min_samples_leaf=1, max_features=None,
                 n_classes=3, rng=None):
        self.max_depth = max_depth
        self.min_samples_leaf = max(int(min_samples_leaf), 1)
        self.max_features = max_features
        self.n_classes = n_classes
        self.rng = rng if rng is not None else np.random.default_rng(0)
        self.root_ = None

    def _mtry(self, d):
        if self.max_features is None:
            return d
        if self.max_features == "sqrt":
            return min(d, math.ceil(math.sqrt(d)))
        return min(d, int(self.max_features))

    def fit(self, X, y):
        X = np.asarray(X, dtype=np.float64)
        y = np.asarray(y, dtype=np.intp)
        onehot = np.eye(self.n_classes, dtype=np.int64)[y]
        self.root_ = self._grow(X, y, onehot, np.arange(len(y)), 0)
        return self

    def _grow(self, X, y, onehot, idx, depth):
        counts = onehot[idx].sum(axis=0)
        prediction = int(np.argmax(counts))  # ties -> lowest class index
        if (
            (self.max_depth is not None and depth >= self.max_depth)
            or idx.size < 2 * self.min_samples_leaf
            or np.max(counts) == idx.size
        ):
            return _TreeNode(prediction)
        d = X.shape[1]
        feats = self.rng.choice(d, size=self._mtry(d), replace=False)
        best = None
        for f in feats:
            xs = X[idx, f]
            order = np.argsort(xs, kind="stable")
            found = _gini_best_split(xs[order], onehot[idx[order]], self.min_samples_leaf)
            if found is not None and (best is None or found[0] < best[0]):
                best = (found[0], int(f), found[1])
        if best is None:
            return _TreeNode(prediction)
        _, feature, threshold = best
        mask = X[idx, feature] < threshold
        left = self._grow(X, y, onehot, idx[mask], depth + 1)
        right = self._grow(X, y, onehot, idx[~mask], depth + 1)
        return _TreeNode(prediction, feature, threshold, left, right)

    def predict(self, X):
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        out = np.empty(X.shape[0], dtype=np.intp)
        for i, row in enumerate(X):
            node = self.root_
            while node.feature is not None:
                node = node.left if row[node.feature] < node.threshold else node.right
            out[i] = node.prediction
        return out


class RandomForestClassifier:
    """Bootstrap ensemble of Gini trees with plurality voting."""

    def __init__(self, n_trees=50, max_depth=6, min_samples_leaf=4,
                 max_features="sqrt", bootstrap=True, n_classes=3, seed=0):
        if n_trees < 1:
            raise ValueError(f"n_trees must be >= 1, got {n_trees}")
        self.n_trees = n_trees
        self.max_depth = max_depth
        self.min_samples_leaf = min_samples_leaf
        self.max_features = max_features
        self.bootstrap = bootstrap
        self.n_classes = n_classes
        self.seed = seed
        self.trees_ = None

    def fit(self, X, y):
        X = np.asarray(X, dtype=np.float64)
        y = np.asarray(y, dtype=np.intp)
        if len(X) == 0:
            raise ValueError("empty training set")
        self.trees_ = []
        for t in range(self.n_trees):
            rng = np.random.default_rng(np.random.SeedSequence(entropy=self.seed, spawn_key=(t,)))
            idx = rng.integers(0, len(X), len(X)) if self.bootstrap else np.arange(len(X))
            tree = DecisionTreeClassifier(
                max_depth=self.max_depth,
                min_samples_leaf=self.min_samples_leaf,
                max_features=self.max_features,
                n_classes=self.n_classes,
                rng=rng,
            )
            tree.fit(X[idx], y[idx])
            self.trees_.append(tree)
        return self

    def predict(self, X):
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        votes = np.zeros((X.shape[0], self.n_classes), dtype=np.int64)
        for tree in self.trees_:
            votes[np.arange(X.shape[0]), tree.predict(X)] += 1
        return np.argmax(votes, axis=1)  # ties -> lowest class index


# ---------------------------------------------------------------------------
# RBF-kernel SVM via sequential minimal optimization

def rbf_kernel(a, b, gamma):
    a = np.atleast_2d(np.asarray(a, dtype=np.float64))
    b = np.atleast_2d(np.asarray(b, dtype=np.float64))
    sq = (
        np.sum(a**2, axis=1)[:, None]
        + np.sum(b**2, axis=1)[None, :]
        - 2.0 * (a @ b.T)
    )
    return np.exp(-gamma * np.maximum(sq, 0.0))


class _BinarySMO:
    """Platt-style SMO for one binary subproblem, labels in {-1, +1}.

    Deterministic: second-choice scans start from a rolling cursor instead
    of a random position. self.converged is False when the sweep budget ran
    out before the KKT conditions were met.
    """

    def __init__(self, C, gamma, tol=1e-3, max_sweeps=200):
        self.C = float(C)
        self.gamma = float(gamma)
        self.tol = float(tol)
        self.max_sweeps = int(max_sweeps)
        self.converged = False

    def fit(self, X, y):
        self.X = np.asarray(X, dtype=np.float64)
        self.y = np.asarray(y, dtype=np.float64)
        n = len(self.y)
        self.K = rbf_kernel(self.X, self.X, self.gamma)
        self.alpha = np.zeros(n)
        self.b = 0.0
        # f_cache[i] = sum_j alpha_j y_j K(j, i), i.e. f(x_i) without b
        self.f_cache = np.zeros(n)
        self._cursor = 0

        sweeps = 0
        examine_all = True
        num_changed = 1
        while num_changed > 0 or examine_all:
            if sweeps >= self.max_sweeps:
                warnings.warn(
                    f"SMO stopped after {self.max_sweeps} sweeps without convergence",
                    RuntimeWarning,
                )
                self.converged = False
                return self
            sweeps += 1
            num_changed = 0
            if examine_all:
                for i in range(n):
                    num_changed += self._examine(i)
            else:
                for i in np.flatnonzero((self.alpha > 0) & (self.alpha < self.C)):
                    num_changed += self._examine(int(i))
            if examine_all:
                examine_all = False
            elif num_changed == 0:
                examine_all = True
        self.converged = True
        return self

    def _error(self, i):
        return self.f_cache[i] + self.b - self.y[i]

    def _examine(self, i2):
        y2 = self.y[i2]
        a2 = self.alpha[i2]
        e2 = self._error(i2)
        r2 = e2 * y2
        if (r2 < -self.tol and a2 < self.C) or (r2 > self.tol and a2 > 0):
            non_bound = np.flatnonzero((self.alpha > 0) & (self.alpha < self.C))
            if non_bound.size > 1:
                errs = self.f_cache[non_bound] + self.b - self.y[non_bound]
                i1 = int(non_bound[np.argmax(np.abs(errs - e2))])
                if self._take_step(i1, i2):
                    return 1
            n = len(self.y)
            for off in range(non_bound.size):
                i1 = int(non_bound[(off + self._cursor) % non_bound.size])
                if self._take_step(i1, i2):
                    return 1
            for off in range(n):
                i1 = (off + self._cursor) % n
                if self._take_step(i1, i2):
                    return 1
        return 0

    def _take_step(self, i1, i2):
        if i1 == i2:
            return False
        self._cursor += 1
        a1, a2 = self.alpha[i1], self.alpha[i2]
        y1, y2 = self.y[i1], self.y[i2]
        e1, e2 = self._error(i1), self._error(i2)
        s = y1 * y2
        if y1 != y2:
            lo, hi = max(0.0, a2 - a1), min(self.C, self.C + a2 - a1)
        else:
            lo, hi = max(0.0, a1 + a2 - self.C), min(self.C, a1 + a2)
        if lo == hi:
            return False
        k11 = self.K[i1, i1]
        k12 = self.K[i1, i2]
        k22 = self.K[i2, i2]
        eta = k11 + k22 - 2.0 * k12
        if eta > 0:
            a2_new = a2 + y2 * (e1 - e2) / eta
            a2_new = min(max(a2_new, lo), hi)
        else:
            # objective at the clip ends (eta <= 0 happens with duplicates)
            f1 = y1 * (e1 + self.b) - a1 * k11 - s * a2 * k12
            f2 = y2 * (e2 + self.b) - s * a1 * k12 - a2 * k22
            l1 = a1 + s * (a2 - lo)
            h1 = a1 + s * (a2 - hi)
            obj_lo = l1 * f1 + lo * f2 + 0.5 * l1**2 * k11 + 0.5 * lo**2 * k22 + s * lo * l1 * k12
            obj_hi = h1 * f1 + hi * f2 + 0.5 * h1**2 * k11 + 0.5 * hi**2 * k22 + s * hi * h1 * k12
            if obj_lo < obj_hi - 1e-12:
                a2_new = lo
            elif obj_lo > obj_hi + 1e-12:
                a2_new = hi
            else:
                a2_new = a2
        if abs(a2_new - a2) < 1e-10 * (a2_new + a2 + 1e-10):
            return False
        a1_new = a1 + s * (a2 - a2_new)
        self.alpha[i1] = a1_new
        self.alpha[i2] = a2_new
        self.f_cache += y1 * (a1_new - a1) * self.K[i1] + y2 * (a2_new - a2) * self.K[i2]
        b1 = self.y[i1] - self.f_cache[i1]
        b2 = self.y[i2] - self.f_cache[i2]
        if 0 < a1_new < self.C:
            self.b = b1
        elif 0 < a2_new < self.C:
            self.b = b2
        else:
            self.b = (b1 + b2) / 2.0
        return True

    def decision_function(self, X):
        k = rbf_kernel(np.atleast_2d(np.asarray(X, dtype=np.float64)), self.X, self.gamma)
        return k @ (self.alpha * self.y) + self.b

    def kkt_violations(self):
        """Per-sample violation of the dual optimality conditions."""
        margins = self.y * (self.f_cache + self.b)
        viol = np.abs(margins - 1.0)
        at_zero = self.alpha <= 1e-12
        at_c = self.alpha >= self.C - 1e-12
        viol[at_zero] = np.maximum(0.0, 1.0 - margins[at_zero])
        viol[at_c] = np.maximum(0.0, margins[at_c] - 1.0)
        return viol


class RBFSVMClassifier:
    """One-vs-one multiclass RBF SVM trained by SMO."""

    def __init__(self, C=100.0, gamma=0.1, tol=1e-3, max_sweeps=200, n_classes=3):
        self.C = C
        self.gamma = gamma
        self.tol = tol
        self.max_sweeps = max_sweeps
        self.n_classes = n_classes
        self.machines_ = None

    def fit(self, X, y):
        X = np.asarray(X, dtype=np.float64)
        y = np.asarray(y, dtype=np.intp)
        present = np.unique(y)
        if present.size < 2:
            raise ValueError("SVM training needs at least 2 classes")
        self.machines_ = {}
        for i, j in itertools.combinations(range(self.n_classes), 2):
            mask = (y == i) | (y == j)
            if not np.any(y == i) or not np.any(y == j):
                continue
            yb = np.where(y[mask] == i, 1.0, -1.0)
            smo = _BinarySMO(self.C, self.gamma, self.tol, self.max_sweeps)
            smo.fit(X[mask], yb)
            self.machines_[(i, j)] = smo
        return self

    @property
    def converged(self) -> bool:
        return all(m.converged for m in self.machines_.values())

    def max_kkt_violation(self) -> float:
        return max(float(m.kkt_violations().max()) for m in self.machines_.values())

    def predict(self, X):
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        votes = np.zeros((X.shape[0], self.n_classes), dtype=np.int64)
        for (i, j), smo in self.machines_.items():
            d = smo.decision_function(X)
            votes[d >= 0, i] += 1
            votes[d < 0, j] += 1
        return np.argmax(votes, axis=1)  # ties -> lowest class index


# ---------------------------------------------------------------------------
# Cross-validation and grid search

def stratified_kfold(labels, k_folds, seed=0):
    """Deterministic stratified folds: list of (train_idx, test_idx).

    Each class's samples are shuffled once and dealt round-robin. A fold
    whose test part misses a class is rejected (named by index), since
    scores over it would not be comparable.
    """
    if k_folds < 2:
        raise ValueError(f"k_folds must be >= 2, got {k_folds}")
    labels = np.asarray(labels)
    rng = np.random.default_rng(seed)
    fold_of = np.empty(len(labels), dtype=np.intp)
    for c in np.unique(labels):
        idx = np.flatnonzero(labels == c)
        perm = idx[rng.permutation(idx.size)]
        fold_of[perm] = np.arange(perm.size) % k_folds
    folds = []
    classes = np.unique(labels)
    for f in range(k_folds):
        test = np.flatnonzero(fold_of == f)
        train = np.flatnonzero(fold_of != f)
        for part, name in ((test, "test"), (train, "train")):
            missing = [int(c) for c in classes if c not in labels[part]]
            if missing:
                raise ValueError(f"fold {f}: class(es) {missing} missing from its {name} part")
        folds.append((train, test))
    return folds


@dataclass(frozen=True)
class GridSearchResult:
    best_params: dict
    best_score: float
    cells: tuple  # ((params, mean_score, fold_scores), ...) in grid order

    def scores_table(self):
        return [(params, mean) for params, mean, _ in self.cells]


def grid_search_cv(factory, param_grid, features, labels, k_folds=5, scorer=None, seed=0):
    """Exhaustive grid search with stratified k-fold CV.

    factory(**params) must return an object with fit(X, y) and predict(X).
    The best cell maximizes the mean fold score; ties go to the earliest
    cell in grid order (itertools.product over the dict's insertion order).
    """
    if not param_grid:
        raise ValueError("empty parameter grid")
    scorer = scorer or accuracy_score
    X = np.asarray(features, dtype=np.float64)
    y = np.asarray(labels)
    folds = stratified_kfold(y, k_folds, seed)
    names = list(param_grid.keys())
    cells = []
    best = None
    for values in itertools.product(*(param_grid[n] for n in names)):
        params = dict(zip(names, values))
        fold_scores = []
        for train_idx, test_idx in folds:
            model = factory(**params)
            model.fit(X[train_idx], y[train_idx])
            fold_scores.append(scorer(y[test_idx], model.predict(X[test_idx])))
        mean = float(np.mean(fold_scores))
        cells.append((params, mean, tuple(fold_scores)))
        if best is None or mean > best[1]:
            best = (params, mean)
    return GridSearchResult(best_params=best[0], best_score=best[1], cells=tuple(cells))
