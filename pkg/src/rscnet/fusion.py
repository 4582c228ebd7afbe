"""Weather fusion: preprocessing, 7-feature vectors, metrics, and the experiment.

The fused vector concatenates the image model's 3 softmax probabilities with
4 standardized weather values (air temperature, relative humidity, pressure,
wind speed; dew point is derivable from the first two and dropped). All
preprocessing statistics are fitted on the training split only and applied
unchanged elsewhere.
"""

from __future__ import annotations

import ast
import csv
import io
from dataclasses import dataclass

import numpy as np

from .classifiers import (
    GaussianNBClassifier,
    RandomForestClassifier,
    RBFSVMClassifier,
)

FUSED_FEATURE_FIELDS = (
    "p_bare",
    "p_partial",
    "p_full",
    "z_air_temp",
    "z_rh",
    "z_pressure",
    "z_wind",
)

CLASSIFIER_NAMES = ("nb", "rf", "svm")

# Stated optimal hyperparameters for each fusion classifier; also members of
# the default search grids below.
OPTIMAL_PARAMS = {
    "nb": {"var_smoothing": 0.01},
    "rf": {"n_trees": 50, "max_depth": 6, "min_samples_leaf": 4},
    "svm": {"C": 100.0, "gamma": 0.1},
}

DEFAULT_GRIDS = {
    "nb": {"var_smoothing": [1e-9, 1e-3, 0.01]},
    "rf": {"n_trees": [10, 50, 100], "max_depth": [3, 6, 9], "min_samples_leaf": [1, 4, 8]},
    "svm": {"C": [1.0, 10.0, 100.0], "gamma": [0.01, 0.1, 1.0]},
}


def make_classifier(name: str, seed: int = 0, **params):
    """Instantiate a fusion classifier by name with the stated optima as defaults."""
    merged = dict(OPTIMAL_PARAMS[name]) if name in OPTIMAL_PARAMS else None
    if merged is None:
        raise ValueError(f"unknown classifier {name!r}; expected one of {CLASSIFIER_NAMES}")
    merged.update(params)
    if name == "nb":
        return GaussianNBClassifier(**merged)
    if name == "rf":
        return RandomForestClassifier(seed=seed, **merged)
    return RBFSVMClassifier(**merged)


# ---------------------------------------------------------------------------
# Preprocessing

def fit_impute_means(train_matrix):
    """Per-feature means over non-null training entries (nulls are NaN)."""
    m = np.asarray(train_matrix, dtype=np.float64)
    all_null = np.all(np.isnan(m), axis=0)
    if np.any(all_null):
        raise ValueError(f"feature(s) {np.flatnonzero(all_null).tolist()} entirely null in training data")
    return np.nanmean(m, axis=0)


def impute_mean(values, fitted_means):
    """Replace NaNs with the fitted per-feature means; other entries untouched."""
    m = np.array(values, dtype=np.float64)
    fitted_means = np.asarray(fitted_means, dtype=np.float64)
    if m.shape[-1] != fitted_means.shape[0]:
        raise ValueError(f"{m.shape[-1]} features but {fitted_means.shape[0]} fitted means")
    nan_mask = np.isnan(m)
    m[nan_mask] = np.broadcast_to(fitted_means, m.shape)[nan_mask]
    return m


@dataclass(frozen=True)
class ZScoreState:
    means: np.ndarray
    stds: np.ndarray


def zscore_fit(train_matrix) -> ZScoreState:
    """Per-feature mean and population standard deviation of the training data."""
    m = np.asarray(train_matrix, dtype=np.float64)
    if m.ndim != 2 or m.shape[0] < 2:
        raise ValueError(f"z-score fit needs a 2-D matrix with >= 2 rows, got shape {m.shape}")
    return ZScoreState(means=m.mean(axis=0), stds=m.std(axis=0))


def zscore_apply(state: ZScoreState, matrix):
    """(x - mean) / std per feature; constant features (std < 1e-12) map to 0."""
    m = np.asarray(matrix, dtype=np.float64)
    out = m - state.means
    safe = np.where(state.stds < 1e-12, 1.0, state.stds)
    out = out / safe
    out[:, state.stds < 1e-12] = 0.0
    return out


@dataclass(frozen=True)
class PreprocessState:
    """Imputation means plus z-score statistics, all fitted on training data."""

    impute_means: np.ndarray
    zscore: ZScoreState

    @classmethod
    def fit(cls, train_matrix) -> "PreprocessState":
        means = fit_impute_means(train_matrix)
        filled = impute_mean(train_matrix, means)
        return cls(impute_means=means, zscore=zscore_fit(filled))

    def transform(self, matrix):
        return zscore_apply(self.zscore, impute_mean(matrix, self.impute_means))


# ---------------------------------------------------------------------------
# Fused features

@dataclass(frozen=True)
class FusedFeature:
    """7-dimensional fusion vector in the declared field order."""

    p_bare: float
    p_partial: float
    p_full: float
    z_air_temp: float
    z_rh: float
    z_pressure: float
    z_wind: float

    def to_array(self):
        return np.array([getattr(self, f) for f in FUSED_FEATURE_FIELDS])

    @classmethod
    def from_array(cls, arr) -> "FusedFeature":
        arr = np.asarray(arr, dtype=np.float64)
        if arr.shape != (7,):
            raise ValueError(f"fused feature must have 7 entries, got shape {arr.shape}")
        return cls(**dict(zip(FUSED_FEATURE_FIELDS, (float(v) for v in arr))))


def fuse(probabilities, weather) -> FusedFeature:
    """Concatenate a 3-probability vector with 4 standardized weather values."""
    p = np.asarray(probabilities, dtype=np.float64)
    w = np.asarray(weather, dtype=np.float64)
    if p.shape != (3,):
        raise ValueError(f"probability vector must have 3 entries, got shape {p.shape}")
    if w.shape != (4,):
        raise ValueError(f"weather vector must have 4 entries, got shape {w.shape}")
    if abs(float(p.sum()) - 1.0) > 1e-4:
        raise ValueError(f"probabilities sum to {float(p.sum())}, off by more than 1e-4")
    return FusedFeature.from_array(np.concatenate([p, w]))


def fuse_matrix(probabilities, weather):
    """Row-wise fuse for aligned (N, 3) and (N, 4) matrices."""
    p = np.asarray(probabilities, dtype=np.float64)
    w = np.asarray(weather, dtype=np.float64)
    if p.ndim != 2 or p.shape[1] != 3:
        raise ValueError(f"probabilities must be (N, 3), got {p.shape}")
    if w.shape != (p.shape[0], 4):
        raise ValueError(f"weather must be ({p.shape[0]}, 4), got {w.shape}")
    bad = np.abs(p.sum(axis=1) - 1.0) > 1e-4
    if np.any(bad):
        raise ValueError(f"row(s) {np.flatnonzero(bad)[:5].tolist()} have probabilities off by more than 1e-4")
    return np.concatenate([p, w], axis=1)


# ---------------------------------------------------------------------------
# Metrics

@dataclass(frozen=True)
class ClassificationMetrics:
    """Confusion counts, normalized rows, and the derived per-class metrics."""

    counts: tuple  # rows = true class
    normalized: tuple  # rows with zero support are all-zero and flagged
    precision: tuple
    recall: tuple
    f1: tuple
    macro_f1: float
    weighted_f1: float
    accuracy: float
    zero_support: tuple

    @property
    def n_classes(self):
        return len(self.counts)


def confusion_and_f1(y_true, y_pred, n_classes: int = 3) -> ClassificationMetrics:
    """Normalized confusion matrix plus precision/recall/F1 per class.

    Row i of the normalized matrix is the prediction distribution for true
    class i. 0/0 ratios are 0; macro F1 averages over all classes and
    weighted F1 weights by true-class support.
    """
    y_true = np.asarray(y_true, dtype=np.intp)
    y_pred = np.asarray(y_pred, dtype=np.intp)
    if y_true.shape != y_pred.shape:
        raise ValueError(f"label vectors differ in length: {y_true.shape} vs {y_pred.shape}")
    for name, v in (("true", y_true), ("predicted", y_pred)):
        if v.size and (v.min() < 0 or v.max() >= n_classes):
            raise ValueError(f"{name} label outside [0, {n_classes})")
    counts = np.zeros((n_classes, n_classes), dtype=np.int64)
    np.add.at(counts, (y_true, y_pred), 1)
    support = counts.sum(axis=1)
    normalized = np.zeros((n_classes, n_classes), dtype=np.float64)
    nz = support > 0
    normalized[nz] = counts[nz] / support[nz, None]
    precision, recall, f1 = [], [], []
    for c in range(n_classes):
        tp = counts[c, c]
        fp = counts[:, c].sum() - tp
        fn = support[c] - tp
        p = tp / (tp + fp) if tp + fp else 0.0
        r = tp / (tp + fn) if tp + fn else 0.0
        precision.append(float(p))
        recall.append(float(r))
        f1.append(float(2 * p * r / (p + r)) if p + r else 0.0)
    total = int(support.sum())
    weighted = float(np.dot(support, f1) / total) if total else 0.0
    acc = float(np.trace(counts) / total) if total else 0.0
    return ClassificationMetrics(
        counts=tuple(tuple(int(v) for v in row) for row in counts),
        normalized=tuple(tuple(float(v) for v in row) for row in normalized),
        precision=tuple(precision),
        recall=tuple(recall),
        f1=tuple(f1),
        macro_f1=float(np.mean(f1)),
        weighted_f1=weighted,
        accuracy=acc,
        zero_support=tuple(int(c) for c in np.flatnonzero(~nz)),
    )


# ---------------------------------------------------------------------------
# Fusion experiment

@dataclass(frozen=True)
class FusionReport:
    """Image-only vs fused comparison for one classifier choice.

    Two image-only baselines are reported and labeled: 'argmax' takes the
    image model's most probable class directly; 'classifier' trains the
    same classifier on the 3 probabilities alone, isolating the weather
    contribution. recall_delta_* = fused recall - baseline recall per class.
    """

    classifier: str
    params: dict
    n_train: int
    n_test: int
    image_argmax: ClassificationMetrics
    image_clf: ClassificationMetrics
    fused: ClassificationMetrics
    recall_delta_vs_argmax: tuple
    recall_delta_vs_clf: tuple

    def to_csv_text(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["section", "key", "values"])
        w.writerow(["meta", "classifier", self.classifier])
        w.writerow(["meta", "params", repr(sorted(self.params.items()))])
        w.writerow(["meta", "n_train", self.n_train])
        w.writerow(["meta", "n_test", self.n_test])
        for name, m in (
            ("image_argmax", self.image_argmax),
            ("image_clf", self.image_clf),
            ("fused", self.fused),
        ):
            for i, row in enumerate(m.counts):
                w.writerow([name, f"counts_row{i}"] + [str(v) for v in row])
            for i, row in enumerate(m.normalized):
                w.writerow([name, f"normalized_row{i}"] + [repr(v) for v in row])
            for key in ("precision", "recall", "f1"):
                w.writerow([name, key] + [repr(v) for v in getattr(m, key)])
            w.writerow([name, "macro_f1", repr(m.macro_f1)])
            w.writerow([name, "weighted_f1", repr(m.weighted_f1)])
            w.writerow([name, "accuracy", repr(m.accuracy)])
            w.writerow([name, "zero_support"] + [str(v) for v in m.zero_support])
        w.writerow(["deltas", "recall_vs_argmax"] + [repr(v) for v in self.recall_delta_vs_argmax])
        w.writerow(["deltas", "recall_vs_clf"] + [repr(v) for v in self.recall_delta_vs_clf])
        return buf.getvalue()

    @classmethod
    def from_csv_text(cls, text: str) -> "FusionReport":
        rows = list(csv.reader(io.StringIO(text)))
        sections: dict[str, dict[str, list[str]]] = {}
        for row in rows[1:]:
            sections.setdefault(row[0], {})[row[1]] = row[2:]
        meta = sections["meta"]

        def metrics(name):
            s = sections[name]
            n = sum(1 for k in s if k.startswith("counts_row"))
            counts = tuple(tuple(int(v) for v in s[f"counts_row{i}"]) for i in range(n))
            normalized = tuple(tuple(float(v) for v in s[f"normalized_row{i}"]) for i in range(n))
            return ClassificationMetrics(
                counts=counts,
                normalized=normalized,
                precision=tuple(float(v) for v in s["precision"]),
                recall=tuple(float(v) for v in s["recall"]),
                f1=tuple(float(v) for v in s["f1"]),
                macro_f1=float(s["macro_f1"][0]),
                weighted_f1=float(s["weighted_f1"][0]),
                accuracy=float(s["accuracy"][0]),
                zero_support=tuple(int(v) for v in s["zero_support"] if v != ""),
            )

        return cls(
            classifier=meta["classifier"][0],
            params=dict(ast.literal_eval(meta["params"][0])),
            n_train=int(meta["n_train"][0]),
            n_test=int(meta["n_test"][0]),
            image_argmax=metrics("image_argmax"),
            image_clf=metrics("image_clf"),
            fused=metrics("fused"),
            recall_delta_vs_argmax=tuple(float(v) for v in sections["deltas"]["recall_vs_argmax"]),
            recall_delta_vs_clf=tuple(float(v) for v in sections["deltas"]["recall_vs_clf"]),
        )


def fusion_experiment(
    probabilities,
    weather,
    labels,
    train_idx,
    test_idx,
    classifier: str = "nb",
    classifier_params: dict | None = None,
    seed: int = 0,
) -> FusionReport:
    """Compare image-only and fused classification on a fixed split.

    probabilities: (N, 3) image-model softmax outputs; weather: (N, 4) raw
    fusion features with NaN for nulls; labels: (N,). Preprocessing and the
    classifiers are fitted on train_idx only and evaluated on test_idx.
    """
    p = np.asarray(probabilities, dtype=np.float64)
    w = np.asarray(weather, dtype=np.float64)
    y = np.asarray(labels, dtype=np.intp)
    if not (p.shape[0] == w.shape[0] == y.shape[0]):
        raise ValueError(
            f"misaligned inputs: {p.shape[0]} probability rows, {w.shape[0]} weather rows, "
            f"{y.shape[0]} labels"
        )
    train_idx = np.asarray(train_idx, dtype=np.intp)
    test_idx = np.asarray(test_idx, dtype=np.intp)
    params = dict(classifier_params or {})

    state = PreprocessState.fit(w[train_idx])
    z_train = state.transform(w[train_idx])
    z_test = state.transform(w[test_idx])
    fused_train = fuse_matrix(p[train_idx], z_train)
    fused_test = fuse_matrix(p[test_idx], z_test)

    argmax_pred = np.argmax(p[test_idx], axis=1)
    image_argmax = confusion_and_f1(y[test_idx], argmax_pred)

    clf_image = make_classifier(classifier, seed=seed, **params)
    clf_image.fit(p[train_idx], y[train_idx])
    image_clf = confusion_and_f1(y[test_idx], clf_image.predict(p[test_idx]))

    clf_fused = make_classifier(classifier, seed=seed, **params)
    clf_fused.fit(fused_train, y[train_idx])
    fused = confusion_and_f1(y[test_idx], clf_fused.predict(fused_test))

    return FusionReport(
        classifier=classifier,
        params=params,
        n_train=int(train_idx.size),
        n_test=int(test_idx.size),
        image_argmax=image_argmax,
        image_clf=image_clf,
        fused=fused,
        recall_delta_vs_argmax=tuple(f - b for f, b in zip(fused.recall, image_argmax.recall)),
        recall_delta_vs_clf=tuple(f - b for f, b in zip(fused.recall, image_clf.recall)),
    )


def grid_search_fusion(classifier, features, labels, k_folds=5, seed=0, grid=None):
    """Grid search for a fusion classifier over its default (or given) grid."""
    from .classifiers import grid_search_cv

    grid = grid if grid is not None else DEFAULT_GRIDS[classifier]
    factory = lambda **params: make_classifier(classifier, seed=seed, **params)
    return grid_search_cv(factory, grid, features, labels, k_folds=k_folds, seed=seed)
