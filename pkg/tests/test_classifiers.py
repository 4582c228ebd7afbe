"""Classifier tests: NB closed form, forest oracles, SMO/KKT, grid search."""

import numpy as np
import pytest

from rscnet.classifiers import (
    GaussianNBClassifier,
    RBFSVMClassifier,
    RandomForestClassifier,
    _BinarySMO,
    accuracy_score,
    grid_search_cv,
    stratified_kfold,
)

from reference import best_stump_accuracy, gaussian_nb_posterior


# ---------------------------------------------------------------------------
# Gaussian NB

def test_nb_symmetric_two_class_posterior_half():
    X = np.array([[-2.0], [-1.0], [1.0], [2.0]])
    y = np.array([0, 0, 1, 1])
    nb = GaussianNBClassifier(var_smoothing=0.01, n_classes=2).fit(X, y)
    p = nb.predict_proba(np.array([[0.0]]))[0]
    assert abs(p[0] - 0.5) < 1e-9 and abs(p[1] - 0.5) < 1e-9


def test_nb_matches_closed_form_oracle():
    train_x = [0.0, 2.0, 10.0, 14.0]
    train_y = [0, 0, 1, 1]
    nb = GaussianNBClassifier(var_smoothing=0.01, n_classes=2).fit(
        np.array(train_x)[:, None], np.array(train_y)
    )
    for q in (1.0, 5.0, 9.0, 12.0, -3.0):
        expected = gaussian_nb_posterior(train_x, train_y, q, 0.01)
        got = nb.predict_proba(np.array([[q]]))[0]
        assert np.max(np.abs(got - expected)) < 1e-9


def test_nb_zero_variance_feature_survives_with_smoothing():
    X = np.array([[1.0, 5.0], [1.0, 6.0], [1.0, 1.0], [1.0, 2.0]])
    y = np.array([0, 0, 1, 1])
    nb = GaussianNBClassifier(var_smoothing=0.01, n_classes=2).fit(X, y)
    scores = nb.log_posteriors(X)
    assert np.all(np.isfinite(scores))


def test_nb_missing_class_rejected():
    with pytest.raises(ValueError, match="absent"):
        GaussianNBClassifier(n_classes=3).fit(np.zeros((4, 2)), np.array([0, 0, 1, 1]))


def test_nb_posterior_sums_and_shift_invariance():
    rng = np.random.default_rng(0)
    X = rng.normal(size=(30, 4))
    y = rng.integers(0, 3, 30)
    while len(np.unique(y)) < 3:
        y = rng.integers(0, 3, 30)
    nb = GaussianNBClassifier(n_classes=3).fit(X, y)
    probs = nb.predict_proba(X)
    assert np.max(np.abs(probs.sum(axis=1) - 1.0)) < 1e-9
    # adding a constant to every log score leaves the posterior unchanged
    scores = nb.log_posteriors(X) + 123.456
    shifted = np.exp(scores - scores.max(axis=1, keepdims=True))
    shifted /= shifted.sum(axis=1, keepdims=True)
    assert np.max(np.abs(shifted - probs)) < 1e-12


# ---------------------------------------------------------------------------
# Random forest

def test_single_unrestricted_tree_memorizes():
    rng = np.random.default_rng(1)
    X = rng.normal(size=(40, 3))
    y = rng.integers(0, 3, 40)
    rf = RandomForestClassifier(
        n_trees=1, max_depth=None, min_samples_leaf=1, max_features=None, bootstrap=False, seed=0
    ).fit(X, y)
    assert accuracy_score(y, rf.predict(X)) == 1.0


def test_depth_one_bounded_by_best_stump():
    # XOR layout: no single split separates it
    X = np.array([[0.0, 0.0], [0.0, 1.0], [1.0, 0.0], [1.0, 1.0]] * 5)
    y = np.array([0, 1, 1, 0] * 5)
    rf = RandomForestClassifier(
        n_trees=1, max_depth=1, min_samples_leaf=1, max_features=None, bootstrap=False, n_classes=2, seed=0
    ).fit(X, y)
    acc = accuracy_score(y, rf.predict(X))
    oracle = best_stump_accuracy(X, y)
    assert acc < 1.0
    assert acc <= oracle + 1e-12


def test_forest_deterministic_per_seed():
    rng = np.random.default_rng(2)
    X = rng.normal(size=(60, 5))
    y = rng.integers(0, 3, 60)
    a = RandomForestClassifier(n_trees=10, seed=42).fit(X, y).predict(X)
    b = RandomForestClassifier(n_trees=10, seed=42).fit(X, y).predict(X)
    c = RandomForestClassifier(n_trees=10, seed=43).fit(X, y).predict(X)
    assert np.array_equal(a, b)
    assert a.shape == c.shape  # different seed may differ; same contract


def test_forest_respects_min_leaf_and_depth():
    rng = np.random.default_rng(3)
    X = rng.normal(size=(50, 4))
    y = (X[:, 0] > 0).astype(int)
    rf = RandomForestClassifier(n_trees=5, max_depth=2, min_samples_leaf=10, n_classes=2, seed=1).fit(X, y)

    def depth_and_leaves(node, d=0):
        if node.feature is None:
            return d, 1
        dl, nl = depth_and_leaves(node.left, d + 1)
        dr, nr = depth_and_leaves(node.right, d + 1)
        return max(dl, dr), nl + nr

    for tree in rf.trees_:
        depth, _ = depth_and_leaves(tree.root_)
        assert depth <= 2


# ---------------------------------------------------------------------------
# SVM / SMO

def test_svm_two_points_midpoint_on_boundary():
    X = np.array([[0.0, 0.0], [2.0, 0.0]])
    y = np.array([1.0, -1.0])
    smo = _BinarySMO(C=100.0, gamma=0.1).fit(X, y)
    mid = smo.decision_function(np.array([[1.0, 0.0]]))[0]
    assert abs(mid) < 1e-6
    assert smo.decision_function(np.array([[0.0, 0.0]]))[0] > 0
    assert smo.decision_function(np.array([[2.0, 0.0]]))[0] < 0


def test_svm_separable_training_accuracy_and_kkt():
    rng = np.random.default_rng(4)
    a = rng.normal(loc=(-2.0, -2.0), scale=0.3, size=(10, 2))
    b = rng.normal(loc=(2.0, 2.0), scale=0.3, size=(10, 2))
    X = np.vstack([a, b])
    y = np.array([1.0] * 10 + [-1.0] * 10)
    smo = _BinarySMO(C=100.0, gamma=0.1).fit(X, y)
    assert smo.converged
    preds = np.sign(smo.decision_function(X))
    assert np.array_equal(preds, y)
    assert float(smo.kkt_violations().max()) < 1e-3


def test_svm_duplicated_points_same_predictions():
    rng = np.random.default_rng(5)
    X = np.vstack(
        [rng.normal(loc=(-1.5, 0.0), scale=0.4, size=(8, 2)), rng.normal(loc=(1.5, 0.0), scale=0.4, size=(8, 2))]
    )
    y = np.array([0] * 8 + [1] * 8)
    grid = rng.normal(scale=2.0, size=(40, 2))
    base = RBFSVMClassifier(C=10.0, gamma=0.5, n_classes=2).fit(X, y).predict(grid)
    dup = RBFSVMClassifier(C=10.0, gamma=0.5, n_classes=2).fit(
        np.vstack([X, X]), np.concatenate([y, y])
    ).predict(grid)
    assert np.array_equal(base, dup)


def test_svm_training_permutation_invariant_predictions():
    rng = np.random.default_rng(6)
    X = np.vstack(
        [rng.normal(loc=(-2.0, 0.0), scale=0.5, size=(12, 2)), rng.normal(loc=(2.0, 0.0), scale=0.5, size=(12, 2))]
    )
    y = np.array([0] * 12 + [1] * 12)
    perm = rng.permutation(len(y))
    a = RBFSVMClassifier(C=100.0, gamma=0.1, n_classes=2).fit(X, y).predict(X)
    b = RBFSVMClassifier(C=100.0, gamma=0.1, n_classes=2).fit(X[perm], y[perm]).predict(X)
    assert np.array_equal(a, b)


def test_svm_single_class_rejected():
    with pytest.raises(ValueError, match="2 classes"):
        RBFSVMClassifier().fit(np.zeros((4, 2)), np.zeros(4, dtype=int))


def test_svm_multiclass_three_blobs():
    rng = np.random.default_rng(7)
    centers = [(-3.0, 0.0), (3.0, 0.0), (0.0, 3.0)]
    X = np.vstack([rng.normal(loc=c, scale=0.4, size=(12, 2)) for c in centers])
    y = np.repeat([0, 1, 2], 12)
    svm = RBFSVMClassifier(C=100.0, gamma=0.1).fit(X, y)
    assert accuracy_score(y, svm.predict(X)) == 1.0
    assert svm.converged


def test_smo_nonconvergence_flagged():
    rng = np.random.default_rng(8)
    X = rng.normal(size=(30, 2))
    y = np.where(rng.random(30) < 0.5, 1.0, -1.0)  # unlearnable labels
    with pytest.warns(RuntimeWarning, match="sweeps"):
        smo = _BinarySMO(C=100.0, gamma=10.0, max_sweeps=1).fit(X, y)
    assert not smo.converged


# ---------------------------------------------------------------------------
# folds and grid search

def test_stratified_kfold_balanced():
    labels = np.array([0] * 10 + [1] * 10 + [2] * 5)
    folds = stratified_kfold(labels, 5, seed=0)
    assert len(folds) == 5
    seen = np.concatenate([te for _, te in folds])
    assert sorted(seen.tolist()) == list(range(25))
    for tr, te in folds:
        assert set(labels[te]) == {0, 1, 2}


def test_stratified_kfold_missing_class_named():
    labels = np.array([0] * 10 + [1] * 10 + [2] * 2)  # class 2 thinner than k
    with pytest.raises(ValueError, match=r"fold \d"):
        stratified_kfold(labels, 5, seed=0)


def test_grid_search_single_cell():
    rng = np.random.default_rng(9)
    X = rng.normal(size=(30, 2))
    y = (X[:, 0] > 0).astype(int)
    res = grid_search_cv(
        lambda **p: GaussianNBClassifier(n_classes=2, **p),
        {"var_smoothing": [0.01]},
        X,
        y,
        k_folds=3,
    )
    assert res.best_params == {"var_smoothing": 0.01}
    assert len(res.cells) == 1


def test_grid_search_cell_count_and_fit_count():
    rng = np.random.default_rng(10)
    X = rng.normal(size=(40, 3))
    y = (X[:, 0] + X[:, 1] > 0).astype(int)
    fits = []

    class Counting(GaussianNBClassifier):
        def fit(self, X, y):
            fits.append(1)
            return super().fit(X, y)

    res = grid_search_cv(
        lambda **p: Counting(n_classes=2),
        {"a": [1, 2], "b": [3, 4]},
        X,
        y,
        k_folds=3,
        scorer=lambda yt, yp: accuracy_score(yt, yp),
    )
    assert len(res.cells) == 4
    assert len(fits) == 4 * 3


def test_grid_search_winner_maximizes_mean_score():
    rng = np.random.default_rng(11)
    X = rng.normal(size=(60, 7))
    y = (X[:, 0] - X[:, 1] > 0).astype(int)
    res = grid_search_cv(
        lambda **p: RandomForestClassifier(n_classes=2, seed=3, **p),
        {"n_trees": [5, 20], "max_depth": [2, 4]},
        X,
        y,
        k_folds=3,
        seed=3,
    )
    best_mean = max(mean for _, mean, _ in res.cells)
    assert res.best_score == best_mean
    # earliest cell wins ties
    for params, mean, _ in res.cells:
        if mean == best_mean:
            assert params == res.best_params
            break


def test_grid_search_empty_grid_rejected():
    with pytest.raises(ValueError, match="empty"):
        grid_search_cv(lambda **p: GaussianNBClassifier(), {}, np.zeros((10, 2)), np.zeros(10))
