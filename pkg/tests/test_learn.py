import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from prlatency.errors import (
    ConfigError,
    DegenerateError,
    FeatureMismatchError,
    NonFiniteError,
    SchemaMismatchError,
    TooFewRowsError,
)
from prlatency.learn import (
    ALL_KINDS,
    GaussianNaiveBayes,
    GradientBoostedTrees,
    KNearestNeighbors,
    LinearSVM,
    ModelKind,
    RandomForest,
    dumps_model,
    load_model,
    loads_model,
    logistic_loss_grad,
    mlp_loss_grad,
    predict_scores,
    resolve_hyperparams,
    save_model,
    train,
)
from prlatency.learn import _trees

from . import oracles
from .builders import matrix_from

FAST = {
    "gbdt": {"iterations": 15, "max_depth": 3, "min_samples_leaf": 5},
    "random_forest": {"n_trees": 20},
    "knn": {"k": 5},
    "logistic": {"epochs": 30},
    "mlp": {"hidden": 8, "epochs": 20},
    "linear_svm": {"epochs": 20},
}


def blobs(n=300, sigma=0.3, seed=0, p=2):
    rng = np.random.default_rng(seed)
    centers = np.array([[0.0, 0.0], [6.0, 0.0], [0.0, 6.0]])
    y = np.repeat([0, 1, 2], n // 3)
    X = centers[y] + sigma * rng.standard_normal((len(y), 2))
    if p > 2:
        X = np.hstack([X, rng.standard_normal((len(y), p - 2))])
    # shift to keep the log1p stage in its domain
    return X + 10.0, y


def noisy(n=120, p=4, seed=0, nan_rate=0.0):
    rng = np.random.default_rng(seed)
    X = rng.lognormal(1.0, 1.0, (n, p))
    y = (X[:, 0] > np.median(X[:, 0])).astype(int) + (X[:, 1] > np.quantile(X[:, 1], 0.8)).astype(int)
    if nan_rate:
        X[rng.random(X.shape) < nan_rate] = np.nan
    return X, y


# -- training contract -----------------------------------------------------------


def test_logistic_separates_blobs():
    X, y = blobs()
    m = train("logistic", X, y)
    assert np.mean(m.predict(X) == y) >= 0.95


@pytest.mark.parametrize("kind", [k.value for k in ALL_KINDS])
def test_constant_labels_degenerate(kind):
    X, _ = blobs(30)
    with pytest.raises(DegenerateError):
        train(kind, X, np.zeros(30, int))


def test_too_few_rows():
    X, y = blobs(9)
    with pytest.raises(TooFewRowsError):
        train("gbdt", X, y)


def test_gbdt_without_iterations_predicts_priors():
    X, _ = noisy(100)
    y = np.array([0] * 50 + [1] * 30 + [2] * 20)
    m = train("gbdt", X, y, hp={"iterations": 0})
    S = predict_scores(m, X[:7])
    np.testing.assert_allclose(S, np.tile([0.5, 0.3, 0.2], (7, 1)), atol=1e-12)
    assert set(m.predict(X)) == {0}


def test_missing_class_still_gets_a_column():
    X, _ = noisy(60)
    y = np.array([0, 2] * 30)
    for kind in ALL_KINDS:
        S = train(kind.value, X, y, hp=FAST).predict_scores(X[:3])
        assert S.shape == (3, 3)


def test_knn_k1_returns_own_label():
    X, y = noisy(80)
    m = train("knn", X, y, hp={"k": 1})
    np.testing.assert_array_equal(m.predict_scores(X), np.eye(3)[y])


def test_naive_bayes_symmetric_point_is_a_tie():
    rng = np.random.default_rng(0)
    a = rng.standard_normal((40, 2))
    a -= a.mean(axis=0)
    X = np.vstack([a + [-3.0, 0.0], -a + [3.0, 0.0]])  # mirror images
    y = np.repeat([0, 1], 40)
    nb = GaussianNaiveBayes().fit(X, y)
    p = nb.predict_proba([[0.0, 0.7]])[0]
    assert p[0] == pytest.approx(p[1], abs=1e-12)


@pytest.mark.parametrize("kind", [k.value for k in ALL_KINDS if k.emits_probabilities])
def test_probabilities_sum_to_one(kind):
    X, y = noisy(150, nan_rate=0.05)
    S = train(kind, X, y, hp=FAST).predict_proba(X)
    assert np.all(S >= 0)
    np.testing.assert_allclose(S.sum(axis=1), 1.0, atol=1e-9)


def test_scores_only_kinds_refuse_predict_proba():
    X, y = noisy(60)
    for kind in ("knn", "linear_svm"):
        with pytest.raises(AttributeError):
            train(kind, X, y, hp=FAST).predict_proba(X)


def test_svm_margins_rank_blobs():
    X, y = blobs()
    svm = LinearSVM().fit(X - 10, y)
    M = svm.decision_function(X - 10)
    assert np.mean(M.argmax(axis=1) == y) >= 0.95
    # own-class margin mostly clears the hinge
    assert np.mean(M[np.arange(len(y)), y] > 0) > 0.9


@pytest.mark.parametrize("kind", [k.value for k in ALL_KINDS])
def test_training_is_bit_identical(kind):
    X, y = noisy(150, nan_rate=0.05)
    a, b = train(kind, X, y, hp=FAST, seed=7), train(kind, X, y, hp=FAST, seed=7)
    assert dumps_model(a) == dumps_model(b)
    np.testing.assert_array_equal(a.predict_scores(X), b.predict_scores(X))


def test_seed_changes_stochastic_kinds():
    X, y = noisy(150)
    for kind in ("random_forest", "mlp"):
        a, b = train(kind, X, y, hp=FAST, seed=1), train(kind, X, y, hp=FAST, seed=2)
        assert not np.array_equal(a.predict_scores(X), b.predict_scores(X))


def test_gbdt_loss_never_increases():
    X, y = noisy(300, nan_rate=0.1)
    g = GradientBoostedTrees(iterations=40, max_depth=4, min_samples_leaf=5).fit(X, y)
    assert np.all(np.diff(g.train_loss_) <= 1e-12)
    assert g.train_loss_[-1] < g.train_loss_[0]


@pytest.mark.parametrize("cls", [GradientBoostedTrees, RandomForest])
def test_trees_invariant_under_increasing_transform(cls):
    X, y = noisy(200, nan_rate=0.05)
    Xt = X.copy()
    Xt[:, 0] = np.exp(X[:, 0] / 3) + X[:, 0] ** 3
    Xt[:, 2] = -1.0 / X[:, 2]
    kw = {"iterations": 10, "min_samples_leaf": 5} if cls is GradientBoostedTrees else {"n_trees": 15}
    a = cls(**kw).fit(X, y).predict_proba(X)
    b = cls(**kw).fit(Xt, y).predict_proba(Xt)
    np.testing.assert_array_equal(a, b)


@pytest.mark.parametrize("kind", [k.value for k in ALL_KINDS])
def test_row_order_does_not_matter_for_matrices(kind):
    X, y = noisy(120, nan_rate=0.05)
    m = matrix_from(X, y, [f"f{i}" for i in range(4)])
    perm = np.random.default_rng(3).permutation(len(y))
    a = train(kind, m, hp=FAST, seed=4)
    b = train(kind, m.take(perm), hp=FAST, seed=4)
    np.testing.assert_allclose(a.predict_scores(m), b.predict_scores(m), atol=1e-9)


@pytest.mark.parametrize("cls", [GaussianNaiveBayes, KNearestNeighbors])
def test_order_free_kinds_ignore_raw_row_order(cls):
    X, y = noisy(120)
    perm = np.random.default_rng(5).permutation(len(y))
    a = cls().fit(X, y).predict_proba(X)
    b = cls().fit(X[perm], y[perm]).predict_proba(X)
    np.testing.assert_allclose(a, b, atol=1e-9)


def test_missing_values_route_to_the_learned_side():
    rng = np.random.default_rng(0)
    x = rng.uniform(0, 10, 400)
    y = (x > 5).astype(int)
    missing = rng.random(400) < 0.2
    x[missing] = np.nan
    y[missing] = 1  # missing behaves like the high side
    X = np.column_stack([x, rng.uniform(0, 1, 400)])
    g = GradientBoostedTrees(iterations=20, max_depth=2, min_samples_leaf=5).fit(X, y)
    assert g.predict([[np.nan, 0.5]])[0] == 1
    assert g.predict([[1.0, 0.5]])[0] == 0


def test_feature_usage_reported():
    X, y = noisy(200)
    X[:, 3] = 7.0  # constant, can never be split on
    m = train("gbdt", X, y, hp=FAST)
    used = m.used_features()
    assert used[0] and not used[3]
    assert train("knn", X, y).used_features() is None


# -- gradients ------------------------------------------------------------------------


@settings(max_examples=25)
@given(st.integers(0, 2**31), st.integers(2, 6), st.integers(2, 9))
def test_logistic_gradient_matches_finite_differences(seed, p, n):
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((n, p))
    Y = np.eye(3)[rng.integers(0, 3, n)]
    W, b = rng.standard_normal((p, 3)), rng.standard_normal(3)
    _, gW, gb = logistic_loss_grad(W, b, X, Y, 0.1)
    # the oracle perturbs W and b in place
    loss = lambda: logistic_loss_grad(W, b, X, Y, 0.1)[0]  # noqa: E731
    num_W = oracles.finite_difference(loss, W)
    num_b = oracles.finite_difference(loss, b)
    assert oracles.relative_error(gW, num_W) < 1e-4
    assert oracles.relative_error(gb, num_b) < 1e-4


@settings(max_examples=25)
@given(st.integers(0, 2**31))
def test_mlp_gradient_matches_finite_differences(seed):
    rng = np.random.default_rng(seed)
    n, p, h = 6, 3, 5
    X = rng.standard_normal((n, p))
    Y = np.eye(3)[rng.integers(0, 3, n)]
    params = [rng.standard_normal((p, h)), rng.standard_normal(h), rng.standard_normal((h, 3)), rng.standard_normal(3)]
    A = X @ params[0] + params[1]
    if np.min(np.abs(A)) < 1e-3:
        return  # too close to the ReLU kink for a central difference
    _, grads = mlp_loss_grad(params, X, Y, 0.05)
    for i in range(4):
        num = oracles.finite_difference(lambda: mlp_loss_grad(params, X, Y, 0.05)[0], params[i])
        assert oracles.relative_error(grads[i], num) < 1e-4


# -- failures -------------------------------------------------------------------------


def test_divergence_is_non_finite():
    rng = np.random.default_rng(0)
    X = np.abs(rng.standard_normal((200, 3))) * 1e3
    y = rng.integers(0, 3, 200)
    with pytest.raises(NonFiniteError):
        train("logistic", X, y, hp={"learning_rate": 1e8})
    with pytest.raises(NonFiniteError):
        train("linear_svm", X, y, hp={"learning_rate": 1e9, "l2": 1e3})


@pytest.mark.parametrize(
    "overrides",
    [{"xgboost": {}}, {"gbdt": {"depth": 3}}, {"knn": {"k": 0}}, {"gbdt": {"learning_rate": -0.1}}],
)
def test_bad_hyperparameters(overrides):
    with pytest.raises(ConfigError):
        resolve_hyperparams(overrides)


def test_zero_iterations_allowed():
    assert resolve_hyperparams({"gbdt": {"iterations": 0}})["gbdt"]["iterations"] == 0


def test_kind_columns():
    assert [k.column for k in ALL_KINDS] == ["CB", "KNN", "LR", "NB", "NN", "RF", "SVM"]
    assert ModelKind("gbdt").is_tree and not ModelKind("mlp").is_tree


# -- persistence ---------------------------------------------------------------------


@pytest.mark.parametrize("kind", [k.value for k in ALL_KINDS])
def test_bundle_round_trip(tmp_path, kind):
    X, y = noisy(120, nan_rate=0.05)
    m = train(kind, matrix_from(X, y, [f"f{i}" for i in range(4)]), hp=FAST, seed=3, fold=2)
    save_model(m, tmp_path / "m.model")
    back = load_model(tmp_path / "m.model")
    probe = np.random.default_rng(1).lognormal(1, 1, (40, 4))
    np.testing.assert_array_equal(back.predict_scores(probe), m.predict_scores(probe))
    assert dumps_model(back) == (tmp_path / "m.model").read_bytes()
    assert back.metadata_["fold"] == 2 and back.metadata_["seed"] == 3
    assert back.feature_names_ == ["f0", "f1", "f2", "f3"]


def test_bundle_damage(tmp_path):
    X, y = noisy(60)
    data = dumps_model(train("naive_bayes", X, y))
    assert data.startswith(b"PRLATENCY-MODEL 1\n")
    with pytest.raises(SchemaMismatchError):
        loads_model(data[: len(data) // 2])
    with pytest.raises(SchemaMismatchError):
        loads_model(b"PRLATENCY-MODEL 2\n{}\n")
    with pytest.raises(SchemaMismatchError):
        loads_model(b"something else")
    m = loads_model(data)
    with pytest.raises(FeatureMismatchError):
        m.predict_scores(np.ones((2, 5)))


def test_feature_names_must_match():
    X, y = noisy(60)
    m = train("gbdt", matrix_from(X, y, ["a", "b", "c", "d"]), hp=FAST)
    with pytest.raises(FeatureMismatchError):
        m.predict_scores(matrix_from(X, y, ["a", "b", "d", "c"]))


# -- binning -------------------------------------------------------------------------


@given(st.lists(st.one_of(st.integers(-30, 30).map(float), st.just(float("nan"))), min_size=1, max_size=60),
       st.integers(2, 300))
def test_bin_edges_are_training_values(values, max_bins):
    col = np.array(values)[:, None]
    edges = _trees.fit_bin_edges(col, max_bins)[0]
    finite = col[~np.isnan(col)]
    assert len(edges) <= max(0, len(np.unique(finite)) - 1)
    assert np.all(np.isin(edges, finite))
    assert np.all(np.diff(edges) > 0)
    b = _trees.apply_bins(col, [edges])[:, 0]
    assert np.all(b[np.isnan(col[:, 0])] == _trees.MISSING_BIN)
    ok = ~np.isnan(col[:, 0])
    # bin order follows value order
    v, bb = col[ok, 0], b[ok]
    assert all(bb[i] <= bb[j] for i in range(len(v)) for j in range(len(v)) if v[i] <= v[j])
