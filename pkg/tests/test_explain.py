import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from prlatency.errors import FeatureMismatchError, TooFewRowsError
from prlatency.explain import (
    ImportanceTable,
    ShapleyMatrix,
    impact_summary,
    permutation_importance,
    rank_features,
    shapley_values,
)
from prlatency.learn import SoftmaxRegression, train
from prlatency.synthetic import SIGNAL_FEATURES, additive_logit_matrix, threshold_signal_project

from .builders import matrix_from


class Linear:
    """Additive stand-in model: per-class scores are ``X @ W``."""

    def __init__(self, W):
        self.W = np.asarray(W, dtype=float)

    def predict_scores(self, X):
        return np.asarray(X, dtype=float) @ self.W


def split(m, frac=0.7):
    cut = int(len(m) * frac)
    return m.take(np.arange(cut)), m.take(np.arange(cut, len(m)))


@pytest.fixture(scope="module")
def threshold_model():
    m = threshold_signal_project(1500, seed=0)
    tr, te = split(m)
    return train("gbdt", tr, hp={"iterations": 40, "max_depth": 3}, seed=0), te


# -- permutation importance ----------------------------------------------------------


def test_unused_feature_has_exactly_zero_loss():
    rng = np.random.default_rng(0)
    X = rng.lognormal(1, 1, (300, 3))
    y = np.digitize(X[:, 0], np.quantile(X[:, 0], [0.4, 0.75]))
    X[:200, 2] = 5.0  # constant while training: never split on
    names = ["a", "b", "c"]
    model = train("gbdt", matrix_from(X[:200], y[:200], names), hp={"iterations": 10})
    assert not model.used_features()[2]
    t = permutation_importance(model, matrix_from(X[200:], y[200:], names), repeats=5, seed=1)
    np.testing.assert_array_equal(t.loss_of("c"), 0.0)


def test_zero_weight_feature_has_zero_loss():
    rng = np.random.default_rng(1)
    X = rng.normal(size=(100, 3))
    y = rng.integers(0, 3, 100)
    model = Linear([[1.0, 0.0, -1.0], [0.0, 0.0, 0.0], [0.5, -0.5, 0.0]])
    t = permutation_importance(model, X, y, repeats=4)
    np.testing.assert_array_equal(t.loss_of("x1"), 0.0)


def test_label_feature_matters_most(threshold_model):
    model, test = threshold_model
    t = permutation_importance(model, test, repeats=5, seed=2)
    assert t.features[int(np.argmax(t.mean))] == "description_length"
    assert t.baseline > 0.5
    assert t.losses.shape == (len(SIGNAL_FEATURES), 5)


def test_duplicate_features_share_credit():
    rng = np.random.default_rng(3)
    n = 1200
    x = rng.lognormal(2, 1, n)
    y = np.digitize(x, np.quantile(x, [0.4, 0.75]))
    flip = rng.random(n) < 0.15
    y[flip] = rng.integers(0, 3, flip.sum())
    noise = rng.lognormal(2, 1, (n, 2))
    # greedy boosting breaks exact gain ties toward the first copy, so the
    # forest (random candidate features per node) is the model that shares
    hp = {"n_trees": 60}
    solo = matrix_from(np.column_stack([x, noise]), y, ["x", "n1", "n2"])
    dup = matrix_from(np.column_stack([x, x, noise]), y, ["x", "x_copy", "n1", "n2"])
    losses = {}
    for name, m in (("solo", solo), ("dup", dup)):
        tr, te = split(m)
        losses[name] = permutation_importance(train("random_forest", tr, hp=hp), te, repeats=5, seed=4)
    alone = losses["solo"].loss_of("x").mean()
    assert losses["dup"].loss_of("x").mean() < alone
    assert losses["dup"].loss_of("x_copy").mean() < alone


def test_importance_needs_rows():
    with pytest.raises(TooFewRowsError):
        permutation_importance(Linear(np.eye(3)), np.ones((19, 3)), np.zeros(19))


def test_importance_is_deterministic_and_order_free(threshold_model):
    model, test = threshold_model
    a = permutation_importance(model, test, repeats=3, seed=9)
    b = permutation_importance(model, test, repeats=3, seed=9)
    np.testing.assert_array_equal(a.losses, b.losses)
    # a feature's shuffles do not depend on which other features exist
    sub = test.select(["description_length", "commits"])
    lin = Linear(np.zeros((2, 3)))
    c = permutation_importance(lin, sub, repeats=3, seed=9)
    assert c.losses.shape == (2, 3)


# -- Shapley values ---------------------------------------------------------------------


def test_constant_model_has_zero_attributions():
    m = threshold_signal_project(200, seed=1)
    model = train("gbdt", m, hp={"iterations": 0})
    s = shapley_values(model, m.take(np.arange(10)), m.take(np.arange(50, 100)), samples_per_row=32)
    assert np.all(np.abs(s.values) <= 1e-12)


def test_additive_model_closed_form():
    X, y = additive_logit_matrix(600, seed=0)
    est = SoftmaxRegression(epochs=60).fit(X, y)
    bg = X[:64]
    s = shapley_values(est, X[100:130], bg, samples_per_row=128, seed=3, output="raw")
    want = (X[100:130][:, :, None] - bg.mean(axis=0)[None, :, None]) * est.coef_[None, :, :]
    assert np.all(np.abs(s.values - want) <= 3 * s.standard_error + 1e-12)
    # the fit recovers the generating weights' signs on the class logits
    assert est.coef_[0, 1] > est.coef_[0, 0] and est.coef_[1, 2] < est.coef_[1, 0]


def test_identical_features_get_equal_credit():
    rng = np.random.default_rng(5)
    a = rng.normal(size=(40, 1))
    X = np.hstack([a, a, rng.normal(size=(40, 1))])
    model = Linear([[1.0, 0, 0], [1.0, 0, 0], [0.0, 2.0, 0]])
    s = shapley_values(model, X[:10], X[10:], samples_per_row=64, seed=0)
    assert np.all(np.abs(s.values[:, 0] - s.values[:, 1]) <= 3 * (s.standard_error[:, 0] + s.standard_error[:, 1]) + 1e-12)


@settings(max_examples=15)
@given(st.integers(0, 2**31), st.sampled_from([16, 20, 33]), st.integers(1, 3))
def test_complete_background_cycles_are_exactly_efficient(seed, n_bg, cycles):
    rng = np.random.default_rng(seed)
    X = rng.lognormal(1, 1, (n_bg + 8, 3))
    model = Linear(rng.normal(size=(3, 3)))
    s = shapley_values(model, X[:8], X[8:], samples_per_row=2 * n_bg * cycles, seed=seed % 1000)
    np.testing.assert_allclose(s.efficiency_gap(), 0.0, atol=1e-9)


def test_gbdt_efficiency(threshold_model):
    model, test = threshold_model
    s = shapley_values(model, test.take(np.arange(12)), test.take(np.arange(100, 164)), samples_per_row=64)
    assert np.all(np.abs(s.efficiency_gap()) <= 3 * s.total_error + 1e-12)
    np.testing.assert_allclose(s.outputs.sum(axis=1), 1.0)


def test_shapley_checks_inputs(threshold_model):
    model, test = threshold_model
    with pytest.raises(FeatureMismatchError):
        shapley_values(model, np.ones((2, 3)), np.ones((20, 3)))
    with pytest.raises(FeatureMismatchError):
        shapley_values(model, test.select(["commits"]), test)
    with pytest.raises(TooFewRowsError):
        shapley_values(model, test.take([0]), test.take(np.arange(10)))


def test_shapley_is_deterministic(threshold_model):
    model, test = threshold_model
    a = shapley_values(model, test.take(np.arange(4)), test.take(np.arange(50, 80)), samples_per_row=16, seed=1)
    b = shapley_values(model, test.take(np.arange(4)), test.take(np.arange(50, 80)), samples_per_row=16, seed=1)
    c = shapley_values(model, test.take(np.arange(4)), test.take(np.arange(50, 80)), samples_per_row=16, seed=2)
    np.testing.assert_array_equal(a.values, b.values)
    assert not np.array_equal(a.values, c.values)


# -- rankings -----------------------------------------------------------------------------

ALT = np.array([1.0, -1.0] * 5)


def table(losses: dict, seed=0):
    names = list(losses)
    return ImportanceTable(names, np.array([losses[f] for f in names]), 0.7, seed)


def test_dominant_feature_ranks_first_everywhere():
    tables = {p: table({"big": 0.2 + 0.01 * ALT, "a": 0.01 + 0.01 * ALT, "b": 0.0 * ALT}) for p in ("p1", "p2", "p3")}
    grid = rank_features(tables)
    assert all(grid.rank("big", p) == 1 for p in grid.projects)
    assert grid.features[0] == "big" and grid.aggregate["big"] == 1


def test_equal_importance_shares_a_rank():
    t = table({"a": 0.1 + 0.01 * ALT, "b": 0.1 + 0.01 * ALT, "c": 0.0 * ALT})
    grid = rank_features({"p": t})
    assert grid.rank("a", "p") == grid.rank("b", "p") == 1
    assert grid.rank("c", "p") == 2


def test_three_tiers():
    t = table({"hi": 0.3 + 0.01 * ALT, "hi2": 0.3 - 0.01 * ALT, "mid": 0.1 + 0.01 * ALT, "lo": 0.001 * ALT})
    grid = rank_features({"p1": t, "p2": t})
    assert [grid.aggregate[f] for f in ("hi", "hi2", "mid", "lo")] == [1, 1, 2, 3]
    assert all(r >= 1 for r in grid.ranks.values())
    assert len(grid.ranks) == 8


def test_rank_preconditions(tmp_path):
    with pytest.raises(TooFewRowsError):
        rank_features({})
    with pytest.raises(TooFewRowsError):
        rank_features({"p": ImportanceTable(["a", "b"], np.array([[0.1], [0.2]]), 0.6, 0)})
    grid = rank_features({"p": table({"a": 0.1 + 0.01 * ALT, "b": 0.0 * ALT})})
    grid.to_csv(tmp_path / "g.csv")
    assert (tmp_path / "g.csv").read_text().splitlines()[0] == "feature,aggregate_rank,mean_loss,p"
    assert grid.to_svg().startswith("<svg")


# -- impact summaries ------------------------------------------------------------------------


def _shap(values, attributions):
    v = np.asarray(values, dtype=float)[:, None]
    a = np.asarray(attributions, dtype=float)[:, None, None]
    n = len(v)
    return ShapleyMatrix(
        ["f"], v, a, np.zeros_like(a), np.zeros(1), np.zeros((n, 1)), np.zeros((n, 1)), 8, 0)


def test_impact_of_empty_rows():
    s = impact_summary(_shap(np.zeros(0), np.zeros(0)), "f", 0)
    assert s.bands == [] and s.pairs.shape == (0, 2)


def test_impact_constant_attribution_is_a_point_band():
    s = impact_summary(_shap(np.arange(30), np.full(30, 0.25)), "f", 0)
    for b in s.bands:
        assert b["q05"] == b["q95"] == 0.25


def test_impact_missing_values_get_their_own_band(tmp_path):
    s = impact_summary(_shap([1.0, np.nan, 2.0, np.nan], [0.1, -0.2, 0.3, -0.2]), "f", 0)
    assert s.bands[-1]["bin"] == "MISSING" and s.bands[-1]["count"] == 2
    s.to_csv(tmp_path / "b.csv")
    s.pairs_to_csv(tmp_path / "p.csv")
    assert "MISSING" in (tmp_path / "p.csv").read_text()
    assert s.to_svg().startswith("<svg")


def test_impact_of_additive_feature_is_monotone():
    X, y = additive_logit_matrix(600, seed=1)
    est = SoftmaxRegression(epochs=60).fit(X, y)
    s = shapley_values(est, X[:200], X[200:264], samples_per_row=32, seed=0, output="raw")
    summary = impact_summary(s, "x0", 1)
    medians = [b["q50"] for b in summary.bands]
    assert len(medians) == 10
    sign = np.sign(est.coef_[0, 1])
    assert np.all(sign * np.diff(medians) > 0)
