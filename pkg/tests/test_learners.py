import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.special import expit, logit

from diffvar.learners import (EPS_PROB, ForestParams, RankError, design_matrix, fit_forest,
                              fit_logistic_irls, fit_mean, fit_offset_logistic, fit_ols,
                              fit_stacking, parse_learner)
from diffvar.learners.stacking import simplex_grid


def test_mean_learner():
    assert fit_mean([1, 2, 3]).predict(np.zeros((4, 2))).tolist() == [2.0] * 4
    assert fit_mean([5]).predict(np.zeros((1, 0)))[0] == 5
    assert fit_mean([0.2, 0.4]).predict(np.zeros((2, 1))) == pytest.approx([0.3, 0.3])
    with pytest.raises(ValueError):
        fit_mean([])


def test_ols_line_and_parabola():
    m = fit_ols(np.array([[0.0], [1.0], [2.0]]), [1, 3, 5], degree=1)
    assert m.predict(np.array([[3.0]]))[0] == pytest.approx(7.0, abs=1e-12)
    m = fit_ols(np.array([[-1.0], [0.0], [1.0]]), [1, 0, 1], degree=2)
    assert m.predict(np.array([[2.0]]))[0] == pytest.approx(4.0, abs=1e-10)


def test_ols_constant_target(rng):
    x = rng.normal(size=(20, 3))
    assert fit_ols(x, np.full(20, 4.0), 2).predict(rng.normal(size=(5, 3))) == pytest.approx([4] * 5)


def test_ols_rank_error_without_ridge():
    with pytest.raises(RankError):
        fit_ols(np.array([[1.0, 2.0]]), [1.0], degree=1, ridge=False)
    # the ridge guard still returns a finite fit
    assert np.isfinite(fit_ols(np.array([[1.0, 2.0]]), [1.0]).predict(np.ones((1, 2)))).all()


def test_design_matrix_degree2_columns():
    x = np.array([[2.0, 3.0]])
    np.testing.assert_array_equal(design_matrix(x, 2), [[1, 2, 3, 4, 6, 9]])


@settings(max_examples=40, deadline=None)
@given(a=st.floats(-5, 5).filter(lambda v: abs(v) > 1e-3), b=st.floats(-10, 10),
       seed=st.integers(0, 1000))
def test_ols_affine_equivariance(a, b, seed):
    r = np.random.default_rng(seed)
    x = r.normal(size=(30, 2))
    y = r.normal(size=30)
    p1 = fit_ols(x, y).predict(x)
    p2 = fit_ols(x, a * y + b).predict(x)
    np.testing.assert_allclose(p2, a * p1 + b, rtol=1e-9, atol=1e-9)


def test_logistic_intercept_only():
    x = np.zeros((10, 1))
    t = np.array([1, 0] * 5, dtype=float)
    m = fit_logistic_irls(x, t)
    assert m.converged
    assert m.predict(x) == pytest.approx([0.5] * 10, abs=1e-8)


def test_logistic_fractional_half():
    r = np.random.default_rng(0)
    x = r.normal(size=(40, 2))
    m = fit_logistic_irls(x, np.full(40, 0.5))
    assert m.predict(x) == pytest.approx([0.5] * 40, abs=1e-8)


def test_logistic_separation_is_flagged_and_clipped():
    x = np.array([[-2.0], [-1.0], [1.0], [2.0]])
    m = fit_logistic_irls(x, [0, 0, 1, 1])
    assert m.separated
    p = m.predict(np.array([[-100.0], [100.0]]))
    assert p[0] == EPS_PROB and p[1] == 1 - EPS_PROB


def test_logistic_matches_known_mle():
    # an intercept-and-slope model on grouped data has a closed-form MLE:
    # the fitted probabilities equal the group proportions
    x = np.r_[np.zeros(10), np.ones(10)][:, None]
    t = np.r_[np.ones(3), np.zeros(7), np.ones(8), np.zeros(2)]
    m = fit_logistic_irls(x, t)
    assert m.predict(np.array([[0.0], [1.0]])) == pytest.approx([0.3, 0.8], abs=1e-8)


def test_forest_constant_target(rng):
    x = rng.normal(size=(50, 2))
    m = fit_forest(x, np.full(50, 3.5), ForestParams(trees=10, seed=1))
    assert m.predict(rng.normal(size=(7, 2))) == pytest.approx([3.5] * 7)


def test_forest_single_split_recovers_step():
    x = np.r_[np.zeros(20), np.ones(20)][:, None]
    y = x[:, 0].copy()
    m = fit_forest(x, y, ForestParams(trees=1, max_depth=1, min_leaf=1, seed=3))
    assert m.predict(np.array([[0.0], [1.0]])).tolist() == [0.0, 1.0]


def test_forest_beats_mean_on_step(rng):
    # oracle comparison on a held-out sample
    def gen(n):
        w = rng.normal(size=(n, 1))
        return w, 2.0 * (w[:, 0] < 0) + rng.normal(size=n)
    x, y = gen(500)
    xt, yt = gen(2000)
    forest = fit_forest(x, y, ForestParams(trees=100, seed=0))
    mse_f = np.mean((forest.predict(xt) - yt) ** 2)
    mse_m = np.mean((fit_mean(y).predict(xt) - yt) ** 2)
    assert mse_f < mse_m


def test_forest_reproducible(rng):
    x = rng.normal(size=(80, 3))
    y = rng.normal(size=80)
    p = ForestParams(trees=20, seed=11)
    np.testing.assert_array_equal(fit_forest(x, y, p).predict(x), fit_forest(x, y, p).predict(x))


def test_forest_too_few_rows():
    with pytest.raises(ValueError):
        fit_forest(np.zeros((5, 1)), np.zeros(5), ForestParams(min_leaf=5))


def test_simplex_grid():
    g = simplex_grid(3)
    assert len(g) == math.comb(22, 2)
    np.testing.assert_allclose(g.sum(axis=1), 1.0)
    assert (g >= 0).all()


def test_stacking_single_learner(rng):
    x = rng.normal(size=(60, 2))
    y = x @ [1.0, -2.0] + rng.normal(size=60)
    m = fit_stacking([parse_learner("ols")], x, y, 5, seed=0)
    assert m.weights.tolist() == [1.0]
    np.testing.assert_allclose(m.predict(x), fit_ols(x, y).predict(x))


def test_stacking_weights_beat_corners(rng):
    x = rng.normal(size=(80, 1))
    y = 2.0 + 3.0 * x[:, 0]
    m = fit_stacking([parse_learner("mean"), parse_learner("ols")], x, y, 5, seed=0)
    # cv-mse at the returned weights is no worse than at either corner
    from diffvar.learners.stacking import cv_folds
    fold = cv_folds(80, 5, 0)
    preds = np.empty((80, 2))
    for v in range(5):
        tr = fold != v
        preds[~tr, 0] = y[tr].mean()
        preds[~tr, 1] = fit_ols(x[tr], y[tr]).predict(x[~tr])
    corners = [np.mean((preds[:, j] - y) ** 2) for j in range(2)]
    assert m.cv_mse <= min(corners) + 1e-12


def test_stacking_close_to_best_base_on_quadratic():
    r = np.random.default_rng(7)
    x = r.uniform(-2, 2, size=(300, 1))
    y = x[:, 0] ** 2 + 0.3 * r.normal(size=300)
    xt = r.uniform(-2, 2, size=(3000, 1))
    yt = xt[:, 0] ** 2 + 0.3 * r.normal(size=3000)
    base = [parse_learner(s) for s in ("mean", "ols", "forest")]
    stacked = fit_stacking(base, x, y, 5, seed=1)
    mse = lambda p: np.mean((p - yt) ** 2)
    base_mse = [mse(b.fit(x, y, seed=1).predict(xt)) for b in base]
    assert mse(stacked.predict(xt)) <= 1.05 * min(base_mse)


def test_stacking_drops_failing_learner(rng):
    x = rng.normal(size=(30, 1))
    y = rng.normal(size=30)
    # forest needs 2 * min_leaf rows per cv training fold
    bad = parse_learner("forest(min_leaf=50)")
    with pytest.warns(RuntimeWarning, match="dropping"):
        m = fit_stacking([bad, parse_learner("ols")], x, y, 3, seed=0)
    assert m.names == ["ols"]
    with pytest.raises(ValueError):
        fit_stacking([bad], x, y, 3, seed=0)


@pytest.mark.parametrize("spec", ["mean", "ols", "ols2", "logit", "logit2", "forest",
                                  "forest(trees=50,max_depth=4)", "logit(cols=1)",
                                  "stack(ols,ols2,forest(trees=20),cv=3)"])
def test_parse_learner_roundtrip(spec):
    assert str(parse_learner(spec)) == spec
    assert parse_learner(str(parse_learner(spec))) == parse_learner(spec)


@pytest.mark.parametrize("spec", ["mars", "ols(", "forest(depth=3)", "stack()"])
def test_parse_learner_errors(spec):
    with pytest.raises(ValueError):
        parse_learner(spec)


def test_column_subset_learner():
    x = np.column_stack([np.arange(10.0), np.zeros(10)])
    m = parse_learner("ols(cols=1)").fit(x, np.arange(10.0))
    assert m.predict(x) == pytest.approx([4.5] * 10)


# offset logistic -----------------------------------------------------------

def test_offset_zero_score_gives_zero_eta():
    off = np.array([-1.0, 0.3, 2.0])
    f = fit_offset_logistic(np.array([1.0, 2.0, 0.5]), off, expit(off))
    assert f.eta == 0.0 and f.converged


def test_offset_flat_likelihood():
    f = fit_offset_logistic(np.zeros(4), np.zeros(4), np.array([0.1, 0.9, 0.3, 0.2]))
    assert f.eta == 0.0 and f.converged


def test_offset_closed_form_root():
    f = fit_offset_logistic(np.array([2.0, 2.0]), np.zeros(2), np.array([0.8, 0.8]))
    assert f.converged
    assert f.eta == pytest.approx(logit(0.8) / 2, abs=1e-8)
    assert f.eta == pytest.approx(0.6931471805599453, abs=1e-8)
    assert expit(2 * f.eta) == pytest.approx(0.8, abs=1e-8)


def test_offset_rejects_nonfinite():
    with pytest.raises(ValueError):
        fit_offset_logistic(np.ones(2), np.array([0.0, np.inf]), np.array([0.5, 0.5]))


def test_offset_extreme_uses_fallback_and_converges():
    # targets far from the offset with large h push Newton into its line search
    h = np.r_[np.full(5, 80.0), np.zeros(5)]
    off = np.full(10, -9.0)
    t = np.full(10, 0.999)
    f = fit_offset_logistic(h, off, t)
    assert f.converged
    assert abs(f.score) <= 1e-8 * 10


@settings(max_examples=80, deadline=None)
@given(seed=st.integers(0, 10**6), n=st.integers(2, 200))
def test_offset_score_solved(seed, n):
    r = np.random.default_rng(seed)
    h = r.uniform(0, 20, n) * (r.random(n) < 0.6)
    off = r.normal(0, 3, n)
    t = r.uniform(0, 1, n)
    f = fit_offset_logistic(h, off, t)
    assert f.converged
    score = np.sum(h * (t - expit(off + f.eta * h)))
    assert abs(score) <= 1e-8 * n
