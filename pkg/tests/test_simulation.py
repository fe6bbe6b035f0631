import math

import numpy as np
import pytest

from diffvar.simulation import (RAW_FIELDS, SUMMARY_FIELDS, DgpSpec, draw, monte_carlo_truth,
                                read_summary_csv, replicate_seeds, run_study, scenarios,
                                summarize, true_propensity, truth, write_csv)


def test_draw_is_deterministic():
    a = draw(DgpSpec(2, 300, seed=11))
    b = draw(DgpSpec(2, 300, seed=11))
    np.testing.assert_array_equal(a.y, b.y)
    np.testing.assert_array_equal(a.w, b.w)
    c = draw(DgpSpec(2, 300, seed=12))
    assert not np.array_equal(a.y, c.y)


@pytest.mark.parametrize("bad", [dict(study=4, n=10), dict(study=3, n=10, m=1.5),
                                 dict(study=1, n=1)])
def test_spec_validation(bad):
    with pytest.raises(ValueError):
        DgpSpec(**bad)


def test_study3_m0_observes_modifier():
    d = draw(DgpSpec(3, 4000, m=0.0, seed=3))
    assert d.covariates == ("W1", "W2", "V_obs")
    v = d.w[:, 2]
    assert set(np.unique(v)) <= {0.0, 1.0}
    # with the modifier observed exactly, treated residual variance given V is 1
    t = d.a == 1
    mu = 1 + d.w[t, 0] ** 2 + 2 * (d.w[t, 1] < 0) - 2 + 4 * v[t]
    assert np.var(d.y[t] - mu) == pytest.approx(1.0, abs=0.1)
    assert d.a.mean() == pytest.approx(0.5, abs=0.03)


def test_study3_m1_breaks_modifier_link():
    d = draw(DgpSpec(3, 20000, m=1.0, seed=3))
    t = d.a == 1
    # V_obs is pure noise at rate 0.2, so it carries no outcome signal
    assert d.w[:, 2].mean() == pytest.approx(0.2, abs=0.01)
    r = np.corrcoef(d.w[t, 2], d.y[t])[0, 1]
    assert abs(r) < 0.03


def test_study1_variance_ratio_large_sample():
    d = draw(DgpSpec(1, 1_000_000, seed=5))
    # variance of potential outcomes, reconstructed by inverse weighting on the truth
    g = true_propensity(1)(d.w)
    vals = []
    for arm, p in ((1, g), (0, 1 - g)):
        h = (d.a == arm) / p
        m1 = np.mean(h * d.y)
        vals.append(np.mean(h * d.y ** 2) - m1 ** 2)
    assert vals[0] / vals[1] == pytest.approx(2.479, rel=0.02)
    assert truth(DgpSpec(1, 10)).lambda0 == pytest.approx(7.71 / 3.11, rel=1e-12)


@pytest.mark.parametrize("study", [1, 2, 3])
def test_closed_form_truth_matches_monte_carlo(study):
    mc = monte_carlo_truth(study, n_oracle=2_000_000, seed=7, batches=20)
    cf = truth(DgpSpec(study, 10))
    assert abs(mc.lambda0 - cf.lambda0) <= 3 * mc.lambda_se + 1e-12
    assert abs(mc.psi0 - cf.psi0) <= 3 * mc.psi_se + 1e-12


def test_truth_values_by_study():
    t2 = truth(DgpSpec(2, 10))
    assert (t2.lambda0, t2.psi0) == (1.0, 0.0)
    t3 = truth(DgpSpec(3, 10))
    assert t3.psi0 == pytest.approx(math.sqrt(8) - 2)


def test_replicate_seeds_distinct():
    seen = {replicate_seeds(1, 2, n, r) for n in (125, 250) for r in range(50)}
    assert len(seen) == 100
    assert replicate_seeds(1, 2, 125, 0) == replicate_seeds(1, 2, 125, 0)


def test_scenarios_named():
    assert list(scenarios(1)) == ["all-correct", "g-correct", "q-correct", "all-misspecified"]
    assert list(scenarios(2)) == ["super-learner"]
    assert list(scenarios(3, 0.5)) == ["linear-m0.5"]


def test_run_study_schedule_invariant():
    kw = dict(estimators=["OS", "TMLE"], ns=[60], reps=4, seed=9)
    one = run_study(3, workers=1, **kw)
    two = run_study(3, workers=2, **kw)
    assert one.rows == two.rows
    assert [r["estimate"] for r in one.raw] == [r["estimate"] for r in two.raw]


def test_run_study_rejects_unknown():
    with pytest.raises(ValueError):
        run_study(3, estimators=["XYZ"], ns=[50], reps=1)
    with pytest.raises(ValueError):
        run_study(1, scenario="nope", ns=[50], reps=1)


def test_summarize_metrics():
    raw = []
    for rep, (est, cov, p) in enumerate([(1.0, True, 0.01), (3.0, False, 0.2)]):
        raw.append(dict(study=3, scenario="s", estimator="OS", estimand="psi", n=100, rep=rep,
                        estimate=est, se=1.0, ci_low=0, ci_high=0, p_value=p, covered=cov,
                        truth=1.5, error=""))
    raw.append(dict(raw[0], rep=2, estimate=math.nan, error="boom"))
    (row,) = summarize(raw)
    assert row["abs_bias"] == pytest.approx(0.5)
    assert row["scaled_abs_bias"] == pytest.approx(5.0)
    assert row["emp_variance"] == pytest.approx(2.0)
    assert row["coverage"] == 0.5 and row["power"] == 0.5
    assert row["n_reps"] == 3 and row["n_failures"] == 1


def test_csv_roundtrip(tmp_path):
    s = run_study(3, estimators=["OS"], ns=[50], reps=3, seed=1)
    p = tmp_path / "summary.csv"
    write_csv(p, s.rows, SUMMARY_FIELDS)
    back = read_summary_csv(p)
    assert back == s.rows
    write_csv(tmp_path / "raw.csv", s.raw, RAW_FIELDS)
    lines = (tmp_path / "raw.csv").read_text().splitlines()
    assert lines[0].split(",") == list(RAW_FIELDS) and len(lines) == 4


def test_power_grows_with_n():
    s = run_study(3, estimators=["OS"], ns=[80, 400], reps=30, m=0.0, seed=4)
    p = {r["n"]: r["power"] for r in s.rows}
    assert p[400] >= p[80]
