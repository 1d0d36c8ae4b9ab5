import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from eventcausal.dgp import MARKET, SIZE, SimDesign, Timing, generate
from eventcausal.effects import analytic_bias, realized_error
from eventcausal.errors import (
    EmptyCohort,
    EmptyControls,
    EstimatorError,
    RankDeficient,
    RankTooLarge,
    WindowTooShort,
)
from eventcausal.estimators import (
    EstimatorSpec,
    abnormal_returns,
    diff_in_means,
    estimate,
    fit_gsynth,
    pre_columns,
    synthetic_control,
)
from eventcausal.panel import EventSchedule, FactorSeries, to_excess

from conftest import factor_panel, make_factors, make_panel, schedule_for

ALL_SPECS = ["diff_means", "market", "factor:Mkt-RF", "factor:Mkt-RF,SMB", "sc", "gsynth:3"]


def excess_draw(**kw):
    design = SimDesign(**{"n_firms": 120, **kw})
    panel, f, s, truth = generate(design)
    return to_excess(panel, f), f, s, truth


def spanned_case(T=80, post_effect=0.0, seed=0):
    """Controls with loadings (2,0), (0,2) and others; treated at (1,1); no noise."""
    rng = np.random.default_rng(seed)
    F = rng.normal(0, 0.01, size=(T, 2))
    L = np.array([[1, 1], [1, 1], [2, 0], [0, 2], [3, 0.5], [0.4, 2.5]], dtype=float)
    ids = ["T0", "T1", "C0", "C1", "C2", "C3"]
    event = 61
    panel = factor_panel(L, F, effect=([0, 1], event - 1, post_effect), ids=ids)
    return panel, schedule_for(panel, ["T0", "T1"], event), event


def test_spec_parsing():
    assert EstimatorSpec.parse("factor:Mkt-RF,SMB").factors == ("Mkt-RF", "SMB")
    assert EstimatorSpec.parse("gsynth:2").r_max == 2
    assert EstimatorSpec.parse("market").observed_factors == ("",)
    with pytest.raises(EstimatorError):
        EstimatorSpec.parse("ols")
    with pytest.raises(EstimatorError):
        EstimatorSpec.parse("sc:3")


def test_pre_window_must_precede_anticipation():
    panel = make_panel(np.zeros((2, 20)))
    with pytest.raises(WindowTooShort):
        pre_columns(panel, 15, 2, EstimatorSpec("diff_means", pre_window=(-10, -2)))
    cols = pre_columns(panel, 15, 2, EstimatorSpec("diff_means", pre_window=(-10, -3)))
    assert list(panel.times[cols]) == list(range(5, 13))


def test_diff_in_means_identity():
    vals = np.tile(np.linspace(-0.01, 0.02, 10), (4, 1))
    panel = make_panel(vals)
    ce = diff_in_means(panel, schedule_for(panel, ["S000", "S001"], 5))[0]
    assert np.all(ce.estimate == 0.0)


def test_diff_in_means_errors():
    panel = make_panel(np.zeros((2, 5)))
    with pytest.raises(EmptyControls):
        diff_in_means(panel, schedule_for(panel, ["S000", "S001"], 3))
    with pytest.raises(EmptyCohort):
        diff_in_means(panel, schedule_for(panel, [], 3))


@pytest.mark.parametrize("code", ALL_SPECS)
def test_estimate_plus_counterfactual_is_treated_mean(code):
    panel, f, s, _ = excess_draw(timing=Timing.RANK_LOGIT_SMB, seed=3)
    for ce in estimate(panel, s, EstimatorSpec.parse(code), f):
        tm = panel.block(s.members(ce.cohort)).mean(axis=0)
        np.testing.assert_array_equal(ce.treated_mean, tm)
        np.testing.assert_array_equal(ce.estimate, tm - ce.counterfactual)


def test_correct_specification_noiseless_is_exact():
    panel, f, s, truth = excess_draw(noise_sd=0.0, timing=Timing.RANK_LOGIT_SMB, seed=4)
    ce = abnormal_returns(panel, f, s, EstimatorSpec.parse("factor:Mkt-RF,SMB"))[0]
    err = realized_error(ce, truth)
    assert max(abs(v) for v in err.values()) < 1e-12


def test_market_adjusted_uses_market_column():
    panel, f, s, _ = excess_draw(seed=5)
    ce = abnormal_returns(panel, f, s, EstimatorSpec("market"))[0]
    np.testing.assert_array_equal(ce.counterfactual, f.column(MARKET))


def test_omitted_smb_bias_matches_oracle():
    panel, f, s, truth = excess_draw(timing=Timing.RANK_LOGIT_SMB, seed=6)
    ce = abnormal_returns(panel, f, s, EstimatorSpec.parse("factor:Mkt-RF"))[0]
    ev = truth.event_period
    oracle = analytic_bias(truth, f, ce)[ev]
    assert realized_error(ce, truth)[ev] == pytest.approx(oracle.total, abs=1e-12)
    beta_smb = truth.loadings[[truth.row(i) for i in ce.treated_ids], 1].mean()
    smb = f.column(SIZE)[panel.col(ev)]
    assert oracle.loading_gap_term == pytest.approx(beta_smb * smb, abs=0.3 * abs(smb) + 1e-3)


def test_constant_factor_rank_deficient():
    panel = make_panel(np.random.default_rng(0).normal(size=(3, 30)), excess=True)
    f = make_factors(np.ones((30, 1)), ["k"])
    with pytest.raises(RankDeficient):
        abnormal_returns(panel, f, schedule_for(panel, ["S000"], 25), EstimatorSpec.parse("factor:k"))


def test_short_window():
    panel = make_panel(np.random.default_rng(0).normal(size=(3, 30)), excess=True)
    f = make_factors(np.random.default_rng(1).normal(size=(30, 2)), ["a", "b"])
    with pytest.raises(WindowTooShort):
        abnormal_returns(panel, f, schedule_for(panel, ["S000"], 4), EstimatorSpec.parse("factor:a,b"))


def test_sc_exact_replication():
    rng = np.random.default_rng(1)
    base = rng.normal(0, 0.01, size=30)
    other = rng.normal(0, 0.01, size=(2, 30))
    treated = base.copy()
    treated[20:] += 0.005  # true post divergence
    panel = make_panel(np.vstack([treated, base, other]))
    ce = synthetic_control(panel, schedule_for(panel, ["S000"], 21))[0]
    np.testing.assert_allclose(ce.implied_loadings, [1, 0, 0], atol=1e-10)
    np.testing.assert_allclose(ce.estimate[20:], 0.005, atol=1e-10)


def test_sc_beats_equal_weights_and_is_locally_optimal():
    panel, f, s, _ = excess_draw(seed=7)
    ce = synthetic_control(panel, s)[0]
    pre = pre_columns(panel, ce.cohort, 0, EstimatorSpec("sc"))
    C = panel.block(ce.info["controls"])[:, pre]
    y = ce.treated_mean[pre]
    w = ce.implied_loadings

    def sse(v):
        r = y - v @ C
        return float(r @ r)

    best = sse(w)
    assert best <= sse(np.full(w.size, 1 / w.size))
    for j in range(w.size):
        for h in (1e-4, -1e-4):
            v = w.copy()
            v[j] = max(v[j] + h, 0.0)
            assert sse(v) >= best - 1e-15


def test_sc_spanned_loadings_zero_bias():
    panel, sched, event = spanned_case()
    ce = synthetic_control(panel, sched)[0]
    post = panel.times >= event
    assert np.max(np.abs(ce.estimate[post])) <= 1e-6
    assert ce.info["nnls"].kkt_residual <= 1e-8


def gsynth_rank2(noise=0.0, seed=0, J=40, T=120, n_treated=5):
    rng = np.random.default_rng(seed)
    F = rng.normal(0, 0.01, size=(T, 2))
    L = rng.uniform(0.5, 1.5, size=(J + n_treated, 2))
    a = rng.normal(0, 1e-3, size=J + n_treated)
    E = rng.normal(0, noise, size=(J + n_treated, T)) if noise else None
    panel = factor_panel(L, F, alphas=a, noise=E)
    return panel, schedule_for(panel, panel.securities[:n_treated], 101)


def test_gsynth_noiseless_rank2():
    panel, sched = gsynth_rank2()
    fit = fit_gsynth(panel, sched, EstimatorSpec.parse("gsynth:4"))
    ce = fit.effects[0]
    assert fit.selected_r[101] == 2
    assert np.max(np.abs(ce.estimate[100:])) <= 1e-8


def test_gsynth_r1_matches_ar_oracle_on_estimated_factor():
    d = SimDesign(n_firms=150, noise_sd=0.0, timing=Timing.RANK_LOGIT_SMB, seed=9)
    raw, f, s, truth = generate(d)
    panel = to_excess(raw, f)
    fit = fit_gsynth(panel, s, EstimatorSpec.parse("gsynth:1"))
    ce = fit.effects[0]
    pc = FactorSeries(f.times, np.column_stack([f.values, fit.pca.factors[:, 0]]), (MARKET, SIZE, "PC1"),
                      f.risk_free)
    ev = truth.event_period
    oracle = analytic_bias(truth, pc, ce, observed_factors=["PC1"], form="ar")[ev]
    err = realized_error(ce, truth)[ev]
    assert err == pytest.approx(oracle.total, abs=1e-12)
    assert abs(err) > 1e-4


def test_gsynth_errors():
    panel, sched = gsynth_rank2(J=3)
    with pytest.raises(RankTooLarge):
        fit_gsynth(panel, sched, EstimatorSpec.parse("gsynth:4"))
    panel, sched = gsynth_rank2(T=40)
    short = EventSchedule({k: (5 if v is not None else None) for k, v in sched.event_time.items()})
    with pytest.raises(WindowTooShort):
        fit_gsynth(panel, short, EstimatorSpec.parse("gsynth:4"))


def test_explicit_controls_respected():
    panel, f, s, _ = excess_draw(seed=10)
    ctrl = s.controls()[:30]
    ce = diff_in_means(panel, s, EstimatorSpec("diff_means", controls=ctrl))[0]
    np.testing.assert_array_equal(ce.counterfactual, panel.block(sorted(ctrl)).mean(axis=0))


@settings(max_examples=25, deadline=None)
@given(st.permutations(list(range(12))))
def test_row_order_does_not_matter(perm):
    rng = np.random.default_rng(2)
    vals = rng.normal(0, 0.01, size=(12, 40))
    ids = [f"S{i:03d}" for i in range(12)]
    a = make_panel(vals, ids=ids, excess=True)
    b = make_panel(vals[perm], ids=[ids[i] for i in perm], excess=True)
    for code in ("diff_means", "sc", "gsynth:2"):
        ea = estimate(a, schedule_for(a, ids[:3], 31), EstimatorSpec.parse(code))[0]
        eb = estimate(b, schedule_for(b, ids[:3], 31), EstimatorSpec.parse(code))[0]
        np.testing.assert_allclose(ea.estimate, eb.estimate, rtol=0, atol=1e-14)
