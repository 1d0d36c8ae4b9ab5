import inspect
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from eventcausal.dgp import SimDesign, generate
from eventcausal.errors import LengthMismatch, ModelNotFitted, NotEnoughControls, SampleTooSmall
from eventcausal.estimators import EstimatorSpec, fit_gsynth
from eventcausal.inference import (
    IntervalEstimate,
    bootstrap_se_gsynth,
    coverage,
    placebo_draws,
    placebo_se,
    ttest_se,
)
from eventcausal.panel import to_excess

from conftest import factor_panel, make_panel, schedule_for


def standardized(n, sd, seed):
    x = np.random.default_rng(seed).normal(size=n)
    return (x - x.mean()) / x.std(ddof=1) * sd


def test_equal_variance_closed_form():
    x = standardized(12, 0.7, 0)
    iv = ttest_se(x + 0.3, x)
    assert iv.se == pytest.approx(0.7 * math.sqrt(2 / 12), rel=1e-13)
    assert iv.point == pytest.approx(0.3, abs=1e-15)


def test_identical_samples_zero():
    x = standardized(8, 1.0, 1)
    iv = ttest_se(x, x)
    assert iv.point == 0.0
    assert iv.point / iv.se == 0.0


def test_welch_df_by_hand():
    x, y = standardized(10, 1.0, 2), standardized(20, 2.0, 3)
    iv = ttest_se(x, y)
    a, b = 1.0 ** 2 / 10, 2.0 ** 2 / 20
    df = (a + b) ** 2 / (a ** 2 / 9 + b ** 2 / 19)
    assert iv.df == pytest.approx(df, rel=1e-12)
    assert iv.ci_lo <= iv.point <= iv.ci_hi


def test_ttest_small_sample():
    with pytest.raises(SampleTooSmall):
        ttest_se([1.0], [1.0, 2.0])
    with pytest.raises(SampleTooSmall):
        ttest_se([1.0, 2.0], [1.0])


def test_defaults():
    assert inspect.signature(placebo_se).parameters["n_reps"].default == 100
    assert inspect.signature(bootstrap_se_gsynth).parameters["n_samples"].default == 1000


def test_placebo_constant_estimator_zero_se():
    panel = make_panel(np.zeros((20, 15)))
    sched = schedule_for(panel, panel.securities[:3], 10)
    iv = placebo_se(panel, sched, EstimatorSpec("diff_means"), n_reps=20, horizon=2)
    assert all(v.se == 0.0 and v.point == 0.0 for v in iv.values())


def test_placebo_needs_controls():
    panel = make_panel(np.zeros((6, 10)))
    with pytest.raises(NotEnoughControls):
        placebo_se(panel, schedule_for(panel, panel.securities[:3], 5), EstimatorSpec("diff_means"))


def test_placebo_pure_noise_centered():
    panel = make_panel(np.random.default_rng(4).normal(0, 0.01, size=(200, 30)))
    sched = schedule_for(panel, panel.securities[:20], 20)
    d = placebo_draws(panel, sched, EstimatorSpec("diff_means"), n_reps=100, seed=1)[:, 0]
    assert abs(d.mean()) <= 3 * d.std(ddof=1) / math.sqrt(d.size)


def test_placebo_deterministic_and_order_invariant():
    rng = np.random.default_rng(5)
    vals = rng.normal(0, 0.01, size=(40, 30))
    ids = [f"S{i:03d}" for i in range(40)]
    a = make_panel(vals, ids=ids)
    perm = rng.permutation(40)
    b = make_panel(vals[perm], ids=[ids[i] for i in perm])
    spec = EstimatorSpec("diff_means")
    ia = placebo_se(a, schedule_for(a, ids[:5], 20), spec, n_reps=30, seed=7, horizon=3)
    ib = placebo_se(b, schedule_for(b, ids[:5], 20), spec, n_reps=30, seed=7, horizon=3)
    assert [v.se for v in ia.values()] == [v.se for v in ib.values()]
    again = placebo_se(a, schedule_for(a, ids[:5], 20), spec, n_reps=30, seed=7, horizon=3)
    assert ia == again


def test_bootstrap_zero_residuals():
    rng = np.random.default_rng(6)
    F = rng.normal(0, 0.01, size=(80, 2))
    L = rng.uniform(0.5, 1.5, size=(30, 2))
    panel = factor_panel(L, F)
    sched = schedule_for(panel, panel.securities[:4], 61)
    iv = bootstrap_se_gsynth(panel, sched, EstimatorSpec.parse("gsynth:3"), n_samples=20, horizon=1)
    assert all(v.se < 1e-12 for v in iv.values())


def test_bootstrap_needs_fit():
    panel = make_panel(np.zeros((5, 10)))
    with pytest.raises(ModelNotFitted):
        bootstrap_se_gsynth(panel, schedule_for(panel, ["S000"], 8), EstimatorSpec.parse("gsynth:1"), fit="nope")


def test_bootstrap_reports_percentile_interval():
    panel, f, s, _ = generate(SimDesign(n_firms=80, seed=3))
    ex = to_excess(panel, f)
    spec = EstimatorSpec.parse("gsynth:2")
    fit = fit_gsynth(ex, s, spec)
    iv = bootstrap_se_gsynth(ex, s, spec, n_samples=40, seed=1, fit=fit)[0]
    assert iv.method == "bootstrap" and iv.pctl_lo < iv.pctl_hi
    assert iv == bootstrap_se_gsynth(ex, s, spec, n_samples=40, seed=1, fit=fit)[0]


def test_bootstrap_and_placebo_agree():
    spec = EstimatorSpec.parse("gsynth:4")
    ratios = []
    for seed in range(50):
        panel, f, s, _ = generate(SimDesign(seed=seed))
        ex = to_excess(panel, f)
        b = bootstrap_se_gsynth(ex, s, spec, n_samples=20, seed=seed)[0].se
        p = placebo_se(ex, s, spec, n_reps=20, seed=seed)[0].se
        ratios.append(b / p)
    assert abs(np.median(ratios) - 1) <= 0.30


def iv(lo, hi):
    return IntervalEstimate((lo + hi) / 2, (hi - lo) / 4, lo, hi)


def test_coverage_bounds():
    truth = [0.0, 1.0, -2.0]
    assert coverage([iv(-1e300, 1e300)] * 3, truth) == 1.0
    assert coverage([iv(5, 6)] * 3, truth) == 0.0
    with pytest.raises(LengthMismatch):
        coverage([iv(0, 1)], truth)


@settings(max_examples=100, deadline=None)
@given(st.lists(st.tuples(st.floats(-5, 5), st.floats(0, 3), st.floats(-5, 5)), min_size=1, max_size=30))
def test_coverage_is_hit_share(rows):
    cis = [iv(c - h, c + h) for c, h, _ in rows]
    truth = [t for _, _, t in rows]
    hits = sum(c - h <= t <= c + h for c, h, t in rows)
    assert coverage(cis, truth) == hits / len(rows)
