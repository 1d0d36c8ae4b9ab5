import math
import random

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import stats

from eventcausal.dgp import SimDesign
from eventcausal.errors import InvalidConfig, NothingOmitted
from eventcausal.estimators import EstimatorSpec
from eventcausal.montecarlo import (
    SCOPES,
    McReport,
    ReplicationResult,
    bias_scatter,
    panel_design,
    run_design,
    run_table,
    scatter_csv,
    simulate_replications,
    summarize,
    benchmark_specs,
)

SMALL = SimDesign(n_firms=120)


def fake_results(biases, covered):
    return [ReplicationResult(i, i, {"m": np.asarray(b)}, {"m": np.asarray(c)}, 0.0)
            for i, (b, c) in enumerate(zip(biases, covered))]


def test_panel_letters():
    assert panel_design("D", SMALL).timing.value == "rank_logit_smb"
    assert panel_design("B", SMALL).assignment.value == "logit_smb"
    with pytest.raises(InvalidConfig):
        panel_design("E", SMALL)


def test_summary_by_hand():
    b = [[0.01, -0.02, 0.0], [0.03, 0.0, 0.01]]
    c = [[True, False, True], [True, True, True]]
    cells = {x.scope: x for x in summarize("A", fake_results(b, c), ["m"])}
    per_rep = [(-0.01) / 3, 0.04 / 3]
    assert cells["AllPeriods"].e_bias == pytest.approx(np.mean(per_rep), abs=1e-18)
    assert cells["AllPeriods"].mad == pytest.approx(np.mean(np.abs(per_rep)), abs=1e-18)
    assert cells["AllPeriods"].rmse == pytest.approx(math.sqrt(np.mean(np.square(b))), abs=1e-18)
    assert cells["AllPeriods"].coverage == 5 / 6
    assert cells["TreatedPeriod"].e_bias == pytest.approx(0.02, abs=1e-18)
    assert cells["UntreatedPeriods"].coverage == 3 / 4
    assert cells["AllPeriods"].mc_se == pytest.approx(np.std(per_rep, ddof=1) / math.sqrt(2), rel=1e-14)


bias_rows = st.lists(st.lists(st.floats(-1, 1), min_size=3, max_size=3), min_size=1, max_size=20)


@settings(max_examples=200, deadline=None)
@given(bias_rows, st.randoms(use_true_random=False))
def test_summary_invariants_and_order_independence(rows, rnd):
    cov = [[bool(rnd.getrandbits(1)) for _ in r] for r in rows]
    res = fake_results(rows, cov)
    cells = summarize("A", res, ["m"])
    for c in cells:
        assert c.rmse >= abs(c.e_bias) - 1e-15
        assert c.mad >= 0 and 0 <= c.coverage <= 1
    shuffled = list(res)
    rnd.shuffle(shuffled)
    assert summarize("A", shuffled, ["m"]) == cells


def test_run_design_deterministic_and_thread_independent():
    specs = [EstimatorSpec.parse("diff_means"), EstimatorSpec.parse("gsynth:2")]
    a = run_design("C", SMALL, specs, n_reps=4, base_seed=3)
    b = run_design("C", SMALL, specs, n_reps=4, base_seed=3, threads=2)
    assert a == b
    assert len(a) == 2 * len(SCOPES)


def test_replication_seeds():
    res = simulate_replications(SMALL, [EstimatorSpec("diff_means")], 3, base_seed=10)
    assert [r.seed for r in res] == [10, 11, 12]


def test_single_replication_report():
    rep = run_table(SMALL, ["A"], [EstimatorSpec("diff_means")], n_reps=1, base_seed=0)
    for c in rep.cells:
        assert c.n_reps == 1 and c.mc_se == 0.0
    assert rep.cell("A", "diff_means", "TreatedPeriod").coverage in (0.0, 1.0)


def test_report_rendering():
    rep = run_table(SMALL, ["A", "B", "C", "D"], [EstimatorSpec("diff_means", label="Simple Means")], n_reps=2)
    table = rep.to_table()
    for letter in "ABCD":
        assert f"Panel {letter}:" in table
    csv_text = rep.to_csv()
    assert csv_text.startswith("# base_seed: 0, n_reps: 2\n")
    assert len(csv_text.splitlines()) == 2 + 4 * 3
    first = rep.cells[0]
    assert f"{100 * first.e_bias!r}" in csv_text


def test_scatter_needs_omitted_factor():
    with pytest.raises(NothingOmitted):
        bias_scatter(SMALL, EstimatorSpec.parse("factor:Mkt-RF,SMB"), 2)


def test_correct_spec_slope_near_zero():
    # random assignment balances loadings, so the SMB channel cancels in the comparison
    pts = bias_scatter(SMALL, EstimatorSpec("diff_means"), 60, base_seed=1)
    x = [p.omitted_realization for p in pts]
    y = [p.treated_bias for p in pts]
    fit = stats.linregress(x, y)
    assert abs(fit.slope) <= 3 * fit.stderr + 0.05


def test_capm_slope_is_mean_smb_loading():
    pts = bias_scatter(SimDesign(), EstimatorSpec.parse("factor:Mkt-RF"), 100, base_seed=2)
    fit = stats.linregress([p.omitted_realization for p in pts], [p.treated_bias for p in pts])
    assert abs(fit.slope - 1.0) <= 3 * fit.stderr + 0.05


def test_zero_noise_points_on_oracle_line():
    pts = bias_scatter(SMALL.replace(noise_sd=0.0), EstimatorSpec.parse("factor:Mkt-RF"), 10, base_seed=3)
    for p in pts:
        assert p.treated_bias == pytest.approx(p.analytic_bias, abs=1e-12)
    text = scatter_csv(pts, 3)
    assert text.splitlines()[1] == "rep,seed,omitted_realization,treated_bias,analytic_bias"


def test_benchmark_labels():
    assert [s.name for s in benchmark_specs()] == ["Simple Means", "CAPM", "Correct Factor Structure", "Gsynth (PCA)"]
