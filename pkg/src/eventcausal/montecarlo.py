"""Replication harness for the 2 x 2 selection design.

Each replication simulates a panel, runs every estimator and records the
per-period bias over the event window (event day plus the post days) and
whether the per-period interval covers the truth. Replications are mapped
over worker processes and reduced with exactly rounded sums, so the report
does not depend on worker count or replication order.
"""
from __future__ import annotations

import csv
import io
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .dgp import SIZE, Assignment, FileFactors, SimDesign, Timing, generate, load_factor_history
from .effects import analytic_bias
from .errors import InvalidConfig, NothingOmitted
from .estimators import EstimatorSpec, estimate
from .inference import placebo_se, ttest_event_time
from .panel import FactorSeries, to_excess

PANELS = {
    "A": (Assignment.RANDOM, Timing.FIXED, "Random Assignment + Random Timing"),
    "B": (Assignment.LOGIT_SMB, Timing.FIXED, "Assignment Selection + Random Timing"),
    "C": (Assignment.RANDOM, Timing.RANK_LOGIT_SMB, "Random Assignment + Timing Selection"),
    "D": (Assignment.LOGIT_SMB, Timing.RANK_LOGIT_SMB, "Assignment Selection + Timing Selection"),
}

BENCHMARK_ESTIMATORS = (
    ("Simple Means", "diff_means"),
    ("CAPM", "factor:Mkt-RF"),
    ("Correct Factor Structure", "factor:Mkt-RF,SMB"),
    ("Gsynth (PCA)", "gsynth:4"),
)

SCOPES = ("AllPeriods", "TreatedPeriod", "UntreatedPeriods")


def benchmark_specs() -> list[EstimatorSpec]:
    return [EstimatorSpec.parse(code, label=label) for label, code in BENCHMARK_ESTIMATORS]


def panel_design(letter: str, design: SimDesign) -> SimDesign:
    try:
        assignment, timing, _ = PANELS[letter]
    except KeyError:
        raise InvalidConfig(f"unknown panel {letter!r}; expected one of {sorted(PANELS)}") from None
    return design.replace(assignment=assignment, timing=timing)


@dataclass(frozen=True)
class ReplicationResult:
    rep: int
    seed: int
    bias: dict  # estimator -> (n_post + 1,) bias over the event window
    covered: dict  # estimator -> (n_post + 1,) bool
    omitted_at_event: float


@dataclass(frozen=True)
class _Job:
    rep: int
    design: SimDesign
    specs: tuple
    history: FactorSeries | None
    inference: str
    inference_reps: int


def _run_job(job: _Job) -> ReplicationResult:
    design = job.design
    panel, factors, schedule, truth = generate(design, job.history)
    ex = to_excess(panel, factors)
    ev = truth.event_period
    j0 = ex.col(ev)
    window = slice(j0, j0 + design.n_post + 1)
    truth_path = np.zeros(design.n_post + 1)
    truth_path[0] = design.effect_size
    bias, covered = {}, {}
    for spec in job.specs:
        effects = estimate(ex, schedule, spec, factors)
        est = effects[0].estimate[window]
        bias[spec.name] = est - truth_path
        if job.inference == "ttest":
            ivs = ttest_event_time(ex, schedule, effects, spec, design.n_post)
        elif job.inference == "placebo":
            ivs = placebo_se(ex, schedule, spec, job.inference_reps, design.seed, design.n_post, factors)
        elif job.inference == "none":
            ivs = None
        else:
            raise InvalidConfig(f"unknown inference method {job.inference!r}")
        covered[spec.name] = (
            np.zeros(design.n_post + 1, dtype=bool) if ivs is None
            else np.array([ivs[k].contains(truth_path[k]) for k in range(design.n_post + 1)])
        )
    return ReplicationResult(job.rep, design.seed, bias, covered, float(factors.column(SIZE)[j0]))


def _map(jobs: list[_Job], threads: int) -> list[ReplicationResult]:
    if threads <= 1 or len(jobs) <= 1:
        out = [_run_job(j) for j in jobs]
    else:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            out = list(pool.map(_run_job, jobs, chunksize=max(1, len(jobs) // (4 * threads))))
    return sorted(out, key=lambda r: r.rep)


def _resolve_history(design: SimDesign, history):
    if history is None and isinstance(design.factor_source, FileFactors):
        return load_factor_history(design.factor_source.path)
    return history


def simulate_replications(
    design: SimDesign,
    specs: Sequence[EstimatorSpec],
    n_reps: int,
    base_seed: int,
    threads: int = 1,
    history: FactorSeries | None = None,
    inference: str = "ttest",
    inference_reps: int = 100,
) -> list[ReplicationResult]:
    """Replication ``r`` uses seed ``base_seed + r``."""
    if not specs:
        raise InvalidConfig("no estimators")
    if n_reps < 1:
        raise InvalidConfig("n_reps must be positive")
    history = _resolve_history(design, history)
    jobs = [
        _Job(r, design.replace(seed=base_seed + r), tuple(specs), history, inference, inference_reps)
        for r in range(n_reps)
    ]
    return _map(jobs, threads)


# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class McCell:
    panel: str
    estimator: str
    scope: str
    e_bias: float
    mad: float
    rmse: float
    coverage: float
    mc_se: float
    n_reps: int

    def pp(self) -> dict:
        """Row with bias statistics in percentage points."""
        return {
            "panel": self.panel,
            "estimator": self.estimator,
            "scope": self.scope,
            "e_bias_pp": 100 * self.e_bias,
            "mad_pp": 100 * self.mad,
            "rmse_pp": 100 * self.rmse,
            "coverage": self.coverage,
            "mc_se_pp": 100 * self.mc_se,
            "n_reps": self.n_reps,
        }


def _scope_cols(scope: str, n: int) -> list[int]:
    return {"AllPeriods": list(range(n)), "TreatedPeriod": [0], "UntreatedPeriods": list(range(1, n))}[scope]


def summarize(panel: str, results: Sequence[ReplicationResult], names: Sequence[str]) -> list[McCell]:
    """Reduce replications to one cell per (estimator, scope).

    Per replication the bias is averaged over the scope's periods; E(Bias)
    and MAD are the mean and mean absolute value of those averages and the
    MC standard error is their standard deviation over sqrt(reps). RMSE and
    coverage pool every (replication, period) cell in the scope.
    """
    R = len(results)
    cells = []
    for name in names:
        B = np.array([r.bias[name] for r in results])
        C = np.array([r.covered[name] for r in results])
        for scope in SCOPES:
            cols = _scope_cols(scope, B.shape[1])
            if not cols:
                continue
            per_rep = [math.fsum(row[cols]) / len(cols) for row in B]
            e = math.fsum(per_rep) / R
            mad = math.fsum(abs(x) for x in per_rep) / R
            rmse = math.sqrt(math.fsum(float(x) ** 2 for x in B[:, cols].ravel()) / (R * len(cols)))
            cov = int(C[:, cols].sum()) / (R * len(cols))
            var = math.fsum((x - e) ** 2 for x in per_rep) / (R - 1) if R > 1 else 0.0
            cells.append(McCell(panel, name, scope, e, mad, rmse, cov, math.sqrt(var / R), R))
    return cells


def run_design(
    panel_letter: str,
    design: SimDesign,
    estimators: Sequence[EstimatorSpec] | None = None,
    n_reps: int = 50,
    base_seed: int = 0,
    threads: int = 1,
    history: FactorSeries | None = None,
    inference: str = "ttest",
    inference_reps: int = 100,
) -> list[McCell]:
    specs = list(estimators) if estimators else benchmark_specs()
    d = panel_design(panel_letter, design)
    results = simulate_replications(d, specs, n_reps, base_seed, threads, history, inference, inference_reps)
    return summarize(panel_letter, results, [s.name for s in specs])


@dataclass
class McReport:
    cells: list
    n_reps: int
    base_seed: int
    design: dict

    def cell(self, panel: str, estimator: str, scope: str) -> McCell:
        for c in self.cells:
            if (c.panel, c.estimator, c.scope) == (panel, estimator, scope):
                return c
        raise KeyError((panel, estimator, scope))

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write(f"# base_seed: {self.base_seed}, n_reps: {self.n_reps}\n")
        fields = list(McCell.pp(self.cells[0]).keys()) if self.cells else []
        w = csv.DictWriter(buf, fieldnames=fields, lineterminator="\n")
        w.writeheader()
        for c in self.cells:
            w.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in c.pp().items()})
        return buf.getvalue()

    def to_json(self) -> str:
        return json.dumps(
            {"base_seed": self.base_seed, "n_reps": self.n_reps, "design": self.design,
             "cells": [c.pp() for c in self.cells]},
            indent=2, sort_keys=True,
        )

    def to_table(self) -> str:
        """Plain-text layout: one block per panel, grouped by scope."""
        lines = [f"Treatment effect bias and coverage (pp), {self.n_reps} replications, base seed {self.base_seed}", ""]
        head = (f"{'Model':<26}{'E(Bias)':>9}{'MAD':>7}{'RMSE':>7}   {'E(Bias)':>9}{'MAD':>7}{'Cov':>6}"
                f"   {'E(Bias)':>9}{'MAD':>7}{'Cov':>6}")
        group = f"{'':<26}{'All Periods':^23}   {'Treated Periods':^22}   {'Untreated Periods':^22}"
        for letter in sorted({c.panel for c in self.cells}):
            lines += [f"Panel {letter}: {PANELS[letter][2]}", group, head, "-" * len(head)]
            names = list(dict.fromkeys(c.estimator for c in self.cells if c.panel == letter))
            for name in names:
                a = self.cell(letter, name, "AllPeriods").pp()
                t = self.cell(letter, name, "TreatedPeriod").pp()
                u = self.cell(letter, name, "UntreatedPeriods").pp()
                lines.append(
                    f"{name:<26}{a['e_bias_pp']:>9.2f}{a['mad_pp']:>7.2f}{a['rmse_pp']:>7.2f}   "
                    f"{t['e_bias_pp']:>9.2f}{t['mad_pp']:>7.2f}{t['coverage']:>6.2f}   "
                    f"{u['e_bias_pp']:>9.2f}{u['mad_pp']:>7.2f}{u['coverage']:>6.2f}"
                )
            lines.append("")
        return "\n".join(lines)


def run_table(
    design: SimDesign,
    panels: Sequence[str] = ("A", "B", "C", "D"),
    estimators: Sequence[EstimatorSpec] | None = None,
    n_reps: int = 50,
    base_seed: int = 0,
    threads: int = 1,
    history: FactorSeries | None = None,
    inference: str = "ttest",
    inference_reps: int = 100,
) -> McReport:
    history = _resolve_history(design, history)
    cells = []
    for letter in panels:
        cells += run_design(letter, design, estimators, n_reps, base_seed, threads, history, inference, inference_reps)
    return McReport(cells, n_reps, base_seed, design.to_dict())


# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ScatterPoint:
    rep: int
    seed: int
    omitted_realization: float
    treated_bias: float
    analytic_bias: float


def bias_scatter(
    design: SimDesign,
    estimator: EstimatorSpec,
    n_reps: int = 50,
    base_seed: int = 0,
    omitted: str = SIZE,
    history: FactorSeries | None = None,
) -> list[ScatterPoint]:
    """Treated-period bias against the omitted factor's event-day value.

    ``analytic_bias`` is the oracle decomposition total where one exists
    (abnormal-return, difference-in-means and synthetic-control forms) and
    NaN otherwise.
    """
    if omitted in estimator.observed_factors:
        raise NothingOmitted(f"{estimator.name} already includes {omitted}")
    history = _resolve_history(design, history)
    pts = []
    for r in range(n_reps):
        d = design.replace(seed=base_seed + r)
        panel, factors, schedule, truth = generate(d, history)
        ex = to_excess(panel, factors)
        ce = estimate(ex, schedule, estimator, factors)[0]
        ev = truth.event_period
        realized = ce.at(ev) - d.effect_size
        if estimator.kind == "gsynth":
            oracle = float("nan")
        else:
            oracle = analytic_bias(truth, factors, ce, times=[ev])[ev].total
        pts.append(ScatterPoint(r, d.seed, float(factors.column(omitted)[ex.col(ev)]), realized, oracle))
    return pts


def scatter_csv(points: Sequence[ScatterPoint], base_seed: int | None = None) -> str:
    buf = io.StringIO()
    if base_seed is not None:
        buf.write(f"# base_seed: {base_seed}\n")
    buf.write("rep,seed,omitted_realization,treated_bias,analytic_bias\n")
    for p in points:
        buf.write(f"{p.rep},{p.seed},{p.omitted_realization!r},{p.treated_bias!r},{p.analytic_bias!r}\n")
    return buf.getvalue()
