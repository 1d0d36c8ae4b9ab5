"""Standard errors and confidence intervals for event-time effects."""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy import stats

from .effects import aggregate_event_time
from .errors import LengthMismatch, ModelNotFitted, NotEnoughControls, SampleTooSmall
from .estimators import CohortEffect, EstimatorSpec, GsynthFit, control_ids, estimate, fit_gsynth
from .panel import CohortWeights, EventSchedule, FactorSeries, ReturnsPanel


@dataclass(frozen=True)
class IntervalEstimate:
    point: float
    se: float
    ci_lo: float
    ci_hi: float
    level: float = 0.95
    method: str = "ttest"
    df: float | None = None
    n_reps: int | None = None
    pctl_lo: float | None = None
    pctl_hi: float | None = None

    def contains(self, value: float) -> bool:
        return self.ci_lo <= value <= self.ci_hi

    def to_dict(self) -> dict:
        return {k: (None if v is None else (v if isinstance(v, str) else float(v)))
                for k, v in dataclasses.asdict(self).items()}


def _z(level: float) -> float:
    return float(stats.norm.ppf(0.5 + level / 2))


def ttest_se(treated_values, control_values=None, level: float = 0.95) -> IntervalEstimate:
    """Welch two-sample interval for ``mean(treated) - mean(control)``.

    Without controls this is the one-sample interval for ``mean(treated)``.
    """
    x = np.asarray(treated_values, dtype=float).ravel()
    if x.size < 2:
        raise SampleTooSmall(f"need at least 2 treated values, got {x.size}")
    vx = x.var(ddof=1) / x.size
    if control_values is None:
        point, se, df = float(x.mean()), float(np.sqrt(vx)), float(x.size - 1)
    else:
        y = np.asarray(control_values, dtype=float).ravel()
        if y.size < 2:
            raise SampleTooSmall(f"need at least 2 control values, got {y.size}")
        vy = y.var(ddof=1) / y.size
        point, se = float(x.mean() - y.mean()), float(np.sqrt(vx + vy))
        denom = vx ** 2 / (x.size - 1) + vy ** 2 / (y.size - 1)
        df = float((vx + vy) ** 2 / denom) if denom > 0 else float(x.size + y.size - 2)
    half = float(stats.t.ppf(0.5 + level / 2, df)) * se
    return IntervalEstimate(point, se, point - half, point + half, level, "ttest", df=df)


def ttest_event_time(
    panel: ReturnsPanel,
    schedule: EventSchedule,
    effects: Sequence[CohortEffect],
    spec: EstimatorSpec,
    horizon: int,
    level: float = 0.95,
) -> dict[int, IntervalEstimate]:
    """Cross-sectional t intervals per event time.

    A single-cohort difference in means gets the Welch two-sample test of
    treated against control returns. Otherwise the one-sample test is applied
    to per-firm gaps ``R_it - Rhat_it`` pooled over cohorts at event time k.
    """
    out = {}
    single_dm = spec.kind == "diff_means" and len(effects) == 1
    if single_dm:
        ctrl = panel.block(control_ids(panel, schedule, spec))
    for k in range(horizon + 1):
        if single_dm:
            ce = effects[0]
            j = ce.col(ce.cohort) + k
            out[k] = ttest_se(panel.block(ce.treated_ids)[:, j], ctrl[:, j], level)
            continue
        vals = []
        for ce in effects:
            j = ce.col(ce.cohort) + k
            vals.append(ce.firm_effects(panel)[:, j])
        out[k] = ttest_se(np.concatenate(vals), None, level)
    return out


def _event_time_estimates(panel, schedule, spec, factors, horizon) -> dict[int, float]:
    effects = estimate(panel, schedule, spec, factors)
    series = aggregate_event_time(effects, CohortWeights.from_schedule(schedule), horizon)
    return series.event_time_att


def placebo_draws(
    panel: ReturnsPanel,
    schedule: EventSchedule,
    spec: EstimatorSpec,
    n_reps: int = 100,
    seed: int = 0,
    horizon: int = 0,
    factors: FactorSeries | None = None,
) -> np.ndarray:
    """Event-time estimates on fake treated sets drawn from the controls.

    Each repetition draws, without replacement, fake cohorts of the real
    cohort sizes from the control pool and re-runs the estimator with the
    remaining controls. The pool is taken in sorted-id order, so the result
    does not depend on how rows are ordered in the panel. Returns an
    ``(n_reps, horizon + 1)`` array.
    """
    pool = sorted(spec.controls) if spec.controls is not None else schedule.controls()
    sizes = schedule.cohort_sizes()
    need = sum(sizes.values())
    if len(pool) < need + 1:
        raise NotEnoughControls(f"{len(pool)} controls for {need} placebo-treated units")
    pspec = dataclasses.replace(spec, controls=None)
    draws = np.empty((n_reps, horizon + 1))
    for rep in range(n_reps):
        rng = np.random.default_rng([int(seed), rep])
        perm = [pool[i] for i in rng.permutation(len(pool))]
        fake, pos = {}, 0
        for s, n in sizes.items():
            fake.update({sec: s for sec in perm[pos:pos + n]})
            pos += n
        fake.update({sec: None for sec in perm[pos:]})
        est = _event_time_estimates(panel, EventSchedule(fake, schedule.anticipation_delta), pspec, factors, horizon)
        draws[rep] = [est[k] for k in range(horizon + 1)]
    return draws


def placebo_se(
    panel: ReturnsPanel,
    schedule: EventSchedule,
    spec: EstimatorSpec,
    n_reps: int = 100,
    seed: int = 0,
    horizon: int = 0,
    factors: FactorSeries | None = None,
    level: float = 0.95,
) -> dict[int, IntervalEstimate]:
    """z interval with the standard deviation of the placebo draws as SE."""
    draws = placebo_draws(panel, schedule, spec, n_reps, seed, horizon, factors)
    point = _event_time_estimates(panel, schedule, spec, factors, horizon)
    sd = draws.std(axis=0, ddof=1) if n_reps > 1 else np.zeros(horizon + 1)
    z = _z(level)
    return {
        k: IntervalEstimate(point[k], float(sd[k]), point[k] - z * sd[k], point[k] + z * sd[k], level,
                            "placebo", n_reps=n_reps)
        for k in range(horizon + 1)
    }


def bootstrap_se_gsynth(
    panel: ReturnsPanel,
    schedule: EventSchedule,
    spec: EstimatorSpec,
    n_samples: int = 1000,
    seed: int = 0,
    horizon: int = 0,
    fit: GsynthFit | None = None,
    level: float = 0.95,
) -> dict[int, IntervalEstimate]:
    """Parametric bootstrap around a fitted generalized synthetic control.

    Residuals (control units over all periods, treated units over their
    pre windows) are pooled and resampled i.i.d. onto the fitted
    counterfactual outcomes; the estimator is re-run on every synthetic
    panel. The spread of those null draws gives the standard error.
    """
    if fit is None:
        fit = fit_gsynth(panel, schedule, spec)
    if not isinstance(fit, GsynthFit) or not fit.effects:
        raise ModelNotFitted("bootstrap needs a fitted gsynth model")
    weights = CohortWeights.from_schedule(schedule)
    point = aggregate_event_time(list(fit.effects), weights, horizon).event_time_att

    base = np.array(panel.values)
    r_ctrl = max(fit.selected_r.values())
    crow = panel.rows(fit.control_ids)
    fitted_c = fit.control_fitted(r_ctrl)
    resid = [(base[crow] - fitted_c).ravel()]
    base[crow] = fitted_c
    for ce in fit.effects:
        trow = panel.rows(ce.treated_ids)
        pre = np.searchsorted(panel.times, ce.pre_times)
        resid.append((base[trow][:, pre] - ce.firm_counterfactual[:, pre]).ravel())
        base[trow] = ce.firm_counterfactual
    pool = np.concatenate(resid)
    touched = np.concatenate([crow] + [panel.rows(ce.treated_ids) for ce in fit.effects])

    rng = np.random.default_rng(int(seed))
    draws = np.empty((n_samples, horizon + 1))
    for b in range(n_samples):
        vals = base.copy()
        vals[touched] += rng.choice(pool, size=(touched.size, panel.n_periods), replace=True)
        est = aggregate_event_time(list(fit_gsynth(panel.with_values(vals), schedule, fit.spec).effects),
                                   weights, horizon).event_time_att
        draws[b] = [est[k] for k in range(horizon + 1)]
    sd = draws.std(axis=0, ddof=1) if n_samples > 1 else np.zeros(horizon + 1)
    z = _z(level)
    lo_q, hi_q = np.quantile(draws, [0.5 - level / 2, 0.5 + level / 2], axis=0)
    return {
        k: IntervalEstimate(point[k], float(sd[k]), point[k] - z * sd[k], point[k] + z * sd[k], level,
                            "bootstrap", n_reps=n_samples,
                            pctl_lo=float(point[k] - hi_q[k]), pctl_hi=float(point[k] - lo_q[k]))
        for k in range(horizon + 1)
    }


def coverage(ci_list: Sequence[IntervalEstimate], truth: Sequence[float]) -> float:
    if len(ci_list) != len(truth):
        raise LengthMismatch(f"{len(ci_list)} intervals for {len(truth)} truths")
    if not ci_list:
        raise LengthMismatch("no intervals")
    hits = sum(ci.contains(v) for ci, v in zip(ci_list, truth))
    return hits / len(ci_list)
