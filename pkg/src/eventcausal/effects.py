"""Event-time aggregation, geometric ATT and the analytic bias oracle."""
from __future__ import annotations

import csv
import io
import itertools
import json
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .errors import EffectsError, MissingHorizon, NonPositiveGrossReturn, TruthUnavailable
from .estimators import CohortEffect
from .panel import CohortWeights, EventSchedule, FactorSeries, ReturnsPanel

CSV_COLUMNS = ("estimand", "horizon", "value", "se_lo", "se_hi")


@dataclass
class EffectSeries:
    event_time_att: dict
    cumulative_att: dict
    weights: CohortWeights
    geometric_att: dict = field(default_factory=dict)
    intervals: dict = field(default_factory=dict)  # (estimand, horizon) -> IntervalEstimate
    estimator: str = ""

    def rows(self):
        for estimand in ("event_time_att", "cumulative_att", "geometric_att"):
            for h, v in sorted(getattr(self, estimand).items()):
                iv = self.intervals.get((estimand, h))
                yield {
                    "estimand": estimand,
                    "horizon": int(h),
                    "value": float(v),
                    "se_lo": None if iv is None else float(iv.ci_lo),
                    "se_hi": None if iv is None else float(iv.ci_hi),
                }

    def to_csv(self, header: bool = True) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        if header:
            w.writerow(CSV_COLUMNS)
        for r in self.rows():
            w.writerow([r["estimand"], r["horizon"], repr(r["value"]),
                        "" if r["se_lo"] is None else repr(r["se_lo"]),
                        "" if r["se_hi"] is None else repr(r["se_hi"])])
        return buf.getvalue()

    def to_dict(self) -> dict:
        return {
            "estimator": self.estimator,
            "weights": {str(k): v for k, v in self.weights.items()},
            "rows": list(self.rows()),
            "intervals": [
                {"estimand": e, "horizon": int(h), **iv.to_dict()}
                for (e, h), iv in sorted(self.intervals.items())
            ],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


def _cohort_value(ce: CohortEffect, t: int) -> float:
    try:
        return ce.at(t)
    except KeyError:
        raise MissingHorizon(f"cohort {ce.cohort} has no estimate for period {t}") from None


def aggregate_event_time(
    cohort_effects: Sequence[CohortEffect],
    weights: CohortWeights,
    horizon: int,
    leads: int = 0,
) -> EffectSeries:
    """Weight cohort effects by event time and accumulate.

    ``theta_k = sum_s w_s tau(s, s + k)`` for ``k = -leads .. horizon``; the
    cumulative series runs over ``k = 0 .. H``. Event time is counted in
    panel periods (columns), not raw period labels.
    """
    by_cohort = {ce.cohort: ce for ce in cohort_effects}
    missing = set(weights.weights) - set(by_cohort)
    if missing:
        raise EffectsError(f"weights name cohorts without estimates: {sorted(missing)}")
    theta = {}
    for k in range(-leads, horizon + 1):
        acc = 0.0
        for s, w in weights.items():
            ce = by_cohort[s]
            j = ce.col(s) + k
            if not 0 <= j < ce.times.size:
                raise MissingHorizon(f"cohort {s} lacks event time {k}")
            acc += w * _cohort_value(ce, int(ce.times[j]))
        theta[k] = acc
    cum = dict(zip(range(horizon + 1), itertools.accumulate(theta[k] for k in range(horizon + 1))))
    name = cohort_effects[0].estimator if cohort_effects else ""
    return EffectSeries(theta, cum, weights, estimator=name)


def _cf_array(panel: ReturnsPanel, cf) -> np.ndarray:
    if isinstance(cf, CohortEffect):
        return cf.counterfactual
    if isinstance(cf, Mapping):
        return np.array([cf[int(t)] for t in panel.times], dtype=float)
    return np.asarray(cf, dtype=float)


def _window(panel: ReturnsPanel, s: int, H: int) -> np.ndarray:
    j0 = panel.col(s)
    if j0 + H >= panel.n_periods:
        raise MissingHorizon(f"cohort {s} lacks event time {H}")
    return np.arange(j0, j0 + H + 1)


def _log_gross(x: np.ndarray, what: str, s: int) -> np.ndarray:
    gross = 1.0 + x
    if np.any(gross <= 0):
        bad = np.argwhere(gross <= 0)[0]
        raise NonPositiveGrossReturn(f"cohort {s}: {what} gross return <= 0 at cell {tuple(int(i) for i in bad)}")
    return np.log(gross)


def geometric_att(
    panel: ReturnsPanel,
    schedule: EventSchedule,
    counterfactuals: Mapping[int, object],
    weights: CohortWeights,
    H: int,
) -> float:
    """Weighted sum over cohorts of ``sum_k [mean_i log(1+R) - log(1+Rhat)]``.

    Logs are taken firm by firm and averaged within the cohort before the
    cross-cohort weighting.
    """
    total = 0.0
    for s, w in weights.items():
        cols = _window(panel, s, H)
        R = panel.block(schedule.members(s))[:, cols]
        cf = _cf_array(panel, counterfactuals[s])[cols]
        lt = _log_gross(R, "treated", s).mean(axis=0)
        lc = _log_gross(cf, "counterfactual", s)
        total += w * float(np.sum(lt - lc))
    return total


def cumulative_from_counterfactuals(panel, schedule, counterfactuals, weights, H) -> float:
    total = 0.0
    for s, w in weights.items():
        cols = _window(panel, s, H)
        R = panel.block(schedule.members(s))[:, cols]
        cf = _cf_array(panel, counterfactuals[s])[cols]
        total += w * float(np.sum(R.mean(axis=0) - cf))
    return total


def geometric_correction(panel, schedule, counterfactuals, weights, H) -> float:
    """Second-order gap between arithmetic and geometric cumulative effects.

    ``sum_s w_s sum_k mean_i [Rhat * tau_i + tau_i^2 / 2]`` with
    ``tau_i = R_i - Rhat``.
    """
    total = 0.0
    for s, w in weights.items():
        cols = _window(panel, s, H)
        R = panel.block(schedule.members(s))[:, cols]
        cf = _cf_array(panel, counterfactuals[s])[cols]
        tau = R - cf[None, :]
        total += w * float(np.sum((cf[None, :] * tau + 0.5 * tau ** 2).mean(axis=0)))
    return total


# ---------------------------------------------------------------------------
# analytic bias


@dataclass(frozen=True)
class BiasDecomposition:
    alpha_gap: float
    loading_gap_term: float
    noise_term: float

    @property
    def total(self) -> float:
        return self.alpha_gap + self.loading_gap_term + self.noise_term


_KIND_FORM = {"factor": "ar", "market": "ar", "diff_means": "cont", "sc": "synth"}


def analytic_bias(
    truth,
    factors: FactorSeries,
    effect: CohortEffect,
    observed_factors: Sequence[str] | None = None,
    form: str | None = None,
    times: Sequence[int] | None = None,
) -> dict[int, BiasDecomposition]:
    """Decompose ``tau_hat(s, t) - tau_ATT(s, t)`` using the simulation truth.

    ``form`` is ``"ar"`` (fitted intercept/loadings on observed factors),
    ``"cont"`` (control-group means) or ``"synth"`` (loadings implied by the
    control weights); by default it follows the estimator that produced
    ``effect``. Cohort parameters are realized cohort means of the true
    alphas and loadings. For the comparison forms the control-side noise is
    folded into ``noise_term`` so the total reproduces the realized error.
    """
    if truth is None:
        raise TruthUnavailable("analytic bias needs the simulation truth")
    form = form or _KIND_FORM.get(effect.kind)
    if form is None:
        raise EffectsError(f"no analytic bias form for estimator kind {effect.kind!r}")
    rows = np.array([truth.row(i) for i in effect.treated_ids])
    F = factors.select(truth.factor_names)
    alpha_s = float(truth.alphas[rows].mean())
    beta_s = truth.loadings[rows].mean(axis=0)
    eps_s = truth.noise[rows].mean(axis=0)
    times = effect.times if times is None else np.asarray(times)
    cols = [int(np.searchsorted(factors.times, t)) for t in times]

    if form == "ar":
        if observed_factors is None:
            observed_factors = effect.info.get("factors") or ()
        names = [n if n else factors.names[0] for n in observed_factors]
        Fo = factors.select(names) if names else np.zeros((len(factors), 0))
        a_hat = float(effect.implied_alpha)
        b_hat = np.asarray(effect.implied_loadings, dtype=float).reshape(-1)
        out = {}
        for t, c in zip(times, cols):
            out[int(t)] = BiasDecomposition(
                alpha_s - a_hat,
                float(beta_s @ F[c] - b_hat @ Fo[c]),
                float(eps_s[c]),
            )
        return out

    if form == "cont":
        treated = truth.treated_ids
        crow = np.array([k for k, sec in enumerate(truth.securities) if sec not in treated])
        a_c, b_c, eps_c = truth.alphas[crow].mean(), truth.loadings[crow].mean(axis=0), truth.noise[crow].mean(axis=0)
    elif form == "synth":
        crow = np.array([truth.row(i) for i in effect.info["controls"]])
        omega = np.asarray(effect.implied_loadings, dtype=float)
        a_c, b_c, eps_c = omega @ truth.alphas[crow], omega @ truth.loadings[crow], omega @ truth.noise[crow]
    else:
        raise EffectsError(f"unknown bias form {form!r}")
    gap = beta_s - b_c
    return {
        int(t): BiasDecomposition(float(alpha_s - a_c), float(gap @ F[c]), float(eps_s[c] - eps_c[c]))
        for t, c in zip(times, cols)
    }


def realized_error(effect: CohortEffect, truth, times=None) -> dict[int, float]:
    """``tau_hat(s, t)`` minus the cohort-mean true effect."""
    times = effect.times if times is None else times
    out = {}
    for t in times:
        true = np.mean([truth.effect(i, int(t)) for i in effect.treated_ids])
        out[int(t)] = effect.at(int(t)) - float(true)
    return out


def long_run_drift(loading_gap, mean_factors, H) -> float:
    """Cumulative bias ``gap . (H * E[F])`` from a constant loading gap."""
    gap = np.atleast_1d(np.asarray(loading_gap, dtype=float))
    mu = np.atleast_1d(np.asarray(mean_factors, dtype=float))
    if gap.shape != mu.shape:
        raise ValueError("loading gap and factor means must align")
    return float(gap @ (H * mu))
