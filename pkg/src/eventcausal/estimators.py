"""Counterfactual estimators of cohort-period effects.

Each estimator returns one :class:`CohortEffect` per event cohort, holding
the treated-cohort mean return, the estimated counterfactual and their
difference for every period of the panel.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import (
    EmptyCohort,
    EmptyControls,
    EstimatorError,
    Misaligned,
    RankTooLarge,
    ScheduleError,
    TooFewObservations,
    WindowTooShort,
)
from .numerics import NnlsSolution, PcaFactors, cross_validate, loo_residuals, nnls, ols_batch, pca_factors
from .panel import EventSchedule, FactorSeries, ReturnsPanel

KINDS = ("diff_means", "market", "factor", "sc", "gsynth")


@dataclass(frozen=True)
class EstimatorSpec:
    """Which estimator to run and on what data.

    ``pre_window`` is an inclusive ``(lo, hi)`` pair of offsets relative to
    the event period; by default every period before ``s - delta`` is used.
    """

    kind: str
    factors: tuple = ()
    market_factor: str | None = None
    sum_to_one: bool = False
    r_max: int = 4
    pre_window: tuple | None = None
    controls: tuple | None = None
    label: str | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise EstimatorError(f"unknown estimator kind {self.kind!r}; expected one of {KINDS}")
        object.__setattr__(self, "factors", tuple(self.factors))
        if self.kind == "factor" and not self.factors:
            raise EstimatorError("factor model needs at least one factor name (use 'market' or 'diff_means' otherwise)")
        if self.kind == "gsynth" and self.r_max < 1:
            raise EstimatorError("gsynth needs r_max >= 1")
        if self.pre_window is not None:
            lo, hi = (int(x) for x in self.pre_window)
            if lo > hi:
                raise WindowTooShort(f"empty pre window {self.pre_window}")
            object.__setattr__(self, "pre_window", (lo, hi))
        if self.controls is not None:
            object.__setattr__(self, "controls", tuple(sorted(str(c) for c in self.controls)))

    @classmethod
    def parse(cls, text: str, **kw) -> "EstimatorSpec":
        """Parse ``diff_means | market | factor:<a,b> | sc | gsynth:<r_max>``."""
        head, _, arg = text.strip().partition(":")
        if head == "factor":
            names = tuple(n.strip() for n in arg.split(",") if n.strip())
            return cls("factor", factors=names, **kw)
        if head == "gsynth":
            return cls("gsynth", r_max=int(arg) if arg else kw.pop("r_max", 4), **kw)
        if head == "market" and arg:
            return cls("market", market_factor=arg, **kw)
        if arg:
            raise EstimatorError(f"estimator {head!r} takes no argument")
        return cls(head, **kw)

    @property
    def name(self) -> str:
        if self.label:
            return self.label
        if self.kind == "factor":
            return "factor:" + ",".join(self.factors)
        if self.kind == "gsynth":
            return f"gsynth:{self.r_max}"
        return self.kind

    @property
    def observed_factors(self) -> tuple:
        """Observed factors entering the counterfactual ('' means the first column)."""
        if self.kind == "factor":
            return self.factors
        if self.kind == "market":
            return (self.market_factor or "",)
        return ()


@dataclass(frozen=True)
class CohortEffect:
    cohort: int
    times: np.ndarray
    estimate: np.ndarray
    counterfactual: np.ndarray
    treated_mean: np.ndarray
    estimator: str
    treated_ids: tuple
    kind: str = ""
    implied_alpha: float | None = None
    implied_loadings: np.ndarray | None = None
    firm_counterfactual: np.ndarray | None = None
    pre_times: np.ndarray | None = None
    info: dict = field(default_factory=dict)

    @property
    def per_period(self) -> dict:
        return {int(t): float(v) for t, v in zip(self.times, self.estimate)}

    def col(self, t: int) -> int:
        j = int(np.searchsorted(self.times, t))
        if j >= self.times.size or self.times[j] != t:
            raise KeyError(t)
        return j

    def at(self, t: int) -> float:
        return float(self.estimate[self.col(t)])

    def firm_effects(self, panel: ReturnsPanel) -> np.ndarray:
        """Per-firm ``R_it - Rhat_it`` (n_s x T); cohort-level counterfactual when no firm one exists."""
        R = panel.block(self.treated_ids)
        cf = self.firm_counterfactual if self.firm_counterfactual is not None else self.counterfactual[None, :]
        return R - cf


def _make_effect(cohort, panel, ids, cf, spec, **kw) -> CohortEffect:
    tm = panel.block(ids).mean(axis=0)
    cf = np.asarray(cf, dtype=float)
    return CohortEffect(
        cohort=cohort,
        times=panel.times,
        estimate=tm - cf,
        counterfactual=cf,
        treated_mean=tm,
        estimator=spec.name,
        treated_ids=tuple(ids),
        kind=spec.kind,
        **kw,
    )


def pre_columns(panel: ReturnsPanel, s: int, delta: int, spec: EstimatorSpec) -> np.ndarray:
    """Column positions of the estimation window for cohort ``s``."""
    times = panel.times
    mask = times < s - delta
    if spec.pre_window is not None:
        lo, hi = spec.pre_window
        if s + hi >= s - delta:
            raise WindowTooShort(f"pre window {spec.pre_window} is not strictly before s - delta (delta={delta})")
        mask &= (times >= s + lo) & (times <= s + hi)
    cols = np.flatnonzero(mask)
    if cols.size == 0:
        raise WindowTooShort(f"cohort {s}: empty pre-event window")
    return cols


def _cohort_ids(schedule: EventSchedule, s: int) -> list[str]:
    ids = schedule.members(s)
    if not ids:
        raise EmptyCohort(f"cohort {s} has no members")
    return ids


def control_ids(panel: ReturnsPanel, schedule: EventSchedule, spec: EstimatorSpec) -> list[str]:
    if spec.controls is None:
        ids = schedule.controls()
    else:
        never = set(schedule.controls())
        bad = [c for c in spec.controls if c not in never]
        if bad:
            raise ScheduleError(f"explicit controls are not never-treated: {bad[:10]}")
        ids = list(spec.controls)
    if not ids:
        raise EmptyControls("no control securities")
    present = set(panel.securities)
    missing = [c for c in ids if c not in present]
    if missing:
        raise ScheduleError(f"controls absent from panel: {missing[:10]}")
    return ids


def _check_inputs(panel, schedule, factors=None):
    schedule.validate(panel)
    if not schedule.cohorts():
        raise EmptyCohort("schedule has no treated securities")
    if factors is not None and not factors.aligned_with(panel):
        raise Misaligned("factor and panel time axes differ")


# ---------------------------------------------------------------------------


def diff_in_means(panel: ReturnsPanel, schedule: EventSchedule, spec: EstimatorSpec | None = None) -> list[CohortEffect]:
    """Treated-cohort mean minus the equal-weighted control mean."""
    spec = spec or EstimatorSpec("diff_means")
    _check_inputs(panel, schedule)
    ctrl = panel.block(control_ids(panel, schedule, spec)).mean(axis=0)
    return [
        _make_effect(s, panel, _cohort_ids(schedule, s), ctrl, spec)
        for s in schedule.cohorts()
    ]


def abnormal_returns(
    panel: ReturnsPanel,
    factors: FactorSeries,
    schedule: EventSchedule,
    spec: EstimatorSpec,
) -> list[CohortEffect]:
    """Factor-model abnormal returns averaged within each cohort.

    Loadings are fit firm by firm on the pre-event window. The market-adjusted
    variant fixes alpha = 0 and beta = 1 on the market column.
    """
    _check_inputs(panel, schedule, factors)
    if spec.kind == "market":
        mkt = factors.column(spec.market_factor) if spec.market_factor else factors.values[:, 0]
        out = []
        for s in schedule.cohorts():
            ids = _cohort_ids(schedule, s)
            out.append(_make_effect(s, panel, ids, np.array(mkt), spec, implied_alpha=0.0,
                                    implied_loadings=np.ones(1),
                                    info={"factors": [spec.market_factor or factors.names[0]]}))
        return out
    if spec.kind != "factor":
        raise EstimatorError(f"abnormal_returns cannot run {spec.kind!r}")
    X = factors.select(spec.factors)
    out = []
    for s in schedule.cohorts():
        ids = _cohort_ids(schedule, s)
        pre = pre_columns(panel, s, schedule.anticipation_delta, spec)
        if pre.size <= X.shape[1] + 1:
            raise WindowTooShort(f"cohort {s}: {pre.size} pre periods for {X.shape[1] + 1} parameters")
        R = panel.block(ids)
        coef, _ = ols_batch(R[:, pre].T, X[pre])
        fitted = (coef[0][:, None] + (X @ coef[1:]).T)  # n_s x T
        out.append(_make_effect(
            s, panel, ids, fitted.mean(axis=0), spec,
            implied_alpha=float(coef[0].mean()),
            implied_loadings=coef[1:].mean(axis=1),
            firm_counterfactual=fitted,
            pre_times=panel.times[pre],
            info={"factors": list(spec.factors), "alphas": coef[0], "betas": coef[1:].T},
        ))
    return out


def synthetic_control(panel: ReturnsPanel, schedule: EventSchedule, spec: EstimatorSpec | None = None) -> list[CohortEffect]:
    """Non-negative control portfolio fit to the cohort's pre-event path."""
    spec = spec or EstimatorSpec("sc")
    _check_inputs(panel, schedule)
    cids = control_ids(panel, schedule, spec)
    C = panel.block(cids)
    out = []
    for s in schedule.cohorts():
        ids = _cohort_ids(schedule, s)
        pre = pre_columns(panel, s, schedule.anticipation_delta, spec)
        target = panel.block(ids).mean(axis=0)
        sol: NnlsSolution = nnls(target[pre], C[:, pre].T, sum_to_one=spec.sum_to_one)
        out.append(_make_effect(
            s, panel, ids, sol.weights @ C, spec,
            implied_alpha=0.0,
            implied_loadings=sol.weights,
            pre_times=panel.times[pre],
            info={"controls": cids, "nnls": sol},
        ))
    return out


@dataclass(frozen=True)
class GsynthFit:
    """Everything needed to rebuild fitted outcomes for the bootstrap."""

    spec: EstimatorSpec
    pca: PcaFactors
    control_ids: tuple
    effects: tuple  # CohortEffect per cohort
    selected_r: dict  # cohort -> r
    cv_errors: dict  # cohort -> {r: mean cv error}

    def control_fitted(self, r: int) -> np.ndarray:
        return self.pca.truncate(r).reconstruct()


def fit_gsynth(panel: ReturnsPanel, schedule: EventSchedule, spec: EstimatorSpec) -> GsynthFit:
    _check_inputs(panel, schedule)
    cids = control_ids(panel, schedule, spec)
    r_max = spec.r_max
    if len(cids) < r_max:
        raise RankTooLarge(f"{len(cids)} controls for r_max={r_max}")
    C = panel.block(cids)
    pca = pca_factors(C, r_max)
    # components at roundoff level carry no signal; keep them out of CV
    sv = pca.singular_values
    n_rank = int(np.sum(sv[:r_max] > 1e-10 * sv[0])) if sv.size and sv[0] > 0 else 0
    candidates = list(range(1, max(n_rank, 1) + 1))
    effects, chosen, cv_err = [], {}, {}
    for s in schedule.cohorts():
        ids = _cohort_ids(schedule, s)
        pre = pre_columns(panel, s, schedule.anticipation_delta, spec)
        if pre.size < 2 * r_max:
            raise WindowTooShort(f"cohort {s}: {pre.size} pre periods, gsynth needs {2 * r_max}")
        Y = panel.block(ids)[:, pre].T  # T_pre x n_s
        sq = {}
        for r in candidates:
            try:
                e = loo_residuals(Y, pca.factors[pre, :r])
            except TooFewObservations as exc:
                raise WindowTooShort(f"cohort {s}: {exc}") from None
            sq[r] = (e ** 2).mean(axis=1)
        pos = {int(t): k for k, t in enumerate(panel.times[pre])}
        r_hat = cross_validate(candidates, lambda r, t: sq[r][pos[t]], list(pos))
        cv_err[s] = {r: float(v.mean()) for r, v in sq.items()}
        chosen[s] = r_hat
        F = pca.factors[:, :r_hat]
        coef, _ = ols_batch(Y, F[pre])
        fitted = coef[0][:, None] + (F @ coef[1:]).T
        effects.append(_make_effect(
            s, panel, ids, fitted.mean(axis=0), spec,
            implied_alpha=float(coef[0].mean()),
            implied_loadings=coef[1:].mean(axis=1),
            firm_counterfactual=fitted,
            pre_times=panel.times[pre],
            info={"r": r_hat, "cv_error": cv_err[s]},
        ))
    return GsynthFit(spec, pca, tuple(cids), tuple(effects), chosen, cv_err)


def gsynth(panel: ReturnsPanel, schedule: EventSchedule, spec: EstimatorSpec) -> list[CohortEffect]:
    """Generalized synthetic control: PCA factors from controls, CV over r, unit loadings."""
    return list(fit_gsynth(panel, schedule, spec).effects)


def estimate(
    panel: ReturnsPanel,
    schedule: EventSchedule,
    spec: EstimatorSpec,
    factors: FactorSeries | None = None,
) -> list[CohortEffect]:
    if spec.kind == "diff_means":
        return diff_in_means(panel, schedule, spec)
    if spec.kind in ("market", "factor"):
        if factors is None:
            raise EstimatorError(f"{spec.name} needs a factor series")
        return abnormal_returns(panel, factors, schedule, spec)
    if spec.kind == "sc":
        return synthetic_control(panel, schedule, spec)
    return gsynth(panel, schedule, spec)


def parse_estimators(names: Sequence[str], **kw) -> list[EstimatorSpec]:
    return [EstimatorSpec.parse(n, **kw) for n in names]
