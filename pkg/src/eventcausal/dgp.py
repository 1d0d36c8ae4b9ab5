"""Simulated return panels under a two-factor model with selection.

Returns follow ``r_it = rf_t + b_mkt,i * mkt_t + b_smb,i * smb_t + e_it``
with a fixed effect added for treated firms on the event day. Treatment
assignment may depend on the SMB loading and event timing may select days
with large SMB realizations.
"""
from __future__ import annotations

import dataclasses
import enum
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np
from scipy import special, stats

from .errors import DesignError, HistoryTooShort
from .panel import EventSchedule, FactorSeries, ReturnsPanel, load_factors_csv, load_ff_daily

MARKET = "Mkt-RF"
SIZE = "SMB"


class Assignment(str, enum.Enum):
    RANDOM = "random"
    LOGIT_SMB = "logit_smb"


class Timing(str, enum.Enum):
    FIXED = "fixed"
    RANK_LOGIT_SMB = "rank_logit_smb"


@dataclass(frozen=True)
class SyntheticFatTail:
    """I.i.d. bivariate Student-t factor draws (market, SMB).

    Each margin is shifted to ``means`` and scaled so its interquartile
    range equals ``iqrs``. The risk-free rate is held constant.
    """

    df: float = 4.0
    means: tuple = (0.0005, 0.0001)
    iqrs: tuple = (0.01, 0.006)
    corr: float = 0.0
    risk_free: float = 0.0001

    kind = "synthetic"


@dataclass(frozen=True)
class FileFactors:
    path: str
    kind = "file"


@dataclass(frozen=True)
class SimDesign:
    n_firms: int = 500
    n_pre: int = 239
    n_post: int = 10
    treat_share: float = 0.10
    effect_size: float = 0.03
    loading_mean: float = 1.0
    loading_sd: float = 0.3
    noise_sd: float = 0.01
    assignment: Assignment = Assignment.RANDOM
    timing: Timing = Timing.FIXED
    factor_source: Any = field(default_factory=SyntheticFatTail)
    block_length: int | None = None
    min_pre: int = 20
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "assignment", Assignment(self.assignment))
        object.__setattr__(self, "timing", Timing(self.timing))
        if self.n_firms < 2:
            raise DesignError(f"n_firms must be at least 2, got {self.n_firms}")
        if self.n_pre < 1 or self.n_post < 0:
            raise DesignError("n_pre must be >= 1 and n_post >= 0")
        if not 0 < self.treat_share < 1:
            raise DesignError(f"treat_share must lie in (0, 1), got {self.treat_share}")
        if self.loading_sd < 0 or self.noise_sd < 0:
            raise DesignError("standard deviations must be non-negative")
        if not 1 <= self.min_pre <= self.n_pre:
            raise DesignError("min_pre must lie in [1, n_pre]")
        if self.block_length is not None and self.block_length < 1:
            raise DesignError("block_length must be positive")
        if not isinstance(self.factor_source, (SyntheticFatTail, FileFactors)):
            raise DesignError(f"unknown factor source {self.factor_source!r}")

    @property
    def n_periods(self) -> int:
        return self.n_pre + 1 + self.n_post

    @property
    def fixed_event_time(self) -> int:
        """Designated event day under fixed timing (periods are 1-based)."""
        return self.n_pre + 1

    def replace(self, **changes) -> "SimDesign":
        return dataclasses.replace(self, **changes)

    def to_dict(self) -> dict:
        out = {}
        for f in dataclasses.fields(self):
            v = getattr(self, f.name)
            if isinstance(v, enum.Enum):
                v = v.value
            elif f.name == "factor_source":
                src = {"kind": v.kind}
                src.update({k: list(x) if isinstance(x, tuple) else x for k, x in dataclasses.asdict(v).items()})
                v = src
            out[f.name] = v
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "SimDesign":
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = sorted(set(data) - names)
        if unknown:
            raise DesignError(f"unknown design keys: {unknown}")
        kw = dict(data)
        if "factor_source" in kw:
            kw["factor_source"] = _parse_source(kw["factor_source"])
        try:
            return cls(**kw)
        except (TypeError, ValueError) as exc:
            raise DesignError(str(exc)) from None


def _parse_source(src) -> SyntheticFatTail | FileFactors:
    if isinstance(src, (SyntheticFatTail, FileFactors)):
        return src
    if not isinstance(src, dict) or "kind" not in src:
        raise DesignError("factor_source must be an object with a 'kind' key")
    rest = {k: v for k, v in src.items() if k != "kind"}
    try:
        if src["kind"] == "synthetic":
            for k in ("means", "iqrs"):
                if k in rest:
                    rest[k] = tuple(float(x) for x in rest[k])
            return SyntheticFatTail(**rest)
        if src["kind"] == "file":
            return FileFactors(**rest)
    except TypeError as exc:
        raise DesignError(f"bad factor_source: {exc}") from None
    raise DesignError(f"unknown factor_source kind {src['kind']!r}")


@dataclass(frozen=True)
class SimTruth:
    securities: tuple
    alphas: np.ndarray
    loadings: np.ndarray  # N x 2, columns (mkt, smb)
    factor_names: tuple
    treated_ids: frozenset
    event_period: int
    true_effects: dict
    noise: np.ndarray  # N x T idiosyncratic draws

    def row(self, sec: str) -> int:
        return self.securities.index(sec)

    def effect(self, sec: str, t: int) -> float:
        return self.true_effects.get((sec, t), 0.0)

    def to_dict(self) -> dict:
        return {
            "securities": list(self.securities),
            "factor_names": list(self.factor_names),
            "alphas": [float(a) for a in self.alphas],
            "loadings": [[float(x) for x in row] for row in self.loadings],
            "treated_ids": sorted(self.treated_ids),
            "event_period": int(self.event_period),
            "true_effects": [
                {"security_id": s, "time": int(t), "effect": float(v)}
                for (s, t), v in sorted(self.true_effects.items())
            ],
        }


def _streams(seed: int):
    ss = np.random.SeedSequence(int(seed))
    names = ("factors", "loadings", "assignment", "timing", "noise")
    return dict(zip(names, (np.random.default_rng(s) for s in ss.spawn(len(names)))))


def load_factor_history(path) -> FactorSeries:
    """Read normalized factor CSV or a raw daily research-library file."""
    p = Path(path)
    if not p.exists():
        raise HistoryTooShort(f"factor history file not found: {p}")
    for line in p.read_text(encoding="utf-8", errors="replace").splitlines():
        s = line.strip()
        if s and not s.startswith("#"):
            return load_factors_csv(p) if s.startswith("time,") else load_ff_daily(p)
    return load_ff_daily(p)


def _synthetic_draw(params: SyntheticFatTail, n: int, rng: np.random.Generator) -> np.ndarray:
    shape = np.array([[1.0, params.corr], [params.corr, 1.0]])
    z = rng.multivariate_normal(np.zeros(2), shape, size=n, method="cholesky")
    w = rng.chisquare(params.df, size=n) / params.df
    t = z / np.sqrt(w)[:, None]
    q75 = stats.t.ppf(0.75, params.df)
    scale = np.asarray(params.iqrs, dtype=float) / (2.0 * q75)
    return np.asarray(params.means, dtype=float) + t * scale


def sample_factors(design: SimDesign, rng: np.random.Generator, history: FactorSeries | None = None) -> FactorSeries:
    """Factor path (market excess, SMB, rf) for one replication.

    From a history, rows are taken as contiguous blocks (whole rows, so the
    cross-factor correlation is kept); by default a single block spans the
    panel. Synthetic draws are i.i.d. fat-tailed.
    """
    T = design.n_periods
    times = np.arange(1, T + 1)
    src = design.factor_source
    if history is None and isinstance(src, SyntheticFatTail):
        draws = _synthetic_draw(src, T, rng)
        return FactorSeries(times, draws, (MARKET, SIZE), np.full(T, src.risk_free))
    if history is None:
        history = load_factor_history(src.path)
    if len(history) < T:
        raise HistoryTooShort(f"history has {len(history)} rows, panel needs {T}")
    vals = history.select([MARKET, SIZE])
    L = T if design.block_length is None else min(design.block_length, T)
    idx = []
    while len(idx) < T:
        start = int(rng.integers(0, len(history) - L + 1))
        idx.extend(range(start, start + L))
    idx = np.array(idx[:T])
    return FactorSeries(times, vals[idx], (MARKET, SIZE), history.risk_free[idx])


def assignment_probabilities(design: SimDesign, loadings: np.ndarray) -> np.ndarray:
    """Per-firm treatment probability.

    Logit selection uses slope ``log(treat_share) / mean(b_smb)`` on the
    realized sample mean, so firms with low SMB loadings are favoured.
    """
    n = loadings.shape[0]
    if design.assignment is Assignment.RANDOM:
        return np.full(n, design.treat_share)
    mean_smb = float(np.mean(loadings[:, 1]))
    if mean_smb <= 0:
        raise DesignError("logit assignment needs a positive mean SMB loading")
    slope = math.log(design.treat_share) / mean_smb
    return special.expit(slope * loadings[:, 1])


def assign_treatment(design: SimDesign, loadings: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Boolean treated mask; the whole draw repeats until both groups are non-empty."""
    p = assignment_probabilities(design, loadings)
    n = p.size
    while True:
        treated = rng.random(n) < p
        if 0 < treated.sum() < n:
            return treated


def timing_probabilities(smb: np.ndarray) -> np.ndarray:
    """Per-period selection probability from the SMB rank (rank 1 = highest)."""
    rank = stats.rankdata(-np.asarray(smb, dtype=float), method="average")
    slope = math.log(1.0 / rank.size) / rank.mean()
    return special.expit(slope * rank)


def eligible_event_times(design: SimDesign) -> np.ndarray:
    """1-based periods leaving ``min_pre`` pre periods and the full post window."""
    return np.arange(design.min_pre + 1, design.n_periods - design.n_post + 1)


def select_timing(design: SimDesign, factors: FactorSeries, rng: np.random.Generator) -> int:
    if design.timing is Timing.FIXED:
        return design.fixed_event_time
    smb = factors.column(SIZE)
    if smb.size != design.n_periods:
        raise DesignError(f"timing selection needs {design.n_periods} candidate periods, got {smb.size}")
    p = timing_probabilities(smb)
    ok = np.zeros(smb.size, dtype=bool)
    ok[eligible_event_times(design) - 1] = True
    while True:
        drawn = (rng.random(smb.size) < p) & ok
        if drawn.any():
            break
    cand = np.flatnonzero(drawn)
    top = cand[smb[cand] == smb[cand].max()]
    pick = top[0] if top.size == 1 else top[int(rng.integers(top.size))]
    return int(factors.times[pick])


def generate(design: SimDesign, history: FactorSeries | None = None):
    """Simulate one panel.

    Returns ``(panel, factors, schedule, truth)``; the panel holds raw
    (not excess) returns and the schedule has no anticipation.
    """
    rng = _streams(design.seed)
    factors = sample_factors(design, rng["factors"], history)
    N, T = design.n_firms, design.n_periods
    loadings = rng["loadings"].normal(design.loading_mean, design.loading_sd, size=(N, 2))
    treated = assign_treatment(design, loadings, rng["assignment"])
    event = select_timing(design, factors, rng["timing"])
    noise = rng["noise"].normal(0.0, 1.0, size=(N, T)) * design.noise_sd

    mkt, smb = factors.column(MARKET), factors.column(SIZE)
    systematic = factors.risk_free[None, :] + loadings[:, :1] * mkt[None, :] + loadings[:, 1:] * smb[None, :]
    ev_col = event - 1
    systematic[treated, ev_col] += design.effect_size
    values = systematic + noise

    width = max(4, len(str(N - 1)))
    secs = tuple(f"F{i:0{width}d}" for i in range(N))
    treated_ids = frozenset(s for s, d in zip(secs, treated) if d)
    schedule = EventSchedule({s: (event if s in treated_ids else None) for s in secs}, anticipation_delta=0)
    truth = SimTruth(
        securities=secs,
        alphas=np.zeros(N),
        loadings=loadings,
        factor_names=(MARKET, SIZE),
        treated_ids=treated_ids,
        event_period=event,
        true_effects={(s, event): design.effect_size for s in sorted(treated_ids)},
        noise=noise,
    )
    panel = ReturnsPanel(secs, factors.times, values, excess_adjusted=False)
    return panel, factors, schedule, truth
