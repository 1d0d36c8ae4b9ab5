"""Return panels, factor series and event schedules, with CSV ingestion.

Time is an abstract integer period index throughout; calendar dates only
appear while reading the daily factor research files.
"""
from __future__ import annotations

import csv
import io
import math
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import (
    AlreadyAdjusted,
    EmptySeries,
    Misaligned,
    NonFinite,
    ParseError,
    ScheduleError,
    UnbalancedPanel,
)

NEVER = None
PANEL_HEADER = ("security_id", "time", "return")
EVENTS_HEADER = ("security_id", "event_time")


def _frozen_array(a, dtype=float, ndim=None) -> np.ndarray:
    arr = np.array(a, dtype=dtype, copy=True)
    if ndim is not None and arr.ndim != ndim:
        raise ValueError(f"expected {ndim}-d array, got shape {arr.shape}")
    arr.flags.writeable = False
    return arr


def _check_times(times: np.ndarray) -> None:
    if times.size > 1 and np.any(np.diff(times) <= 0):
        raise ValueError("times must be strictly increasing and unique")


@dataclass(frozen=True)
class ReturnsPanel:
    """Dense N x T panel of simple returns."""

    securities: tuple
    times: np.ndarray
    values: np.ndarray
    excess_adjusted: bool = False
    _row: dict = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "securities", tuple(str(s) for s in self.securities))
        object.__setattr__(self, "times", _frozen_array(self.times, dtype=np.int64, ndim=1))
        object.__setattr__(self, "values", _frozen_array(self.values, ndim=2))
        n, t = self.values.shape
        if n < 1 or t < 2:
            raise ValueError(f"panel needs N >= 1 and T >= 2, got {n} x {t}")
        if len(self.securities) != n or self.times.size != t:
            raise ValueError("securities/times do not match values shape")
        if len(set(self.securities)) != n:
            raise ValueError("duplicate security ids")
        _check_times(self.times)
        if not np.all(np.isfinite(self.values)):
            raise ValueError("panel contains non-finite values")
        object.__setattr__(self, "_row", {s: i for i, s in enumerate(self.securities)})

    @property
    def n_securities(self) -> int:
        return self.values.shape[0]

    @property
    def n_periods(self) -> int:
        return self.values.shape[1]

    def col(self, t: int) -> int:
        """Column position of period ``t``."""
        j = int(np.searchsorted(self.times, t))
        if j >= self.times.size or self.times[j] != t:
            raise KeyError(f"period {t} not in panel")
        return j

    def rows(self, ids: Iterable[str]) -> np.ndarray:
        return np.array([self._row[i] for i in ids], dtype=np.int64)

    def block(self, ids: Sequence[str]) -> np.ndarray:
        """Rows for ``ids`` in the given order (len(ids) x T)."""
        return self.values[self.rows(ids)]

    def with_values(self, values, excess_adjusted=None) -> "ReturnsPanel":
        return ReturnsPanel(
            self.securities,
            self.times,
            values,
            self.excess_adjusted if excess_adjusted is None else excess_adjusted,
        )


@dataclass(frozen=True)
class FactorSeries:
    """T x K factor realizations plus the risk-free series."""

    times: np.ndarray
    values: np.ndarray
    names: tuple
    risk_free: np.ndarray
    dates: tuple | None = field(default=None, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "times", _frozen_array(self.times, dtype=np.int64, ndim=1))
        vals = np.asarray(self.values, dtype=float)
        if vals.ndim == 1 and vals.size == 0:
            vals = vals.reshape(self.times.size, 0)
        object.__setattr__(self, "values", _frozen_array(vals, ndim=2))
        object.__setattr__(self, "names", tuple(self.names))
        object.__setattr__(self, "risk_free", _frozen_array(self.risk_free, ndim=1))
        t = self.times.size
        if self.values.shape != (t, len(self.names)) or self.risk_free.size != t:
            raise ValueError("factor series shapes are inconsistent")
        _check_times(self.times)

    @property
    def n_factors(self) -> int:
        return len(self.names)

    def __len__(self) -> int:
        return self.times.size

    def index(self, name: str) -> int:
        try:
            return self.names.index(name)
        except ValueError:
            raise KeyError(f"factor {name!r} not in {list(self.names)}") from None

    def column(self, name: str) -> np.ndarray:
        return self.values[:, self.index(name)]

    def select(self, names: Sequence[str]) -> np.ndarray:
        """T x len(names) matrix of the named factors."""
        idx = [self.index(n) for n in names]
        return self.values[:, idx]

    def aligned_with(self, panel: ReturnsPanel) -> bool:
        return self.times.shape == panel.times.shape and bool(np.all(self.times == panel.times))


@dataclass(frozen=True)
class EventSchedule:
    """Event period per security; ``None`` means never treated."""

    event_time: Mapping[str, int | None]
    anticipation_delta: int = 0

    def __post_init__(self):
        clean = {}
        for k, v in dict(self.event_time).items():
            clean[str(k)] = None if v is None else int(v)
        object.__setattr__(self, "event_time", clean)
        if self.anticipation_delta < 0:
            raise ScheduleError("anticipation_delta must be non-negative")

    def cohorts(self) -> list[int]:
        return sorted({v for v in self.event_time.values() if v is not None})

    def members(self, s: int) -> list[str]:
        """Securities treated at ``s``, sorted by id."""
        return sorted(k for k, v in self.event_time.items() if v == s)

    def treated(self) -> list[str]:
        return sorted(k for k, v in self.event_time.items() if v is not None)

    def controls(self) -> list[str]:
        return sorted(k for k, v in self.event_time.items() if v is None)

    def cohort_sizes(self) -> dict[int, int]:
        return {s: len(self.members(s)) for s in self.cohorts()}

    def validate(self, panel: ReturnsPanel) -> None:
        missing = sorted(set(self.event_time) - set(panel.securities))
        if missing:
            raise ScheduleError(f"schedule names securities absent from the panel: {missing[:10]}")
        lo, hi = int(panel.times[0]), int(panel.times[-1])
        for k, v in self.event_time.items():
            if v is not None and not lo <= v <= hi:
                raise ScheduleError(f"event time {v} of {k} outside panel range [{lo}, {hi}]")


@dataclass(frozen=True)
class CohortWeights:
    weights: Mapping[int, float]

    def __post_init__(self):
        w = {int(k): float(v) for k, v in dict(self.weights).items()}
        if not w:
            raise ValueError("no cohorts")
        if any(v < 0 or v > 1 for v in w.values()):
            raise ValueError("cohort weights must lie in [0, 1]")
        if abs(math.fsum(w.values()) - 1.0) > 1e-12:
            raise ValueError("cohort weights must sum to one")
        object.__setattr__(self, "weights", dict(sorted(w.items())))

    @classmethod
    def from_schedule(cls, schedule: EventSchedule) -> "CohortWeights":
        """Default rule ``w_s = N_s / sum N_s'``."""
        sizes = schedule.cohort_sizes()
        total = sum(sizes.values())
        if total == 0:
            raise ScheduleError("schedule has no treated securities")
        return cls({s: n / total for s, n in sizes.items()})

    def __getitem__(self, s: int) -> float:
        return self.weights[s]

    def items(self):
        return self.weights.items()


# ---------------------------------------------------------------------------
# ingestion / emission


def _data_lines(text: str):
    """Yield (line_number, line) skipping blank and '#' comment lines."""
    for n, line in enumerate(text.splitlines(), start=1):
        s = line.strip()
        if s and not s.startswith("#"):
            yield n, line


def _to_float(raw: str, row: int) -> float:
    try:
        x = float(raw)
    except ValueError:
        raise ParseError(f"row {row}: cannot parse number {raw!r}") from None
    if not math.isfinite(x):
        raise NonFinite(row, raw)
    return x


def load_panel_csv(path) -> ReturnsPanel:
    """Read a long-format ``security_id,time,return`` file into a dense panel."""
    text = Path(path).read_text(encoding="utf-8")
    lines = list(_data_lines(text))
    if not lines:
        raise ParseError(f"{path}: empty file")
    header = [h.strip() for h in next(csv.reader([lines[0][1]]))]
    if tuple(header) != PANEL_HEADER:
        raise ParseError(f"{path}: expected header {','.join(PANEL_HEADER)}, got {','.join(header)}")
    cells: dict[tuple[str, int], float] = {}
    order: dict[str, None] = {}
    for n, line in lines[1:]:
        row = next(csv.reader([line]))
        if len(row) != 3:
            raise ParseError(f"{path}: row {n} has {len(row)} fields")
        sec = row[0].strip()
        try:
            t = int(row[1])
        except ValueError:
            raise ParseError(f"{path}: row {n}: bad time {row[1]!r}") from None
        x = _to_float(row[2].strip(), n)
        if (sec, t) in cells:
            raise ParseError(f"{path}: row {n}: duplicated (security, time) = ({sec}, {t})")
        cells[(sec, t)] = x
        order.setdefault(sec, None)
    if not cells:
        raise ParseError(f"{path}: no data rows")
    secs = list(order)
    times = sorted({t for _, t in cells})
    have: dict[str, set] = {s: set() for s in secs}
    for s, t in cells:
        have[s].add(t)
    bad = [s for s in secs if len(have[s]) != len(times)]
    if bad:
        raise UnbalancedPanel(bad)
    values = np.array([[cells[(s, t)] for t in times] for s in secs])
    return ReturnsPanel(tuple(secs), np.array(times), values, excess_adjusted=False)


def _header_comment(seed) -> str:
    return "" if seed is None else f"# seed: {seed}\n"


def emit_panel_csv(panel: ReturnsPanel, path, seed=None) -> None:
    buf = io.StringIO()
    buf.write(_header_comment(seed))
    buf.write(",".join(PANEL_HEADER) + "\n")
    times = [int(t) for t in panel.times]
    for i, sec in enumerate(panel.securities):
        row = panel.values[i]
        for j, t in enumerate(times):
            buf.write(f"{sec},{t},{float(row[j])!r}\n")
    Path(path).write_text(buf.getvalue(), encoding="utf-8")


_FF_ROW = re.compile(r"^\s*(\d{8})\s*,(.*)$")


def load_ff_daily(path) -> FactorSeries:
    """Parse a daily factor file in the public research-library layout.

    Values are in percent and are converted to decimals; dates become
    consecutive period indices 0, 1, 2, ... in file order. Preamble and
    footer lines that do not look like ``YYYYMMDD, ...`` rows are skipped.
    """
    text = Path(path).read_text(encoding="utf-8", errors="replace")
    names = None
    dates, rows = [], []
    for n, line in enumerate(text.splitlines(), start=1):
        m = _FF_ROW.match(line)
        if m is None:
            if names is None and "Mkt-RF" in line:
                names = [c.strip() for c in line.split(",")[1:]]
            elif dates:
                break  # footer or a second (annual) table follows the daily block
            continue
        fields = [f.strip() for f in m.group(2).split(",")]
        if names is not None and len(fields) != len(names):
            raise ParseError(f"{path}: line {n} has {len(fields)} values, header has {len(names)}")
        rows.append([_to_float(f, n) / 100.0 for f in fields])
        dates.append(int(m.group(1)))
    if not rows:
        raise EmptySeries(f"{path}: no daily factor rows found")
    if names is None:
        names = ["Mkt-RF", "SMB", "HML", "RF"][: len(rows[0])]
    if len({len(r) for r in rows}) != 1:
        raise ParseError(f"{path}: ragged rows")
    data = np.array(rows)
    upper = [c.upper() for c in names]
    if "RF" not in upper:
        raise ParseError(f"{path}: no RF column in header {names}")
    rf_col = upper.index("RF")
    keep = [j for j in range(len(names)) if j != rf_col]
    return FactorSeries(
        times=np.arange(len(rows)),
        values=data[:, keep],
        names=tuple(names[j] for j in keep),
        risk_free=data[:, rf_col],
        dates=tuple(dates),
    )


def load_factors_csv(path) -> FactorSeries:
    """Read the normalized ``time,<name1>,...,<nameK>,rf`` layout (decimals)."""
    lines = list(_data_lines(Path(path).read_text(encoding="utf-8")))
    if not lines:
        raise EmptySeries(f"{path}: empty factor file")
    header = [h.strip() for h in lines[0][1].split(",")]
    if len(header) < 2 or header[0] != "time" or header[-1] != "rf":
        raise ParseError(f"{path}: expected header time,<names...>,rf")
    times, rows = [], []
    for n, line in lines[1:]:
        fields = [f.strip() for f in line.split(",")]
        if len(fields) != len(header):
            raise ParseError(f"{path}: row {n} has {len(fields)} fields")
        try:
            times.append(int(fields[0]))
        except ValueError:
            raise ParseError(f"{path}: row {n}: bad time {fields[0]!r}") from None
        rows.append([_to_float(f, n) for f in fields[1:]])
    if not rows:
        raise EmptySeries(f"{path}: no factor rows")
    data = np.array(rows).reshape(len(rows), len(header) - 1)
    return FactorSeries(np.array(times), data[:, :-1], tuple(header[1:-1]), data[:, -1])


def emit_factors_csv(factors: FactorSeries, path, seed=None) -> None:
    buf = io.StringIO()
    buf.write(_header_comment(seed))
    buf.write(",".join(("time", *factors.names, "rf")) + "\n")
    for j, t in enumerate(factors.times):
        vals = [repr(float(v)) for v in factors.values[j]] + [repr(float(factors.risk_free[j]))]
        buf.write(",".join([str(int(t)), *vals]) + "\n")
    Path(path).write_text(buf.getvalue(), encoding="utf-8")


def load_events_csv(path, anticipation_delta: int = 0) -> EventSchedule:
    """``security_id,event_time`` rows; ``never`` (or empty) marks controls."""
    p = Path(path)
    if not p.exists():
        raise ScheduleError(f"events file not found: {p}")
    lines = list(_data_lines(p.read_text(encoding="utf-8")))
    if not lines or tuple(h.strip() for h in lines[0][1].split(",")) != EVENTS_HEADER:
        raise ScheduleError(f"{p}: expected header {','.join(EVENTS_HEADER)}")
    out: dict[str, int | None] = {}
    for n, line in lines[1:]:
        fields = [f.strip() for f in line.split(",")]
        if len(fields) != 2:
            raise ScheduleError(f"{p}: row {n} has {len(fields)} fields")
        sec, raw = fields
        if sec in out:
            raise ScheduleError(f"{p}: row {n}: duplicated security {sec}")
        if raw.lower() in ("", "never", "inf"):
            out[sec] = NEVER
        else:
            try:
                out[sec] = int(raw)
            except ValueError:
                raise ScheduleError(f"{p}: row {n}: bad event time {raw!r}") from None
    return EventSchedule(out, anticipation_delta)


def emit_events_csv(schedule: EventSchedule, path, seed=None) -> None:
    buf = io.StringIO()
    buf.write(_header_comment(seed))
    buf.write(",".join(EVENTS_HEADER) + "\n")
    for sec, t in schedule.event_time.items():
        buf.write(f"{sec},{'never' if t is None else t}\n")
    Path(path).write_text(buf.getvalue(), encoding="utf-8")


def to_excess(panel: ReturnsPanel, factors: FactorSeries) -> ReturnsPanel:
    """Subtract the risk-free rate from every cell."""
    if panel.excess_adjusted:
        raise AlreadyAdjusted("panel is already excess of the risk-free rate")
    if not factors.aligned_with(panel):
        raise Misaligned("factor and panel time axes differ")
    return panel.with_values(panel.values - factors.risk_free[None, :], excess_adjusted=True)
