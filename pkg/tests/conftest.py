import numpy as np
import pytest

from eventcausal.dgp import SimDesign, generate
from eventcausal.panel import EventSchedule, FactorSeries, ReturnsPanel


def make_panel(values, times=None, ids=None, excess=False):
    values = np.asarray(values, dtype=float)
    n, t = values.shape
    ids = ids or [f"S{i:03d}" for i in range(n)]
    times = np.arange(1, t + 1) if times is None else np.asarray(times)
    return ReturnsPanel(tuple(ids), times, values, excess_adjusted=excess)


def make_factors(values, names, times=None, rf=None):
    values = np.asarray(values, dtype=float).reshape(len(values), -1)
    t = values.shape[0]
    times = np.arange(1, t + 1) if times is None else np.asarray(times)
    rf = np.zeros(t) if rf is None else np.asarray(rf, dtype=float)
    return FactorSeries(times, values, tuple(names), rf)


def factor_panel(loadings, F, alphas=None, noise=None, effect=None, ids=None):
    """Returns ``alpha + loadings @ F.T (+ noise)`` with optional ``(mask, col, size)`` effect."""
    L = np.asarray(loadings, dtype=float)
    F = np.asarray(F, dtype=float)
    a = np.zeros(L.shape[0]) if alphas is None else np.asarray(alphas, dtype=float)
    Y = a[:, None] + L @ F.T
    if noise is not None:
        Y = Y + noise
    if effect is not None:
        mask, col, size = effect
        Y[np.asarray(mask), col] += size
    return make_panel(Y, ids=ids, excess=True)


def schedule_for(panel, treated, event):
    treated = set(treated)
    return EventSchedule({s: (event if s in treated else None) for s in panel.securities})


@pytest.fixture(scope="session")
def default_draw():
    return generate(SimDesign(seed=11))


@pytest.fixture(scope="session")
def noiseless_draw():
    return generate(SimDesign(seed=5, noise_sd=0.0))


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
