"""Least squares, non-negative least squares, principal components and CV."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .errors import NumericalFailure, RankDeficient, RankTooLarge, TooFewObservations

RANK_RTOL = 1e-10


@dataclass(frozen=True)
class OlsFit:
    intercept: float
    slopes: np.ndarray
    residuals: np.ndarray
    n_obs: int

    def predict(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=float).reshape(-1, self.slopes.size)
        return self.intercept + X @ self.slopes


def design_matrix(X, n_obs: int, with_intercept: bool = True) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X.reshape(-1, 1) if X.size else X.reshape(n_obs, 0)
    if X.shape[0] != n_obs:
        raise ValueError(f"regressors have {X.shape[0]} rows, response has {n_obs}")
    if with_intercept:
        X = np.hstack([np.ones((n_obs, 1)), X])
    return X


def _check_design(Z: np.ndarray) -> None:
    t, p = Z.shape
    if t <= p:
        raise TooFewObservations(f"{t} observations for {p} parameters")
    if p == 0:
        return
    sv = np.linalg.svd(Z, compute_uv=False)
    if sv[-1] <= RANK_RTOL * sv[0]:
        raise RankDeficient(f"design matrix is rank deficient (condition {sv[0] / max(sv[-1], 1e-300):.3g})")


def ols_batch(Y, X, with_intercept: bool = True) -> tuple[np.ndarray, np.ndarray]:
    """Regress every column of ``Y`` (T x m) on the same regressors.

    Returns the (p x m) coefficient matrix, intercept first when requested,
    and the T x m residuals.
    """
    Y = np.asarray(Y, dtype=float)
    squeeze = Y.ndim == 1
    Y2 = Y.reshape(Y.shape[0], -1)
    Z = design_matrix(X, Y2.shape[0], with_intercept)
    _check_design(Z)
    if Z.shape[1] == 0:
        coef = np.zeros((0, Y2.shape[1]))
    else:
        coef = np.linalg.lstsq(Z, Y2, rcond=None)[0]
    resid = Y2 - Z @ coef
    if squeeze:
        return coef[:, 0], resid[:, 0]
    return coef, resid


def ols(y, X, with_intercept: bool = True) -> OlsFit:
    """Ordinary least squares of ``y`` on ``X`` (T x K, K may be 0)."""
    y = np.asarray(y, dtype=float).ravel()
    coef, resid = ols_batch(y, X, with_intercept)
    if with_intercept:
        return OlsFit(float(coef[0]), coef[1:].copy(), resid, y.size)
    return OlsFit(0.0, coef.copy(), resid, y.size)


def loo_residuals(Y, X, with_intercept: bool = True) -> np.ndarray:
    """Leave-one-observation-out prediction errors for each column of ``Y``.

    Uses the hat-matrix identity ``e_(t) = e_t / (1 - h_tt)``, which is exact
    for least squares.
    """
    Y = np.asarray(Y, dtype=float)
    Y2 = Y.reshape(Y.shape[0], -1)
    Z = design_matrix(X, Y2.shape[0], with_intercept)
    _check_design(Z)
    q, _ = np.linalg.qr(Z)
    h = np.einsum("ij,ij->i", q, q)
    if np.any(h >= 1 - 1e-12):
        raise TooFewObservations("an observation has leverage one; leave-one-out undefined")
    resid = Y2 - q @ (q.T @ Y2)
    out = resid / (1.0 - h)[:, None]
    return out.reshape(Y.shape)


# ---------------------------------------------------------------------------
# non-negative least squares


@dataclass(frozen=True)
class NnlsSolution:
    weights: np.ndarray
    objective: float
    kkt_residual: float
    n_iter: int


def kkt_residual(columns, target, weights) -> float:
    """Largest KKT violation of ``min ||A w - b||^2 / 2`` subject to ``w >= 0``."""
    A = np.asarray(columns, dtype=float)
    g = A.T @ (A @ weights - np.asarray(target, dtype=float))
    pos = weights > 0
    viol = np.where(pos, np.abs(g), np.maximum(-g, 0.0))
    return float(viol.max(initial=0.0))


def _lawson_hanson(A: np.ndarray, b: np.ndarray, max_iter: int) -> tuple[np.ndarray, int]:
    m, n = A.shape
    x = np.zeros(n)
    passive = np.zeros(n, dtype=bool)
    scale = max(np.abs(A).max(initial=0.0), 1e-300) * max(np.abs(b).max(initial=0.0), 1e-300)
    tol = 10 * np.finfo(float).eps * max(m, n) * scale
    w = A.T @ (b - A @ x)
    it = 0
    while (~passive).any() and w[~passive].max() > tol:
        cand = np.where(~passive, w, -np.inf)
        passive[int(np.argmax(cand))] = True
        while True:
            it += 1
            if it > max_iter:
                raise NumericalFailure(f"NNLS exceeded {max_iter} iterations")
            s = np.zeros(n)
            s[passive] = np.linalg.lstsq(A[:, passive], b, rcond=None)[0]
            if s[passive].min() > 0:
                break
            neg = np.flatnonzero(passive & (s <= 0))
            ratios = x[neg] / (x[neg] - s[neg])
            k = int(np.argmin(ratios))
            x = x + ratios[k] * (s - x)
            x[neg[k]] = 0.0
            passive &= x > 0
            x[~passive] = 0.0
            if not passive.any():
                s = np.zeros(n)
                break
        x = s
        w = A.T @ (b - A @ x)
    return x, it


def nnls(target, columns, sum_to_one: bool = False, max_iter: int | None = None) -> NnlsSolution:
    """Solve ``min_w ||target - columns @ w||^2`` subject to ``w >= 0``.

    Active-set method of Lawson and Hanson; inactive weights are exact
    zeros. With ``sum_to_one`` the equality ``sum(w) = 1`` is imposed by
    heavy row weighting and then renormalized.
    """
    b = np.asarray(target, dtype=float).ravel()
    A = np.asarray(columns, dtype=float)
    if A.ndim == 1:
        A = A.reshape(-1, 1)
    if A.shape[0] != b.size or b.size < 1 or A.shape[1] < 1:
        raise ValueError("nnls needs T >= 1 rows and J >= 1 columns with matching target")
    n = A.shape[1]
    cap = 50 * n if max_iter is None else max_iter
    if sum_to_one:
        rho = 1e4 * max(np.abs(A).max(), np.abs(b).max(), 1.0)
        Aw = np.vstack([A, rho * np.ones((1, n))])
        bw = np.append(b, rho)
        x, it = _lawson_hanson(Aw, bw, cap)
        if x.sum() > 0:
            x = x / x.sum()
    else:
        x, it = _lawson_hanson(A, b, cap)
    resid = b - A @ x
    return NnlsSolution(x, float(resid @ resid), kkt_residual(A, b, x), it)


# ---------------------------------------------------------------------------
# principal components


@dataclass(frozen=True)
class PcaFactors:
    """``block ~ intercepts + loadings @ factors.T`` with F'F/T = I."""

    factors: np.ndarray
    loadings: np.ndarray
    intercepts: np.ndarray
    r: int
    singular_values: np.ndarray

    def reconstruct(self) -> np.ndarray:
        return self.intercepts[:, None] + self.loadings @ self.factors.T

    def truncate(self, r: int) -> "PcaFactors":
        if r > self.r:
            raise RankTooLarge(f"cannot truncate rank {self.r} fit to {r}")
        return PcaFactors(self.factors[:, :r], self.loadings[:, :r], self.intercepts, r, self.singular_values)


def pca_factors(panel_block, r: int) -> PcaFactors:
    """Top-``r`` principal-component factors of a J x T block.

    Rows are demeaned first. The factors are ``sqrt(T)`` times the leading
    right singular vectors and the loadings absorb the singular values, so
    ``loadings @ factors.T`` is the best rank-``r`` approximation of the
    demeaned block.
    """
    Y = np.asarray(panel_block, dtype=float)
    J, T = Y.shape
    if r < 0 or r > min(J, T):
        raise RankTooLarge(f"r={r} exceeds min(J, T) = {min(J, T)}")
    mu = Y.mean(axis=1)
    U, s, Vt = np.linalg.svd(Y - mu[:, None], full_matrices=False)
    U, Vt = U[:, :r], Vt[:r]
    # deterministic signs: largest-magnitude loading of each component positive
    if r:
        flip = np.sign(U[np.argmax(np.abs(U), axis=0), np.arange(r)])
        flip[flip == 0] = 1.0
        U, Vt = U * flip, Vt * flip[:, None]
    root_t = np.sqrt(T)
    return PcaFactors(
        factors=root_t * Vt.T,
        loadings=U * (s[:r] / root_t),
        intercepts=mu,
        r=r,
        singular_values=s,
    )


# ---------------------------------------------------------------------------
# cross-validation


def cross_validate(
    candidates: Sequence[int],
    evaluate: Callable[[int, int], float],
    pre_periods: Sequence[int],
) -> int:
    """Pick the candidate with the smallest mean held-out error.

    ``evaluate(r, t)`` returns the squared prediction error for period ``t``
    held out. Ties go to the smaller candidate.
    """
    cands = sorted(set(int(c) for c in candidates))
    if not cands:
        raise ValueError("no candidates")
    periods = list(pre_periods)
    if len(periods) < 2 * max(cands):
        raise ValueError(f"need at least {2 * max(cands)} pre periods, got {len(periods)}")
    best, best_err = cands[0], np.inf
    for r in cands:
        err = float(np.mean([evaluate(r, t) for t in periods]))
        if err < best_err:
            best, best_err = r, err
    return best
