"""Segment-wise lasso by cyclic coordinate descent, plus penalty-grid CV.

The solver minimizes (1/(2m)) ||y - X b||^2 + lam ||b||_1 on a data segment
of length m.  Penalties follow the rate rule lam(m) = C * sqrt(log(p)/m)
with the multiplier C picked once by K-fold cross-validation over a small
grid (default {1,...,8}).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import rng
from ._kernels import cd_gram
from .data_model import Dataset, SegmentView
from .errors import ConfigError, NumericError

DEFAULT_C_GRID = (1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0)
DEFAULT_TOL = 1e-7
DEFAULT_MAX_ITER = 10000
DEFAULT_KKT_TOL = 1e-6


def soft_threshold(z, gamma):
    """sign(z) * max(|z| - gamma, 0); gamma must be nonnegative."""
    if np.any(np.asarray(gamma) < 0):
        raise ConfigError("soft_threshold needs gamma >= 0")
    return np.sign(z) * np.maximum(np.abs(z) - gamma, 0.0)


def log_p_eff(p: int) -> float:
    """log(p) floored at log(2) so single-predictor runs stay penalized."""
    return max(math.log(p), math.log(2.0))


@dataclass(frozen=True)
class PenaltySchedule:
    """Penalty rule lam(m) = C * sqrt(log(p)/m) with a CV-selected C."""

    C: float
    grid: tuple = DEFAULT_C_GRID
    rule: str = "lam(m) = C*sqrt(log(p)/m)"

    def __post_init__(self):
        if self.C <= 0:
            raise ConfigError(f"penalty multiplier C must be positive, got {self.C}")

    def lambda_for(self, m: int, p: int) -> float:
        return self.C * math.sqrt(log_p_eff(p) / m)


@dataclass(frozen=True)
class LassoFit:
    beta: np.ndarray
    lam: float
    m: int
    objective: float
    iterations: int
    converged: bool
    objective_path: np.ndarray | None = field(default=None, repr=False)


def _segment_xy(seg):
    if isinstance(seg, SegmentView):
        return seg.X, seg.y
    if isinstance(seg, Dataset):
        return seg.X, seg.y
    X, y = seg
    return np.asarray(X, dtype=np.float64), np.asarray(y, dtype=np.float64)


def _objective(yty, c, G, beta, m, lam):
    g = G @ beta
    rss = yty - 2.0 * float(beta @ c) + float(beta @ g)
    return max(rss, 0.0) / (2.0 * m) + lam * float(np.sum(np.abs(beta)))


def fit_lasso(seg, lam: float, warm_start=None, tol: float = DEFAULT_TOL,
              max_iter: int = DEFAULT_MAX_ITER, kkt_tol: float = DEFAULT_KKT_TOL,
              track_objective: bool = False) -> LassoFit:
    """Fit the lasso on a segment (SegmentView, Dataset, or (X, y) pair).

    lam = 0 is allowed only when the segment has at least p rows.  With
    ``track_objective`` the per-sweep objective path is recorded (slower;
    meant for diagnostics).
    """
    X, y = _segment_xy(seg)
    m, p = X.shape
    if m < 2:
        raise ConfigError(f"segment length {m} < 2")
    if lam < 0:
        raise ConfigError(f"negative penalty {lam}")
    if lam == 0 and m < p:
        raise ConfigError(f"lambda=0 needs m >= p (m={m}, p={p})")

    G = np.ascontiguousarray(X.T @ X)
    c = np.ascontiguousarray(X.T @ y)
    yty = float(y @ y)
    beta = np.zeros(p) if warm_start is None else np.array(warm_start, dtype=np.float64)
    if beta.shape != (p,):
        raise ConfigError(f"warm start has shape {beta.shape}, expected ({p},)")
    g = np.ascontiguousarray(G @ beta)

    if not track_objective:
        iters, ok = cd_gram(G, c, float(m), float(lam), beta, g,
                            max_iter, tol, kkt_tol, -1)
        path = None
    else:
        # one sweep per call; arithmetic is identical to the single big call
        path_vals = []
        iters = 0
        ok = False
        while iters < max_iter:
            it, ok = cd_gram(G, c, float(m), float(lam), beta, g, 1, tol, kkt_tol, -1)
            iters += it
            path_vals.append(_objective(yty, c, G, beta, m, lam))
            if ok:
                break
        path = np.asarray(path_vals)

    obj = _objective(yty, c, G, beta, m, lam)
    return LassoFit(beta=beta, lam=float(lam), m=m, objective=obj,
                    iterations=int(iters), converged=bool(ok), objective_path=path)


def cv_errors(seg, grid=DEFAULT_C_GRID, folds: int = 3, seed: int = 0,
              tol: float = DEFAULT_TOL, max_iter: int = DEFAULT_MAX_ITER,
              kkt_tol: float = DEFAULT_KKT_TOL) -> np.ndarray:
    """Mean held-out MSE per C on the rate-rule penalty, fold-averaged.

    Folds are a random equal split of the segment rows drawn from the seeded
    stream; the assignment depends on the seed only.
    """
    X, y = _segment_xy(seg)
    m, p = X.shape
    if folds < 2:
        raise ConfigError(f"folds must be >= 2, got {folds}")
    if m < 2 * folds:
        raise ConfigError(f"segment length {m} < 2*folds = {2 * folds}")
    grid = tuple(float(C) for C in grid)
    if not grid:
        raise ConfigError("empty C grid")
    if any(C <= 0 for C in grid):
        raise ConfigError("C grid entries must be positive")

    perm = rng.generator(seed, rng.TAG_CV_FOLDS).permutation(m)
    chunks = np.array_split(perm, folds)
    logp = log_p_eff(p)

    # descending C = descending lambda: sparse solutions seed denser ones
    order = np.argsort(grid)[::-1]
    errors = np.zeros((len(grid), folds))
    for f, test_idx in enumerate(chunks):
        mask = np.ones(m, dtype=bool)
        mask[test_idx] = False
        Xtr, ytr = X[mask], y[mask]
        Xte, yte = X[test_idx], y[test_idx]
        mtr = Xtr.shape[0]
        G = np.ascontiguousarray(Xtr.T @ Xtr)
        c = np.ascontiguousarray(Xtr.T @ ytr)
        beta = np.zeros(p)
        for gi in order:
            lam = grid[gi] * math.sqrt(logp / mtr)
            g = np.ascontiguousarray(G @ beta)
            cd_gram(G, c, float(mtr), lam, beta, g, max_iter, tol, kkt_tol, -1)
            resid = yte - Xte @ beta
            errors[gi, f] = float(resid @ resid) / len(yte)
    return errors.mean(axis=1)


def cv_select_C(seg, grid=DEFAULT_C_GRID, folds: int = 3, seed: int = 0,
                tol: float = DEFAULT_TOL, max_iter: int = DEFAULT_MAX_ITER,
                kkt_tol: float = DEFAULT_KKT_TOL) -> PenaltySchedule:
    """Pick the CV-error-minimizing C from the grid; ties go to the smaller C."""
    grid = tuple(float(C) for C in grid)
    errs = cv_errors(seg, grid, folds=folds, seed=seed, tol=tol,
                     max_iter=max_iter, kkt_tol=kkt_tol)
    order = np.argsort(grid, kind="stable")
    best = min((errs[i], grid[i]) for i in order)
    return PenaltySchedule(C=best[1], grid=grid)
