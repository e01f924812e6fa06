"""De-biased lasso difference process over the split-point grid.

For every candidate split k the response is regressed on each side, both
lasso estimates are de-biased through the precision surrogate, and the
weighted coordinate differences

    z[k][j] = sqrt(n) * (k/n) * (1 - k/n) * (debiased_left_j - debiased_right_j)

form the detection process.  Prefix Grams along the grid depend only on X,
so they are built once per detection (``make_prefix_cache``) and shared by
every bootstrap replicate.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from ._kernels import scan_chain
from .data_model import Dataset, SearchGrid, SegmentView, SubGroup
from .errors import ConfigError, NumericError
from .lasso import (DEFAULT_KKT_TOL, DEFAULT_MAX_ITER, DEFAULT_TOL, LassoFit,
                    PenaltySchedule, fit_lasso, log_p_eff)
from .precision import PrecisionEstimate


@dataclass(frozen=True)
class PrefixCache:
    """Per-detection cache of grid-point Grams (left ascending, right descending)."""

    grid: SearchGrid
    X: np.ndarray
    Gs_left: np.ndarray = field(repr=False)
    Gs_right_desc: np.ndarray = field(repr=False)

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def p(self) -> int:
        return self.X.shape[1]


def make_prefix_cache(data: Dataset, grid: SearchGrid) -> PrefixCache:
    X = data.X
    n, p = X.shape
    pts = grid.points
    npts = len(pts)
    Gs_left = np.empty((npts, p, p))
    G = np.zeros((p, p))
    prev = 0
    for i, k in enumerate(pts):
        blk = X[prev:k]
        G += blk.T @ blk
        Gs_left[i] = G
        prev = int(k)
    tail = X[prev:]
    G_total = G + tail.T @ tail
    Gs_right_desc = np.ascontiguousarray(G_total[None, :, :] - Gs_left[::-1])
    return PrefixCache(grid=grid, X=X, Gs_left=Gs_left, Gs_right_desc=Gs_right_desc)


class ScanArrays(NamedTuple):
    """Raw per-grid arrays for one response vector."""

    beta_left: np.ndarray
    beta_right: np.ndarray
    debiased_left: np.ndarray
    debiased_right: np.ndarray
    z: np.ndarray
    rss_left: np.ndarray
    rss_right: np.ndarray
    conv_left: np.ndarray
    conv_right: np.ndarray
    iters_left: np.ndarray
    iters_right: np.ndarray


def scan_response(cache: PrefixCache, y: np.ndarray, theta: np.ndarray,
                  schedule: PenaltySchedule, tol: float = DEFAULT_TOL,
                  max_iter: int = DEFAULT_MAX_ITER,
                  kkt_tol: float = DEFAULT_KKT_TOL) -> ScanArrays:
    """Run both warm-start chains for one response and de-bias the results."""
    X = cache.X
    n, p = X.shape
    pts = cache.grid.points
    logp = log_p_eff(p)

    cum_c = np.cumsum(X * y[:, None], axis=0)
    cum_yty = np.cumsum(y * y)
    c_left = np.ascontiguousarray(cum_c[pts - 1])
    c_right = cum_c[-1][None, :] - c_left
    yty_left = np.ascontiguousarray(cum_yty[pts - 1])
    yty_right = cum_yty[-1] - yty_left

    ms_left = pts.astype(np.float64)
    ms_right = (n - pts).astype(np.float64)
    lam_left = schedule.C * np.sqrt(logp / ms_left)
    lam_right = schedule.C * np.sqrt(logp / ms_right)

    bl, gl, rl, cvl, itl = scan_chain(cache.Gs_left, c_left, yty_left,
                                      ms_left, lam_left, tol, max_iter, kkt_tol)
    # right chain descends (shortest right segment first)
    br_d, gr_d, rr_d, cvr_d, itr_d = scan_chain(
        cache.Gs_right_desc, np.ascontiguousarray(c_right[::-1]),
        np.ascontiguousarray(yty_right[::-1]), ms_right[::-1],
        np.ascontiguousarray(lam_right[::-1]), tol, max_iter, kkt_tol)
    br, gr = br_d[::-1], gr_d[::-1]
    rr, cvr, itr = rr_d[::-1], cvr_d[::-1], itr_d[::-1]

    dl = bl + (gl / ms_left[:, None]) @ theta.T
    dr = br + (gr / ms_right[:, None]) @ theta.T
    w = math.sqrt(n) * (pts / n) * (1.0 - pts / n)
    z = w[:, None] * (dl - dr)
    return ScanArrays(beta_left=bl, beta_right=br, debiased_left=dl,
                      debiased_right=dr, z=z, rss_left=rl, rss_right=rr,
                      conv_left=cvl, conv_right=cvr, iters_left=itl,
                      iters_right=itr)


@dataclass(frozen=True)
class CptProcess:
    """The de-biased difference process and everything computed alongside it."""

    grid: SearchGrid
    n: int
    p: int
    schedule: PenaltySchedule
    z: np.ndarray
    debiased_left: np.ndarray
    debiased_right: np.ndarray
    lasso_left: np.ndarray
    lasso_right: np.ndarray
    rss_left: np.ndarray = field(repr=False)
    rss_right: np.ndarray = field(repr=False)
    conv_left: np.ndarray = field(repr=False)
    conv_right: np.ndarray = field(repr=False)

    @property
    def ok_mask(self) -> np.ndarray:
        return self.conv_left & self.conv_right

    @property
    def n_flagged(self) -> int:
        return int((~self.ok_mask).sum())


@dataclass(frozen=True)
class CptEstimate:
    t_hat: float
    k_hat: int
    h_max: float
    n_skipped: int = 0


@dataclass(frozen=True)
class VarianceEstimate:
    sigma_eps_sq: float
    t_hat_full: float
    k_hat_full: int = 0


class DebiasedPair(NamedTuple):
    left: np.ndarray
    right: np.ndarray
    fit_left: LassoFit
    fit_right: LassoFit


def debiased_pair(data: Dataset, prec: PrecisionEstimate, k: int,
                  schedule: PenaltySchedule, warm=None, tol: float = DEFAULT_TOL,
                  max_iter: int = DEFAULT_MAX_ITER,
                  kkt_tol: float = DEFAULT_KKT_TOL) -> DebiasedPair:
    """De-biased estimates for the split at k, computed segment by segment.

    ``warm`` is an optional (left, right) pair of starting coefficient
    vectors.  Non-convergence is reported through the fits' flags, not as an
    error.
    """
    n, p = data.n, data.p
    if not (2 <= k <= n - 2):
        raise ConfigError(f"split k={k} leaves a segment shorter than 2 (n={n})")
    warm_left, warm_right = warm if warm is not None else (None, None)
    left_seg = SegmentView(data, 0, k)
    right_seg = SegmentView(data, k, n)
    fl = fit_lasso(left_seg, schedule.lambda_for(k, p), warm_start=warm_left,
                   tol=tol, max_iter=max_iter, kkt_tol=kkt_tol)
    fr = fit_lasso(right_seg, schedule.lambda_for(n - k, p), warm_start=warm_right,
                   tol=tol, max_iter=max_iter, kkt_tol=kkt_tol)
    rl = left_seg.y - left_seg.X @ fl.beta
    rr = right_seg.y - right_seg.X @ fr.beta
    left = fl.beta + prec.theta @ (left_seg.X.T @ rl) / k
    right = fr.beta + prec.theta @ (right_seg.X.T @ rr) / (n - k)
    return DebiasedPair(left=left, right=right, fit_left=fl, fit_right=fr)


def build_process(data: Dataset, prec: PrecisionEstimate, grid: SearchGrid,
                  schedule: PenaltySchedule, cache: PrefixCache | None = None,
                  tol: float = DEFAULT_TOL, max_iter: int = DEFAULT_MAX_ITER,
                  kkt_tol: float = DEFAULT_KKT_TOL) -> CptProcess:
    """Build the full process: two warm-start chains plus de-biasing.

    Grid points where either side failed to converge are kept but flagged;
    downstream max statistics skip them.
    """
    if grid.n != data.n:
        raise ConfigError(f"grid built for n={grid.n}, data has n={data.n}")
    if cache is None:
        cache = make_prefix_cache(data, grid)
    arrs = scan_response(cache, data.y, prec.theta, schedule,
                         tol=tol, max_iter=max_iter, kkt_tol=kkt_tol)
    if not np.isfinite(arrs.z).all():
        bad = int(cache.grid.points[np.argwhere(~np.isfinite(arrs.z))[0][0]])
        raise NumericError(f"non-finite process value at split k={bad}")
    return CptProcess(grid=grid, n=data.n, p=data.p, schedule=schedule,
                      z=arrs.z, debiased_left=arrs.debiased_left,
                      debiased_right=arrs.debiased_right,
                      lasso_left=arrs.beta_left, lasso_right=arrs.beta_right,
                      rss_left=arrs.rss_left, rss_right=arrs.rss_right,
                      conv_left=arrs.conv_left, conv_right=arrs.conv_right)


def h_surface(proc: CptProcess, g: SubGroup) -> np.ndarray:
    """H_G over the grid: the group-max weighted absolute difference."""
    g.validate(proc.p)
    cols = g.zero_based()
    return np.max(np.abs(proc.z[:, cols]), axis=1) / math.sqrt(proc.n)


def argmax_cpt(proc: CptProcess, g: SubGroup) -> CptEstimate:
    """Argmax split estimate over the group; flagged grid points are skipped.

    Ties break to the smallest k.
    """
    h = h_surface(proc, g)
    ok = proc.ok_mask
    if not ok.any():
        raise NumericError("every grid point is flagged; no usable split")
    masked = np.where(ok, h, -np.inf)
    i = int(np.argmax(masked))
    k = int(proc.grid.points[i])
    return CptEstimate(t_hat=k / proc.n, k_hat=k, h_max=float(h[i]),
                       n_skipped=int((~ok).sum()))


def weighted_variance(data: Dataset, proc: CptProcess,
                      schedule: PenaltySchedule) -> VarianceEstimate:
    """Pooled residual variance after splitting at the full-group argmax."""
    est = argmax_cpt(proc, SubGroup.full(proc.p))
    i = proc.grid.index_of(est.k_hat)
    sigma_sq = (proc.rss_left[i] + proc.rss_right[i]) / proc.n
    if sigma_sq <= 1e-12:
        raise NumericError(
            "residuals are numerically zero at the split; data looks noiseless")
    return VarianceEstimate(sigma_eps_sq=float(sigma_sq), t_hat_full=est.t_hat,
                            k_hat_full=est.k_hat)


def signal_function(t: float, t0: float, n: int, beta1: np.ndarray,
                    beta2: np.ndarray) -> np.ndarray:
    """Population drift of the de-biased difference process at scan point t.

    Triangular in t with its peak at the true change point t0:
    sqrt(n) * (floor(nt)/n) * ((n - floor(n t0))/n) * (beta1 - beta2) left of
    t0, and the mirrored weights right of it.
    """
    k = math.floor(n * t)
    k0 = math.floor(n * t0)
    diff = np.asarray(beta1, dtype=np.float64) - np.asarray(beta2, dtype=np.float64)
    if k <= k0:
        coef = math.sqrt(n) * (k / n) * ((n - k0) / n)
    else:
        coef = math.sqrt(n) * (k0 / n) * ((n - k) / n)
    return coef * diff


def dump_process_csv(path: str, proc: CptProcess, g: SubGroup,
                     include_z: bool = False) -> None:
    """One row per grid point: k, t, H over the group, optionally every z column."""
    h = h_surface(proc, g)
    with open(path, "w", encoding="utf-8") as fh:
        header = "k,t,H"
        if include_z:
            header += "," + ",".join(f"z_{j}" for j in range(1, proc.p + 1))
        fh.write(header + "\n")
        for i, k in enumerate(proc.grid.points):
            row = f"{int(k)},{float(k) / proc.n!r},{float(h[i])!r}"
            if include_z:
                row += "," + ",".join(repr(v) for v in proc.z[i].tolist())
            fh.write(row + "\n")
