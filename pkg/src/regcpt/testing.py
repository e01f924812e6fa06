"""Studentized sup-statistic, multiplier bootstraps, and the detection decision.

Two bootstrap routes share the critical-value machinery.  Bootstrap-I
perturbs only the leading partial-sum term with fresh N(0,1) multipliers.
Bootstrap-II regenerates responses from the fitted two-segment model with
N(0, sigma_hat^2) errors, reruns the entire de-biased process, and subtracts
the estimated drift before taking the sup.  The replicate streams are keyed
by (seed, replicate index), so results do not depend on worker count.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from . import rng
from .cpt_process import (CptEstimate, CptProcess, PrefixCache, VarianceEstimate,
                          argmax_cpt, build_process, make_prefix_cache,
                          scan_response, weighted_variance)
from .data_model import Dataset, SearchGrid, SegmentView, SubGroup, build_grid
from .errors import ConfigError, NumericError, RegcptError
from .lasso import (DEFAULT_C_GRID, DEFAULT_KKT_TOL, DEFAULT_MAX_ITER,
                    DEFAULT_TOL, PenaltySchedule, cv_errors)
from .precision import PrecisionEstimate, fit_nodewise, omega_for_group

VARIANCE_FLOOR = 1e-12


@dataclass(frozen=True)
class TestConfig:
    """Knobs for one detection run."""

    __test__ = False  # not a pytest class, despite the name

    alpha: float = 0.05
    tau0: float = 0.1
    B: int = 100
    group: SubGroup | None = None
    seed: int = 0
    method: str = "boot2"
    stride: int = 1
    c_grid: tuple = DEFAULT_C_GRID
    folds: int = 3
    per_column_node_cv: bool = False
    bonferroni: bool = False

    def validate(self) -> None:
        if not (0.0 < self.alpha < 1.0):
            raise ConfigError(f"alpha must lie in (0,1), got {self.alpha}")
        if self.B < 1:
            raise ConfigError(f"B must be >= 1, got {self.B}")
        if not (0.0 < self.tau0 < 0.5):
            raise ConfigError(f"tau0 must lie in (0,0.5), got {self.tau0}")
        if self.method not in ("boot1", "boot2"):
            raise ConfigError(f"method must be boot1 or boot2, got {self.method!r}")
        if self.stride < 1:
            raise ConfigError(f"stride must be >= 1, got {self.stride}")
        if self.folds < 2:
            raise ConfigError(f"folds must be >= 2, got {self.folds}")

    def resolved_group(self, p: int) -> SubGroup:
        g = self.group if self.group is not None else SubGroup.full(p)
        g.validate(p)
        return g


@dataclass(frozen=True)
class DetectionResult:
    t_stat: float
    crit: float
    p_value: float
    reject: bool
    cpt: CptEstimate | None
    sigma: VarianceEstimate
    boot_samples: np.ndarray = field(repr=False)
    B: int = 0
    alpha: float = 0.05
    tau0: float = 0.1
    group: SubGroup | None = None
    seed: int = 0
    method: str = "boot2"
    flagged_replicates: int = 0
    schedule: PenaltySchedule | None = None

    def to_json_dict(self) -> dict:
        return {
            "t_stat": self.t_stat,
            "crit": self.crit,
            "p_value": self.p_value,
            "reject": self.reject,
            "t_hat": self.cpt.t_hat if self.cpt is not None else None,
            "k_hat": self.cpt.k_hat if self.cpt is not None else None,
            "sigma_eps_sq": self.sigma.sigma_eps_sq,
            "B": self.B,
            "alpha": self.alpha,
            "tau0": self.tau0,
            "group": list(self.group.indices),
            "seed": self.seed,
            "flagged_replicates": self.flagged_replicates,
        }


def resolve_workers(workers: int) -> int:
    if workers < 0:
        raise ConfigError(f"workers must be >= 0, got {workers}")
    return workers if workers > 0 else (os.cpu_count() or 1)


def _studentizers(var: VarianceEstimate, prec: PrecisionEstimate,
                  g: SubGroup) -> np.ndarray:
    omega = omega_for_group(prec, g)
    scaled = var.sigma_eps_sq * omega
    if np.any(scaled <= VARIANCE_FLOOR):
        j = int(np.asarray(g.indices)[np.argmax(scaled <= VARIANCE_FLOOR)])
        raise NumericError(
            f"variance floor violated at coordinate j={j}: "
            f"sigma_eps_sq*omega_jj <= {VARIANCE_FLOOR}")
    return np.sqrt(scaled)


def t_statistic(proc: CptProcess, var: VarianceEstimate,
                prec: PrecisionEstimate, g: SubGroup) -> float:
    """Sup over usable grid points and group coordinates of |Z| studentized."""
    denom = _studentizers(var, prec, g)
    ok = proc.ok_mask
    if not ok.any():
        raise NumericError("every grid point is flagged; no usable statistic")
    zg = np.abs(proc.z[np.ix_(ok, g.zero_based())]) / denom[None, :]
    return float(zg.max())


def critical_value(samples: np.ndarray, alpha: float) -> float:
    """The ceil((1-alpha)(B+1))-th order statistic; +inf when B is too small."""
    samples = np.asarray(samples, dtype=np.float64)
    if samples.size == 0:
        raise ConfigError("empty bootstrap sample vector")
    if not (0.0 < alpha < 1.0):
        raise ConfigError(f"alpha must lie in (0,1), got {alpha}")
    B = samples.size
    rank = math.ceil((1.0 - alpha) * (B + 1))
    if rank > B:
        return math.inf
    return float(np.sort(samples)[rank - 1])


def p_value_from(samples: np.ndarray, t_stat: float) -> float:
    B = len(samples)
    return (1.0 + int(np.sum(samples >= t_stat))) / (B + 1.0)


def _thread_map(fn, count: int, workers: int):
    """Run fn(0..count-1), returning results in index order."""
    if workers <= 1:
        return [fn(b) for b in range(count)]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, range(count)))


def bootstrap_one(data: Dataset, prec: PrecisionEstimate, grid: SearchGrid,
                  schedule: PenaltySchedule, var: VarianceEstimate, g: SubGroup,
                  B: int, seed: int, workers: int = 1) -> np.ndarray:
    """Multiplier bootstrap of the leading partial-sum term.

    Per replicate: fresh N(0,1) multipliers eps, then the sup over splits and
    group coordinates of the weighted gap between left and right means of
    theta_j'X_i eps_i, scaled by omega_jj^{-1/2}.  (No sigma_eps factor here;
    the observed statistic carries it.)
    """
    del var, schedule  # signature kept uniform with bootstrap_two
    n = data.n
    pts = grid.points
    cols = g.zero_based()
    A = np.ascontiguousarray(data.X @ prec.theta[cols].T)
    inv_omega_sqrt = 1.0 / np.sqrt(prec.omega_diag[cols])
    w = math.sqrt(n) * (pts / n) * ((n - pts) / n)
    kl = pts.astype(np.float64)[:, None]
    kr = (n - pts).astype(np.float64)[:, None]

    def one(b: int) -> float:
        eps = rng.standard_normal(rng.generator(seed, rng.TAG_BOOTSTRAP, b), n)
        P = np.cumsum(A * eps[:, None], axis=0)
        gap = P[pts - 1] / kl - (P[-1][None, :] - P[pts - 1]) / kr
        stat = w[:, None] * np.abs(gap) * inv_omega_sqrt[None, :]
        return float(stat.max())

    return np.asarray(_thread_map(one, B, workers))


def bootstrap_two(data: Dataset, prec: PrecisionEstimate, grid: SearchGrid,
                  schedule: PenaltySchedule, proc: CptProcess,
                  var: VarianceEstimate, g: SubGroup, B: int, seed: int,
                  workers: int = 1, cache: PrefixCache | None = None,
                  tol: float = DEFAULT_TOL, max_iter: int = DEFAULT_MAX_ITER,
                  kkt_tol: float = DEFAULT_KKT_TOL) -> tuple[np.ndarray, int]:
    """Full-process bootstrap: regenerate responses, rescan, subtract drift.

    Returns (samples, flagged_count).  A replicate is flagged when any of its
    lasso fits fails to converge; the sup then skips those grid points.  More
    than 5% flagged replicates aborts the run.
    """
    n = data.n
    pts = grid.points
    cols = g.zero_based()
    if cache is None:
        cache = make_prefix_cache(data, grid)

    i0 = grid.index_of(var.k_hat_full)
    k0 = var.k_hat_full
    beta_l = proc.lasso_left[i0]
    beta_r = proc.lasso_right[i0]
    mu = np.empty(n)
    mu[:k0] = data.X[:k0] @ beta_l
    mu[k0:] = data.X[k0:] @ beta_r
    sigma_eps = math.sqrt(var.sigma_eps_sq)

    dd = (beta_l - beta_r)[cols]
    factor = np.where(pts <= k0, (n - k0) / (n - pts), k0 / pts)
    w = math.sqrt(n) * (pts / n) * ((n - pts) / n)
    drift = (w * factor)[:, None] * dd[None, :]
    denom = _studentizers(var, prec, g)

    def one(b: int) -> tuple[float, bool]:
        eps = sigma_eps * rng.standard_normal(
            rng.generator(seed, rng.TAG_BOOTSTRAP, b), n)
        yb = mu + eps
        arrs = scan_response(cache, yb, prec.theta, schedule,
                             tol=tol, max_iter=max_iter, kkt_tol=kkt_tol)
        ok = arrs.conv_left & arrs.conv_right
        flagged = not bool(ok.all())
        if not ok.any():
            raise NumericError(f"bootstrap replicate {b}: no usable grid point")
        stat = np.abs(arrs.z[:, cols] - drift) / denom[None, :]
        return float(stat[ok].max()), flagged

    results = _thread_map(one, B, workers)
    samples = np.asarray([r[0] for r in results])
    flagged = int(sum(r[1] for r in results))
    if flagged > 0.05 * B:
        raise NumericError(
            f"{flagged}/{B} bootstrap replicates flagged (>5%); aborting")
    return samples, flagged


def _run_stage(name: str, fn):
    try:
        return fn()
    except RegcptError as e:
        raise type(e)(f"stage {name}: {e}") from e


def detect(data: Dataset, cfg: TestConfig, workers: int = 1,
           precision: PrecisionEstimate | None = None,
           return_process: bool = False):
    """Single change-point test: the full pipeline on one dataset.

    Stages: precision fit, penalty CV on the two half-segments at the grid
    midpoint, process build, weighted variance, studentized sup, bootstrap,
    decision.  ``precision`` short-circuits the node-wise refit (cache path).
    """
    cfg.validate()
    workers = resolve_workers(workers)
    g = cfg.resolved_group(data.p)
    grid = _run_stage("grid", lambda: build_grid(data.n, cfg.tau0, cfg.stride))

    if precision is None:
        precision = _run_stage("precision", lambda: fit_nodewise(
            data, cfg.c_grid, folds=cfg.folds,
            seed=rng.child_seed(cfg.seed, rng.TAG_NODEWISE_CV),
            per_column_cv=cfg.per_column_node_cv))
    prec = precision

    def pick_schedule() -> PenaltySchedule:
        k_mid = int(grid.points[(len(grid.points) - 1) // 2])
        left = SegmentView(data, 0, k_mid)
        right = SegmentView(data, k_mid, data.n)
        e1 = cv_errors(left, cfg.c_grid, folds=cfg.folds,
                       seed=rng.child_seed(cfg.seed, rng.TAG_SCHEDULE_CV, 0))
        e2 = cv_errors(right, cfg.c_grid, folds=cfg.folds,
                       seed=rng.child_seed(cfg.seed, rng.TAG_SCHEDULE_CV, 1))
        combined = (e1 + e2) / 2.0
        grid_c = tuple(float(C) for C in cfg.c_grid)
        best = min(zip(combined, grid_c), key=lambda t: (t[0], t[1]))
        return PenaltySchedule(C=best[1], grid=grid_c)

    schedule = _run_stage("schedule-cv", pick_schedule)
    cache = make_prefix_cache(data, grid)
    proc = _run_stage("process", lambda: build_process(
        data, prec, grid, schedule, cache=cache))
    var = _run_stage("variance", lambda: weighted_variance(data, proc, schedule))
    t_stat = _run_stage("statistic", lambda: t_statistic(proc, var, prec, g))

    flagged = 0
    if cfg.method == "boot1":
        samples = _run_stage("bootstrap", lambda: bootstrap_one(
            data, prec, grid, schedule, var, g, cfg.B, cfg.seed, workers=workers))
    else:
        samples, flagged = _run_stage("bootstrap", lambda: bootstrap_two(
            data, prec, grid, schedule, proc, var, g, cfg.B, cfg.seed,
            workers=workers, cache=cache))

    crit = critical_value(samples, cfg.alpha)
    p_val = p_value_from(samples, t_stat)
    reject = bool(t_stat >= crit)
    cpt = argmax_cpt(proc, g) if reject else None
    result = DetectionResult(t_stat=t_stat, crit=crit, p_value=p_val,
                             reject=reject, cpt=cpt, sigma=var,
                             boot_samples=samples, B=cfg.B, alpha=cfg.alpha,
                             tau0=cfg.tau0, group=g, seed=cfg.seed,
                             method=cfg.method, flagged_replicates=flagged,
                             schedule=schedule)
    if return_process:
        return result, proc
    return result
