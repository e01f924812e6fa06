"""Synthetic data generators, the adjusted Rand scorer, and experiment
drivers for size, power, and multiple-change-point studies.

Designs follow two covariance models (identity; Toeplitz with ratio 0.5),
sparse uniform(0,2) coefficients on a support drawn from a fixed pool, and
three standardized error laws.  Jump vectors are added to the first active
coordinates in pool order, so successive segments differ on the support.
Every random stream is keyed off the design seed, and per-replication seeds
derive from (design seed, replication index): reports are byte-identical
regardless of worker count.
"""

from __future__ import annotations

import io
import json
import math
import time
from dataclasses import dataclass, field, replace

import numpy as np
from scipy import stats

from . import rng
from .data_model import Dataset, SubGroup
from .errors import ConfigError, DataError
from .lasso import log_p_eff
from .segmentation import SegmentationResult, default_min_len, segment
from .testing import TestConfig, detect, _thread_map

ERROR_LAWS = ("normal", "gamma41_std", "t5_std")
COV_MODELS = ("identity", "toeplitz")


@dataclass(frozen=True)
class SimDesign:
    n: int
    p: int
    cov_model: str = "identity"
    s: int = 5
    active_pool: tuple = (1, 50)  # inclusive 1-based index range
    error_law: str = "normal"
    cpts: tuple = ()  # ((k, jump vector), ...)
    seed: int = 0
    rho: float = 0.5

    def __post_init__(self):
        cpts = tuple((int(k), np.asarray(d, dtype=np.float64))
                     for k, d in self.cpts)
        object.__setattr__(self, "cpts", cpts)
        object.__setattr__(self, "active_pool",
                           (int(self.active_pool[0]), int(self.active_pool[1])))

    def validate(self) -> None:
        if self.n < 4 or self.p < 1:
            raise ConfigError(f"need n >= 4 and p >= 1, got n={self.n}, p={self.p}")
        if self.cov_model not in COV_MODELS:
            raise ConfigError(f"cov_model must be one of {COV_MODELS}")
        if self.error_law not in ERROR_LAWS:
            raise ConfigError(f"error_law must be one of {ERROR_LAWS}")
        lo, hi = self.active_pool
        if not (1 <= lo <= hi <= self.p):
            raise ConfigError(f"active_pool {self.active_pool} not within 1..p")
        if not (1 <= self.s <= hi - lo + 1):
            raise ConfigError(f"sparsity s={self.s} exceeds pool size")
        ks = [k for k, _ in self.cpts]
        if any(not (0 < k < self.n) for k in ks) or ks != sorted(set(ks)):
            raise ConfigError("cpt indices must be strictly increasing in (0, n)")
        for _, d in self.cpts:
            if len(d) > self.s:
                raise ConfigError("jump vector longer than the active set")

    def population_sigma(self) -> np.ndarray:
        if self.cov_model == "identity":
            return np.eye(self.p)
        idx = np.arange(self.p)
        return self.rho ** np.abs(idx[:, None] - idx[None, :])


@dataclass(frozen=True)
class SimTruth:
    betas: tuple  # one coefficient vector per segment
    cpts: tuple  # interior boundaries
    support: tuple  # 1-based active coordinates, ascending
    sigma: np.ndarray = field(repr=False)
    errors: np.ndarray = field(repr=False)

    def labels(self, n: int) -> np.ndarray:
        """Row labels 0..m by segment ordinal."""
        return np.searchsorted(np.asarray(self.cpts), np.arange(1, n + 1),
                               side="left").astype(np.int64)


def _draw_errors(law: str, u: np.ndarray) -> np.ndarray:
    if law == "normal":
        return rng.normal_ppf(u)
    if law == "gamma41_std":
        return (stats.gamma.ppf(u, a=4.0, scale=1.0) - 4.0) / 2.0
    if law == "t5_std":
        return stats.t.ppf(u, df=5) / math.sqrt(5.0 / 3.0)
    raise ConfigError(f"unknown error law {law!r}")


def gen_dataset(d: SimDesign) -> tuple:
    """Draw (Dataset, SimTruth) from the design, fully seed-determined."""
    d.validate()
    n, p = d.n, d.p

    gen_x = rng.generator(d.seed, rng.TAG_SIM_X)
    Z = rng.standard_normal(gen_x, n * p).reshape(n, p)
    if d.cov_model == "identity":
        X = Z
    else:
        L = np.linalg.cholesky(d.population_sigma())
        X = Z @ L.T

    lo, hi = d.active_pool
    pool = np.arange(lo, hi + 1)
    gen_s = rng.generator(d.seed, rng.TAG_SIM_SUPPORT)
    support = np.sort(gen_s.permutation(pool)[:d.s])

    gen_c = rng.generator(d.seed, rng.TAG_SIM_COEF)
    beta1 = np.zeros(p)
    beta1[support - 1] = 2.0 * gen_c.random(d.s)

    betas = [beta1]
    for _, delta in d.cpts:
        nxt = betas[-1].copy()
        nxt[support[:len(delta)] - 1] += delta
        betas.append(nxt)

    gen_e = rng.generator(d.seed, rng.TAG_SIM_NOISE)
    u = np.maximum(gen_e.random(n), 2.0 ** -54)
    eps = _draw_errors(d.error_law, u)

    bounds = [0] + [k for k, _ in d.cpts] + [n]
    y = np.empty(n)
    for seg, (a, b) in enumerate(zip(bounds[:-1], bounds[1:])):
        y[a:b] = X[a:b] @ betas[seg] + eps[a:b]

    truth = SimTruth(betas=tuple(betas), cpts=tuple(k for k, _ in d.cpts),
                     support=tuple(int(j) for j in support),
                     sigma=d.population_sigma(), errors=eps)
    return Dataset(y=y, X=X), truth


def _comb2(x: np.ndarray) -> float:
    x = np.asarray(x, dtype=np.float64)
    return float(np.sum(x * (x - 1.0) / 2.0))


def adjusted_rand(a, b) -> float:
    """Hubert-Arabie adjusted Rand index between two row labelings."""
    a = np.asarray(a).ravel()
    b = np.asarray(b).ravel()
    if a.shape != b.shape or a.size == 0:
        raise DataError(f"partition length mismatch: {a.size} vs {b.size}")
    _, ai = np.unique(a, return_inverse=True)
    _, bi = np.unique(b, return_inverse=True)
    ra, cb = ai.max() + 1, bi.max() + 1
    table = np.zeros((ra, cb), dtype=np.int64)
    np.add.at(table, (ai, bi), 1)
    sum_cells = _comb2(table.ravel())
    sum_rows = _comb2(table.sum(axis=1))
    sum_cols = _comb2(table.sum(axis=0))
    total = _comb2(np.array([a.size]))
    expected = sum_rows * sum_cols / total
    max_index = 0.5 * (sum_rows + sum_cols)
    if max_index == expected:
        return 1.0
    return (sum_cells - expected) / (max_index - expected)


def labels_from_cpts(cpts, n: int) -> np.ndarray:
    return np.searchsorted(np.asarray(sorted(cpts)), np.arange(1, n + 1),
                           side="left").astype(np.int64)


def jump_vector(C: float, p: int, n: int, exponents=(3, 2, 1, 0, -1)) -> np.ndarray:
    """C * sqrt(log(p)/n) * (2^e for e in exponents)."""
    scale = C * math.sqrt(log_p_eff(p) / n)
    return scale * (2.0 ** np.asarray(exponents, dtype=np.float64))


@dataclass(frozen=True)
class ExperimentReport:
    kind: str
    design: dict
    reps: int
    rejection_rate: float | None = None
    mean_m_hat: float | None = None
    mean_adj_rand: float | None = None
    sd_adj_rand: float | None = None
    localization: float | None = None
    detail: dict = field(default_factory=dict)
    wall_time: float = 0.0

    def to_json_dict(self, include_wall_time: bool = False) -> dict:
        out = {
            "kind": self.kind,
            "design": self.design,
            "reps": self.reps,
            "rejection_rate": self.rejection_rate,
            "mean_m_hat": self.mean_m_hat,
            "mean_adj_rand": self.mean_adj_rand,
            "sd_adj_rand": self.sd_adj_rand,
            "localization": self.localization,
            "detail": self.detail,
        }
        if include_wall_time:
            out["wall_time"] = self.wall_time
        return out

    def to_json(self) -> str:
        """Canonical bytes: worker-count independent (wall time excluded)."""
        return json.dumps(self.to_json_dict(), indent=2, sort_keys=True,
                          allow_nan=True)

    def csv_row(self) -> str:
        cols = ["kind", "n", "p", "s", "cov_model", "error_law", "reps",
                "alpha", "B", "method", "group_mode", "C",
                "rejection_rate", "mean_m_hat", "mean_adj_rand",
                "sd_adj_rand", "localization"]
        d = self.design
        vals = [self.kind, d.get("n"), d.get("p"), d.get("s"),
                d.get("cov_model"), d.get("error_law"), self.reps,
                d.get("alpha"), d.get("B"), d.get("method"),
                d.get("group_mode"), d.get("C"), self.rejection_rate,
                self.mean_m_hat, self.mean_adj_rand, self.sd_adj_rand,
                self.localization]
        buf = io.StringIO()
        buf.write(",".join(cols) + "\n")
        buf.write(",".join("" if v is None else str(v) for v in vals) + "\n")
        return buf.getvalue()


def _resolve_group(group_mode: str, cfg: TestConfig, truth: SimTruth,
                   p: int) -> SubGroup:
    if group_mode == "full":
        return SubGroup.full(p)
    if group_mode == "S":
        return SubGroup(truth.support)
    if group_mode == "Sc":
        return SubGroup(truth.support).complement(p)
    if group_mode == "fixed":
        if cfg.group is None:
            raise ConfigError("group_mode 'fixed' needs cfg.group")
        return cfg.group
    raise ConfigError(f"unknown group_mode {group_mode!r}")


def _design_summary(d: SimDesign, cfg: TestConfig, group_mode: str,
                    C: float | None = None) -> dict:
    return {"n": d.n, "p": d.p, "s": d.s, "cov_model": d.cov_model,
            "error_law": d.error_law, "seed": d.seed, "alpha": cfg.alpha,
            "tau0": cfg.tau0, "B": cfg.B, "method": cfg.method,
            "group_mode": group_mode, "C": C,
            "cpts": [int(k) for k, _ in d.cpts]}


def _rep_pair(d: SimDesign, cfg: TestConfig, rep: int):
    d_rep = replace(d, seed=rng.child_seed(d.seed, rng.TAG_REP, rep, 0))
    s_rep = rng.child_seed(d.seed, rng.TAG_REP, rep, 1)
    return d_rep, s_rep


def run_size_experiment(d: SimDesign, cfg: TestConfig, reps: int,
                        group_mode: str = "full", workers: int = 1,
                        jump_C: float | None = None) -> ExperimentReport:
    """Rejection frequency under the design (size when cpts is empty)."""
    d.validate()
    cfg.validate()
    if reps < 1:
        raise ConfigError(f"reps must be >= 1, got {reps}")

    def one(rep: int):
        d_rep, s_rep = _rep_pair(d, cfg, rep)
        data, truth = gen_dataset(d_rep)
        g = _resolve_group(group_mode, cfg, truth, d.p)
        res = detect(data, replace(cfg, seed=s_rep, group=g), workers=1)
        t_hat = res.cpt.t_hat if res.cpt is not None else None
        return bool(res.reject), t_hat

    t0 = time.perf_counter()
    results = _thread_map(one, reps, workers)
    wall = time.perf_counter() - t0
    rejects = [r for r, _ in results]
    detail = {"reject": [int(r) for r in rejects],
              "t_hat": [t for _, t in results]}
    return ExperimentReport(
        kind="size", design=_design_summary(d, cfg, group_mode, jump_C),
        reps=reps, rejection_rate=float(np.mean(rejects)), detail=detail,
        wall_time=wall)


def run_power_experiment(d: SimDesign, cfg: TestConfig, reps: int,
                         group_mode: str = "full", workers: int = 1,
                         jump_C: float | None = None) -> ExperimentReport:
    """Like the size driver, plus localization of t_hat around the true t0."""
    d.validate()
    if len(d.cpts) != 1:
        raise ConfigError("power experiment needs exactly one change point")
    base = run_size_experiment(d, cfg, reps, group_mode=group_mode,
                               workers=workers, jump_C=jump_C)
    t_true = d.cpts[0][0] / d.n
    errs = [abs(t - t_true) for t in base.detail["t_hat"] if t is not None]
    loc = float(np.mean(errs)) if errs else None
    return replace(base, kind="power", localization=loc)


def run_multicpt_experiment(d: SimDesign, cfg: TestConfig,
                            min_len: int | None = None, reps: int = 30,
                            workers: int = 1,
                            jump_C: float | None = None) -> ExperimentReport:
    """Binary segmentation accuracy: mean count and adjusted Rand vs truth."""
    d.validate()
    cfg.validate()
    if reps < 1:
        raise ConfigError(f"reps must be >= 1, got {reps}")

    def one(rep: int):
        d_rep, s_rep = _rep_pair(d, cfg, rep)
        data, truth = gen_dataset(d_rep)
        res = segment(data, replace(cfg, seed=s_rep), min_len=min_len,
                      workers=1)
        ari = adjusted_rand(labels_from_cpts(res.change_points, d.n),
                            truth.labels(d.n))
        return res.m_hat, ari, list(res.change_points)

    t0 = time.perf_counter()
    results = _thread_map(one, reps, workers)
    wall = time.perf_counter() - t0
    m_hats = [m for m, _, _ in results]
    aris = [a for _, a, _ in results]
    sd = float(np.std(aris, ddof=1)) if reps > 1 else 0.0
    detail = {"m_hat": m_hats, "adj_rand": aris,
              "change_points": [c for _, _, c in results]}
    return ExperimentReport(
        kind="multicpt", design=_design_summary(d, cfg, "full", jump_C),
        reps=reps, mean_m_hat=float(np.mean(m_hats)),
        mean_adj_rand=float(np.mean(aris)), sd_adj_rand=sd, detail=detail,
        wall_time=wall)


@dataclass(frozen=True)
class ExperimentSpec:
    kind: str  # "size" | "power" | "multicpt"
    design: SimDesign
    cfg: TestConfig
    reps: int
    group_mode: str = "full"
    min_len: int | None = None
    jump_C: float | None = None


def run_experiment(spec: ExperimentSpec, workers: int = 1) -> ExperimentReport:
    if spec.kind == "size":
        return run_size_experiment(spec.design, spec.cfg, spec.reps,
                                   group_mode=spec.group_mode, workers=workers,
                                   jump_C=spec.jump_C)
    if spec.kind == "power":
        return run_power_experiment(spec.design, spec.cfg, spec.reps,
                                    group_mode=spec.group_mode,
                                    workers=workers, jump_C=spec.jump_C)
    if spec.kind == "multicpt":
        return run_multicpt_experiment(spec.design, spec.cfg,
                                       min_len=spec.min_len, reps=spec.reps,
                                       workers=workers, jump_C=spec.jump_C)
    raise ConfigError(f"unknown experiment kind {spec.kind!r}")


def table1_cell(n: int = 200, p: int = 100, s: int = 5,
                error_law: str = "normal", cov_model: str = "identity",
                method: str = "boot2", group_mode: str = "full",
                alpha: float = 0.05, B: int = 100, reps: int = 200,
                seed: int = 0) -> ExperimentSpec:
    """Size study cell: no change point."""
    d = SimDesign(n=n, p=p, cov_model=cov_model, s=s,
                  active_pool=(1, min(50, p)), error_law=error_law, seed=seed)
    cfg = TestConfig(alpha=alpha, B=B, method=method, seed=seed)
    return ExperimentSpec(kind="size", design=d, cfg=cfg, reps=reps,
                          group_mode=group_mode)


def table2_cell(C: float = 2.0, n: int = 200, p: int = 200, s: int = 5,
                error_law: str = "normal", cov_model: str = "identity",
                method: str = "boot2", group_mode: str = "S",
                alpha: float = 0.05, B: int = 100, reps: int = 100,
                seed: int = 0, t0: float = 0.5) -> ExperimentSpec:
    """Power study cell: one change point at floor(n*t0), geometric jumps."""
    delta = jump_vector(C, p, n, exponents=(3, 2, 1, 0, -1))
    k = int(math.floor(n * t0))
    d = SimDesign(n=n, p=p, cov_model=cov_model, s=s,
                  active_pool=(1, min(50, p)), error_law=error_law,
                  cpts=((k, delta),), seed=seed)
    cfg = TestConfig(alpha=alpha, B=B, method=method, seed=seed)
    return ExperimentSpec(kind="power", design=d, cfg=cfg, reps=reps,
                          group_mode=group_mode, jump_C=C)


def table4_case2(C: float = 3.0, n: int = 600, p: int = 50, s: int = 5,
                 error_law: str = "normal", cov_model: str = "identity",
                 method: str = "boot2", alpha: float = 0.05, B: int = 100,
                 reps: int = 30, seed: int = 0,
                 min_len: int | None = None) -> ExperimentSpec:
    """Three change points at 0.3n/0.5n/0.7n with alternating jumps, so
    segment 3 equals segment 1 and segment 4 equals segment 2."""
    delta = jump_vector(C, p, n, exponents=(4, 3, 2, 1, 0))
    ks = (int(0.3 * n), int(0.5 * n), int(0.7 * n))
    cpts = ((ks[0], delta), (ks[1], -delta), (ks[2], delta))
    d = SimDesign(n=n, p=p, cov_model=cov_model, s=s,
                  active_pool=(1, min(50, p)), error_law=error_law,
                  cpts=cpts, seed=seed)
    cfg = TestConfig(alpha=alpha, B=B, method=method, seed=seed)
    if min_len is None:
        # Post-jump coefficients here are large (ell_2 norm near 6), and an
        # interval is only worth testing when each trimmed edge fit sees
        # enough rows relative to p; three rows per parameter keeps the
        # shortest tested interval out of the regime where segment-level
        # false alarms dominate (measured: 32% at length 120 vs 17% at 150+).
        min_len = 3 * p
    return ExperimentSpec(kind="multicpt", design=d, cfg=cfg, reps=reps,
                          min_len=min_len, jump_C=C)


PRESETS = {
    "table1_cell": table1_cell,
    "table2_cell": table2_cell,
    "table4_case2": table4_case2,
}


def load_spec_toml(path: str) -> ExperimentSpec:
    """Read an experiment spec from a TOML document.

    Layout: top-level kind/reps/group_mode/min_len, a [design] table
    mirroring SimDesign (cpts as an array of {k, delta} tables), and a
    [test] table mirroring TestConfig (group in range syntax).
    """
    try:
        import tomllib
    except ModuleNotFoundError:
        import tomli as tomllib
    with open(path, "rb") as f:
        doc = tomllib.load(f)

    kind = doc.get("kind", "size")
    dd = doc.get("design", {})
    cpts = tuple((int(c["k"]), np.asarray(c["delta"], dtype=np.float64))
                 for c in dd.get("cpts", []))
    pool = dd.get("active_pool", [1, min(50, int(dd.get("p", 50)))])
    design = SimDesign(
        n=int(dd["n"]), p=int(dd["p"]),
        cov_model=dd.get("cov_model", "identity"),
        s=int(dd.get("s", 5)), active_pool=(int(pool[0]), int(pool[1])),
        error_law=dd.get("error_law", "normal"), cpts=cpts,
        seed=int(dd.get("seed", 0)), rho=float(dd.get("rho", 0.5)))

    tt = doc.get("test", {})
    group = SubGroup.parse(tt["group"]) if "group" in tt else None
    cfg = TestConfig(
        alpha=float(tt.get("alpha", 0.05)), tau0=float(tt.get("tau0", 0.1)),
        B=int(tt.get("B", 100)), group=group, seed=int(tt.get("seed", 0)),
        method=tt.get("method", "boot2"), stride=int(tt.get("stride", 1)),
        bonferroni=bool(tt.get("bonferroni", False)))

    min_len = doc.get("min_len")
    return ExperimentSpec(
        kind=kind, design=design, cfg=cfg, reps=int(doc.get("reps", 100)),
        group_mode=doc.get("group_mode", "full"),
        min_len=int(min_len) if min_len is not None else None,
        jump_C=doc.get("C"))
