"""Node-wise lasso estimation of the precision matrix and variance weights.

Each column j of X is lasso-regressed on the remaining columns; row j of the
precision surrogate is theta_j = (e_j - gamma_j) / tau_j^2 where tau_j^2 is
the node-wise residual variance plus its penalty term.  The variance weights
are omega_jj = theta_j' Sigma_n theta_j with Sigma_n = X'X/n.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field

import numpy as np

from . import rng
from ._kernels import nodewise_all
from .data_model import Dataset, SubGroup
from .errors import ConfigError, DataError, NumericError
from .lasso import (DEFAULT_C_GRID, DEFAULT_KKT_TOL, DEFAULT_MAX_ITER,
                    DEFAULT_TOL, cv_select_C, log_p_eff)


@dataclass(frozen=True)
class PrecisionEstimate:
    """Node-wise precision surrogate: row j of theta approximates row j of Sigma^-1."""

    theta: np.ndarray
    tau_sq: np.ndarray
    lambda_node: np.ndarray
    omega_diag: np.ndarray
    C_node: float
    converged: np.ndarray = field(repr=False)
    n: int = 0

    @property
    def p(self) -> int:
        return self.theta.shape[0]


def fit_nodewise(data: Dataset, C_node_grid=DEFAULT_C_GRID, folds: int = 3,
                 seed: int = 0, per_column_cv: bool = False,
                 tol: float = DEFAULT_TOL, max_iter: int = DEFAULT_MAX_ITER,
                 kkt_tol: float = DEFAULT_KKT_TOL) -> PrecisionEstimate:
    """Fit the node-wise precision estimate on the full sample.

    One multiplier C_node is cross-validated on column 1 and shared by all
    columns (lambda_(j) = C_node * sqrt(log(p)/n)); ``per_column_cv`` runs a
    separate CV per column instead, for sensitivity analysis.
    """
    X = data.X
    n, p = X.shape
    if n < 6:
        raise DataError(f"node-wise fit needs n >= 6, got {n}")

    if p == 1:
        ssq = float(X[:, 0] @ X[:, 0])
        if ssq / n <= 1e-12:
            raise NumericError("column 1 is numerically zero")
        tau_sq = np.array([ssq / n])
        theta = np.array([[n / ssq]])
        omega = np.array([theta[0, 0] ** 2 * ssq / n])
        lam = np.array([float(C_node_grid[0]) * math.sqrt(log_p_eff(1) / n)])
        return PrecisionEstimate(theta=theta, tau_sq=tau_sq, lambda_node=lam,
                                 omega_diag=omega, C_node=float(C_node_grid[0]),
                                 converged=np.array([True]), n=n)

    def _cv_on_column(j: int, path_tag: int) -> float:
        sub = Dataset(y=X[:, j].copy(), X=np.delete(X, j, axis=1))
        sched = cv_select_C(sub, C_node_grid, folds=folds,
                            seed=rng.child_seed(seed, rng.TAG_NODEWISE_CV, path_tag),
                            tol=tol, max_iter=max_iter, kkt_tol=kkt_tol)
        return sched.C

    logp = log_p_eff(p)
    if per_column_cv:
        Cs = np.array([_cv_on_column(j, j) for j in range(p)])
    else:
        Cs = np.full(p, _cv_on_column(0, 0))
    lams = Cs * math.sqrt(logp / n)

    G = np.ascontiguousarray(X.T @ X)
    gamma, tau_sq, conv, _ = nodewise_all(G, n, lams, tol, max_iter, kkt_tol)
    for j in range(p):
        if not conv[j]:
            raise NumericError(f"node-wise lasso for column {j + 1} did not converge")
        if tau_sq[j] <= 1e-12:
            raise NumericError(f"column {j + 1} numerically collinear (tau^2 <= 1e-12)")

    theta = -gamma / tau_sq[:, None]
    np.fill_diagonal(theta, 1.0 / tau_sq)
    sigma_n = G / n
    omega = np.einsum("ij,jk,ik->i", theta, sigma_n, theta)
    return PrecisionEstimate(theta=np.ascontiguousarray(theta), tau_sq=tau_sq,
                             lambda_node=lams, omega_diag=omega,
                             C_node=float(Cs[0]), converged=conv, n=n)


def omega_for_group(est: PrecisionEstimate, g: SubGroup) -> np.ndarray:
    """omega_jj restricted to the group's indices, order preserved."""
    g.validate(est.p)
    return est.omega_diag[g.zero_based()]


def content_hash(X: np.ndarray) -> str:
    h = hashlib.sha256()
    h.update(str(X.shape).encode())
    h.update(np.ascontiguousarray(X).tobytes())
    return h.hexdigest()


def save_precision(path: str, est: PrecisionEstimate, X: np.ndarray | None = None) -> None:
    """Serialize an estimate as CSV blocks, keyed by the design's content hash."""
    key = content_hash(X) if X is not None else ""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("# regcpt-precision v1\n")
        fh.write(f"# content_hash {key}\n")
        fh.write(f"# C_node {est.C_node!r}\n")
        fh.write(f"# n {est.n}\n")
        for name, arr in (("lambda_node", est.lambda_node), ("tau_sq", est.tau_sq),
                          ("omega_diag", est.omega_diag)):
            fh.write(f"# block {name}\n")
            fh.write(",".join(repr(v) for v in arr.tolist()) + "\n")
        fh.write("# block theta\n")
        for row in est.theta:
            fh.write(",".join(repr(v) for v in row.tolist()) + "\n")
        fh.write("# block converged\n")
        fh.write(",".join("1" if v else "0" for v in est.converged.tolist()) + "\n")


def load_precision(path: str, X: np.ndarray | None = None) -> PrecisionEstimate:
    """Load a serialized estimate; if X is given the content hash must match."""
    with open(path, encoding="utf-8") as fh:
        lines = [ln.rstrip("\n") for ln in fh]
    if not lines or lines[0] != "# regcpt-precision v1":
        raise DataError(f"{path}: not a precision cache file")
    meta = {}
    blocks: dict[str, list[str]] = {}
    current = None
    for ln in lines[1:]:
        if ln.startswith("# block "):
            current = ln[len("# block "):]
            blocks[current] = []
        elif ln.startswith("# "):
            k, _, v = ln[2:].partition(" ")
            meta[k] = v
        elif current is not None:
            blocks[current].append(ln)
    if X is not None and meta.get("content_hash"):
        if content_hash(X) != meta["content_hash"]:
            raise DataError(f"{path}: cache was built for different data")

    def vec(name):
        return np.array([float(v) for v in blocks[name][0].split(",")])

    theta = np.array([[float(v) for v in row.split(",")] for row in blocks["theta"]])
    conv = np.array([v == "1" for v in blocks["converged"][0].split(",")])
    return PrecisionEstimate(theta=np.ascontiguousarray(theta), tau_sq=vec("tau_sq"),
                             lambda_node=vec("lambda_node"), omega_diag=vec("omega_diag"),
                             C_node=float(meta["C_node"]), converged=conv,
                             n=int(meta["n"]))
