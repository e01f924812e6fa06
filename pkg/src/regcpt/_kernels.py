"""Numba kernels for the coordinate-descent lasso in Gram (covariance-update) form.

All solvers below work on the segment Gram G = X'X and moment vector c = X'y
rather than on X itself, so the de-biased process scan and the bootstrap can
reuse prefix Grams that depend only on X.  The objective minimized is

    f(beta) = (1/(2m)) * ||y - X beta||^2 + lam * ||beta||_1
            = (yty - 2 beta'c + beta'G beta) / (2m) + lam * ||beta||_1.

A coordinate update touches O(p) memory only when the coordinate actually
moves; an unchanged coordinate costs O(1) because the gradient vector
g = G beta is maintained incrementally.  Kernels are nogil so bootstrap
replicates can run on a thread pool without serializing.
"""

from __future__ import annotations

import numpy as np
from numba import njit


@njit(cache=True, nogil=True)
def cd_gram(G, c, m, lam, beta, g, max_iter, tol, kkt_tol, skip):
    """Cyclic coordinate descent on the Gram form, in place.

    ``beta`` is the warm start and is overwritten with the solution; ``g``
    must hold G @ beta on entry and holds the exact (refreshed) G @ beta on
    exit.  ``skip`` excludes one coordinate (node-wise regressions); pass -1
    to use all coordinates.  Returns (sweeps, converged).  Convergence means
    the sweep-delta criterion was met AND the KKT conditions hold at kkt_tol.
    """
    p = G.shape[0]
    mlam = m * lam
    sweeps = 0
    converged = False
    while sweeps < max_iter:
        max_delta = 0.0
        max_abs = 1.0
        for j in range(p):
            if j == skip:
                continue
            Gjj = G[j, j]
            bj = beta[j]
            if Gjj <= 0.0:
                # zero column carries no signal
                if bj != 0.0:
                    beta[j] = 0.0
                continue
            rho = c[j] - g[j] + Gjj * bj
            if rho > mlam:
                nb = (rho - mlam) / Gjj
            elif rho < -mlam:
                nb = (rho + mlam) / Gjj
            else:
                nb = 0.0
            if nb != bj:
                d = nb - bj
                row = G[j]
                for k in range(p):
                    g[k] += row[k] * d
                beta[j] = nb
                ad = d if d >= 0.0 else -d
                if ad > max_delta:
                    max_delta = ad
            ab = nb if nb >= 0.0 else -nb
            if ab > max_abs:
                max_abs = ab
        sweeps += 1
        if max_delta < tol * max_abs:
            # refresh g exactly before checking KKT (kills incremental drift)
            for a in range(p):
                g[a] = 0.0
            for b in range(p):
                vb = beta[b]
                if vb != 0.0:
                    row = G[b]
                    for a in range(p):
                        g[a] += row[a] * vb
            ok = True
            for j in range(p):
                if j == skip or G[j, j] <= 0.0:
                    continue
                grad = (c[j] - g[j]) / m
                bj = beta[j]
                if bj > 0.0:
                    viol = grad - lam
                elif bj < 0.0:
                    viol = grad + lam
                else:
                    ag = grad if grad >= 0.0 else -grad
                    viol = ag - lam if ag > lam else 0.0
                if viol > kkt_tol or viol < -kkt_tol:
                    ok = False
                    break
            if ok:
                converged = True
                break
            # delta criterion met but KKT not yet: keep sweeping
    if not converged:
        for a in range(p):
            g[a] = 0.0
        for b in range(p):
            vb = beta[b]
            if vb != 0.0:
                row = G[b]
                for a in range(p):
                    g[a] += row[a] * vb
    return sweeps, converged


@njit(cache=True, nogil=True)
def scan_chain(Gs, cs, ytys, ms, lams, tol, max_iter, kkt_tol):
    """Warm-started CD along a chain of Gram problems of shared dimension p.

    Problem i is (Gs[i], cs[i], ytys[i], ms[i], lams[i]); the solution of
    problem i seeds problem i+1.  Returns per-problem solutions, gradients
    (c - G beta at the solution), residual sums of squares, convergence
    flags, and sweep counts.
    """
    npts, p = cs.shape
    betas = np.zeros((npts, p))
    grads = np.empty((npts, p))
    rss = np.empty(npts)
    conv = np.empty(npts, np.bool_)
    iters = np.zeros(npts, np.int64)
    beta = np.zeros(p)
    g = np.zeros(p)
    for i in range(npts):
        G = Gs[i]
        c = cs[i]
        # recompute g = G @ beta for the new Gram (warm beta is sparse)
        for a in range(p):
            g[a] = 0.0
        for b in range(p):
            vb = beta[b]
            if vb != 0.0:
                row = G[b]
                for a in range(p):
                    g[a] += row[a] * vb
        it, ok = cd_gram(G, c, ms[i], lams[i], beta, g, max_iter, tol, kkt_tol, -1)
        iters[i] = it
        conv[i] = ok
        bc = 0.0
        bg = 0.0
        for a in range(p):
            betas[i, a] = beta[a]
            grads[i, a] = c[a] - g[a]
            bc += beta[a] * c[a]
            bg += beta[a] * g[a]
        r = ytys[i] - 2.0 * bc + bg
        rss[i] = r if r > 0.0 else 0.0
    return betas, grads, rss, conv, iters


@njit(cache=True, nogil=True)
def nodewise_all(G, n, lams, tol, max_iter, kkt_tol):
    """Node-wise lasso for every column from the full-sample Gram.

    Column j is regressed on the others by excluding coordinate j from the
    descent and using c = G[:, j].  Returns gamma rows embedded in p-vectors
    (zero at the diagonal), tau_sq per the residual + penalty identity,
    convergence flags, and sweep counts.
    """
    p = G.shape[0]
    gamma = np.zeros((p, p))
    tau_sq = np.empty(p)
    conv = np.empty(p, np.bool_)
    iters = np.zeros(p, np.int64)
    beta = np.zeros(p)
    g = np.zeros(p)
    c = np.empty(p)
    nf = float(n)
    for j in range(p):
        for a in range(p):
            beta[a] = 0.0
            g[a] = 0.0
            c[a] = G[a, j]
        it, ok = cd_gram(G, c, nf, lams[j], beta, g, max_iter, tol, kkt_tol, j)
        iters[j] = it
        conv[j] = ok
        bc = 0.0
        bg = 0.0
        l1 = 0.0
        for a in range(p):
            gamma[j, a] = beta[a]
            bc += beta[a] * c[a]
            bg += beta[a] * g[a]
            l1 += beta[a] if beta[a] >= 0.0 else -beta[a]
        tau_sq[j] = (G[j, j] - 2.0 * bc + bg) / nf + lams[j] * l1
    return gamma, tau_sq, conv, iters
