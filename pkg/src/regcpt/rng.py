"""Deterministic random streams.

Every random draw in the package comes from a counter-based Philox generator
keyed by a pure-integer child seed, so results are bit-identical across runs,
platforms, and worker counts.  Child seeds are derived by folding a path of
integers into the master seed with splitmix64, a published mixing function
(Steele, Lea & Flood 2014); the constants below are that algorithm's.

Normal draws do not use numpy's ziggurat.  They apply Wichura's PPND16
rational approximation of the standard normal inverse CDF (algorithm AS 241,
Applied Statistics 37, 1988) to Philox uniforms.  The polynomial coefficients
are fixed artifact constants; the approximation is accurate to about 1e-16,
and being a pure elementwise float computation it is reproducible everywhere.
"""

from __future__ import annotations

import numpy as np

_MASK64 = (1 << 64) - 1

# Stream tags: fixed path prefixes so distinct consumers of one master seed
# never collide.
TAG_NODEWISE_CV = 1
TAG_SCHEDULE_CV = 2
TAG_BOOTSTRAP = 3
TAG_SEGMENT = 4
TAG_SIM_X = 5
TAG_SIM_SUPPORT = 6
TAG_SIM_COEF = 7
TAG_SIM_NOISE = 8
TAG_REP = 9
TAG_CV_FOLDS = 10


def _splitmix64(x: int) -> int:
    x = (x + 0x9E3779B97F4A7C15) & _MASK64
    z = x
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return z ^ (z >> 31)


def child_seed(seed: int, *path: int) -> int:
    """Fold a path of integers into ``seed``; returns a 64-bit child seed.

    Deterministic pure-integer derivation: distinct paths give independent
    streams, and the empty path returns a mixed copy of the seed itself.
    """
    h = _splitmix64(seed & _MASK64)
    for part in path:
        h = _splitmix64(h ^ (part & _MASK64))
    return h


def generator(seed: int, *path: int) -> np.random.Generator:
    """Philox generator keyed by ``child_seed(seed, *path)``."""
    return np.random.Generator(np.random.Philox(key=child_seed(seed, *path)))


# PPND16 coefficients (AS 241).  Three rational branches: central,
# intermediate tail, far tail.
_A = np.array([
    3.3871328727963666080e0, 1.3314166789178437745e2, 1.9715909503065514427e3,
    1.3731693765509461125e4, 4.5921953931549871457e4, 6.7265770927008700853e4,
    3.3430575583588128105e4, 2.5090809287301226727e3,
])
_B = np.array([
    1.0, 4.2313330701600911252e1, 6.8718700749205790830e2,
    5.3941960214247511077e3, 2.1213794301586595867e4, 3.9307895800092710610e4,
    2.8729085735721942674e4, 5.2264952788528545610e3,
])
_C = np.array([
    1.42343711074968357734e0, 4.63033784615654529590e0, 5.76949722146069140550e0,
    3.64784832476320460504e0, 1.27045825245236838258e0, 2.41780725177450611770e-1,
    2.27238449892691845833e-2, 7.74545014278341407640e-4,
])
_D = np.array([
    1.0, 2.05319162663775882187e0, 1.67638483018380384940e0,
    6.89767334985100004550e-1, 1.48103976427480074590e-1, 1.51986665636164571966e-2,
    5.47593808499534494600e-4, 1.05075007164441684324e-9,
])
_E = np.array([
    6.65790464350110377720e0, 5.46378491116411436990e0, 1.78482653991729133580e0,
    2.96560571828504891230e-1, 2.65321895265761230930e-2, 1.24266094738807843860e-3,
    2.71155556874348757815e-5, 2.01033439929228813265e-7,
])
_F = np.array([
    1.0, 5.99832206555887937690e-1, 1.36929880922735805310e-1,
    1.48753612908506148525e-2, 7.86869131145613259100e-4, 1.84631831751005468180e-5,
    1.42151175831644588870e-7, 2.04426310338993978564e-15,
])


def _poly(coef: np.ndarray, r: np.ndarray) -> np.ndarray:
    out = np.full_like(r, coef[7])
    for k in range(6, -1, -1):
        out = out * r + coef[k]
    return out


def normal_ppf(u: np.ndarray) -> np.ndarray:
    """Standard normal inverse CDF via the AS 241 (PPND16) approximation."""
    u = np.asarray(u, dtype=np.float64)
    q = u - 0.5
    out = np.empty_like(u)

    central = np.abs(q) <= 0.425
    if np.any(central):
        r = 0.180625 - q[central] * q[central]
        out[central] = q[central] * _poly(_A, r) / _poly(_B, r)

    tail = ~central
    if np.any(tail):
        qt = q[tail]
        r = np.where(qt < 0, u[tail], 1.0 - u[tail])
        r = np.sqrt(-np.log(r))
        near = r <= 5.0
        val = np.empty_like(r)
        rn = r[near] - 1.6
        val[near] = _poly(_C, rn) / _poly(_D, rn)
        rf = r[~near] - 5.0
        val[~near] = _poly(_E, rf) / _poly(_F, rf)
        out[tail] = np.where(qt < 0, -val, val)
    return out


def standard_normal(gen: np.random.Generator, size) -> np.ndarray:
    """Normal draws as PPND16 applied to Philox uniforms.

    ``random()`` yields multiples of 2^-53 in [0, 1); exact zeros (the one
    value the inverse CDF cannot take) are nudged to 2^-54.
    """
    u = gen.random(size)
    u = np.maximum(u, 2.0 ** -54)
    return normal_ppf(u)
