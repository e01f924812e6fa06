"""Shared fixtures: small simulated regression instances."""

import numpy as np
import pytest

from regcpt.data_model import Dataset


def make_instance(n, p, s=5, seed=0, beta_scale=1.0, cpt=None, delta=None,
                  sigma=1.0):
    """Gaussian design, s active U(0,2)-coefficients, optional change point.

    Plain numpy RNG on purpose: test data must not share streams with the
    library's Philox derivations.
    """
    g = np.random.default_rng(seed)
    X = g.standard_normal((n, p))
    support = np.sort(g.permutation(np.arange(p))[:s])
    beta1 = np.zeros(p)
    beta1[support] = beta_scale * 2.0 * g.random(s)
    beta2 = beta1.copy()
    if cpt is not None:
        beta2[support[:len(delta)]] += delta
    y = np.empty(n)
    if cpt is None:
        y = X @ beta1
    else:
        y[:cpt] = X[:cpt] @ beta1
        y[cpt:] = X[cpt:] @ beta2
    y = y + sigma * g.standard_normal(n)
    return Dataset(y=y, X=X), beta1, beta2, support


@pytest.fixture
def small_data():
    data, *_ = make_instance(60, 8, s=3, seed=11)
    return data
