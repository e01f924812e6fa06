"""Studentized statistic, bootstrap critical values, and the detect pipeline."""

import json
import math
from pathlib import Path

import jsonschema
import numpy as np
import pytest

import regcpt
from regcpt import rng
from regcpt.data_model import Dataset, SearchGrid, SubGroup, build_grid
from regcpt.errors import ConfigError, NumericError
from regcpt.lasso import PenaltySchedule
from regcpt.precision import PrecisionEstimate, fit_nodewise
from regcpt.cpt_process import (CptProcess, VarianceEstimate, build_process,
                                weighted_variance)
from regcpt.testing import (TestConfig, bootstrap_one, bootstrap_two,
                            critical_value, detect, p_value_from, t_statistic)

from conftest import make_instance

SCHEMA = json.loads(
    (Path(regcpt.__file__).parent / "schemas" / "detection_result.json")
    .read_text())


def synthetic_process(z, n=100):
    npts, p = z.shape
    grid = SearchGrid(points=np.arange(20, 20 + npts), n=n, tau0=0.1, stride=1)
    zeros = np.zeros((npts, p))
    ones = np.ones(npts, dtype=bool)
    return CptProcess(grid=grid, n=n, p=p, schedule=PenaltySchedule(C=1.0),
                      z=z, debiased_left=zeros, debiased_right=zeros,
                      lasso_left=zeros, lasso_right=zeros,
                      rss_left=np.ones(npts), rss_right=np.ones(npts),
                      conv_left=ones, conv_right=ones)


def identity_precision(p, n=100):
    return PrecisionEstimate(theta=np.eye(p), tau_sq=np.ones(p),
                             lambda_node=np.zeros(p), omega_diag=np.ones(p),
                             C_node=1.0, converged=np.ones(p, dtype=bool), n=n)


def small_pipeline(n=100, p=20, seed=3, **inst):
    data, *_ = make_instance(n, p, s=4, seed=seed, **inst)
    prec = fit_nodewise(data, seed=seed)
    grid = build_grid(n, 0.1, 1)
    sched = PenaltySchedule(C=2.0)
    proc = build_process(data, prec, grid, sched)
    var = weighted_variance(data, proc, sched)
    return data, prec, grid, sched, proc, var


class TestConfigValidation:
    def test_defaults_pass(self):
        TestConfig().validate()

    @pytest.mark.parametrize("kw", [
        {"B": 0}, {"alpha": 0.0}, {"alpha": 1.0}, {"tau0": 0.0},
        {"tau0": 0.5}, {"method": "boot3"}, {"stride": 0}, {"folds": 1},
    ])
    def test_bad_values_rejected(self, kw):
        with pytest.raises(ConfigError):
            TestConfig(**kw).validate()

    def test_group_defaults_to_full(self):
        assert TestConfig().resolved_group(4) == SubGroup.full(4)
        g = SubGroup([1, 3])
        assert TestConfig(group=g).resolved_group(4) == g

    def test_group_out_of_range(self):
        with pytest.raises(ConfigError):
            TestConfig(group=SubGroup([9])).resolved_group(4)


class TestTStatistic:
    def test_zero_process_gives_zero(self):
        proc = synthetic_process(np.zeros((5, 3)))
        var = VarianceEstimate(sigma_eps_sq=1.0, t_hat_full=0.2)
        assert t_statistic(proc, var, identity_precision(3), SubGroup.full(3)) == 0.0

    def test_single_spike_arithmetic(self):
        z = np.zeros((5, 3))
        z[2, 1] = 5.0
        proc = synthetic_process(z)
        var = VarianceEstimate(sigma_eps_sq=4.0, t_hat_full=0.2)
        t = t_statistic(proc, var, identity_precision(3), SubGroup.full(3))
        assert t == pytest.approx(2.5)

    def test_group_monotone(self):
        _, prec, _, _, proc, var = small_pipeline()
        t1 = t_statistic(proc, var, prec, SubGroup([3, 7]))
        t2 = t_statistic(proc, var, prec, SubGroup([1, 3, 7, 12]))
        t_full = t_statistic(proc, var, prec, SubGroup.full(20))
        assert t1 <= t2 <= t_full

    def test_variance_floor_names_coordinate(self):
        proc = synthetic_process(np.ones((4, 3)))
        var = VarianceEstimate(sigma_eps_sq=1e-13, t_hat_full=0.2)
        with pytest.raises(NumericError, match="j=1"):
            t_statistic(proc, var, identity_precision(3), SubGroup.full(3))


class TestCriticalValue:
    def test_order_statistic_on_1_to_100(self):
        samples = np.arange(1.0, 101.0)
        assert critical_value(samples, 0.05) == 96.0

    def test_single_sample(self):
        assert critical_value(np.array([7.25]), 0.5) == 7.25

    def test_too_few_replicates_infinite(self):
        assert critical_value(np.arange(1.0, 10.0), 0.05) == math.inf

    def test_empty_rejected(self):
        with pytest.raises(ConfigError):
            critical_value(np.array([]), 0.05)

    def test_bad_alpha_rejected(self):
        with pytest.raises(ConfigError):
            critical_value(np.ones(5), 1.5)

    def test_unsorted_input_handled(self):
        samples = np.array([5.0, 1.0, 3.0, 2.0, 4.0])
        # B=5, alpha=0.5: rank ceil(0.5*6)=3 -> third order statistic
        assert critical_value(samples, 0.5) == 3.0


class TestPValueRejectConsistency:
    def test_chain_on_random_instances(self):
        g = np.random.default_rng(0)
        for _ in range(1000):
            B = int(g.integers(1, 60))
            samples = np.round(g.standard_normal(B) * 3, int(g.integers(0, 3)))
            if g.random() < 0.3:
                t = float(g.choice(samples))
            else:
                t = float(g.standard_normal() * 3)
            alpha = float(g.uniform(0.01, 0.99))
            crit = critical_value(samples, alpha)
            p = p_value_from(samples, t)
            reject = t >= crit
            # one-sided chain is exact even with ties at the critical value
            if t > crit:
                assert p <= alpha
            if p <= alpha:
                assert reject
            if t != crit:
                assert reject == (p <= alpha)

    def test_p_value_never_zero(self):
        assert p_value_from(np.zeros(10), 99.0) == pytest.approx(1 / 11)
        assert p_value_from(np.zeros(10), -1.0) == pytest.approx(1.0)


class TestBootstrapOne:
    def test_deterministic_across_runs_and_workers(self):
        data, prec, grid, sched, _, var = small_pipeline()
        g = SubGroup.full(20)
        a = bootstrap_one(data, prec, grid, sched, var, g, 6, 42, workers=1)
        b = bootstrap_one(data, prec, grid, sched, var, g, 6, 42, workers=4)
        c = bootstrap_one(data, prec, grid, sched, var, g, 6, 42, workers=1)
        assert a.tobytes() == b.tobytes() == c.tobytes()
        assert len(a) == 6

    def test_prefix_sums_match_naive_recomputation(self):
        n, p = 50, 10
        data, *_ = make_instance(n, p, s=3, seed=7)
        prec = fit_nodewise(data, seed=7)
        grid = build_grid(n, 0.1, 1)
        g = SubGroup.full(p)
        var = VarianceEstimate(sigma_eps_sq=1.0, t_hat_full=0.5, k_hat_full=25)
        B, seed = 5, 11
        fast = bootstrap_one(data, prec, grid, PenaltySchedule(C=1.0), var, g,
                             B, seed)
        for b in range(B):
            eps = rng.standard_normal(rng.generator(seed, rng.TAG_BOOTSTRAP, b),
                                      n)
            xi = data.X * eps[:, None]
            best = 0.0
            for k in grid.points:
                left = prec.theta @ xi[:k].mean(axis=0)
                right = prec.theta @ xi[k:].mean(axis=0)
                w = math.sqrt(n) * (k / n) * ((n - k) / n)
                stat = w * np.abs(left - right) / np.sqrt(prec.omega_diag)
                best = max(best, float(stat.max()))
            assert fast[b] == pytest.approx(best, abs=1e-10)

    def test_reduced_form_quantile_oracle(self):
        # orthonormal columns and identity theta turn the replicate statistic
        # into a max of standardized two-sample mean gaps of Gaussians; an
        # independent plain-numpy simulation must land on the same upper
        # quantile within 10%
        n, p = 64, 8
        g = np.random.default_rng(77)
        Q, _ = np.linalg.qr(g.standard_normal((n, p)))
        X = Q * math.sqrt(n)
        data = Dataset(y=g.standard_normal(n), X=X)
        prec = identity_precision(p, n)
        grid = build_grid(n, 0.1, 1)
        var = VarianceEstimate(sigma_eps_sq=1.0, t_hat_full=0.5,
                               k_hat_full=n // 2)
        W = bootstrap_one(data, prec, grid, PenaltySchedule(C=1.0), var,
                          SubGroup.full(p), 2000, 123)
        q_lib = np.quantile(W, 0.95)

        rng2 = np.random.default_rng(999)
        pts = grid.points
        w = np.sqrt(n) * (pts / n) * ((n - pts) / n)
        eps = rng2.standard_normal((2000, n))
        P = np.cumsum(eps[:, :, None] * X[None, :, :], axis=1)
        left = P[:, pts - 1, :] / pts[None, :, None]
        right = ((P[:, -1, :][:, None, :] - P[:, pts - 1, :])
                 / (n - pts)[None, :, None])
        W_ind = (w[None, :, None] * np.abs(left - right)).reshape(2000, -1).max(axis=1)
        q_ind = np.quantile(W_ind, 0.95)
        assert abs(q_lib - q_ind) <= 0.10 * q_ind


class TestBootstrapTwo:
    def test_deterministic_across_runs_and_workers(self):
        data, prec, grid, sched, proc, var = small_pipeline()
        g = SubGroup.full(20)
        a, fa = bootstrap_two(data, prec, grid, sched, proc, var, g, 3, 42,
                              workers=1)
        b, fb = bootstrap_two(data, prec, grid, sched, proc, var, g, 3, 42,
                              workers=4)
        assert a.tobytes() == b.tobytes()
        assert fa == fb == 0
        assert len(a) == 3

    def test_drift_knot_continuity(self):
        # at the split used for regeneration both drift branches coincide,
        # so the tie direction of the piecewise weight is immaterial
        n = 100
        k0 = 37
        pts = np.arange(10, 91)
        dd = np.array([1.5, -2.0, 0.25])
        w = np.sqrt(n) * (pts / n) * ((n - pts) / n)
        f_le = np.where(pts <= k0, (n - k0) / (n - pts), k0 / pts)
        f_lt = np.where(pts < k0, (n - k0) / (n - pts), k0 / pts)
        drift_le = (w * f_le)[:, None] * dd[None, :]
        drift_lt = (w * f_lt)[:, None] * dd[None, :]
        assert np.array_equal(drift_le, drift_lt)
        i0 = int(np.where(pts == k0)[0][0])
        assert drift_le[i0] == pytest.approx(w[i0] * dd, rel=1e-15)

    def test_excess_flagged_replicates_abort(self):
        data, prec, grid, sched, proc, var = small_pipeline()
        with pytest.raises(NumericError, match="flagged"):
            bootstrap_two(data, prec, grid, sched, proc, var,
                          SubGroup.full(20), 20, 0, max_iter=5)


class TestDetect:
    def test_b_zero_rejected_at_validation(self):
        data, *_ = make_instance(100, 10, seed=1)
        with pytest.raises(ConfigError):
            detect(data, TestConfig(B=0))

    def test_result_consistency_and_schema_null_case(self):
        data, *_ = make_instance(120, 15, seed=2)
        res = detect(data, TestConfig(B=30, seed=5))
        assert res.reject == (res.t_stat >= res.crit)
        assert res.reject == (res.p_value <= res.alpha) or res.t_stat == res.crit
        assert (res.cpt is not None) == res.reject
        doc = json.loads(json.dumps(res.to_json_dict()))
        jsonschema.validate(doc, SCHEMA)

    def test_result_schema_reject_case(self):
        delta = np.array([4.0, -4.0, 4.0])
        data, *_ = make_instance(120, 15, s=3, seed=6, cpt=60, delta=delta)
        res = detect(data, TestConfig(B=30, seed=5))
        assert res.reject and res.cpt is not None
        assert abs(res.cpt.t_hat - 0.5) <= 0.15
        doc = json.loads(json.dumps(res.to_json_dict()))
        jsonschema.validate(doc, SCHEMA)
        assert isinstance(doc["k_hat"], int)

    def test_deterministic_across_worker_counts(self):
        data, *_ = make_instance(100, 20, seed=9)
        cfg = TestConfig(B=8, seed=3)
        r1 = detect(data, cfg, workers=1)
        r4 = detect(data, cfg, workers=4)
        assert r1.to_json_dict() == r4.to_json_dict()
        assert r1.boot_samples.tobytes() == r4.boot_samples.tobytes()

    def test_boot1_method_runs(self):
        data, *_ = make_instance(100, 20, seed=9)
        res = detect(data, TestConfig(B=12, seed=3, method="boot1"))
        assert len(res.boot_samples) == 12
        assert res.method == "boot1"
        assert res.flagged_replicates == 0

    def test_group_restricted_run(self):
        data, *_ = make_instance(100, 20, seed=9)
        g = SubGroup([1, 4, 5])
        res = detect(data, TestConfig(B=8, seed=3, group=g))
        doc = res.to_json_dict()
        assert doc["group"] == [1, 4, 5]
