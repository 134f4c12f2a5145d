import numpy as np
import pytest
import scipy.linalg as sla
from scipy.optimize import minimize_scalar
from hypothesis import given, settings, strategies as st

from dasf.core import run_dasf
from dasf.diagnostics import (compressed_licq_check, optimal_solution, rate_bound_check,
                              relative_excess_cost, stationarity_measure, trace_statistics,
                              values_at_budgets)
from dasf.errors import CertificateUnavailableError, PreconditionError, UndefinedMetricError
from dasf.problems import MaxSNR, ProblemSpec, make_max_snr, make_mwf, make_pca
from dasf.signals import MixtureSource, NetworkModel, Statistics
from dasf.solvers import SolverConfig


def spd(rng, n):
    A = rng.standard_normal((n, n))
    return A @ A.T + n * np.eye(n)


def maxsnr_instance(seed, Q=1, channels=(2, 2, 2)):
    rng = np.random.default_rng(seed)
    net = NetworkModel(channels, Q)
    stats = Statistics({("y", "y"): spd(rng, net.M), ("n", "n"): spd(rng, net.M)})
    return make_max_snr(net), stats, rng


class NullAtZero(ProblemSpec):
    """phi = |X|^2 with the single equality x^T J x = 0, satisfied at X = 0."""

    name = "null-at-zero"

    def phi(self, stats, X):
        return float(np.sum(X * X))

    def grad_phi(self, stats, X):
        return 2 * X

    @property
    def equality(self):
        return (True,)

    def constraint_values(self, stats, X):
        return np.array([2 * X[0, 0] * X[1, 0]])


class ManyConstraints(MaxSNR):
    """Max-SNR with every constraint listed `copies` times."""

    copies = 5

    @property
    def equality(self):
        return super().equality * self.copies

    def constraint_values(self, stats, X):
        return np.tile(super().constraint_values(stats, X), self.copies)

    def constraint_gradients(self, stats, X, h=None):
        return super().constraint_gradients(stats, X) * self.copies


class Reordered(MaxSNR):
    @property
    def _pairs(self):
        return list(reversed(super()._pairs))


class Scaled(MaxSNR):
    def constraint_values(self, stats, X):
        return 1e6 * super().constraint_values(stats, X)

    def constraint_gradients(self, stats, X, h=None):
        return [1e6 * g for g in super().constraint_gradients(stats, X)]


def test_unconstrained_is_gradient_norm():
    rng = np.random.default_rng(0)
    net = NetworkModel.uniform(2, 2, 1)
    src = MixtureSource.random(net, rng)
    p = make_mwf(net, weight=0.0)
    X = rng.standard_normal((4, 1))
    rep = stationarity_measure(p, src.statistics(), X)
    assert rep.w == np.linalg.norm(p.grad_phi(src.statistics(), X))


def test_zero_at_gevd_solution():
    for seed in range(5):
        for Q in (1, 2):
            p, stats, _ = maxsnr_instance(seed, Q)
            X, _ = optimal_solution(p, stats)
            assert stationarity_measure(p, stats, X).w <= 1e-8


def test_zero_at_regularized_wiener_optimum():
    rng = np.random.default_rng(3)
    net = NetworkModel.uniform(2, 2, 1)
    src = MixtureSource.random(net, rng)
    p = make_mwf(net, weight=3.0)
    X, _ = optimal_solution(p, src.statistics())
    assert stationarity_measure(p, src.statistics(), X).w <= 1e-8


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 10_000))
def test_matches_one_dimensional_multiplier_search(seed):
    p, stats, rng = maxsnr_instance(seed)
    X = p.project(stats, rng.standard_normal((6, 1)))
    g = p.grad_phi(stats, X)
    d = p.constraint_gradients(stats, X)[0]
    f = lambda lam: np.linalg.norm(g + lam * d)
    grid = np.linspace(-50, 50, 20001)
    start = grid[np.argmin([f(l) for l in grid])]
    best = minimize_scalar(f, bracket=(start - 0.01, start, start + 0.01), tol=1e-12)
    assert abs(stationarity_measure(p, stats, X).w - best.fun) <= 1e-6


def test_invariant_to_constraint_order():
    rng = np.random.default_rng(5)
    net = NetworkModel.uniform(3, 2, 2)
    stats = Statistics({("y", "y"): spd(rng, 6), ("n", "n"): spd(rng, 6)})
    a, b = make_max_snr(net), Reordered(net.channels, 2)
    X = a.project(stats, rng.standard_normal((6, 2)))
    ra, rb = stationarity_measure(a, stats, X), stationarity_measure(b, stats, X)
    assert abs(ra.w - rb.w) <= 1e-12 * max(1.0, ra.w)
    assert np.allclose(ra.multipliers, rb.multipliers[::-1])


def test_inequality_multipliers_are_clipped():
    class Ball(ProblemSpec):
        name = "ball"

        def phi(self, stats, X):
            return float(np.sum((X - 2.0) ** 2))

        def grad_phi(self, stats, X):
            return 2 * (X - 2.0)

        @property
        def equality(self):
            return (False,)

        def constraint_values(self, stats, X):
            return np.array([np.sum(X * X) - 1.0])

    p = Ball((2,), 1)
    inside = stationarity_measure(p, None, np.array([[0.5], [0.0]]))
    assert inside.active == () and inside.multipliers[0] == 0.0
    # on the boundary the objective pushes outward: multiplier positive, w = 0 at the optimum
    x = np.ones((2, 1)) / np.sqrt(2)
    rep = stationarity_measure(p, None, x)
    assert rep.multipliers[0] > 0 and rep.w < 1e-6
    # pulling inward would need a negative multiplier, which is clipped
    p2 = Ball((2,), 1)
    p2.grad_phi = lambda stats, X: 2 * X
    rep = stationarity_measure(p2, None, x)
    assert rep.multipliers[0] == 0.0 and rep.w == pytest.approx(2.0)


def test_licq_single_constraint_passes():
    p, stats, rng = maxsnr_instance(6)
    X = p.project(stats, rng.standard_normal((6, 1)))
    rep = compressed_licq_check(p, stats, X)
    assert rep.passed and rep.n_constraints == 1 and not rep.auto_failed


def test_licq_zero_filter_fails():
    p = NullAtZero((1, 1), 1)
    rep = compressed_licq_check(p, None, np.zeros((2, 1)))
    assert not rep.passed and rep.sigma_max == 0.0


def test_licq_infeasible_point():
    p, stats, rng = maxsnr_instance(7)
    with pytest.raises(PreconditionError):
        compressed_licq_check(p, stats, 3 * p.project(stats, rng.standard_normal((6, 1))))


def test_licq_overconstrained_auto_fails():
    rng = np.random.default_rng(8)
    net = NetworkModel.uniform(2, 3, 1)
    stats = Statistics({("y", "y"): spd(rng, 6), ("n", "n"): spd(rng, 6)})
    p = ManyConstraints(net.channels, 1)
    X = p.project(stats, rng.standard_normal((6, 1)))
    rep = compressed_licq_check(p, stats, X)
    assert rep.n_constraints == 5 > net.K * net.Q ** 2
    assert rep.auto_failed and not rep.passed


def test_licq_scale_invariant():
    p, stats, rng = maxsnr_instance(9, Q=2, channels=(3, 3, 3))
    q = Scaled(p.blocks, 2)
    for _ in range(5):
        X = p.project(stats, rng.standard_normal((9, 2)))
        assert compressed_licq_check(p, stats, X).passed == compressed_licq_check(q, stats, X).passed


def test_licq_at_converged_desk_point_matches_svd():
    rng = np.random.default_rng(10)
    net = NetworkModel.uniform(4, 5, 1)
    src = MixtureSource.random(net, rng)
    p = make_max_snr(net)
    st_ = run_dasf(p, src, SolverConfig("power"), 400, rng=rng)
    stats = src.statistics()
    rep = compressed_licq_check(p, stats, st_.X)
    grad = 2 * stats["n"] @ st_.X
    col = np.concatenate([Xk.T @ Gk for Xk, Gk in zip(net.split(st_.X), net.split(grad))]).ravel()
    s = np.linalg.svd(col[:, None], compute_uv=False)
    assert rep.passed and rep.sigma_min == pytest.approx(s[-1], rel=1e-12)


def test_relative_excess_cost():
    assert relative_excess_cost(-3.5, -3.5) == 0.0
    assert relative_excess_cost(-1.0, -2.0) == 0.5
    with pytest.raises(UndefinedMetricError):
        relative_excess_cost(1.0, 0.0)


def test_optimal_solution_pca_and_mwf():
    rng = np.random.default_rng(11)
    net = NetworkModel.uniform(2, 3, 2)
    src = MixtureSource.random(net, rng, sources=2)
    stats = src.statistics()
    X, L = optimal_solution(make_pca(net), stats)
    assert L == pytest.approx(-np.sum(np.linalg.eigvalsh(stats["y"])[-2:]), rel=1e-12)
    X, L = optimal_solution(make_mwf(net, weight=0.0), stats)
    assert np.allclose(stats["y"] @ X, stats[("y", "d")])


def test_rate_bound_trivial_and_counterexample():
    cert = rate_bound_check([1e-12], [1.0], [1.0], 1.0, 0.0)
    assert cert.passed and cert.a_hat == 1.0
    # bound is 1/sqrt(i+1); constant w = 0.5 fails once 1/sqrt(i+1) < 0.5, i.e. from i = 4
    cert = rate_bound_check(np.full(10, 0.5), np.ones(10), np.ones(10), 1.0, 0.0)
    assert cert.failures == list(range(4, 10))
    assert np.all(np.diff(cert.bound) < 0)
    with pytest.raises(CertificateUnavailableError):
        rate_bound_check([1.0], [-1.0], [1.0], 1.0, 0.0)
    with pytest.raises(CertificateUnavailableError):
        rate_bound_check([1.0], [np.nan], [np.nan], 1.0, 0.0)


def test_rate_constant_uses_squared_witness_ratio():
    cert = rate_bound_check([0.1, 0.1], [2.0, 8.0], [2.0, 2.0], 1.0, 0.0)
    assert cert.r_hat == 0.5


def test_trace_statistics_small_cases():
    one = trace_statistics([[3.0, 2.0, 1.0]])
    assert np.array_equal(one.median, [3.0, 2.0, 1.0])
    assert np.array_equal(one.p5, one.median) and np.array_equal(one.p95, one.median)
    v = np.array([1.0, 0.5, 0.25])
    two = trace_statistics([v, 3 * v])
    assert np.allclose(two.median, 2 * v)
    with pytest.raises(ValueError):
        trace_statistics([])


def test_trace_statistics_fills_early_stops_and_budgets():
    stats = trace_statistics([[4.0, 2.0], [4.0, 3.0, 1.0, 0.5]], [[10], [10, 10, 10]])
    assert np.array_equal(stats.iterations, [0, 1, 2, 3])
    assert np.allclose(stats.median, [4.0, 2.5, 1.5, 1.25])
    assert np.array_equal(stats.budgets, [0, 10, 20, 30])
    assert np.array_equal(values_at_budgets([5.0, 4.0, 3.0], [10, 10], [0, 9, 10, 15, 25]),
                          [5.0, 5.0, 4.0, 4.0, 3.0])
