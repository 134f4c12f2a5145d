import numpy as np
import pytest
import scipy.linalg as sla
from hypothesis import given, settings, strategies as st

from dasf.errors import CapabilityError, CurvatureError, FactorizationError
from dasf.problems import PCA, MaxSNR, RegularizedMWF, evaluate_L, make_max_snr, make_mwf
from dasf.signals import MixtureSource, NetworkModel, Statistics
from dasf.solvers import (SolverConfig, certify_contract, certify_sequence, exact_gevd_solve,
                          gradient_descent_steps, lipschitz_constant, newton_steps,
                          power_method_steps, projected_gradient_steps,
                          proximal_gradient_steps, regularized_exact_solve, solve)
from dasf.harness import random_local_problem


def spd(rng, n):
    A = rng.standard_normal((n, n))
    return A @ A.T + n * np.eye(n)


def mwf_local(seed, weight=0.0, net=None):
    rng = np.random.default_rng(seed)
    net = net or NetworkModel.uniform(3, 3, 1)
    src = MixtureSource.random(net, rng, sources=net.Q)
    local, x0 = random_local_problem(make_mwf(net, weight=weight), src, rng)
    return local.problem, local.stats, x0


def maxsnr_local(seed):
    rng = np.random.default_rng(seed)
    net = NetworkModel.uniform(3, 3, 1)
    src = MixtureSource.random(net, rng)
    local, x0 = random_local_problem(make_max_snr(net), src, rng)
    return local.problem, local.stats, x0


def pca_problem(Ryy):
    n = Ryy.shape[0]
    return PCA((n,), 1, D={"D": np.eye(n)}), Statistics({("y", "y"): Ryy})


def scalar_quadratic():
    p = RegularizedMWF((1,), 1, weight=0.0, A=[np.eye(1)])
    return p, Statistics({("y", "y"): [[1.0]], ("y", "d"): [[0.0]], ("d", "d"): [[0.0]]})


def textbook_gd(Ryy, Ryd, x, mu, n):
    out = [x.copy()]
    for _ in range(n):
        x = x - mu * 2.0 * (Ryy @ x - Ryd)
        out.append(x.copy())
    return out


def test_config_validation():
    with pytest.raises(ValueError):
        SolverConfig("bogus")
    with pytest.raises(ValueError):
        SolverConfig("gd", step=0.0)
    with pytest.raises(ValueError):
        SolverConfig("gd", backtracking=(1.5, 0.1))
    with pytest.raises(ValueError):
        SolverConfig("gd", n_iter=0)
    cfg = SolverConfig("power", n_iter=[1, 5, 10])
    assert [cfg.n_at(i) for i in range(5)] == [1, 5, 10, 10, 10]


def test_gd_scalar_contraction():
    p, stats = scalar_quadratic()
    run = gradient_descent_steps(p, stats, [[1.0]], SolverConfig("gd", step=0.5), 3)
    assert [x[0, 0] for x in run.iterates] == [1.0, 0.0, 0.0, 0.0]


def test_gd_stationary_start():
    p, stats = scalar_quadratic()
    run = gradient_descent_steps(p, stats, [[0.0]], SolverConfig("gd"), 4)
    assert all(np.array_equal(x, run.iterates[0]) for x in run.iterates)


def test_gd_matches_textbook_loop():
    p, stats, x0 = mwf_local(0)
    mu = 0.5 / lipschitz_constant(p, stats)
    run = gradient_descent_steps(p, stats, x0, SolverConfig("gd", step=mu), 20)
    ref = textbook_gd(stats["y"], stats[("y", "d")], x0, mu, 20)
    for a, b in zip(run.iterates, ref):
        assert np.max(np.abs(a - b)) <= 1e-12 * max(1.0, np.abs(b).max())


def test_gd_rejects_constraints_and_penalty():
    p, stats, x0 = maxsnr_local(0)
    with pytest.raises(CapabilityError):
        gradient_descent_steps(p, stats, x0, SolverConfig("gd"), 1)
    p, stats, x0 = mwf_local(0, weight=1.0)
    with pytest.raises(CapabilityError):
        gradient_descent_steps(p, stats, x0, SolverConfig("gd"), 1)


def test_gd_backtracking_decreases():
    p, stats, x0 = mwf_local(3)
    run = gradient_descent_steps(p, stats, x0, SolverConfig("gd", step=10.0, backtracking=(0.5, 1e-4)), 10)
    assert np.all(np.diff(run.values) <= 0)


def test_newton_unit_step_is_exact():
    p, stats, x0 = mwf_local(1)
    run = newton_steps(p, stats, x0, SolverConfig("newton"), 1)
    assert np.linalg.norm(p.grad_phi(stats, run.final)) <= 1e-10
    again = newton_steps(p, stats, run.final, SolverConfig("newton"), 2)
    assert np.allclose(again.iterates[1], run.final, rtol=0, atol=1e-13)


def test_newton_half_step_decrease_matches_quadratic_model():
    p, stats, x0 = mwf_local(2)
    H = p.curvature(stats)
    g = p.grad_phi(stats, x0)
    step = sla.solve(H, g)
    mu = 0.5
    predicted = mu * np.sum(g * step) - 0.5 * mu ** 2 * np.sum(step * (H @ step))
    run = newton_steps(p, stats, x0, SolverConfig("newton", step=mu), 1)
    assert abs((run.values[0] - run.values[1]) - predicted) <= 1e-10 * max(1.0, abs(predicted))


def test_newton_curvature_error():
    p = RegularizedMWF((2,), 1, weight=0.0, A=[np.eye(2)])
    stats = Statistics({("y", "y"): np.diag([1.0, -1.0]), ("y", "d"): np.zeros((2, 1)), ("d", "d"): [[1.0]]})
    with pytest.raises(CurvatureError):
        newton_steps(p, stats, np.ones((2, 1)), SolverConfig("newton"), 1)


def test_projgd_feasible_step_is_plain_gradient_step():
    Ryy = np.array([[-0.5, -0.5], [-0.5, 2.0]])
    p, stats = pca_problem(Ryy)
    x0 = np.array([[1.0], [0.0]])
    run = projected_gradient_steps(p, stats, x0, SolverConfig("projgd", step=1.0), 1)
    assert np.allclose(run.final, x0 - 1.0 * p.grad_phi(stats, x0), rtol=0, atol=1e-15)


def test_projgd_converges_to_dominant_eigenvector():
    Ryy = np.diag([2.0, 1.0])
    p, stats = pca_problem(Ryy)
    x0 = np.array([[1.0], [1.0]]) / np.sqrt(2)
    run = projected_gradient_steps(p, stats, x0, SolverConfig("projgd", step=0.25), 60)
    v = np.linalg.eigh(Ryy)[1][:, -1]
    assert 1 - abs(run.final[:, 0] @ v) <= 1e-12
    for X in run.iterates[1:]:
        assert abs(X[:, 0] @ X[:, 0] - 1) <= 1e-12


def test_projgd_zero_gradient_fixed_point():
    p, stats = pca_problem(np.diag([0.0, 1.0]))
    x0 = np.array([[1.0], [0.0]])
    run = projected_gradient_steps(p, stats, x0, SolverConfig("projgd", step=0.3), 5)
    assert all(np.array_equal(x, x0) for x in run.iterates)


def test_projgd_is_monotone_in_metric_on_maxsnr():
    for seed in range(10):
        p, stats, x0 = maxsnr_local(seed)
        run = projected_gradient_steps(p, stats, x0, SolverConfig("projgd"), 20)
        assert np.all(np.diff(run.values) <= 1e-12 * np.abs(run.values[0]))


def test_power_diagonal_step():
    p, stats = pca_problem(np.diag([3.0, 1.0]))
    x0 = np.array([[1.0], [1.0]]) / np.sqrt(2)
    run = power_method_steps(p, stats, x0, SolverConfig("power"), 1)
    assert np.allclose(run.final[:, 0], np.array([3.0, 1.0]) / np.sqrt(10), rtol=0, atol=1e-15)


def test_power_fixed_point():
    rng = np.random.default_rng(0)
    A = spd(rng, 4)
    p, stats = pca_problem(A)
    v = np.linalg.eigh(A)[1][:, -1:]
    run = power_method_steps(p, stats, v, SolverConfig("power"), 3)
    assert np.allclose(np.abs(run.final), np.abs(v), rtol=0, atol=1e-14)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10_000), st.floats(0.05, 2.0))
def test_power_equals_projected_gradient_on_scaled_quadratic(seed, mu):
    rng = np.random.default_rng(seed)
    A = rng.standard_normal((4, 4))
    A = A + A.T
    x0 = rng.standard_normal((4, 1))
    x0 /= np.linalg.norm(x0)
    pw, sw = pca_problem(A)
    pg, sg = pca_problem((A - np.eye(4)) / (2 * mu))
    a = power_method_steps(pw, sw, x0, SolverConfig("power"), 20)
    b = projected_gradient_steps(pg, sg, x0, SolverConfig("projgd", step=mu), 20)
    for u, v in zip(a.iterates, b.iterates):
        assert np.max(np.abs(u - v)) <= 1e-12


def test_power_singular_noise():
    p = MaxSNR((2,), 1)
    stats = Statistics({("y", "y"): np.eye(2), ("n", "n"): np.diag([1.0, 0.0])})
    with pytest.raises(FactorizationError):
        power_method_steps(p, stats, np.array([[1.0], [0.0]]), SolverConfig("power"), 1)


def test_proxgd_weight_zero_is_gd_bitwise():
    p, stats, x0 = mwf_local(4, weight=0.0)
    cfg = SolverConfig("proxgd", step=0.01)
    a = proximal_gradient_steps(p, stats, x0, cfg, 15)
    b = gradient_descent_steps(p, stats, x0, cfg, 15)
    assert all(np.array_equal(u, v) for u, v in zip(a.iterates, b.iterates))


def test_proxgd_huge_weight_zeroes_blocks():
    p, stats, x0 = mwf_local(5, weight=1e9)
    run = proximal_gradient_steps(p, stats, x0, SolverConfig("proxgd"), 1)
    for block, A in zip(p.split(run.final), p.A):
        assert np.allclose(A.T @ block, 0.0, atol=1e-12)


def test_proxgd_reaches_long_reference():
    p, stats, x0 = mwf_local(6, weight=0.5, net=NetworkModel.uniform(2, 2, 1))
    mu = 0.5 / lipschitz_constant(p, stats)
    ref = x0
    for _ in range(100_000):
        ref = p.prox_gamma(ref - mu * p.grad_phi(stats, ref), mu)
    L_ref = evaluate_L(p, stats, ref)
    run = proximal_gradient_steps(p, stats, x0, SolverConfig("proxgd", step=mu), 500)
    assert run.values[-1] - L_ref <= 1e-8


def test_proxgd_needs_penalty():
    p, stats, x0 = maxsnr_local(0)
    with pytest.raises(CapabilityError):
        proximal_gradient_steps(p, stats, x0, SolverConfig("proxgd"), 1)


def test_reg_exact_matches_dense_solve():
    p, stats, x0 = mwf_local(7, net=NetworkModel.uniform(2, 2, 1))
    reg = 0.3
    run = regularized_exact_solve(p, stats, x0, SolverConfig("reg-exact", reg=reg))
    n = p.dim
    M = 2 * stats["y"] + 2 * reg * np.eye(n)
    rhs = 2 * stats[("y", "d")] + 2 * reg * x0
    ref = np.linalg.solve(M, rhs)
    assert np.max(np.abs(run.final - ref)) <= 1e-12 * max(1.0, np.abs(ref).max())
    drop = run.values[0] - run.values[1]
    assert drop >= reg * np.sum((run.final - x0) ** 2) - 1e-12


def test_reg_exact_limits():
    p, stats, x0 = mwf_local(8)
    far = regularized_exact_solve(p, stats, x0, SolverConfig("reg-exact", reg=1e12))
    assert np.max(np.abs(far.final - x0)) < 1e-8
    opt = sla.solve(stats["y"], stats[("y", "d")])
    still = regularized_exact_solve(p, stats, opt, SolverConfig("reg-exact", reg=1.0))
    assert np.allclose(still.final, opt, rtol=0, atol=1e-12)
    with pytest.raises(CapabilityError):
        regularized_exact_solve(*maxsnr_local(0), SolverConfig("reg-exact"))


def test_gevd_diagonal_and_tied():
    p, stats = pca_problem(np.diag([2.0, 1.0]))
    x0 = np.array([[-0.3], [1.0]])
    run = exact_gevd_solve(p, stats, x0)
    assert np.allclose(run.final[:, 0], [-1.0, 0.0])
    p, stats = pca_problem(np.eye(3))
    x0 = np.array([[1.0], [2.0], [2.0]])
    run = exact_gevd_solve(p, stats, x0)
    assert np.allclose(run.final, x0 / 3.0, rtol=0, atol=1e-14)


def test_gevd_matches_whitening_oracle():
    rng = np.random.default_rng(9)
    for _ in range(10):
        Ryy, Rnn = spd(rng, 4), spd(rng, 4)
        p = MaxSNR((4,), 1)
        stats = Statistics({("y", "y"): Ryy, ("n", "n"): Rnn})
        W = sla.fractional_matrix_power(Rnn, -0.5).real
        lam = np.linalg.eigvalsh(W @ Ryy @ W)[-1]
        run = exact_gevd_solve(p, stats, rng.standard_normal((4, 1)))
        assert abs(run.values[-1] + lam) <= 1e-10 * lam


def test_gevd_multi_output_aligned_with_warm_start():
    rng = np.random.default_rng(10)
    Ryy, Rnn = spd(rng, 5), spd(rng, 5)
    p = MaxSNR((5,), 2)
    stats = Statistics({("y", "y"): Ryy, ("n", "n"): Rnn})
    x0 = p.project(stats, rng.standard_normal((5, 2)))
    X = exact_gevd_solve(p, stats, x0).final
    assert np.allclose(X.T @ Rnn @ X, np.eye(2), atol=1e-10)
    w = sla.eigh(Ryy, Rnn, eigvals_only=True)
    assert abs(evaluate_L(p, stats, X) + w[-2:].sum()) <= 1e-10 * w[-1]
    # rotation chosen to maximize tr(X^T X0): X^T X0 is symmetric positive semidefinite
    S = X.T @ x0
    assert np.allclose(S, S.T, atol=1e-10) and np.all(np.linalg.eigvalsh(0.5 * (S + S.T)) >= -1e-12)


def test_warm_start_is_first_iterate():
    for kind in ("gd", "newton", "reg-exact", "proxgd"):
        p, stats, x0 = mwf_local(11, weight=0.5 if kind == "proxgd" else 0.0)
        run = solve(SolverConfig(kind, n_iter=2), p, stats, x0)
        assert run.iterates[0] is not x0 and np.array_equal(run.iterates[0], x0)
    for kind in ("power", "projgd", "gevd"):
        p, stats, x0 = maxsnr_local(11)
        run = solve(SolverConfig(kind, n_iter=2), p, stats, x0)
        assert np.array_equal(run.iterates[0], x0)


def test_certify_stationary_start_is_vacuous():
    p, stats, _ = mwf_local(12)
    opt = sla.solve(stats["y"], stats[("y", "d")])
    run = gradient_descent_steps(p, stats, opt, SolverConfig("gd"), 3)
    rep = certify_contract(run, p, stats, warm_start=opt)
    assert rep.passed and np.all(np.isnan(rep.R_steps))


def test_certify_flags_ascent():
    p, stats, x0 = mwf_local(13)
    run = solve(SolverConfig("ascent", n_iter=3), p, stats, x0)
    rep = certify_contract(run, p, stats, warm_start=x0)
    assert not rep.c2_ok and any(v[0] == "C2" for v in rep.violations)


def test_certify_flags_wrong_warm_start_and_missing_witness():
    p, stats, x0 = mwf_local(14)
    run = gradient_descent_steps(p, stats, x0, SolverConfig("gd"), 2)
    assert not certify_contract(run, p, stats, warm_start=x0 + 1.0).c1_ok
    run.witnesses[1] = None
    assert not certify_contract(run, p, stats).c3_ok


def test_certify_zero_step_with_witness_is_c3_violation():
    p, stats, x0 = mwf_local(15)
    run = gradient_descent_steps(p, stats, x0, SolverConfig("gd"), 1)
    run.iterates[1] = run.iterates[0].copy()
    run.values[1] = run.values[0]
    run.witnesses[0] = np.ones_like(x0)
    rep = certify_contract(run, p, stats)
    assert not rep.c3_ok


def test_gd_measured_decrease_respects_bound():
    for seed in range(10):
        p, stats, x0 = mwf_local(seed)
        R = lipschitz_constant(p, stats)
        mu = 1.0 / (2.0 * R)
        run = gradient_descent_steps(p, stats, x0, SolverConfig("gd", step=mu), 10)
        rep = certify_contract(run, p, stats, warm_start=x0)
        measured = rep.R_steps[~np.isnan(rep.R_steps)]
        assert measured.size and np.all(measured >= 1 / mu - R / 2 - 1e-8)
        assert np.nanmax(rep.c_steps) <= 1 / mu + 1e-8


def test_lipschitz_power_estimate():
    p, stats, _ = mwf_local(16)
    exact = lipschitz_constant(p, stats)
    approx = lipschitz_constant(p, stats, method="power", iters=500, tol=1e-14)
    assert abs(exact - approx) <= 1e-6 * exact


def test_certify_sequence_bounds():
    assert certify_sequence([1.0, 0.5, np.nan], [2.0, 3.0]).passed
    assert not certify_sequence([1.0, 1e-15], [2.0]).passed
    assert not certify_sequence([1.0], [np.inf]).passed
    assert not certify_sequence([1.0], [1.0], per_step_ok=False).passed
