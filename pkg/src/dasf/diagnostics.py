"""
Optimality and convergence diagnostics.

Stationarity is measured as the norm of the least-norm element of the
subdifferential of the extended objective, with Lagrange multipliers fitted
by least squares.  Reference optima come from dense eigendecompositions or
closed forms, never from the distributed iteration itself.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla

from .errors import CertificateUnavailableError, PreconditionError, UndefinedMetricError
from .problems import evaluate_L, is_feasible

TAU_ACTIVE = 1e-7
TAU_RANK = 1e-8


@dataclass
class StationarityReport:
    """
    Least-norm subdifferential element at X.

    ``residual`` is that element (a matrix shaped like X) and ``w`` its
    Frobenius norm; ``multipliers`` has one entry per constraint (zero for
    inactive ones) and ``active`` lists the constraints counted as active.
    """

    w: float
    residual: np.ndarray
    multipliers: np.ndarray
    active: tuple


def _fit_multipliers(g, grads, equality):
    """
    Least-squares multipliers for g + sum_j lam_j grads[j], with inequality
    multipliers clipped at zero and the rest refit.
    """
    lam = np.zeros(len(grads))
    if not grads:
        return lam, g
    J = np.column_stack([gj.ravel() for gj in grads])
    free = np.arange(len(grads))
    for _ in range(2):
        sol = np.linalg.lstsq(J[:, free], -g.ravel(), rcond=None)[0]
        lam[:] = 0.0
        lam[free] = sol
        negative = [j for j in free if not equality[j] and lam[j] < 0.0]
        if not negative:
            break
        free = np.array([j for j in free if j not in negative], dtype=int)
        lam[negative] = 0.0
        if free.size == 0:
            break
    if free.size and any(not equality[j] and lam[j] < 0.0 for j in free):
        lam[[j for j in free if not equality[j] and lam[j] < 0.0]] = 0.0
    r = g + sum(l * gj for l, gj in zip(lam, grads))
    return lam, r


def stationarity_measure(problem, stats, X, tau_active=TAU_ACTIVE):
    """
    Distance from zero to the subdifferential of the extended objective at X.

    Parameters
    ----------
    problem : ProblemSpec
        Network-wide or local problem.
    stats : Statistics
        Statistics defining the objective.
    X : ndarray
        Point at which to measure.

    Returns
    -------
    StationarityReport
    """
    X = problem.check_shape(X)
    g = problem.grad_phi(stats, X)
    m = problem.n_constraints
    if m == 0:
        r = problem.gamma_min_norm(g, X) if problem.has_gamma else g
        return StationarityReport(float(np.linalg.norm(r)), r, np.zeros(0), ())

    values = problem.constraint_values(stats, X)
    eq = tuple(bool(e) for e in problem.equality)
    active = tuple(j for j in range(m) if eq[j] or values[j] >= -tau_active)
    all_grads = problem.constraint_gradients(stats, X)
    grads = [all_grads[j] for j in active]
    sub_eq = [eq[j] for j in active]

    lam_a, r = _fit_multipliers(g, grads, sub_eq)
    if problem.has_gamma:
        # alternate between the subgradient selection and the multipliers
        for _ in range(50):
            r_prev = r
            lin = r - g
            s = problem.gamma_min_norm(g + lin, X) - (g + lin)
            lam_a, r = _fit_multipliers(g + s, grads, sub_eq)
            if np.linalg.norm(r - r_prev) <= 1e-14 * max(1.0, np.linalg.norm(r)):
                break
    lam = np.zeros(m)
    lam[list(active)] = lam_a
    return StationarityReport(float(np.linalg.norm(r)), r, lam, active)


@dataclass
class LicqReport:
    passed: bool
    sigma_min: float
    sigma_max: float
    n_constraints: int
    auto_failed: bool


def compressed_licq_check(problem, stats, X, network=None, tau_rank=TAU_RANK,
                          tau_active=TAU_ACTIVE):
    """
    Linear independence of the compressed constraint gradients at X.

    Each active or equality constraint gradient is multiplied on the left by
    blkdiag(X_1, ..., X_K)^T, vectorized, and the stack is tested for full
    column rank relative to its largest singular value.  More than K Q^2
    such constraints can never be independent and fail immediately.
    """
    X = problem.check_shape(X)
    if not is_feasible(problem, stats, X):
        raise PreconditionError("compressed LICQ is checked at feasible points only")
    blocks = problem.split(X)
    K, Q = len(blocks), problem.Q
    values = problem.constraint_values(stats, X)
    eq = problem.equality
    idx = [j for j in range(problem.n_constraints) if eq[j] or values[j] >= -tau_active]
    if len(idx) > K * Q * Q:
        return LicqReport(False, 0.0, np.nan, len(idx), True)
    if not idx:
        return LicqReport(True, np.nan, np.nan, 0, False)
    grads = problem.constraint_gradients(stats, X)
    cols = []
    for j in idx:
        parts = problem.split(grads[j])
        cols.append(np.concatenate([(Xk.T @ Gk).ravel() for Xk, Gk in zip(blocks, parts)]))
    s = np.linalg.svd(np.column_stack(cols), compute_uv=False)
    smin, smax = float(s[-1]), float(s[0])
    passed = smax > 0.0 and len(s) == len(idx) and smin > tau_rank * smax
    return LicqReport(bool(passed), smin, smax, len(idx), False)


def relative_excess_cost(L_value, L_star):
    """1 - L / L*, zero at the optimum."""
    if L_star == 0:
        raise UndefinedMetricError("relative excess cost is undefined for L* = 0")
    return 1.0 - L_value / L_star


def optimal_solution(problem, stats, n_ref=100000, tol=1e-15):
    """
    Reference minimizer and value of a network-wide problem.

    Eigenvalue problems use the dense generalized eigendecomposition; the
    unregularized Wiener filter uses its normal equations; the regularized
    one a long proximal-gradient run.
    """
    from .solvers import lipschitz_constant

    if problem.name in ("maxsnr", "pca"):
        Ryy, G = problem.pencil(stats)
        w, V = sla.eigh(Ryy, G)
        X = V[:, ::-1][:, :problem.Q]
        return X, -float(np.sum(w[::-1][:problem.Q]))
    if problem.name == "mwf":
        X = sla.solve(stats["y"], stats[("y", "d")], assume_a="pos")
        if problem.gamma(X) == 0.0 and problem.weight == 0.0:
            return X, evaluate_L(problem, stats, X)
        mu = 1.0 / lipschitz_constant(problem, stats)
        for _ in range(n_ref):
            Xn = problem.prox_gamma(X - mu * problem.grad_phi(stats, X), mu)
            done = np.linalg.norm(Xn - X) <= tol * max(1.0, np.linalg.norm(X))
            X = Xn
            if done:
                break
        return X, evaluate_L(problem, stats, X)
    raise NotImplementedError(f"no reference solver for {problem.name}")


def optimal_value(problem, stats):
    return optimal_solution(problem, stats)[1]


@dataclass
class RateCertificate:
    """
    Sublinear bound on the best stationarity seen so far:
    min_{j<=i} w^j <= a sqrt(L(X^0) - L*) / sqrt(i + 1), with a = r^{-1/2}.
    """

    r_hat: float
    a_hat: float
    min_w: np.ndarray
    bound: np.ndarray
    failures: list = field(default_factory=list)

    @property
    def passed(self):
        return not self.failures


def rate_bound_check(w, R_hat, c_hat, L0, L_star, rtol=1e-9):
    """
    Check the rate bound pointwise.

    Parameters
    ----------
    w : array_like
        Stationarity measure per DASF iteration.
    R_hat, c_hat : array_like
        Measured sufficient-decrease and relative-error constants per
        iteration (NaN where not measured).
    L0, L_star : float
        Initial and optimal objective values.

    Notes
    -----
    The constant is r = min_i R^i / (c^i)^2: combining the per-iteration
    decrease L(X^i) - L(X^{i+1}) >= R |dX|^2 with w^i <= c |dX| gives
    (w^i)^2 <= (c^2 / R)(L(X^i) - L(X^{i+1})), which telescopes.
    """
    w = np.asarray(w, dtype=float)
    R = np.asarray(R_hat, dtype=float)
    c = np.asarray(c_hat, dtype=float)
    ok = ~np.isnan(R) & ~np.isnan(c)
    with np.errstate(divide="ignore"):
        # a zero witness ratio means the step ended at a stationary point
        ratios = np.where(c[ok] > 0, R[ok] / np.where(c[ok] > 0, c[ok], 1.0) ** 2, np.inf)
    if ratios.size == 0 or not np.min(ratios) > 0.0:
        raise CertificateUnavailableError("no positive rate constant: measured R/c^2 is not positive")
    r = float(np.min(ratios))
    a = r ** -0.5 if np.isfinite(r) else 0.0
    gap = max(float(L0 - L_star), 0.0)
    i = np.arange(w.size)
    bound = a * np.sqrt(gap) / np.sqrt(i + 1)
    min_w = np.minimum.accumulate(w) if w.size else w
    slack = rtol * max(1.0, a * np.sqrt(gap))
    failures = [int(k) for k in np.nonzero(min_w > bound + slack)[0]]
    return RateCertificate(r, a, min_w, bound, failures)


@dataclass
class EnsembleStatistics:
    """Median and 5/95 percentiles on the iteration and sub-iteration axes."""

    iterations: np.ndarray
    median: np.ndarray
    p5: np.ndarray
    p95: np.ndarray
    budgets: np.ndarray
    budget_median: np.ndarray
    budget_p5: np.ndarray
    budget_p95: np.ndarray


def _forward_fill(curves):
    T = max(len(c) for c in curves)
    out = np.empty((len(curves), T))
    for r, c in enumerate(curves):
        out[r, :len(c)] = c
        out[r, len(c):] = c[-1]
    return out


def values_at_budgets(curve, n_iters, budgets):
    """
    Value of ``curve`` (indexed by DASF iteration, entry 0 being the start)
    after the largest number of iterations whose cumulative sub-solver
    count does not exceed each budget.
    """
    cum = np.concatenate(([0], np.cumsum(n_iters)))
    pos = np.searchsorted(cum, budgets, side="right") - 1
    pos = np.minimum(pos, len(curve) - 1)
    return np.asarray(curve)[pos]


def trace_statistics(curves, n_iters=None, budgets=None):
    """
    Ensemble percentiles of per-run curves.

    Parameters
    ----------
    curves : sequence of 1-D arrays
        Per-run metric, entry i taken after i DASF iterations.  Shorter
        (early-stopped) runs are extended with their last value.
    n_iters : sequence of 1-D arrays, optional
        Per-run sub-solver iteration counts per DASF iteration.
    budgets : array_like, optional
        Cumulative sub-iteration budgets; defaults to every cumulative count
        reached by any run.
    """
    curves = [np.asarray(c, dtype=float) for c in curves]
    if not curves:
        raise ValueError("trace_statistics needs at least one trace")
    data = _forward_fill(curves)
    pct = np.percentile(data, [5, 50, 95], axis=0)
    if n_iters is None:
        n_iters = [np.ones(len(c) - 1, dtype=int) for c in curves]
    n_iters = [np.asarray(n, dtype=int) for n in n_iters]
    if budgets is None:
        reach = max(int(np.sum(n)) for n in n_iters)
        budgets = np.unique(np.concatenate([np.cumsum(np.concatenate(([0], n))) for n in n_iters]))
        budgets = budgets[budgets <= reach]
    budgets = np.asarray(budgets)
    at = np.array([values_at_budgets(c, n, budgets) for c, n in zip(curves, n_iters)])
    bpct = np.percentile(at, [5, 50, 95], axis=0)
    return EnsembleStatistics(np.arange(data.shape[1]), pct[1], pct[0], pct[2],
                              budgets, bpct[1], bpct[0], bpct[2])
