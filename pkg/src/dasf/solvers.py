"""
Inexact local solvers and their contract checks.

A solver starts from the warm start, takes ``n`` steps and returns every
iterate, the objective after every step and, where one can be formed, a
subgradient witness W at each new iterate.  :func:`certify_contract` turns a
run into measured sufficient-decrease and relative-error constants.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import scipy.linalg as sla

from .errors import (CapabilityError, CurvatureError, DegeneratePointError,
                     FactorizationError, NumericalError)
from .problems import evaluate_L

SOLVER_KINDS = ("gd", "newton", "projgd", "power", "proxgd", "reg-exact", "gevd")

# sufficient-decrease violations below this (times max(1, |L|)) are roundoff
DECREASE_TOL = 1e-10


@dataclass
class SolverConfig:
    """
    Local solver selection.

    Parameters
    ----------
    kind : str
        One of ``SOLVER_KINDS`` (``"ascent"`` is accepted as a negative control).
    n_iter : int or sequence of int
        Steps per DASF iteration; a sequence is indexed by the iteration and
        its last entry repeats.
    step : float, optional
        Fixed step size.  When omitted, ``step_factor / R`` with R the
        Lipschitz estimate of the local gradient (Newton defaults to 1).
    backtracking : tuple (beta, armijo), optional
        Armijo backtracking starting from the step above.
    reg : float
        Proximal weight of the regularized exact solver.
    lipschitz : {"exact", "power"}
        How R is estimated.
    """

    kind: str
    n_iter: int | Sequence[int] = 1
    step: float | None = None
    step_factor: float = 0.5
    backtracking: tuple | None = None
    reg: float = 1.0
    lipschitz: str = "exact"

    def __post_init__(self):
        if self.kind not in SOLVER_KINDS + ("ascent",):
            raise ValueError(f"unknown solver kind {self.kind!r}; choose from {SOLVER_KINDS}")
        sched = [self.n_iter] if np.isscalar(self.n_iter) else list(self.n_iter)
        if not sched or any(int(n) != n or n < 1 for n in sched):
            raise ValueError(f"n_iter must be positive integers, got {self.n_iter!r}")
        if self.step is not None and not self.step > 0:
            raise ValueError(f"step must be positive, got {self.step}")
        if not self.step_factor > 0:
            raise ValueError(f"step_factor must be positive, got {self.step_factor}")
        if self.backtracking is not None:
            beta, armijo = self.backtracking
            if not (0 < beta < 1 and 0 < armijo < 1):
                raise ValueError("backtracking needs beta and armijo in (0, 1)")
        if not self.reg > 0:
            raise ValueError(f"reg must be positive, got {self.reg}")
        if self.lipschitz not in ("exact", "power"):
            raise ValueError(f"lipschitz must be 'exact' or 'power', got {self.lipschitz!r}")

    def n_at(self, i):
        if np.isscalar(self.n_iter):
            return int(self.n_iter)
        sched = list(self.n_iter)
        return int(sched[min(i, len(sched) - 1)])


@dataclass
class SolverRun:
    """Iterates X^0..X^n, objective values, steps and witnesses of one local solve."""

    kind: str
    iterates: list
    values: list
    witnesses: list = field(default_factory=list)
    steps: list = field(default_factory=list)

    @property
    def n(self):
        return len(self.iterates) - 1

    @property
    def final(self):
        return self.iterates[-1]


@dataclass
class ContractReport:
    """
    Measured constants of one run.

    ``R_steps`` and ``c_steps`` hold the per-step ratios dL / |dX|^2 and
    |W| / |dX| (NaN where the step is too short to measure); ``R_min`` and
    ``c_max`` summarize them.
    """

    c1_ok: bool
    c2_ok: bool
    c3_ok: bool
    R_steps: np.ndarray
    c_steps: np.ndarray
    violations: list

    @property
    def passed(self):
        return self.c1_ok and self.c2_ok and self.c3_ok

    @property
    def R_min(self):
        finite = self.R_steps[np.isfinite(self.R_steps)]
        return float(finite.min()) if finite.size else np.nan

    @property
    def c_max(self):
        finite = self.c_steps[~np.isnan(self.c_steps)]
        return float(finite.max()) if finite.size else np.nan


# helpers

def _nonsmooth(problem):
    return problem.has_gamma and getattr(problem, "weight", 1.0) != 0.0


def _require_unconstrained_smooth(problem, kind):
    if problem.n_constraints:
        raise CapabilityError(f"{kind} cannot handle the constraints of {problem.name}")
    if _nonsmooth(problem):
        raise CapabilityError(f"{kind} needs a smooth objective; {problem.name} has a non-smooth term")


def _metric(problem, stats):
    G = problem.metric(stats)
    return np.eye(problem.dim) if G is None else G


def _cho(G, what="metric"):
    try:
        return sla.cho_factor(G)
    except (np.linalg.LinAlgError, ValueError) as exc:
        raise FactorizationError(f"{what} matrix is not positive definite") from exc


def lipschitz_constant(problem, stats, method="exact", iters=50, tol=1e-8):
    """
    Lipschitz constant of the gradient of a quadratic phi.

    Measured in the problem's metric G: the largest |eigenvalue| of the
    pencil (H, G) with H the curvature.  ``method="power"`` estimates it by
    power iteration instead of a full eigendecomposition.
    """
    H = problem.curvature(stats)
    G = problem.metric(stats)
    if method == "exact":
        w = sla.eigvalsh(H) if G is None else sla.eigvalsh(H, G)
        return float(np.max(np.abs(w)))
    cho = None if G is None else _cho(G)
    x = np.ones(H.shape[0]) / np.sqrt(H.shape[0])
    est = 0.0
    for _ in range(iters):
        y = H @ x if cho is None else sla.cho_solve(cho, H @ x)
        ny = np.sqrt(y @ y if G is None else y @ G @ y)
        if ny == 0.0:
            return 0.0
        x = y / ny
        if abs(ny - est) <= tol * ny:
            est = ny
            break
        est = ny
    return float(est)


def _default_step(config, problem, stats):
    if config.step is not None:
        return config.step
    R = lipschitz_constant(problem, stats, config.lipschitz)
    if R <= 0.0:
        return 1.0
    return config.step_factor / R


def _backtrack(config, step_fn, X, L0, mu):
    """Shrink ``mu`` until L(X+) <= L(X) - armijo |X+ - X|^2 / mu."""
    if config.backtracking is None:
        Xn, Ln = step_fn(mu)
        return Xn, Ln, mu
    beta, armijo = config.backtracking
    for _ in range(60):
        Xn, Ln = step_fn(mu)
        if Ln <= L0 - armijo * np.sum((Xn - X) ** 2) / mu:
            return Xn, Ln, mu
        mu *= beta
    return X.copy(), L0, 0.0


def _run(kind, problem, stats, x0, n, step, witness):
    X = problem.check_shape(x0)
    run = SolverRun(kind, [X.copy()], [evaluate_L(problem, stats, X)])
    for _ in range(n):
        Xn, Ln, mu = step(run.iterates[-1], run.values[-1])
        run.iterates.append(Xn)
        run.values.append(Ln)
        run.steps.append(mu)
        run.witnesses.append(witness(run.iterates[-2], Xn, mu))
    return run


def _lagrangian_witness(problem, stats):
    from .diagnostics import stationarity_measure
    return lambda X, Xn, mu: stationarity_measure(problem, stats, Xn).residual


# solvers

def gradient_descent_steps(problem, stats, x0, config, n):
    """X <- X - mu grad phi(X); witness grad phi at the new iterate."""
    _require_unconstrained_smooth(problem, "gradient descent")
    mu0 = _default_step(config, problem, stats)

    def step(X, L):
        g = problem.grad_phi(stats, X)
        move = lambda mu: (X - mu * g, evaluate_L(problem, stats, X - mu * g))
        return _backtrack(config, move, X, L, mu0)

    return _run("gd", problem, stats, x0, n, step,
                lambda X, Xn, mu: problem.grad_phi(stats, Xn))


def newton_steps(problem, stats, x0, config, n):
    """X <- X - mu H^{-1} grad phi(X) with the constant curvature H of a quadratic."""
    _require_unconstrained_smooth(problem, "Newton")
    H = problem.curvature(stats)
    try:
        cho = sla.cho_factor(H)
    except (np.linalg.LinAlgError, ValueError) as exc:
        raise CurvatureError("Hessian is not positive definite") from exc
    mu0 = 1.0 if config.step is None else config.step

    def step(X, L):
        P = sla.cho_solve(cho, problem.grad_phi(stats, X))
        move = lambda mu: (X - mu * P, evaluate_L(problem, stats, X - mu * P))
        return _backtrack(config, move, X, L, mu0)

    return _run("newton", problem, stats, x0, n, step,
                lambda X, Xn, mu: problem.grad_phi(stats, Xn))


def projected_gradient_steps(problem, stats, x0, config, n, sign=1.0, kind="projgd"):
    """
    X <- P(X - mu G^{-1} grad phi(X)).

    The gradient is taken in the metric G in which the shipped projection
    is orthogonal, which makes every step a descent step.
    """
    if _nonsmooth(problem):
        raise CapabilityError("projected gradient needs a smooth objective")
    G = problem.metric(stats)
    cho = None if G is None else _cho(G)
    mu0 = _default_step(config, problem, stats)

    def step(X, L):
        g = problem.grad_phi(stats, X)
        d = g if cho is None else sla.cho_solve(cho, g)

        def move(mu):
            Xn = problem.project(stats, X - sign * mu * d)
            return Xn, evaluate_L(problem, stats, Xn)

        return _backtrack(config, move, X, L, mu0)

    return _run(kind, problem, stats, x0, n, step, _lagrangian_witness(problem, stats))


def power_method_steps(problem, stats, x0, config, n):
    """x <- G^{-1} R_yy x, scaled so that x^T G x = 1."""
    Ryy, G = problem.pencil(stats)
    if problem.Q != 1:
        raise CapabilityError("the power method computes a single filter (Q = 1)")
    cho = _cho(G)

    def step(X, L):
        y = sla.cho_solve(cho, Ryy @ X)
        s = float(y[:, 0] @ G @ y[:, 0])
        if not s > 0.0:
            raise DegeneratePointError("power step produced a null vector")
        Xn = y / np.sqrt(s)
        return Xn, evaluate_L(problem, stats, Xn), np.nan

    return _run("power", problem, stats, x0, n, step, _lagrangian_witness(problem, stats))


def proximal_gradient_steps(problem, stats, x0, config, n):
    """X <- prox_{mu gamma}(X - mu grad phi(X)); witness is the prox residual."""
    if not problem.has_gamma:
        raise CapabilityError(f"{problem.name} has no proximal term")
    if problem.n_constraints:
        raise CapabilityError("proximal gradient does not handle constraints")
    mu0 = _default_step(config, problem, stats)

    def step(X, L):
        g = problem.grad_phi(stats, X)

        def move(mu):
            Xn = problem.prox_gamma(X - mu * g, mu)
            return Xn, evaluate_L(problem, stats, Xn)

        return _backtrack(config, move, X, L, mu0)

    def witness(X, Xn, mu):
        if mu == 0.0:
            return problem.gamma_min_norm(problem.grad_phi(stats, Xn), Xn)
        return (X - Xn) / mu - problem.grad_phi(stats, X) + problem.grad_phi(stats, Xn)

    return _run("proxgd", problem, stats, x0, n, step, witness)


def regularized_exact_solve(problem, stats, x0, config, n=1):
    """
    X+ = argmin phi(X) + reg |X - X-|^2, solved exactly for quadratic phi:
    (H + 2 reg I) X+ = 2 reg X- - grad phi(0).
    """
    if not problem.quadratic or problem.n_constraints or _nonsmooth(problem):
        raise CapabilityError(f"no exact regularized subproblem solver for {problem.name}")
    reg = config.reg
    H = problem.curvature(stats)
    try:
        cho = sla.cho_factor(H + 2.0 * reg * np.eye(problem.dim))
    except (np.linalg.LinAlgError, ValueError) as exc:
        raise CurvatureError("regularized Hessian is not positive definite") from exc
    g0 = problem.grad_phi(stats, np.zeros((problem.dim, problem.Q)))

    def step(X, L):
        Xn = sla.cho_solve(cho, 2.0 * reg * X - g0)
        return Xn, evaluate_L(problem, stats, Xn), reg

    return _run("reg-exact", problem, stats, x0, n, step,
                lambda X, Xn, mu: 2.0 * reg * (X - Xn))


def exact_gevd_solve(problem, stats, x0, config=None, n=1):
    """
    Dominant Q generalized eigenvectors of the local pencil.

    Ties at the boundary of the selected eigenvalues are resolved towards the
    warm start, and the result is rotated (sign-flipped for Q = 1) to
    maximize tr(X^T X0).
    """
    Ryy, G = problem.pencil(stats)
    X0 = problem.check_shape(x0)
    Q = problem.Q
    try:
        w, V = sla.eigh(Ryy, G)
    except (np.linalg.LinAlgError, ValueError) as exc:
        raise NumericalError(f"generalized eigensolver failed: {exc}") from exc
    if not np.all(np.isfinite(w)):
        raise NumericalError("generalized eigensolver returned non-finite eigenvalues")
    order = np.argsort(w)[::-1]
    w, V = w[order], V[:, order]
    tol = 1e-10 * max(1.0, np.max(np.abs(w)))
    wq = w[Q - 1]
    strict = V[:, w > wq + tol]
    tied = V[:, np.abs(w - wq) <= tol]
    need = Q - strict.shape[1]
    if tied.shape[1] > need:
        P = tied.T @ G @ X0
        if np.linalg.norm(P) > 0.0:
            U = np.linalg.svd(P, full_matrices=True)[0]
            tied = tied @ U
        tied = tied[:, :need]
    X = np.hstack([strict, tied[:, :need]])
    U, _, Vt = np.linalg.svd(X.T @ X0)
    X = X @ (U @ Vt)

    def step(Xc, L):
        return X.copy(), evaluate_L(problem, stats, X), np.nan

    return _run("gevd", problem, stats, X0, n, step, _lagrangian_witness(problem, stats))


def gradient_ascent_steps(problem, stats, x0, config, n):
    """Deliberately wrong solver that climbs the objective; used as a negative control."""
    if problem.n_constraints:
        return projected_gradient_steps(problem, stats, x0, config, n, sign=-1.0, kind="ascent")
    mu0 = _default_step(config, problem, stats)

    def step(X, L):
        Xn = X + mu0 * problem.grad_phi(stats, X)
        return Xn, evaluate_L(problem, stats, Xn), mu0

    return _run("ascent", problem, stats, x0, n, step,
                lambda X, Xn, mu: problem.gamma_min_norm(problem.grad_phi(stats, Xn), Xn))


SOLVERS = {
    "gd": gradient_descent_steps,
    "newton": newton_steps,
    "projgd": projected_gradient_steps,
    "power": power_method_steps,
    "proxgd": proximal_gradient_steps,
    "reg-exact": regularized_exact_solve,
    "gevd": exact_gevd_solve,
    "ascent": gradient_ascent_steps,
}


def check_compatible(config, problem):
    """Raise CapabilityError if ``config.kind`` cannot run on ``problem``."""
    kind = config.kind
    if kind in ("gd", "newton") and (problem.n_constraints or _nonsmooth(problem)):
        raise CapabilityError(f"{kind} needs an unconstrained smooth problem, got {problem.name}")
    if kind in ("power", "gevd"):
        if problem.n_constraints == 0 or not hasattr(problem, "pencil"):
            raise CapabilityError(f"{kind} needs an eigenvalue problem, got {problem.name}")
        if kind == "power" and problem.Q != 1:
            raise CapabilityError("the power method computes a single filter (Q = 1)")
    if kind == "projgd" and (_nonsmooth(problem) or problem.n_constraints == 0):
        raise CapabilityError(f"projgd needs a constrained smooth problem, got {problem.name}")
    if kind == "proxgd" and (not problem.has_gamma or problem.n_constraints):
        raise CapabilityError(f"proxgd needs a regularized unconstrained problem, got {problem.name}")
    if kind == "reg-exact" and (not problem.quadratic or problem.n_constraints or _nonsmooth(problem)):
        raise CapabilityError(f"no exact regularized subproblem solver for {problem.name}")
    if kind in ("power", "gevd") and problem.name not in ("maxsnr", "pca"):
        raise CapabilityError(f"{kind} needs an eigenvalue problem, got {problem.name}")


def solve(config, problem, stats, x0, n=None):
    """Run the solver selected by ``config`` for ``n`` steps (default: ``config.n_at(0)``)."""
    n = config.n_at(0) if n is None else int(n)
    return SOLVERS[config.kind](problem, stats, x0, config, n)


# certification

def certify_contract(run, problem=None, stats=None, warm_start=None):
    """
    Measure the sufficient-decrease and relative-error constants of ``run``.

    A step counts as a violation of sufficient decrease when L drops by less
    than -1e-10 max(1, |L|).  The ratios are recorded only for steps long
    enough to measure them above roundoff; a witness of size above 1e-8 at a
    step of length zero is a relative-error violation, as is a missing
    witness.
    """
    violations = []
    c1_ok = True
    if warm_start is not None and not np.array_equal(run.iterates[0], np.asarray(warm_start)):
        c1_ok = False
        violations.append(("C1", 0, "first iterate differs from the warm start"))

    R = np.full(run.n, np.nan)
    c = np.full(run.n, np.nan)
    c2_ok = c3_ok = True
    for j in range(run.n):
        X, Xn = run.iterates[j], run.iterates[j + 1]
        L, Ln = run.values[j], run.values[j + 1]
        dx = float(np.linalg.norm(Xn - X))
        scale = max(1.0, float(np.linalg.norm(X)))
        if np.isfinite(L) and np.isfinite(Ln):
            drop = L - Ln
            lscale = max(1.0, abs(L))
            if drop < -DECREASE_TOL * lscale:
                c2_ok = False
                violations.append(("C2", j, f"objective increased by {-drop:.3e}"))
            if dx ** 2 > 1e-9 * lscale:
                R[j] = drop / dx ** 2
        elif np.isfinite(L) and not np.isfinite(Ln):
            c2_ok = False
            violations.append(("C2", j, "step left the feasible set"))

        W = run.witnesses[j] if j < len(run.witnesses) else None
        if W is None:
            c3_ok = False
            violations.append(("C3", j, "no subgradient witness"))
            continue
        nw = float(np.linalg.norm(W))
        if not np.isfinite(nw):
            c3_ok = False
            violations.append(("C3", j, "non-finite witness"))
        elif dx > 1e-12 * scale:
            c[j] = nw / dx
        elif nw > 1e-8 * scale:
            c3_ok = False
            c[j] = np.inf
            violations.append(("C3", j, f"zero step with witness of norm {nw:.3e}"))
    return ContractReport(c1_ok, c2_ok, c3_ok, R, c, violations)


@dataclass
class SequenceCertificate:
    """Bounds of the measured constants across DASF iterations."""

    R_inf: float
    c_sup: float
    per_step_ok: bool
    passed: bool


def certify_sequence(R_values, c_values, per_step_ok=True, R_floor=1e-12, c_ceiling=1e12):
    """
    Check that the per-iteration constants stay away from 0 and infinity.

    ``R_values`` and ``c_values`` are the per-DASF-iteration minimum and
    maximum ratios; NaN entries (iterations without measurable steps) are
    ignored.
    """
    R = np.asarray(R_values, dtype=float)
    c = np.asarray(c_values, dtype=float)
    R = R[~np.isnan(R)]
    c = c[~np.isnan(c)]
    R_inf = float(R.min()) if R.size else np.nan
    c_sup = float(c.max()) if c.size else np.nan
    ok = per_step_ok
    if R.size:
        ok = ok and R_inf > R_floor
    if c.size:
        ok = ok and np.isfinite(c_sup) and c_sup < c_ceiling
    return SequenceCertificate(R_inf, c_sup, per_step_ok, bool(ok))
