"""
Spatial filtering problems of the form

    min_X  phi(X^T y, X^T B) + gamma(X^T A)   s.t.  eta_j(X^T y, X^T D_j) <= 0 / = 0

with expectations realised as quadratic forms in second-order statistics.
Problems never see raw samples, only a :class:`~dasf.signals.Statistics`
object, so exact and estimated statistics go through the same code.

A problem instance also carries its row-block partition, which is the node
partition for the network-wide problem and the local stacking
``[own node, compressed node, ...]`` for the problem solved at an updating
node.  :meth:`ProblemSpec.localized` rebuilds the same problem class on
compressed matrices, so one solver serves both.
"""

from __future__ import annotations

import copy

import numpy as np
from scipy.optimize import brentq

from .errors import CapabilityError, DegeneratePointError, ShapeError

TAU_FEAS = 1e-9


class ProblemSpec:
    """
    Base class of the problem family.

    Subclasses implement the smooth objective, and where present the
    non-smooth term and the constraints.  The deterministic matrices are
    ``B`` (rows x P_B), ``A`` (one matrix per row block, block-diagonal
    overall) and ``D`` (name -> rows x P_D).
    """

    name = "problem"
    moments = ()
    has_gamma = False
    quadratic = False

    def __init__(self, blocks, Q, B=None, A=None, D=None):
        self.blocks = tuple(int(b) for b in blocks)
        self.Q = int(Q)
        self.B = None if B is None else np.asarray(B, dtype=float)
        self.A = None if A is None else [np.asarray(a, dtype=float) for a in A]
        self.D = {k: np.asarray(v, dtype=float) for k, v in (D or {}).items()}
        if self.Q > self.dim:
            raise ShapeError(f"Q={self.Q} exceeds the problem dimension {self.dim}")
        if self.A is not None and len(self.A) != len(self.blocks):
            raise ShapeError("A needs one block per row block")

    def __repr__(self):
        return f"{type(self).__name__}(blocks={self.blocks}, Q={self.Q})"

    @property
    def dim(self):
        return sum(self.blocks)

    @property
    def offsets(self):
        return np.concatenate(([0], np.cumsum(self.blocks))).astype(int)

    def split(self, X):
        off = self.offsets
        return [X[off[k]:off[k + 1]] for k in range(len(self.blocks))]

    def check_shape(self, X):
        X = np.asarray(X, dtype=float)
        if X.ndim == 1:
            X = X[:, None]
        if X.shape != (self.dim, self.Q):
            raise ShapeError(f"filter has shape {X.shape}, expected {(self.dim, self.Q)}")
        return X

    # smooth part

    def phi(self, stats, X):
        raise NotImplementedError

    def grad_phi(self, stats, X):
        raise NotImplementedError

    def curvature(self, stats):
        """Matrix H with grad_phi(X) = H X + grad_phi(0), for quadratic phi."""
        raise CapabilityError(f"{self.name} has no constant curvature")

    # non-smooth part

    def gamma(self, X):
        return 0.0

    def gamma_blocks(self, X):
        return [0.0] * len(self.blocks)

    def prox_gamma(self, X, step):
        raise CapabilityError(f"{self.name} has no non-smooth term")

    def gamma_min_norm(self, G, X):
        """Element of G + d gamma(X) with least Frobenius norm."""
        return G

    # constraints

    @property
    def equality(self):
        """Per-constraint flag, True for equality constraints."""
        return ()

    @property
    def n_constraints(self):
        return len(self.equality)

    def constraint_values(self, stats, X):
        return np.zeros(0)

    def constraint_gradients(self, stats, X, h=1e-6):
        """Gradients of the constraint functions; central differences by default."""
        X = np.asarray(X, dtype=float)
        grads = [np.zeros_like(X) for _ in range(self.n_constraints)]
        for idx in np.ndindex(*X.shape):
            E = np.zeros_like(X)
            E[idx] = h
            diff = (self.constraint_values(stats, X + E) - self.constraint_values(stats, X - E)) / (2 * h)
            for j, g in enumerate(grads):
                g[idx] = diff[j]
        return grads

    def project(self, stats, X):
        if self.n_constraints == 0:
            return np.array(X, dtype=float)
        raise CapabilityError(f"{self.name} has no shipped projection")

    def metric(self, stats):
        """Inner-product matrix in which :meth:`project` is an orthogonal projection."""
        return None

    def pencil(self, stats):
        raise CapabilityError(f"{self.name} is not a generalized eigenvalue problem")

    # distribution support

    def node_matrices(self, k):
        """Deterministic matrices of row block ``k`` (0-based)."""
        off = self.offsets
        rows = slice(off[k], off[k + 1])
        return {
            "B": None if self.B is None else self.B[rows],
            "A": None if self.A is None else self.A[k],
            "D": {name: D[rows] for name, D in self.D.items()},
        }

    def localized(self, blocks, B=None, A=None, D=None):
        """Same problem on new row blocks and compressed matrices."""
        new = copy.copy(self)
        new.blocks = tuple(int(b) for b in blocks)
        new.B = B
        new.A = A
        new.D = dict(D or {})
        return new


def is_feasible(problem, stats, X, tol=TAU_FEAS):
    values = problem.constraint_values(stats, X)
    if values.size == 0:
        return True
    eq = np.asarray(problem.equality, dtype=bool)
    if not np.all(np.isfinite(values)):
        return False
    return bool(np.all(np.abs(values[eq]) <= tol) and np.all(values[~eq] <= tol))


def evaluate_L(problem, stats, X, tol=TAU_FEAS):
    """phi + gamma at a feasible ``X``, ``inf`` otherwise."""
    X = problem.check_shape(X)
    if not is_feasible(problem, stats, X, tol):
        return np.inf
    return float(problem.phi(stats, X) + problem.gamma(X))


def gradient_smooth(problem, stats, X):
    return problem.grad_phi(stats, problem.check_shape(X))


def prox_gamma(problem, X, step):
    if step < 0:
        raise ValueError(f"prox step must be non-negative, got {step}")
    return problem.prox_gamma(problem.check_shape(X), step)


def project_constraints(problem, stats, X):
    return problem.project(stats, problem.check_shape(X))


class ExtendedObjective:
    """``X -> L(X)`` for fixed statistics, remembering the last evaluation."""

    def __init__(self, problem, stats):
        self.problem = problem
        self.stats = stats
        self._last = None

    def __call__(self, X):
        X = np.asarray(X, dtype=float)
        if self._last is not None and np.array_equal(self._last[0], X):
            return self._last[1]
        value = evaluate_L(self.problem, self.stats, X)
        self._last = (X.copy(), value)
        return value


class _EigenProblem(ProblemSpec):
    """
    min -tr(X^T R_yy X)  s.t.  X^T G X = I,  with G given by :meth:`metric`.

    The constraints are the Q(Q+1)/2 entries a <= b of X^T G X - I.
    """

    quadratic = True

    def phi(self, stats, X):
        return -float(np.sum(X * (stats["y"] @ X)))

    def grad_phi(self, stats, X):
        return -2.0 * stats["y"] @ X

    def curvature(self, stats):
        return -2.0 * stats["y"]

    @property
    def _pairs(self):
        return [(a, b) for a in range(self.Q) for b in range(a, self.Q)]

    @property
    def equality(self):
        return (True,) * len(self._pairs)

    def constraint_values(self, stats, X):
        S = X.T @ self.metric(stats) @ X - np.eye(self.Q)
        return np.array([S[a, b] for a, b in self._pairs])

    def constraint_gradients(self, stats, X, h=None):
        GX = self.metric(stats) @ X
        grads = []
        for a, b in self._pairs:
            g = np.zeros_like(X)
            g[:, a] += GX[:, b]
            g[:, b] += GX[:, a]
            grads.append(g)
        return grads

    def project(self, stats, X):
        G = self.metric(stats)
        if self.Q == 1:
            s = float(X[:, 0] @ G @ X[:, 0])
            if not np.isfinite(s) or s <= 0.0:
                raise DegeneratePointError("cannot normalise a filter with zero norm")
            return X / np.sqrt(s)
        w, V = np.linalg.eigh(X.T @ G @ X)
        if not np.all(np.isfinite(w)) or w[0] <= 1e-14 * max(w[-1], 0.0) or w[-1] <= 0.0:
            raise DegeneratePointError("filter columns are linearly dependent")
        return X @ (V / np.sqrt(w)) @ V.T

    def pencil(self, stats):
        return stats["y"], self.metric(stats)


class MaxSNR(_EigenProblem):
    """Maximise E|X^T y|^2 subject to E[X^T n n^T X] = I."""

    name = "maxsnr"
    moments = (("y", "y"), ("n", "n"))

    def metric(self, stats):
        return stats["n"]


class PCA(_EigenProblem):
    """Maximise tr(X^T R_yy X) subject to X^T D D^T X = I, with D = I network-wide."""

    name = "pca"
    moments = (("y", "y"),)

    def metric(self, stats):
        D = self.D["D"]
        return D @ D.T


class RegularizedMWF(ProblemSpec):
    """
    Multichannel Wiener filter with a per-node group penalty:

        E|X^T y - d|^2 + weight * sum_k |X_k^T A_k|_F
    """

    name = "mwf"
    moments = (("y", "y"), ("y", "d"), ("d", "d"))
    has_gamma = True
    quadratic = True

    def __init__(self, blocks, Q, weight=1.0, **kwargs):
        super().__init__(blocks, Q, **kwargs)
        if weight < 0:
            raise ValueError(f"regularization weight must be non-negative, got {weight}")
        self.weight = float(weight)

    def phi(self, stats, X):
        Ryy, Ryd = stats["y"], stats[("y", "d")]
        return float(np.sum(X * (Ryy @ X)) - 2.0 * np.sum(X * Ryd) + np.trace(stats["d"]))

    def grad_phi(self, stats, X):
        return 2.0 * (stats["y"] @ X - stats[("y", "d")])

    def curvature(self, stats):
        return 2.0 * stats["y"]

    def gamma_blocks(self, X):
        return [self.weight * np.linalg.norm(Ak.T @ Xk) for Ak, Xk in zip(self.A, self.split(X))]

    def gamma(self, X):
        if self.weight == 0.0:
            return 0.0
        return float(sum(self.gamma_blocks(X)))

    def prox_gamma(self, X, step):
        t = step * self.weight
        return np.vstack([group_prox(Xk, Ak.T, t) for Ak, Xk in zip(self.A, self.split(X))])

    def gamma_min_norm(self, G, X):
        return np.vstack([group_min_norm(Gk, Xk, Ak.T, self.weight)
                          for Ak, Xk, Gk in zip(self.A, self.split(X), self.split(G))])


def _is_scaled_identity(G):
    if G.shape[0] != G.shape[1]:
        return None
    s = G[0, 0]
    if s > 0 and np.array_equal(G, s * np.eye(G.shape[0])):
        return s
    return None


def group_prox(Z, G, t):
    """
    Proximal map of ``V -> t |G V|_F`` evaluated at ``Z``.

    For G = s I this is block soft-thresholding.  Otherwise the problem is
    diagonalised by the SVD of G and the shrinkage radius found from a scalar
    monotone equation.
    """
    Z = np.asarray(Z, dtype=float)
    if t == 0.0:
        return Z.copy()
    s0 = _is_scaled_identity(G)
    if s0 is not None:
        nz = np.linalg.norm(Z)
        if nz <= t * s0:
            return np.zeros_like(Z)
        return Z * (1.0 - t * s0 / nz)
    _, s, Wt = np.linalg.svd(G, full_matrices=True)
    sv = np.zeros(G.shape[1])
    sv[:s.size] = s
    pos = sv > 1e-12 * max(sv.max(initial=0.0), 1e-300)
    Zr = Wt @ Z
    if not pos.any():
        return Z.copy()
    zp, sp = Zr[pos], sv[pos]
    Ur = Zr.copy()
    if np.linalg.norm(zp / sp[:, None]) <= t:
        Ur[pos] = 0.0
    else:
        energy = sp ** 2 * np.sum(zp ** 2, axis=1)
        f = lambda rho: np.sum(energy / (rho + t * sp ** 2) ** 2) - 1.0
        hi = np.sqrt(energy.sum())
        rho = brentq(f, 0.0, hi, xtol=1e-15, rtol=4 * np.finfo(float).eps)
        Ur[pos] = zp * (rho / (rho + t * sp ** 2))[:, None]
    return Wt.T @ Ur


def group_min_norm(g, V, G, t):
    """
    Least-norm element of ``g + t * d|G V|_F``.

    Where G V != 0 the penalty is differentiable; at G V = 0 the
    subdifferential is ``{t G^T Y : |Y|_F <= 1}`` and the projection of -g
    onto it is a trust-region problem solved through its secular equation.
    """
    if t == 0.0:
        return g
    GV = G @ V
    ngv = np.linalg.norm(GV)
    if ngv > 1e-14 * np.linalg.norm(G) * np.linalg.norm(V):
        return g + t * (G.T @ GV) / ngv
    _, s, Wt = np.linalg.svd(G, full_matrices=True)
    sv = np.zeros(G.shape[1])
    sv[:s.size] = s
    pos = sv > 1e-12 * max(sv.max(initial=0.0), 1e-300)
    gr = Wt @ g
    if not pos.any():
        return g
    gp, sp = gr[pos], t * sv[pos]
    res = gr.copy()
    if np.sum((gp / sp[:, None]) ** 2) <= 1.0:
        res[pos] = 0.0
    else:
        energy = sp ** 2 * np.sum(gp ** 2, axis=1)
        f = lambda lam: np.sum(energy / (sp ** 2 + lam) ** 2) - 1.0
        hi = np.sqrt(energy.sum())
        lam = brentq(f, 0.0, hi, xtol=1e-15, rtol=4 * np.finfo(float).eps)
        res[pos] = gp * (lam / (sp ** 2 + lam))[:, None]
    return Wt.T @ res


def make_max_snr(network):
    return MaxSNR(network.channels, network.Q)


def make_pca(network):
    return PCA(network.channels, network.Q, D={"D": np.eye(network.M)})


def make_mwf(network, weight=1.0):
    return RegularizedMWF(network.channels, network.Q, weight=weight,
                          A=[np.eye(m) for m in network.channels])


PROBLEMS = {"maxsnr": make_max_snr, "pca": make_pca, "mwf": make_mwf}


def make_problem(name, network, **params):
    try:
        factory = PROBLEMS[name]
    except KeyError:
        raise ValueError(f"unknown problem {name!r}; choose from {sorted(PROBLEMS)}") from None
    return factory(network, **params)
