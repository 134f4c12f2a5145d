"""
The DASF iteration over a fully-connected network.

At iteration i the updating node q receives Q-channel compressions of the
other nodes' signals and matrices, solves (possibly inexactly) the local
problem on the stacked data ``[own channels, compressed node 1, ...]`` and
sends each node the Q x Q block that rescales its filter.  All node indices
in this module are 1-based, as in the network model.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import solvers as _solvers
from .diagnostics import stationarity_measure
from .errors import (CapabilityError, DegeneratePointError, IncompleteAggregationError,
                     ShapeError, SolverDivergenceError)
from .problems import evaluate_L
from .signals import ORACLE, SENSOR_SIGNALS, CovarianceToken, Statistics, draw_batch


@dataclass(frozen=True)
class LiftingMap:
    """
    Linear map C from local variables to network-wide filters.

    Rows follow the node order.  Columns follow the local stacking: node q's
    own M_q channels first, then Q columns for each other node in increasing
    node order.  Node q's rows hold I_{M_q}, node k's rows hold X_k^i.
    """

    C: np.ndarray
    q: int
    i: int
    local_blocks: tuple

    def __matmul__(self, Xt):
        return self.C @ Xt


@dataclass(frozen=True)
class NodePayload:
    """What node k sends to the updating node: X_k^T y_k and compressed matrices."""

    node: int
    signals: dict | None
    B: np.ndarray | None
    A: np.ndarray | None
    D: dict


@dataclass
class LocalProblemData:
    problem: object
    stats: Statistics
    lifting: LiftingMap
    q: int
    i: int
    batches: dict | None = None

    @property
    def dim(self):
        return self.lifting.C.shape[1]


@dataclass
class IterationTrace:
    """
    Record of one DASF iteration.

    ``objective`` is L(X^{i+1}), the value after the update; ``w`` is the
    local stationarity measure at the returned local iterate and ``w_global``
    the analogous measure of the network-wide problem at X^{i+1}.
    """

    i: int
    q: int
    objective: float
    residual: float
    w: float
    w_global: float
    scalars_tx: int
    n_iter: int
    R_hat: float = np.nan
    c_hat: float = np.nan
    c1_ok: bool = True
    c2_ok: bool = True
    c3_ok: bool = True
    checks: dict = field(default_factory=dict)


@dataclass
class DasfState:
    network: object
    X: np.ndarray
    i: int = 0
    q: int = 1
    trace: list = field(default_factory=list)
    initial_objective: float = np.nan

    @property
    def objectives(self):
        return np.array([self.initial_objective] + [t.objective for t in self.trace])


def _local_blocks(network, q):
    return (network.channels[q - 1],) + (network.Q,) * (network.K - 1)


def _other_nodes(network, q):
    return [k for k in range(1, network.K + 1) if k != q]


def build_lifting_map(network, X, q, i=0):
    """Assemble C_q(X) for updating node ``q``."""
    if not 1 <= q <= network.K:
        raise ValueError(f"updating node must be in 1..{network.K}, got {q}")
    X = np.asarray(X, dtype=float)
    Q, M = network.Q, network.M
    blocks = _local_blocks(network, q)
    C = np.zeros((M, sum(blocks)))
    rows = network.split(np.arange(M))
    own = rows[q - 1]
    C[own[0]:own[-1] + 1, :blocks[0]] = np.eye(blocks[0])
    col = blocks[0]
    for k, Xk in zip(_other_nodes(network, q), [network.split(X)[k - 1] for k in _other_nodes(network, q)]):
        r = rows[k - 1]
        C[r[0]:r[-1] + 1, col:col + Q] = Xk
        col += Q
    return LiftingMap(C, q, i, blocks)


def warm_start(network, X, q):
    """Local point [X_q^T, I_Q, ..., I_Q]^T whose lift is X."""
    Xq = network.split(np.asarray(X, dtype=float))[q - 1]
    eye = np.eye(network.Q)
    return np.vstack([Xq] + [eye] * (network.K - 1))


def compress_node(Xk, signals=None, B=None, A=None, D=None, node=0):
    """
    Compress node data with the local filter block X_k.

    Signal batches are N x M_k arrays (rows are samples) and become X_k^T
    y_k, stored as N x Q; the matrices become X_k^T B_k, X_k^T A_k and
    X_k^T D_{j,k}.
    """
    Xk = np.asarray(Xk, dtype=float)
    mk = Xk.shape[0]

    def squeeze(name, mat):
        if mat is None:
            return None
        mat = np.asarray(mat, dtype=float)
        if mat.shape[0] != mk:
            raise ShapeError(f"{name} has {mat.shape[0]} rows, node filter has {mk}")
        return Xk.T @ mat

    compressed = None
    if signals is not None:
        compressed = {}
        for name, batch in signals.items():
            batch = np.asarray(batch, dtype=float)
            if batch.shape[1] != mk:
                raise ShapeError(f"batch '{name}' has {batch.shape[1]} channels, expected {mk}")
            compressed[name] = batch @ Xk
    return NodePayload(node, compressed, squeeze("B", B), squeeze("A", A),
                       {j: squeeze(f"D[{j}]", Dj) for j, Dj in (D or {}).items()})


def node_payload(problem, network, X, k, batches=None):
    """Compressed payload of node ``k`` for the current filter ``X``."""
    mats = problem.node_matrices(k - 1)
    signals = None
    if batches is not None:
        signals = {name: b.node(k) for name, b in batches.items() if name in SENSOR_SIGNALS}
    return compress_node(network.split(X)[k - 1], signals, mats["B"], mats["A"], mats["D"], node=k)


def assemble_local_problem(problem, network, X, q, payloads, batches=None,
                           global_stats=None, i=0):
    """
    Build the compressed problem at updating node ``q``.

    ``payloads`` maps every node k != q to its :class:`NodePayload`.  With
    ``global_stats`` (oracle mode) the local statistics are C^T R C; with
    ``batches`` the node stacks its own channels and the received
    compressed samples and estimates the local statistics from them.
    """
    others = _other_nodes(network, q)
    missing = [k for k in others if k not in payloads]
    if missing:
        raise IncompleteAggregationError(f"no payload from node(s) {missing}")
    lifting = build_lifting_map(network, X, q, i)
    own = problem.node_matrices(q - 1)
    parts = [payloads[k] for k in others]

    B = None if own["B"] is None else np.vstack([own["B"]] + [p.B for p in parts])
    A = None if own["A"] is None else [own["A"]] + [p.A for p in parts]
    D = {j: np.vstack([Dj] + [p.D[j] for p in parts]) for j, Dj in own["D"].items()}
    local = problem.localized(lifting.local_blocks, B=B, A=A, D=D)

    local_batches = None
    if global_stats is not None:
        stats = global_stats.compress(lifting.C)
    elif batches is not None:
        local_batches = {}
        for name, b in batches.items():
            if name in SENSOR_SIGNALS:
                local_batches[name] = np.hstack([b.node(q)] + [p.signals[name] for p in parts])
            else:
                local_batches[name] = b.samples
        stats = Statistics.from_batches(local_batches, problem.moments)
    else:
        raise ValueError("need either oracle statistics or sample batches")
    return LocalProblemData(local, stats, lifting, q, i, local_batches)


def lift(lifting, Xt):
    return lifting.C @ Xt


def apply_update(state, Xt):
    """
    Distribute the local solution and advance to the next updating node.

    Node q takes the first M_q rows of ``Xt``; every other node k multiplies
    its block by the Q x Q block addressed to it.
    """
    network, q, Q = state.network, state.q, state.network.Q
    Xt = np.asarray(Xt, dtype=float)
    expected = (network.channels[q - 1] + (network.K - 1) * Q, Q)
    if Xt.shape != expected:
        raise ShapeError(f"local solution has shape {Xt.shape}, expected {expected}")
    blocks = network.split(state.X)
    new = [None] * network.K
    mq = network.channels[q - 1]
    new[q - 1] = Xt[:mq].copy()
    for n, k in enumerate(_other_nodes(network, q)):
        Xtk = Xt[mq + n * Q:mq + (n + 1) * Q]
        new[k - 1] = blocks[k - 1] @ Xtk
    return DasfState(network, np.vstack(new), state.i + 1, q % network.K + 1,
                     state.trace, state.initial_objective)


def filtered_output(X, batch):
    """z = X^T y for every sample of ``batch`` (N x M), returned as N x Q."""
    if isinstance(batch, CovarianceToken):
        raise CapabilityError("no samples exist in oracle-statistics mode")
    samples = batch.samples if hasattr(batch, "samples") else np.asarray(batch)
    return samples @ X


def scalars_transmitted(problem, network, N):
    """
    Scalars exchanged in one iteration: each non-updating node sends N Q
    compressed samples per sensor signal plus its compressed matrices, and
    receives a Q x Q block back.
    """
    Q, K = network.Q, network.K
    n_signals = len({s for pair in problem.moments for s in pair if s in SENSOR_SIGNALS})
    cols = 0
    if problem.B is not None:
        cols += problem.B.shape[1]
    if problem.A is not None:
        cols += problem.A[0].shape[1]
    cols += sum(Dj.shape[1] for Dj in problem.D.values())
    return (K - 1) * (N * Q * n_signals + Q * cols + Q * Q)


def monitor_objective(problem, stats, X):
    """
    L(X) under the monitoring statistics.

    A filter fitted to sample statistics is in general slightly infeasible
    under the exact ones; it is then scored after projection, which for
    the eigenvalue problems is the scale-invariant Rayleigh quotient.
    """
    value = evaluate_L(problem, stats, X)
    if np.isfinite(value) or problem.n_constraints == 0:
        return value
    try:
        return evaluate_L(problem, stats, problem.project(stats, X))
    except (CapabilityError, DegeneratePointError):
        return value


def initial_filter(problem, stats, network, rng):
    """Standard normal X^0, projected onto the constraints when possible."""
    X = rng.standard_normal((network.M, network.Q))
    try:
        X = problem.project(stats, X)
    except CapabilityError:
        pass
    return X


def run_dasf(problem, source, solver, budget, *, x0=None, rng=None, N=1000,
             stop_tol=1e-10, verify=False, monitor_stats=None):
    """
    Run the DASF iteration for at most ``budget`` iterations.

    Parameters
    ----------
    problem : ProblemSpec
        Network-wide problem.
    source : MixtureSource
        Signal source; its mode selects exact or sampled statistics.
    solver : SolverConfig
        Local solver and its iteration schedule.
    budget : int
        Maximum number of DASF iterations.
    x0 : ndarray, optional
        Initial filter; drawn by :func:`initial_filter` when omitted.
    rng : numpy.random.Generator, optional
        Generator for the initial filter.
    N : int
        Samples per batch (also used for bandwidth accounting).
    stop_tol : float
        Stop once the residual stays below this for a full round of K
        iterations.  Zero disables early stopping.
    verify : bool
        Record the algebraic identities of every iteration in
        ``IterationTrace.checks``.
    monitor_stats : Statistics, optional
        Statistics used for the recorded objective; defaults to the source's
        exact statistics.

    Returns
    -------
    DasfState
    """
    network = source.network
    truth = monitor_stats if monitor_stats is not None else source.statistics()
    rng = np.random.default_rng() if rng is None else rng
    X = initial_filter(problem, truth, network, rng) if x0 is None else np.array(x0, dtype=float)
    state = DasfState(network, X, 0, 1, [], monitor_objective(problem, truth, X))
    per_iter_tx = scalars_transmitted(problem, network, N)
    quiet = 0

    while state.i < budget:
        i, q = state.i, state.q
        token = draw_batch(source, N)
        batches = None if isinstance(token, CovarianceToken) else token
        payloads = {k: node_payload(problem, network, state.X, k, batches)
                    for k in _other_nodes(network, q)}
        local = assemble_local_problem(
            problem, network, state.X, q, payloads, batches=batches,
            global_stats=token.statistics if batches is None else None, i=i)

        x_init = warm_start(network, state.X, q)
        n_i = solver.n_at(i)
        run = _solvers.solve(solver, local.problem, local.stats, x_init, n_i)
        if not np.isfinite(run.values[-1]):
            raise SolverDivergenceError(
                f"local objective is not finite at iteration {i} (node {q})", state)
        cert = _solvers.certify_contract(run, local.problem, local.stats, warm_start=x_init)
        Xt = run.iterates[-1]

        new_state = apply_update(state, Xt)
        X_new = new_state.X
        residual = float(np.linalg.norm(state.X - X_new))
        L_new = monitor_objective(problem, truth, X_new)
        w_local = stationarity_measure(local.problem, local.stats, Xt).w
        try:
            w_global = stationarity_measure(problem, truth, X_new).w
        except CapabilityError:
            w_global = np.nan

        checks = {}
        if verify:
            checks = _verify_iteration(problem, truth, state, local, x_init, Xt, X_new, batches)

        state.trace.append(IterationTrace(
            i=i, q=q, objective=L_new, residual=residual, w=w_local, w_global=w_global,
            scalars_tx=per_iter_tx, n_iter=run.n, R_hat=cert.R_min, c_hat=cert.c_max,
            c1_ok=cert.c1_ok, c2_ok=cert.c2_ok, c3_ok=cert.c3_ok, checks=checks))
        state = new_state

        quiet = quiet + 1 if residual < stop_tol else 0
        if stop_tol > 0 and quiet >= network.K:
            break
    return state


def _verify_iteration(problem, stats, state, local, x_init, Xt, X_new, batches):
    C = local.lifting.C
    checks = {
        "lifting": float(np.max(np.abs(C @ x_init - state.X))),
        "update": float(np.max(np.abs(C @ Xt - X_new))),
    }
    L_local = evaluate_L(local.problem, local.stats, Xt)
    L_lift = evaluate_L(problem, stats if batches is None else _global_batch_stats(problem, batches), C @ Xt)
    if np.isfinite(L_local) and np.isfinite(L_lift):
        checks["objective"] = abs(L_local - L_lift) / max(1.0, abs(L_lift))
    else:
        checks["objective"] = 0.0 if L_local == L_lift else np.inf
    if batches is not None:
        z_global = filtered_output(X_new, batches["y"])
        z_local = local.batches["y"] @ Xt
        checks["output"] = float(np.max(np.abs(z_global - z_local)))
    return checks


def _global_batch_stats(problem, batches):
    return Statistics.from_batches({k: v.samples for k, v in batches.items()}, problem.moments)
