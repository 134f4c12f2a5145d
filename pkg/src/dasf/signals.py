"""
Multichannel signals spread over the nodes of a sensor network.

A network-wide signal y(t) of M channels is partitioned over K nodes, node k
observing M_k contiguous channels.  Signals are zero-mean; second-order
statistics are either known exactly (oracle mode) or estimated from batches of
N samples (sampled mode).  Batches are stored with time along the rows.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import Iterable, Mapping

import numpy as np

from .errors import DeclaredSignalError, InsufficientSamplesError, ShapeError

ORACLE = "oracle"
SAMPLED = "sampled"

# signals that live on sensor channels and get compressed by the nodes
SENSOR_SIGNALS = frozenset({"y", "n"})


@dataclass(frozen=True)
class NetworkModel:
    """
    Node count and channel partition of a fully-connected sensor network.

    Parameters
    ----------
    channels : sequence of int
        Number of channels M_k observed by each node, in node order.
    Q : int
        Number of filter output channels.
    """

    channels: tuple
    Q: int

    def __post_init__(self):
        channels = tuple(int(c) for c in self.channels)
        object.__setattr__(self, "channels", channels)
        if len(channels) < 1:
            raise ShapeError("network needs at least one node")
        if any(c < 1 for c in channels):
            raise ShapeError(f"every node needs at least one channel, got {channels}")
        if self.Q < 1:
            raise ShapeError(f"Q must be positive, got {self.Q}")
        if self.Q >= sum(channels):
            raise ShapeError(f"Q={self.Q} must be smaller than M={sum(channels)}")

    @classmethod
    def uniform(cls, K, M_k, Q):
        return cls(channels=(M_k,) * K, Q=Q)

    @property
    def K(self):
        return len(self.channels)

    @property
    def M(self):
        return sum(self.channels)

    @property
    def offsets(self):
        return np.concatenate(([0], np.cumsum(self.channels))).astype(int)

    def channel_range(self, k):
        """Channel range of node ``k`` (1-based node index)."""
        off = self.offsets
        return range(int(off[k - 1]), int(off[k]))

    def split(self, X):
        """Return the per-node row blocks X_k of an M-row array (views)."""
        X = np.asarray(X)
        if X.shape[0] != self.M:
            raise ShapeError(f"expected {self.M} rows, got {X.shape[0]}")
        off = self.offsets
        return [X[off[k]:off[k + 1]] for k in range(self.K)]

    def stack(self, blocks):
        blocks = list(blocks)
        if len(blocks) != self.K:
            raise ShapeError(f"expected {self.K} blocks, got {len(blocks)}")
        for k, (b, m) in enumerate(zip(blocks, self.channels), start=1):
            if b.shape[0] != m:
                raise ShapeError(f"block of node {k} has {b.shape[0]} rows, expected {m}")
        return np.vstack(blocks)


def partition_channels(network):
    """
    Per-node channel ranges.

    Returns
    -------
    list of (int, range)
        ``(k, range)`` pairs with 1-based node index ``k``; the ranges are
        disjoint, contiguous, ordered, and cover ``range(M)``.
    """
    return [(k, network.channel_range(k)) for k in range(1, network.K + 1)]


@dataclass(frozen=True)
class SampleBatch:
    """
    N samples of one signal, rows are time samples.

    Sensor signals carry ``network`` so that node slices can be taken; target
    signals such as d(t) are not partitioned and leave it as ``None``.
    """

    samples: np.ndarray
    network: NetworkModel | None = None

    def __post_init__(self):
        s = np.asarray(self.samples, dtype=float)
        if s.ndim != 2:
            raise ShapeError("samples must be an N x channels array")
        if self.network is not None and s.shape[1] != self.network.M:
            raise ShapeError(f"batch has {s.shape[1]} columns, network has M={self.network.M}")
        s.setflags(write=False)
        object.__setattr__(self, "samples", s)

    @property
    def N(self):
        return self.samples.shape[0]

    def node(self, k):
        if self.network is None:
            raise ShapeError("batch is not partitioned over nodes")
        r = self.network.channel_range(k)
        return self.samples[:, r.start:r.stop]

    def nodes(self):
        return [self.node(k) for k in range(1, self.network.K + 1)]

    def to_csv(self, path):
        """Write the batch as CSV, header row holding channel indices."""
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(range(self.samples.shape[1]))
            for row in self.samples:
                writer.writerow([repr(float(v)) for v in row])


def _as_samples(batch):
    return batch.samples if isinstance(batch, SampleBatch) else np.asarray(batch, dtype=float)


def estimate_covariance(batch):
    """
    Sample covariance (1/N) S^T S of a zero-mean batch ``S`` (N x M).

    No mean is subtracted.  The result is exactly symmetric.
    """
    S = _as_samples(batch)
    N = S.shape[0]
    if N < 2:
        raise InsufficientSamplesError(f"need at least 2 samples, got {N}")
    C = S.T @ S / N
    return 0.5 * (C + C.T)


def estimate_cross_moment(a, b):
    """(1/N) A^T B for two aligned batches."""
    A, B = _as_samples(a), _as_samples(b)
    if A.shape[0] != B.shape[0]:
        raise ShapeError("batches are not time-aligned")
    if A.shape[0] < 2:
        raise InsufficientSamplesError(f"need at least 2 samples, got {A.shape[0]}")
    return A.T @ B / A.shape[0]


class Statistics:
    """
    Second-order moments E[a b^T] between named zero-mean signals.

    Moments are stored per ordered pair ``(a, b)``; the transposed pair is
    served from the same array.  Signals named in ``sensor`` live on the
    sensor channels and are compressed by :meth:`compress`.
    """

    def __init__(self, moments, sensor=SENSOR_SIGNALS):
        self.sensor = frozenset(sensor)
        self._m = {}
        for (a, b), value in moments.items():
            value = np.array(value, dtype=float, ndmin=2)
            if a == b:
                value = 0.5 * (value + value.T)
            value.setflags(write=False)
            self._m[(a, b)] = value

    def __getitem__(self, key):
        a, b = (key, key) if isinstance(key, str) else key
        if (a, b) in self._m:
            return self._m[(a, b)]
        if (b, a) in self._m:
            return self._m[(b, a)].T
        raise DeclaredSignalError(f"no moment for signals {key!r}")

    def __contains__(self, key):
        a, b = (key, key) if isinstance(key, str) else key
        return (a, b) in self._m or (b, a) in self._m

    @property
    def pairs(self):
        return tuple(self._m)

    def compress(self, C):
        """
        Moments of the signals seen through the lifting map ``C``.

        Sensor signals s are replaced by C^T s, so E[a b^T] becomes
        C^T E[a b^T] C, C^T E[a b^T], or is left unchanged depending on which
        side carries a sensor signal.
        """
        out = {}
        for (a, b), value in self._m.items():
            if a in self.sensor:
                value = C.T @ value
            if b in self.sensor:
                value = value @ C
            out[(a, b)] = value
        return Statistics(out, self.sensor)

    @classmethod
    def from_batches(cls, batches, pairs, sensor=SENSOR_SIGNALS):
        """Estimate the requested moments from time-aligned batches."""
        out = {}
        for a, b in pairs:
            if a not in batches or b not in batches:
                raise DeclaredSignalError(f"no batch for signals {(a, b)!r}")
            if a == b:
                out[(a, b)] = estimate_covariance(batches[a])
            else:
                out[(a, b)] = estimate_cross_moment(batches[a], batches[b])
        return cls(out, sensor)


@dataclass(frozen=True)
class CovarianceToken:
    """Stand-in for a batch in oracle mode: use these exact statistics instead."""

    statistics: Statistics
    N: int


@dataclass
class MixtureSource:
    """
    Zero-mean mixture y(t) = A d(t) + n(t) with white Gaussian noise.

    ``d(t)`` holds S independent Gaussian sources of variance ``source_var``,
    mixed into the M sensor channels by ``mixing`` (M x S); ``n(t)`` is white
    Gaussian noise of variance ``noise_var`` per channel.  Declared signals
    are ``y``, ``n`` and ``d``.
    """

    network: NetworkModel
    mixing: np.ndarray
    source_var: float = 1.0
    noise_var: float = 10.0
    mode: str = ORACLE
    rng: np.random.Generator = field(default_factory=np.random.default_rng)

    signals = ("y", "n", "d")

    def __post_init__(self):
        self.mixing = np.array(self.mixing, dtype=float, ndmin=2)
        if self.mixing.shape[0] == 1 and self.network.M != 1:
            self.mixing = self.mixing.T
        if self.mixing.shape[0] != self.network.M:
            raise ShapeError(f"mixing has {self.mixing.shape[0]} rows, M={self.network.M}")
        if self.mode not in (ORACLE, SAMPLED):
            raise ValueError(f"unknown statistics mode {self.mode!r}")
        if self.source_var < 0 or self.noise_var <= 0:
            raise ValueError("variances must be positive")

    @classmethod
    def random(cls, network, rng, sources=1, **kwargs):
        """Draw the mixing matrix with i.i.d. N(0, 1) entries from ``rng``."""
        mixing = rng.standard_normal((network.M, sources))
        return cls(network=network, mixing=mixing, rng=rng, **kwargs)

    @property
    def S(self):
        return self.mixing.shape[1]

    def statistics(self):
        """Exact moments of the mixture model."""
        A, M = self.mixing, self.network.M
        Rnn = self.noise_var * np.eye(M)
        return Statistics({
            ("y", "y"): self.source_var * (A @ A.T) + Rnn,
            ("n", "n"): Rnn,
            ("y", "n"): Rnn,
            ("y", "d"): self.source_var * A,
            ("d", "d"): self.source_var * np.eye(self.S),
        })

    def sample(self, N, signals=None):
        signals = self.signals if signals is None else tuple(signals)
        for name in signals:
            if name not in self.signals:
                raise DeclaredSignalError(f"source does not declare signal {name!r}")
        d = np.sqrt(self.source_var) * self.rng.standard_normal((N, self.S))
        n = np.sqrt(self.noise_var) * self.rng.standard_normal((N, self.network.M))
        y = d @ self.mixing.T + n
        raw = {"y": y, "n": n, "d": d}
        return {name: SampleBatch(raw[name], self.network if name in SENSOR_SIGNALS else None)
                for name in signals}


def draw_batch(source, N, signals=None):
    """
    Collect the next batch of ``N`` samples from ``source``.

    In oracle mode a :class:`CovarianceToken` carrying the exact statistics is
    returned instead of samples; in sampled mode a dict mapping signal names
    to :class:`SampleBatch` objects.
    """
    if N < 1:
        raise ValueError(f"N must be positive, got {N}")
    if signals is not None:
        for name in signals:
            if name not in source.signals:
                raise DeclaredSignalError(f"source does not declare signal {name!r}")
    if source.mode == ORACLE:
        return CovarianceToken(source.statistics(), N)
    return source.sample(N, signals)
