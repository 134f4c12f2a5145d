import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from dasf.errors import DeclaredSignalError, InsufficientSamplesError, ShapeError
from dasf.signals import (ORACLE, SAMPLED, CovarianceToken, MixtureSource, NetworkModel,
                          SampleBatch, Statistics, draw_batch, estimate_covariance,
                          partition_channels)


@given(st.lists(st.integers(1, 6), min_size=1, max_size=6))
def test_partition_is_contiguous_cover(channels):
    net = NetworkModel(tuple(channels), Q=1) if sum(channels) > 1 else None
    if net is None:
        return
    parts = partition_channels(net)
    assert [k for k, _ in parts] == list(range(1, len(channels) + 1))
    flat = [c for _, r in parts for c in r]
    assert flat == list(range(net.M))
    assert [len(r) for _, r in parts] == list(channels)


def test_network_validation():
    with pytest.raises(ShapeError):
        NetworkModel((2, 0), Q=1)
    with pytest.raises(ShapeError):
        NetworkModel((2, 2), Q=4)
    with pytest.raises(ShapeError):
        NetworkModel((), Q=1)


def test_covariance_of_known_batch():
    S = np.array([[1.0, 2.0], [3.0, -1.0], [0.0, 1.0]])
    expected = np.array([[10.0, -1.0], [-1.0, 6.0]]) / 3
    C = estimate_covariance(SampleBatch(S))
    assert np.allclose(C, expected)
    assert np.array_equal(C, C.T)


def test_covariance_needs_two_samples():
    with pytest.raises(InsufficientSamplesError):
        estimate_covariance(np.ones((1, 3)))


def test_sample_batch_is_read_only():
    batch = SampleBatch(np.zeros((4, 3)))
    with pytest.raises(ValueError):
        batch.samples[0, 0] = 1.0


def test_oracle_statistics_of_mixture():
    net = NetworkModel.uniform(2, 2, 1)
    a = np.array([1.0, -2.0, 0.5, 3.0])
    src = MixtureSource(net, a, source_var=2.0, noise_var=0.5)
    s = src.statistics()
    assert np.allclose(s["y"], 2.0 * np.outer(a, a) + 0.5 * np.eye(4))
    assert np.allclose(s[("d", "y")], 2.0 * a[None, :])
    assert ("n", "y") in s


def test_sample_covariance_converges_to_oracle():
    net = NetworkModel.uniform(2, 3, 1)
    rng = np.random.default_rng(3)
    src = MixtureSource.random(net, rng, mode=SAMPLED)
    batch = draw_batch(src, 200000, ["y"])["y"]
    err = np.abs(estimate_covariance(batch) - src.statistics()["y"]).max()
    assert err < 0.15 * np.abs(src.statistics()["y"]).max()


def test_draw_batch_modes():
    net = NetworkModel.uniform(2, 2, 1)
    rng = np.random.default_rng(0)
    oracle = MixtureSource.random(net, rng)
    assert isinstance(draw_batch(oracle, 10), CovarianceToken)
    sampled = MixtureSource.random(net, rng, mode=SAMPLED)
    batches = draw_batch(sampled, 10)
    assert batches["y"].samples.shape == (10, 4)
    assert batches["d"].samples.shape == (10, 1)
    assert batches["y"].node(2).shape == (10, 2)
    with pytest.raises(DeclaredSignalError):
        draw_batch(sampled, 10, ["x"])
    with pytest.raises(ValueError):
        draw_batch(sampled, 0)


def test_sampled_signals_are_consistent():
    net = NetworkModel.uniform(2, 2, 1)
    src = MixtureSource.random(net, np.random.default_rng(1), mode=SAMPLED)
    b = src.sample(5)
    assert np.allclose(b["y"].samples, b["d"].samples @ src.mixing.T + b["n"].samples)


def test_statistics_compress_is_congruence():
    rng = np.random.default_rng(2)
    R = rng.standard_normal((5, 5))
    R = R @ R.T
    c = rng.standard_normal((5, 1))
    C = rng.standard_normal((5, 3))
    stats = Statistics({("y", "y"): R, ("y", "d"): c, ("d", "d"): np.eye(1)})
    local = stats.compress(C)
    assert np.allclose(local["y"], C.T @ R @ C)
    assert np.allclose(local[("y", "d")], C.T @ c)
    assert np.allclose(local["d"], np.eye(1))


def test_batch_csv_round_trip(tmp_path):
    S = np.random.default_rng(0).standard_normal((3, 2))
    SampleBatch(S).to_csv(tmp_path / "b.csv")
    back = np.loadtxt(tmp_path / "b.csv", delimiter=",", skiprows=1)
    assert np.array_equal(back, S)


def test_mixing_shape_checked():
    with pytest.raises(ShapeError):
        MixtureSource(NetworkModel.uniform(2, 2, 1), np.ones((3, 1)))
