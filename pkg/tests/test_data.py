import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from icd.data import GaussianMixture, angular_offset, ring_mixture, standard_normal
from icd.rng import stream


def test_ring_geometry():
    mix = ring_mixture()
    assert mix.n_classes == 8 and mix.dim == 2
    np.testing.assert_allclose(np.linalg.norm(mix.means, axis=1), 4.0)
    np.testing.assert_allclose(mix.weights.sum(), 1.0)
    np.testing.assert_allclose(mix.sigmas, 0.3)


def test_samples_cluster_at_their_labels(mix):
    x, c = mix.sample(4096, stream(0, "t"))
    assert np.mean(mix.nearest_mode(x) == c) > 0.999
    assert np.bincount(c, minlength=8).min() > 400


def test_pinned_classes(mix):
    _, c = mix.sample(10, stream(0, "t"), classes=3)
    assert np.all(c == 3)


def test_same_stream_same_samples(mix):
    a, _ = mix.sample(16, stream(5, "x"))
    b, _ = mix.sample(16, stream(5, "x"))
    c, _ = mix.sample(16, stream(5, "y"))
    np.testing.assert_array_equal(a, b)
    assert not np.array_equal(a, c)


def test_invalid_mixtures_rejected():
    with pytest.raises(ValueError):
        GaussianMixture(np.array([0.5, 0.6]), np.zeros((2, 2)), np.ones(2))
    with pytest.raises(ValueError):
        GaussianMixture(np.array([1.0]), np.zeros((1, 2)), np.zeros(1))


def test_component_and_standard_normal(mix):
    comp = mix.component(2)
    assert comp.n_classes == 1
    np.testing.assert_array_equal(comp.means[0], mix.means[2])
    sn = standard_normal()
    np.testing.assert_array_equal(sn.means, np.zeros((1, 2)))


@given(st.integers(0, 7), st.floats(-1.0, 1.0))
@settings(max_examples=30, deadline=None)
def test_angular_offset_recovers_rotation(k, delta):
    mix = ring_mixture()
    ang = 2 * np.pi * k / 8 + delta
    x = 4.0 * np.array([[np.cos(ang), np.sin(ang)]])
    np.testing.assert_allclose(angular_offset(x, mix, np.array([k])), [delta], atol=1e-9)


def test_streams_are_independent_of_consumers():
    a = stream(0, "icd", "cd_rev", 5).standard_normal(4)
    stream(0, "icd", "pres_f", 5).standard_normal(100)
    np.testing.assert_array_equal(a, stream(0, "icd", "cd_rev", 5).standard_normal(4))
    assert not np.array_equal(a, stream(1, "icd", "cd_rev", 5).standard_normal(4))
    assert not np.array_equal(a, stream(0, "icd", "cd_rev", 6).standard_normal(4))
