import numpy as np
import pytest

from hardy_bvp.errors import ConfigError
from hardy_bvp.lattice import FrequencyLattice, sphere_directions


def test_rejects_non_power_of_two():
    with pytest.raises(ConfigError):
        FrequencyLattice(1, 12)


def test_modes_include_nyquist_once():
    lat = FrequencyLattice(1, 8)
    assert sorted(lat.axis_modes) == list(range(-4, 4))


def test_unitary_fft_preserves_norm(rng):
    lat = FrequencyLattice(2, 8)
    v = rng.normal(size=(3,) + lat.shape) + 1j * rng.normal(size=(3,) + lat.shape)
    assert np.isclose(np.linalg.norm(lat.fft(v)), np.linalg.norm(v))
    assert np.allclose(lat.ifft(lat.fft(v)), v)


def test_l2_norm_of_cosine():
    lat = FrequencyLattice(1, 32)
    x = lat.points.reshape(-1)
    assert np.isclose(lat.l2_norm(np.cos(x)), np.sqrt(np.pi))


@pytest.mark.parametrize("n", [1, 2, 3, 4])
def test_sphere_directions_are_unit_and_nested(n):
    big = sphere_directions(n, 64)
    small = sphere_directions(n, 16)
    assert np.allclose(np.linalg.norm(big, axis=1), 1.0)
    # every coarse direction reappears in the fine set, so refinement sups are monotone
    dist = np.min(np.linalg.norm(small[:, None, :] - big[None, :, :], axis=-1), axis=1)
    assert np.all(dist < 1e-12)
