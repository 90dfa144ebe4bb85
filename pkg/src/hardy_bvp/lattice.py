"""Periodic grid on the torus [0, 2*pi)^n and its Fourier lattice."""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy.special import ndtri

from .errors import ConfigError


def _is_power_of_two(N):
    return N >= 2 and (N & (N - 1)) == 0


@dataclass(frozen=True)
class FrequencyLattice:
    """Modes -N/2..N/2-1 in each of n directions, stored in FFT order."""

    n: int
    N: int

    def __post_init__(self):
        if self.n < 1:
            raise ConfigError(f"dimension n must be >= 1, got {self.n}")
        if not _is_power_of_two(self.N):
            raise ConfigError(f"grid size N must be a power of two, got {self.N}")

    @property
    def shape(self):
        return (self.N,) * self.n

    @property
    def size(self):
        return self.N**self.n

    @cached_property
    def axis_modes(self):
        return np.fft.fftfreq(self.N, 1.0 / self.N)

    @cached_property
    def frequencies(self):
        """Array of shape (N**n, n) in C-order over the FFT-ordered grid."""
        grids = np.meshgrid(*([self.axis_modes] * self.n), indexing="ij")
        return np.stack([g.ravel() for g in grids], axis=1)

    @cached_property
    def points(self):
        x = 2 * np.pi * np.arange(self.N) / self.N
        grids = np.meshgrid(*([x] * self.n), indexing="ij")
        return np.stack([g.ravel() for g in grids], axis=1)

    @property
    def cell_volume(self):
        return (2 * np.pi / self.N) ** self.n

    @property
    def xi_min(self):
        return 1.0

    def nonzero_mask(self):
        return np.any(self.frequencies != 0, axis=1)

    def fft(self, values):
        """Unitary DFT over the trailing n axes."""
        axes = tuple(range(-self.n, 0))
        return np.fft.fftn(values, axes=axes, norm="ortho")

    def ifft(self, coeffs):
        axes = tuple(range(-self.n, 0))
        return np.fft.ifftn(coeffs, axes=axes, norm="ortho")

    def l2_norm(self, values):
        """L2(torus) norm of grid samples (summed over leading axes)."""
        return float(np.sqrt(self.cell_volume * np.sum(np.abs(values) ** 2)))


def _rd_sequence(count, dim):
    # Roberts' generalised golden-ratio sequence; prefixes are nested
    g = 2.0
    for _ in range(50):
        g = (1 + g) ** (1.0 / (dim + 1))
    alpha = np.array([g ** -(j + 1) for j in range(dim)]) % 1.0
    i = np.arange(1, count + 1)[:, None]
    return (0.5 + alpha[None, :] * i) % 1.0


def sphere_directions(n, count=512):
    """Deterministic direction samples on S^{n-1}.

    The sample set for ``2*count`` contains the set for ``count``, so a
    supremum over directions can only grow under refinement.
    """
    if n == 1:
        return np.array([[1.0], [-1.0]])
    if n == 2:
        theta = 2 * np.pi * np.arange(count) / count
        return np.stack([np.cos(theta), np.sin(theta)], axis=1)
    if n == 3:
        u = _rd_sequence(count, 2)
        z = 1 - 2 * u[:, 0]
        phi = 2 * np.pi * u[:, 1]
        r = np.sqrt(np.maximum(0.0, 1 - z * z))
        return np.stack([r * np.cos(phi), r * np.sin(phi), z], axis=1)
    u = _rd_sequence(count, n)
    g = ndtri(np.clip(u, 1e-12, 1 - 1e-12))
    return g / np.linalg.norm(g, axis=1, keepdims=True)
