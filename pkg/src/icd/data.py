"""Synthetic 2-D Gaussian-mixture data with one class per mode."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class GaussianMixture:
    weights: np.ndarray  # (K,)
    means: np.ndarray  # (K, D)
    sigmas: np.ndarray  # (K,) isotropic std per component

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=np.float64)
        if w.ndim != 1 or len(w) != len(self.means) or len(w) != len(self.sigmas):
            raise ValueError("weights, means and sigmas must have matching length")
        if np.any(w < 0) or not np.isclose(w.sum(), 1.0):
            raise ValueError(f"mixture weights must be non-negative and sum to 1, got {w.sum()}")
        if np.any(np.asarray(self.sigmas) <= 0):
            raise ValueError("component sigmas must be positive")

    @property
    def n_classes(self) -> int:
        return len(self.weights)

    @property
    def dim(self) -> int:
        return self.means.shape[1]

    def sample(self, n: int, rng: np.random.Generator, classes=None):
        """Draw ``n`` labelled points; ``classes`` pins the label of every draw."""
        if classes is None:
            c = rng.choice(self.n_classes, size=n, p=self.weights)
        else:
            c = np.broadcast_to(np.asarray(classes, dtype=np.int64), (n,)).copy()
        x = self.means[c] + self.sigmas[c, None] * rng.standard_normal((n, self.dim))
        return x, c

    def nearest_mode(self, x: np.ndarray) -> np.ndarray:
        d = ((x[:, None, :] - self.means[None]) ** 2).sum(-1)
        return d.argmin(axis=1)

    def component(self, k: int) -> "GaussianMixture":
        return GaussianMixture(np.ones(1), self.means[k:k + 1].copy(), self.sigmas[k:k + 1].copy())


def ring_mixture(k: int = 8, radius: float = 4.0, sigma: float = 0.3) -> GaussianMixture:
    angles = 2 * np.pi * np.arange(k) / k
    means = radius * np.stack([np.cos(angles), np.sin(angles)], axis=1)
    return GaussianMixture(np.full(k, 1.0 / k), means, np.full(k, float(sigma)))


def standard_normal(dim: int = 2) -> GaussianMixture:
    return GaussianMixture(np.ones(1), np.zeros((1, dim)), np.ones(1))


def angular_offset(x: np.ndarray, mix: GaussianMixture, modes: np.ndarray) -> np.ndarray:
    """Signed angle of each point relative to the angle of its assigned mode, in (-pi, pi]."""
    a = np.arctan2(x[:, 1], x[:, 0])
    m = np.arctan2(mix.means[modes, 1], mix.means[modes, 0])
    return np.angle(np.exp(1j * (a - m)))
