"""Gaussian RBF approximator with the leakage-modified adaptive weight law."""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np


def gaussian_basis(x, centers, width: float) -> np.ndarray:
    """phi_k(x) = exp(-||x - c_k||^2 / (2 width^2)).

    ``x`` has shape (..., dim) and ``centers`` (K, dim); the result has shape (..., K).
    """
    x = np.asarray(x, dtype=float)
    diff = x[..., None, :] - centers
    return np.exp(-np.einsum("...kd,...kd->...k", diff, diff) / (2.0 * width * width))


def grid_centers(lower, upper, count: int) -> np.ndarray:
    """Uniform tensor grid with ``count`` points per dimension, shape (count**dim, dim)."""
    lower = np.atleast_1d(np.asarray(lower, dtype=float))
    upper = np.atleast_1d(np.asarray(upper, dtype=float))
    axes = [np.linspace(lo, hi, count) for lo, hi in zip(lower, upper)]
    mesh = np.meshgrid(*axes, indexing="ij")
    return np.stack([m.ravel() for m in mesh], axis=-1)


@dataclass(frozen=True, eq=False)
class RbfNetwork:
    """Estimate f_hat(x) = W_hat^T phi(x).

    Attributes:
        centers: (K, dim) basis centers in state units.
        width: common Gaussian spread.
        weights: (K, out) weight estimate W_hat.
        adapt_gain: adaptation gain Gamma, a positive scalar or a (K, K) SPD matrix.
        leakage: sigma-modification coefficient, > 0 for the closed loop.
    """

    centers: np.ndarray
    width: float
    weights: np.ndarray
    adapt_gain: float | np.ndarray = 1.0
    leakage: float = 0.0

    def __post_init__(self):
        centers = np.atleast_2d(np.asarray(self.centers, dtype=float))
        weights = np.asarray(self.weights, dtype=float)
        if weights.ndim == 1:
            weights = weights[:, None]
        if weights.shape[0] != centers.shape[0]:
            raise ValueError(f"{centers.shape[0]} centers but weights have {weights.shape[0]} rows")
        if not self.width > 0:
            raise ValueError("width must be positive")
        if self.leakage < 0:
            raise ValueError("leakage must be nonnegative")
        gain = np.asarray(self.adapt_gain, dtype=float)
        if gain.ndim == 0:
            if not gain > 0:
                raise ValueError("adaptation gain must be positive")
        else:
            if gain.shape != (centers.shape[0],) * 2 or not np.allclose(gain, gain.T):
                raise ValueError("adaptation gain matrix must be symmetric K x K")
            if np.linalg.eigvalsh(gain).min() <= 0:
                raise ValueError("adaptation gain matrix must be positive definite")
        object.__setattr__(self, "centers", centers)
        object.__setattr__(self, "weights", weights)

    @classmethod
    def on_grid(cls, lower, upper, count: int = 5, out_dim: int = 1, width=None, **kw) -> RbfNetwork:
        """Zero-weight network with centers on a uniform grid; width defaults to the grid spacing."""
        centers = grid_centers(lower, upper, count)
        if width is None:
            span = np.atleast_1d(np.asarray(upper, float) - np.asarray(lower, float))
            width = float(span.min() / (count - 1))
        return cls(centers, width, np.zeros((centers.shape[0], out_dim)), **kw)

    @property
    def size(self) -> int:
        return self.centers.shape[0]

    def basis(self, x) -> np.ndarray:
        return gaussian_basis(x, self.centers, self.width)

    def approximate(self, x) -> np.ndarray:
        return self.basis(x) @ self.weights

    def weight_rate(self, x, z2) -> np.ndarray:
        """Gamma phi(x) z2^T - leakage * W_hat."""
        phi = self.basis(x)
        z2 = np.atleast_1d(np.asarray(z2, dtype=float))
        gain = np.asarray(self.adapt_gain, dtype=float)
        g_phi = gain * phi if gain.ndim == 0 else gain @ phi
        return np.outer(g_phi, z2) - self.leakage * self.weights

    def update_weights(self, x, z2, h: float) -> RbfNetwork:
        """One explicit Euler step of the adaptive law."""
        if not h > 0:
            raise ValueError("step must be positive")
        new = self.weights + h * self.weight_rate(x, z2)
        if not np.all(np.isfinite(new)):
            raise FloatingPointError("non-finite RBF weight update")
        return replace(self, weights=new)

    def weight_norm(self) -> float:
        return float(np.linalg.norm(self.weights))


def leakage_bound(w0_norm: float, gain_max: float, size: int, z_max: float, leakage: float) -> float:
    """Ultimate bound on ||W_hat||_F when ||z2|| <= z_max and every phi_k <= 1."""
    return max(w0_norm, gain_max * np.sqrt(size) * z_max / leakage)
