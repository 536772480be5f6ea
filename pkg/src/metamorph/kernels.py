"""Gaussian reproducing kernel and kernel-represented velocity fields.

The kernel is the Green's function of the norm on velocity fields in the
landmark structure: momenta are weighted point masses and the associated
velocity is the kernel sum u(x) = sum_b K(x - q_b) p_b.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .fields import PointMomentum, _as2d


@dataclass(frozen=True)
class Kernel:
    """Isotropic Gaussian kernel K(z) = amplitude * exp(-|z|^2 / (2 ls^2))."""

    length_scale: float = 1.0
    amplitude: float = 1.0
    kind: str = "gaussian"

    def __post_init__(self):
        if self.kind != "gaussian":
            raise ValueError(f"unsupported kernel kind {self.kind!r}")
        if self.length_scale <= 0 or self.amplitude <= 0:
            raise ValueError("kernel length_scale and amplitude must be positive")

    def value(self, disp: np.ndarray) -> np.ndarray:
        """K at displacement vectors, shape (...,) from input (..., d)."""
        disp = np.asarray(disp, dtype=float)
        r_sq = np.sum(disp ** 2, axis=-1)
        return self.amplitude * np.exp(-0.5 * r_sq / self.length_scale ** 2)

    def gradient(self, disp: np.ndarray) -> np.ndarray:
        """Gradient of K with respect to the displacement, shape (..., d)."""
        disp = np.asarray(disp, dtype=float)
        k = self.value(disp)
        return -disp / self.length_scale ** 2 * k[..., None]


def scalar_kernel_matrix(points: np.ndarray, kernel: Kernel) -> np.ndarray:
    """Pairwise kernel values K(q_a - q_b), shape (k, k)."""
    pts = _as2d(points)
    disp = pts[:, None, :] - pts[None, :, :]
    return kernel.value(disp)


def kernel_matrix(points: np.ndarray, kernel: Kernel) -> np.ndarray:
    """Block kernel matrix with k x k blocks K(q_a - q_b) * I_d.

    Symmetric positive semidefinite (strictly positive definite for
    distinct points with a Gaussian kernel).
    """
    pts = _as2d(points)
    d = pts.shape[1]
    return np.kron(scalar_kernel_matrix(pts, kernel), np.eye(d))


@dataclass
class KernelVelocity:
    """Velocity field u(x) = sum_b K(x - c_b) w_b induced by point momenta."""

    kernel: Kernel
    centers: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        self.centers = _as2d(self.centers)
        self.weights = _as2d(self.weights)
        if self.centers.shape != self.weights.shape:
            raise ValueError("centers and weights shapes differ")

    @classmethod
    def from_momentum(cls, momentum: PointMomentum, kernel: Kernel) -> "KernelVelocity":
        return cls(kernel, momentum.points, momentum.weights)

    def velocity_at(self, points) -> np.ndarray:
        pts = _as2d(points)
        disp = pts[:, None, :] - self.centers[None, :, :]
        return self.kernel.value(disp) @ self.weights

    def gradient_at(self, points) -> np.ndarray:
        """Jacobians G[a, i, j] = d(u_i)/d(x_j) at the given points."""
        pts = _as2d(points)
        disp = pts[:, None, :] - self.centers[None, :, :]
        grad_k = self.kernel.gradient(disp)          # (m, k, d): dK/dx_j
        return np.einsum("mbj,bi->mij", grad_k, self.weights)

    def velocity_and_gradient_at(self, points) -> tuple[np.ndarray, np.ndarray]:
        """Velocity and Jacobian with one shared kernel evaluation."""
        pts = _as2d(points)
        disp = pts[:, None, :] - self.centers[None, :, :]
        kv = self.kernel.value(disp)
        grad_k = -disp / self.kernel.length_scale ** 2 * kv[..., None]
        return kv @ self.weights, np.einsum("mbj,bi->mij", grad_k, self.weights)
