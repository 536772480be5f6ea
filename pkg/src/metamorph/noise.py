"""Cylindrical noise: fixed spatial correlation fields with Brownian drivers.

The stochastic transport velocity is u dt + sum_i xi_i dW^i with
time-independent fields xi_i describing the spatial correlations of the
noise and one independent Brownian motion per field. Modes are analytic
objects (constant, Fourier, Gaussian bump) so that landmark runs get exact
point evaluations and gradients; image runs sample them once onto the grid.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .domain import Domain, TWO_PI
from .fields import VectorField, _as2d


@dataclass(frozen=True)
class ConstantMode:
    """Spatially constant correlation field xi(x) = vector."""

    vector: tuple

    def velocity_at(self, points) -> np.ndarray:
        pts = _as2d(points)
        vec = np.asarray(self.vector, dtype=float)
        return np.broadcast_to(vec, (pts.shape[0], vec.size)).copy()

    def gradient_at(self, points) -> np.ndarray:
        pts = _as2d(points)
        d = len(self.vector)
        return np.zeros((pts.shape[0], d, d))

    def velocity_and_gradient_at(self, points):
        return self.velocity_at(points), self.gradient_at(points)

    def grid_field(self, domain: Domain) -> VectorField:
        vec = np.asarray(self.vector, dtype=float)
        vals = np.stack([np.full(domain.shape, vec[i]) for i in range(domain.dim)])
        return VectorField(domain, vals)


@dataclass(frozen=True)
class FourierMode:
    """Single-harmonic field xi(x) = amplitude * trig(k . x) e_component."""

    component: int
    wavevector: tuple
    amplitude: float = 1.0
    phase: str = "cos"

    def __post_init__(self):
        if self.phase not in ("cos", "sin"):
            raise ValueError("phase must be 'cos' or 'sin'")

    def _profile(self, pts: np.ndarray) -> np.ndarray:
        k = np.asarray(self.wavevector, dtype=float)
        arg = pts @ k
        return np.cos(arg) if self.phase == "cos" else np.sin(arg)

    def _profile_grad(self, pts: np.ndarray) -> np.ndarray:
        k = np.asarray(self.wavevector, dtype=float)
        arg = pts @ k
        dtrig = -np.sin(arg) if self.phase == "cos" else np.cos(arg)
        return dtrig[:, None] * k[None, :]

    def velocity_at(self, points) -> np.ndarray:
        pts = _as2d(points)
        d = pts.shape[1]
        out = np.zeros((pts.shape[0], d))
        out[:, self.component] = self.amplitude * self._profile(pts)
        return out

    def gradient_at(self, points) -> np.ndarray:
        pts = _as2d(points)
        d = pts.shape[1]
        out = np.zeros((pts.shape[0], d, d))
        out[:, self.component, :] = self.amplitude * self._profile_grad(pts)
        return out

    def velocity_and_gradient_at(self, points):
        return self.velocity_at(points), self.gradient_at(points)

    def grid_field(self, domain: Domain) -> VectorField:
        pts = domain.nodes()
        vals = self.velocity_at(pts).T.reshape((domain.dim,) + domain.shape)
        return VectorField(domain, vals)


@dataclass(frozen=True)
class GaussianBumpMode:
    """Localized field xi(x) = amplitude * exp(-|x - center|^2 / (2 width^2)) e_component.

    Intended for landmark runs on the plane (the bump is not periodic).
    """

    center: tuple
    amplitude: float = 1.0
    width: float = 1.0
    component: int = 0

    def _profile(self, pts: np.ndarray) -> np.ndarray:
        c = np.asarray(self.center, dtype=float)
        r_sq = np.sum((pts - c) ** 2, axis=1)
        return self.amplitude * np.exp(-0.5 * r_sq / self.width ** 2)

    def velocity_at(self, points) -> np.ndarray:
        pts = _as2d(points)
        d = pts.shape[1]
        out = np.zeros((pts.shape[0], d))
        out[:, self.component] = self._profile(pts)
        return out

    def gradient_at(self, points) -> np.ndarray:
        pts = _as2d(points)
        d = pts.shape[1]
        c = np.asarray(self.center, dtype=float)
        prof = self._profile(pts)
        out = np.zeros((pts.shape[0], d, d))
        out[:, self.component, :] = -(pts - c) / self.width ** 2 * prof[:, None]
        return out

    def velocity_and_gradient_at(self, points):
        pts = _as2d(points)
        d = pts.shape[1]
        c = np.asarray(self.center, dtype=float)
        prof = self._profile(pts)
        vel = np.zeros((pts.shape[0], d))
        vel[:, self.component] = prof
        grad = np.zeros((pts.shape[0], d, d))
        grad[:, self.component, :] = -(pts - c) / self.width ** 2 * prof[:, None]
        return vel, grad

    def grid_field(self, domain: Domain) -> VectorField:
        raise TypeError("Gaussian bump noise modes are not periodic; use them on the plane")


@dataclass(frozen=True)
class NoiseBasis:
    """Finite collection of correlation fields; empty basis means deterministic."""

    modes: tuple = field(default_factory=tuple)

    @property
    def n_modes(self) -> int:
        return len(self.modes)

    def grid_fields(self, domain: Domain) -> list[VectorField]:
        return [mode.grid_field(domain) for mode in self.modes]

    @classmethod
    def none(cls) -> "NoiseBasis":
        return cls(modes=())

    @classmethod
    def constant(cls, vectors) -> "NoiseBasis":
        return cls(modes=tuple(ConstantMode(tuple(map(float, v))) for v in vectors))

    @classmethod
    def fourier(cls, domain: Domain, n_modes: int, amplitude: float = 0.1) -> "NoiseBasis":
        """Lowest-harmonic vector modes, alternating cos/sin and components."""
        unit = TWO_PI / domain.length
        modes = []
        j = 0
        while len(modes) < n_modes:
            component = j % domain.dim
            phase = "cos" if (j // domain.dim) % 2 == 0 else "sin"
            harmonic = 1 + j // (2 * domain.dim)
            wavevector = [0.0] * domain.dim
            wavevector[component] = harmonic * unit
            modes.append(FourierMode(component=component, wavevector=tuple(wavevector),
                                     amplitude=amplitude, phase=phase))
            j += 1
        return cls(modes=tuple(modes))

    @classmethod
    def gaussian_bumps(cls, centers, amplitudes, widths, components) -> "NoiseBasis":
        modes = tuple(
            GaussianBumpMode(center=tuple(map(float, c)), amplitude=float(a),
                             width=float(w), component=int(comp))
            for c, a, w, comp in zip(centers, amplitudes, widths, components)
        )
        return cls(modes=modes)


@dataclass(frozen=True)
class BrownianDriver:
    """Reproducible per-trajectory source of Brownian increments.

    The stream is a pure function of (master_seed, trajectory_index):
    identical inputs give bit-identical increments, and distinct
    trajectory indices give independent streams. Increments are
    N(0, dt), independent across steps and modes.
    """

    master_seed: int
    trajectory_index: int = 0
    dt: float = 1e-3
    n_steps: int = 1000
    n_modes: int = 1

    def increments(self) -> np.ndarray:
        """Increment array of shape (n_steps, n_modes)."""
        seq = np.random.SeedSequence(self.master_seed, spawn_key=(self.trajectory_index,))
        rng = np.random.default_rng(seq)
        return rng.standard_normal((self.n_steps, self.n_modes)) * np.sqrt(self.dt)


def coarsen_increments(dw: np.ndarray, factor: int) -> np.ndarray:
    """Sum fine increments in blocks, giving the same Brownian path at a coarser step.

    Exact block summation keeps pathwise refinement studies meaningful.
    """
    n_steps, n_modes = dw.shape
    if n_steps % factor != 0:
        raise ValueError(f"cannot coarsen {n_steps} steps by factor {factor}")
    return dw.reshape(n_steps // factor, factor, n_modes).sum(axis=1)
