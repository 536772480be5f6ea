"""Containers for grid fields and distributional landmark data.

Grid-side objects wrap a :class:`~metamorph.domain.Domain` plus sample
arrays. Landmark-side objects are plain point/vector bundles on the plane.
Velocity-like objects share an informal protocol: ``velocity_at(points)``
returning ``(m, d)`` samples and ``gradient_at(points)`` returning
``(m, d, d)`` Jacobians with ``G[a, i, j] = d(u_i)/d(x_j)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .domain import Domain, divergence, gradient, interpolate, jacobian


def _as2d(arr) -> np.ndarray:
    out = np.asarray(arr, dtype=float)
    if out.ndim == 1:
        out = out[None, :]
    return out


@dataclass
class ScalarField:
    """Scalar grid samples; also used for scalar densities."""

    domain: Domain
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != self.domain.shape:
            raise ValueError(f"values shape {self.values.shape} != domain shape {self.domain.shape}")

    @classmethod
    def zeros(cls, domain: Domain) -> "ScalarField":
        return cls(domain, np.zeros(domain.shape))

    def l2(self) -> float:
        return float(np.sqrt(self.domain.integrate(self.values ** 2)))

    def at(self, points) -> np.ndarray:
        return interpolate(self.values, points, self.domain)

    def gradient_values(self) -> np.ndarray:
        return gradient(self.values, self.domain)

    def __add__(self, other):
        return ScalarField(self.domain, self.values + other.values)

    def __sub__(self, other):
        return ScalarField(self.domain, self.values - other.values)

    def __mul__(self, a: float):
        return ScalarField(self.domain, self.values * a)

    __rmul__ = __mul__


@dataclass
class VectorField:
    """Eulerian velocity sampled on the grid, shape ``(dim, *shape)``."""

    domain: Domain
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        expected = (self.domain.dim,) + self.domain.shape
        if self.values.shape != expected:
            raise ValueError(f"values shape {self.values.shape} != {expected}")

    @classmethod
    def zeros(cls, domain: Domain) -> "VectorField":
        return cls(domain, np.zeros((domain.dim,) + domain.shape))

    def l2(self) -> float:
        return float(np.sqrt(self.domain.integrate(np.sum(self.values ** 2, axis=0))))

    def velocity_at(self, points) -> np.ndarray:
        pts = _as2d(points)
        return np.stack([interpolate(self.values[i], pts, self.domain)
                         for i in range(self.domain.dim)], axis=1)

    def gradient_at(self, points) -> np.ndarray:
        pts = _as2d(points)
        jac = jacobian(self.values, self.domain)
        out = np.empty((pts.shape[0], self.domain.dim, self.domain.dim))
        for i in range(self.domain.dim):
            for j in range(self.domain.dim):
                out[:, i, j] = interpolate(jac[i, j], pts, self.domain)
        return out

    def divergence_values(self) -> np.ndarray:
        return divergence(self.values, self.domain)

    def __add__(self, other):
        return VectorField(self.domain, self.values + other.values)

    def __sub__(self, other):
        return VectorField(self.domain, self.values - other.values)

    def __mul__(self, a: float):
        return VectorField(self.domain, self.values * a)

    __rmul__ = __mul__


@dataclass
class OneFormDensity:
    """Covector-density samples (momentum per unit volume), shape ``(dim, *shape)``."""

    domain: Domain
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        expected = (self.domain.dim,) + self.domain.shape
        if self.values.shape != expected:
            raise ValueError(f"values shape {self.values.shape} != {expected}")

    @classmethod
    def zeros(cls, domain: Domain) -> "OneFormDensity":
        return cls(domain, np.zeros((domain.dim,) + domain.shape))

    def l2(self) -> float:
        return float(np.sqrt(self.domain.integrate(np.sum(self.values ** 2, axis=0))))

    def at(self, points) -> np.ndarray:
        pts = _as2d(points)
        return np.stack([interpolate(self.values[i], pts, self.domain)
                         for i in range(self.domain.dim)], axis=1)

    def __add__(self, other):
        return OneFormDensity(self.domain, self.values + other.values)

    def __sub__(self, other):
        return OneFormDensity(self.domain, self.values - other.values)

    def __mul__(self, a: float):
        return OneFormDensity(self.domain, self.values * a)

    __rmul__ = __mul__


@dataclass
class PointMomentum:
    """Distributional momentum: a sum of weighted point masses.

    Represents sum_a w_a delta(x - x_a) with points ``(k, d)`` and weights
    ``(k, d)``. Pairing against any velocity-protocol object is exact.
    """

    points: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        self.points = _as2d(self.points)
        self.weights = _as2d(self.weights)
        if self.points.shape != self.weights.shape:
            raise ValueError("points and weights shapes differ")
        if not np.all(np.isfinite(self.weights)):
            raise ValueError("point momentum weights must be finite")

    @property
    def count(self) -> int:
        return self.points.shape[0]

    def stacked_with(self, other: "PointMomentum") -> "PointMomentum":
        return PointMomentum(np.vstack([self.points, other.points]),
                             np.vstack([self.weights, other.weights]))


@dataclass
class Landmarks:
    """Template state for the landmark structure: bare positions ``(k, d)``."""

    points: np.ndarray

    def __post_init__(self):
        self.points = _as2d(self.points)

    @property
    def count(self) -> int:
        return self.points.shape[0]

    @property
    def dim(self) -> int:
        return self.points.shape[1]


@dataclass
class LandmarkTangent:
    """Tangent template vectors attached to landmark positions."""

    points: np.ndarray
    vectors: np.ndarray

    def __post_init__(self):
        self.points = _as2d(self.points)
        self.vectors = _as2d(self.vectors)
        if self.points.shape != self.vectors.shape:
            raise ValueError("points and vectors shapes differ")


@dataclass
class LandmarkCotangent:
    """Cotangent template covectors attached to landmark positions."""

    points: np.ndarray
    covectors: np.ndarray

    def __post_init__(self):
        self.points = _as2d(self.points)
        self.covectors = _as2d(self.covectors)
        if self.points.shape != self.covectors.shape:
            raise ValueError("points and covectors shapes differ")


@dataclass
class ConstantVelocity:
    """Spatially constant velocity field on the plane (test and noise helper)."""

    vector: np.ndarray

    def __post_init__(self):
        self.vector = np.atleast_1d(np.asarray(self.vector, dtype=float))

    def velocity_at(self, points) -> np.ndarray:
        pts = _as2d(points)
        return np.broadcast_to(self.vector, (pts.shape[0], self.vector.size)).copy()

    def gradient_at(self, points) -> np.ndarray:
        pts = _as2d(points)
        d = self.vector.size
        return np.zeros((pts.shape[0], d, d))


@dataclass
class ScaledVelocitySum:
    """Linear combination sum_i c_i * v_i of velocity-protocol objects."""

    terms: list = field(default_factory=list)

    def velocity_at(self, points) -> np.ndarray:
        pts = _as2d(points)
        out = None
        for coef, vel in self.terms:
            term = coef * vel.velocity_at(pts)
            out = term if out is None else out + term
        if out is None:
            raise ValueError("empty velocity sum")
        return out

    def gradient_at(self, points) -> np.ndarray:
        pts = _as2d(points)
        out = None
        for coef, vel in self.terms:
            term = coef * vel.gradient_at(pts)
            out = term if out is None else out + term
        if out is None:
            raise ValueError("empty velocity sum")
        return out
