"""Discretized Lie-algebraic operator kit.

Pairings, Lie derivatives, the bracket ``ad`` and its dual ``ad*``, the
diamond and star operations, and the inertia operator relating velocities
to momenta. Sign conventions:

* the action of a velocity ``u`` on a scalar image ``n`` is the pushforward
  derivative ``u n = -u . grad(n)``, so template transport reads
  ``dn/dt + u . grad(n) = nu``;
* for landmarks the action on positions is evaluation, ``(u q)_a = u(q_a)``.

Every dual operator is the continuum adjoint discretized spectrally. On a
periodic grid the resulting duality identities

    <n* diamond n, u> = -<n*, u n>
    <sigma, u omega>  = <u star sigma, omega>
    <ad*_u m, v>      = <m, ad_u v>

hold to round-off as long as the grid resolves the products involved
(band-limited inputs, no aliasing).
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .domain import Domain, divergence, gradient, jacobian, k_squared
from .fields import (
    LandmarkCotangent,
    Landmarks,
    LandmarkTangent,
    OneFormDensity,
    PointMomentum,
    ScalarField,
    VectorField,
)
from .kernels import Kernel, KernelVelocity, scalar_kernel_matrix


@dataclass(frozen=True)
class InertiaOperator:
    """Spectral Helmholtz-power operator L = (1 + alpha^2 |k|^2)^power.

    Symmetric positive definite for any alpha >= 0 and integer power, hence
    always invertible; the inverse is the smoothing kernel of the velocity
    norm on grids.
    """

    alpha: float = 1.0
    power: int = 1
    kind: str = "helmholtz_power"

    def __post_init__(self):
        if self.kind != "helmholtz_power":
            raise ValueError(f"unsupported inertia operator kind {self.kind!r}")
        if self.alpha < 0:
            raise ValueError("alpha must be nonnegative")
        if self.power not in (1, 2):
            raise ValueError("power must be 1 or 2")

    def multiplier(self, domain: Domain) -> np.ndarray:
        return _inertia_multiplier(self, domain)


@lru_cache(maxsize=None)
def _inertia_multiplier(op: InertiaOperator, domain: Domain) -> np.ndarray:
    return (1.0 + op.alpha ** 2 * k_squared(domain)) ** op.power


def _apply_multiplier(values: np.ndarray, mult: np.ndarray) -> np.ndarray:
    return np.stack([np.real(np.fft.ifftn(np.fft.fftn(comp) * mult)) for comp in values])


# --------------------------------------------------------------------------
# pairings

def pair(m, u) -> float:
    """Duality pairing <m, u> of a momentum with a velocity field.

    Grid form: quadrature of the pointwise dot product. Distributional
    form: exact evaluation sum_a p_a . u(q_a).
    """
    if isinstance(m, OneFormDensity) and isinstance(u, VectorField):
        if m.domain != u.domain:
            raise ValueError("pair: domain mismatch")
        return m.domain.integrate(np.sum(m.values * u.values, axis=0))
    if isinstance(m, PointMomentum):
        return float(np.sum(m.weights * u.velocity_at(m.points)))
    raise TypeError(f"pair: unsupported combination ({type(m).__name__}, {type(u).__name__})")


def scalar_pair(a: ScalarField, b: ScalarField) -> float:
    """Pairing of a scalar density with a scalar function (or vice versa)."""
    if a.domain != b.domain:
        raise ValueError("scalar_pair: domain mismatch")
    return a.domain.integrate(a.values * b.values)


def template_pair(sigma, nu) -> float:
    """Pairing of a cotangent template with a tangent template."""
    if isinstance(sigma, ScalarField):
        return scalar_pair(sigma, nu)
    if isinstance(sigma, LandmarkCotangent) and isinstance(nu, LandmarkTangent):
        return float(np.sum(sigma.covectors * nu.vectors))
    raise TypeError("template_pair: mismatched template structures")


# --------------------------------------------------------------------------
# Lie derivatives and the bracket

def lie_derivative_scalar(u: VectorField, f: ScalarField) -> ScalarField:
    """Action of u on a scalar image: u f = -u . grad(f)."""
    if u.domain != f.domain:
        raise ValueError("lie_derivative_scalar: domain mismatch")
    grad_f = gradient(f.values, f.domain)
    return ScalarField(f.domain, -np.sum(u.values * grad_f, axis=0))


def lie_derivative_oneform_density(xi: VectorField, m: OneFormDensity) -> OneFormDensity:
    """Lie derivative of a 1-form density along xi.

    Componentwise (xi . grad) m + (grad xi)^T m + m div(xi); this is the
    grid realization of ad*_xi as well.
    """
    if isinstance(m, PointMomentum):
        raise TypeError("lie_derivative_oneform_density: landmark momenta evolve "
                        "through their own finite-dimensional equations")
    if xi.domain != m.domain:
        raise ValueError("lie_derivative_oneform_density: domain mismatch")
    dom = m.domain
    jac_xi = jacobian(xi.values, dom)      # jac_xi[i, j] = d(xi_i)/d(x_j)
    div_xi = divergence(xi.values, dom)
    out = np.empty_like(m.values)
    for i in range(dom.dim):
        grad_mi = gradient(m.values[i], dom)
        advect = np.sum(xi.values * grad_mi, axis=0)
        stretch = sum(jac_xi[j, i] * m.values[j] for j in range(dom.dim))
        out[i] = advect + stretch + m.values[i] * div_xi
    return OneFormDensity(dom, out)


def ad(u: VectorField, v: VectorField) -> VectorField:
    """Adjoint action ad_u v = (grad u) v - (grad v) u of vector fields."""
    if u.domain != v.domain:
        raise ValueError("ad: domain mismatch")
    dom = u.domain
    ju = jacobian(u.values, dom)
    jv = jacobian(v.values, dom)
    out = np.empty_like(u.values)
    for i in range(dom.dim):
        out[i] = sum(ju[i, j] * v.values[j] - jv[i, j] * u.values[j] for j in range(dom.dim))
    return VectorField(dom, out)


def ad_star(u: VectorField, m: OneFormDensity) -> OneFormDensity:
    """Dual of ad on 1-form densities; coincides with the Lie derivative."""
    return lie_derivative_oneform_density(u, m)


# --------------------------------------------------------------------------
# diamond and star

def diamond(n_star, n):
    """Diamond operation, defined by <n* diamond n, u> = -<n*, u n>.

    Image structure: pi diamond n = pi grad(n), a covector density.
    Landmark structure: sigma diamond q = -sum_a sigma_a delta(q_a).
    """
    if isinstance(n_star, ScalarField) and isinstance(n, ScalarField):
        if n_star.domain != n.domain:
            raise ValueError("diamond: domain mismatch")
        return OneFormDensity(n.domain, n_star.values * gradient(n.values, n.domain))
    if isinstance(n_star, LandmarkCotangent) and isinstance(n, (Landmarks, LandmarkTangent)):
        base = n.points
        if n_star.points.shape != base.shape:
            raise ValueError("diamond: landmark counts differ")
        return PointMomentum(base.copy(), -n_star.covectors.copy())
    raise TypeError(f"diamond: mismatched structures ({type(n_star).__name__}, {type(n).__name__})")


def star(u, sigma):
    """Star operation, the dual of the template action: <sigma, u w> = <u star sigma, w>.

    Image structure (sigma a density): u star sigma = div(sigma u).
    Landmark structure: (u star sigma)_a = (grad u(q_a))^T sigma_a.
    """
    if isinstance(sigma, ScalarField):
        if isinstance(u, VectorField) and u.domain != sigma.domain:
            raise ValueError("star: domain mismatch")
        return ScalarField(sigma.domain, divergence(sigma.values * u.values, sigma.domain))
    if isinstance(sigma, LandmarkCotangent):
        grads = u.gradient_at(sigma.points)   # (k, i, j) = d(u_i)/d(x_j)
        return LandmarkCotangent(sigma.points.copy(),
                                 np.einsum("aij,ai->aj", grads, sigma.covectors))
    raise TypeError(f"star: unsupported cotangent type {type(sigma).__name__}")


# --------------------------------------------------------------------------
# momentum <-> velocity

def momentum_from_velocity(u: VectorField, op: InertiaOperator) -> OneFormDensity:
    """Apply the inertia operator: mu = L u (grid representation only)."""
    if isinstance(u, KernelVelocity):
        raise TypeError("momentum_from_velocity is grid-only; landmark momenta are primal")
    return OneFormDensity(u.domain, _apply_multiplier(u.values, op.multiplier(u.domain)))


def velocity_from_momentum(mu, inertia):
    """Invert the inertia operator (grid) or form the kernel sum (landmarks)."""
    if isinstance(mu, OneFormDensity):
        if not isinstance(inertia, InertiaOperator):
            raise TypeError("grid momenta need an InertiaOperator")
        return VectorField(mu.domain, _apply_multiplier(mu.values, 1.0 / inertia.multiplier(mu.domain)))
    if isinstance(mu, PointMomentum):
        if not isinstance(inertia, Kernel):
            raise TypeError("landmark momenta need a Kernel")
        return KernelVelocity.from_momentum(mu, inertia)
    raise TypeError(f"velocity_from_momentum: unsupported momentum type {type(mu).__name__}")


def momentum_norm(m, inertia) -> float:
    """Dual (kernel-smoothed) norm sqrt(<m, K m>) of a momentum.

    Well defined for both grid densities and point masses, which is why it
    is the norm used for momentum-map residuals.
    """
    if isinstance(m, PointMomentum):
        kmat = scalar_kernel_matrix(m.points, inertia)
        val = float(np.einsum("ai,ab,bi->", m.weights, kmat, m.weights))
    else:
        val = pair(m, velocity_from_momentum(m, inertia))
    return float(np.sqrt(max(val, 0.0)))
