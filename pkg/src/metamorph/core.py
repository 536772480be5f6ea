"""State assembly, energies and deterministic evolution equations.

Two equivalent sets of evolution equations are provided for the triple of
momentum, template comomentum and template:

* the *tangled* form in (mu, sigma, n),

      d(mu)/dt    = -ad*_u mu - sigma diamond nu + w diamond n
      d(sigma)/dt = -u star sigma - w
      d(n)/dt     =  u n + nu

  with u recovered from mu, nu = sigma_m_sq * sigma, and w the template
  force (zero for the plain quadratic energy, kappa-proportional when the
  quadratic template potential is switched on);

* the *untangled* form in (M, sigma, n) with M = mu + sigma diamond n,

      dM/dt       = -ad*_u M
      d(sigma)/dt = -u star sigma - w
      d(n)/dt     =  u n + nu

  where u is recovered from M - sigma diamond n.

The two forms are related by a change of variables and produce matching
trajectories; the sum mu + sigma diamond n is the conserved momentum map of
the fixed-endpoint problem and evolves by pure coadjoint transport.

Landmark specifics: the tangled landmark system is the finite-dimensional
reduction whose momentum weights ride on the template points. That class of
momenta is preserved exactly on the zero level of the momentum map (weights
equal to the comomenta), which is where all shooting-based runs live; the
untangled landmark form carries an independently supported momentum cloud
and is closed for arbitrary data.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Union

import numpy as np

from .algebra import (
    InertiaOperator,
    ad_star,
    diamond,
    lie_derivative_scalar,
    momentum_from_velocity,
    momentum_norm,
    pair,
    scalar_pair,
    star,
    velocity_from_momentum,
)
from .domain import Domain, divergence, gradient
from .fields import (
    LandmarkCotangent,
    Landmarks,
    LandmarkTangent,
    OneFormDensity,
    PointMomentum,
    ScalarField,
    VectorField,
    _as2d,
)
from .kernels import Kernel, KernelVelocity, scalar_kernel_matrix

LANDMARK = "landmark"
IMAGE = "image"


@dataclass(frozen=True)
class LagrangianSpec:
    """Quadratic reduced energy: kinetic term plus template-velocity penalty.

    ell(u, n, nu) = 1/2 <L u, u> + 1/(2 sigma_m_sq) ||nu||^2 - V(n)

    with optional quadratic template potential V (strength kappa >= 0),
    kept so the template-force slot of the equations stays exercised.
    """

    structure: str
    domain: Domain
    sigma_m_sq: float = 0.5
    kernel: Kernel | None = None
    inertia: InertiaOperator | None = None
    potential_strength: float = 0.0

    def __post_init__(self):
        if self.structure not in (LANDMARK, IMAGE):
            raise ValueError(f"unknown structure {self.structure!r}")
        if self.sigma_m_sq <= 0:
            raise ValueError("sigma_m_sq must be strictly positive")
        if self.potential_strength < 0:
            raise ValueError("potential_strength must be nonnegative")
        if self.structure == LANDMARK and self.kernel is None:
            raise ValueError("landmark structure needs a kernel")
        if self.structure == IMAGE:
            if self.inertia is None:
                raise ValueError("image structure needs an inertia operator")
            self.domain.require_grid()

    @classmethod
    def landmark(cls, dim: int = 2, sigma_m_sq: float = 0.5,
                 kernel: Kernel | None = None, potential_strength: float = 0.0):
        return cls(structure=LANDMARK, domain=Domain.plane(dim),
                   sigma_m_sq=sigma_m_sq, kernel=kernel or Kernel(),
                   potential_strength=potential_strength)

    @classmethod
    def image(cls, domain: Domain, sigma_m_sq: float = 0.5,
              inertia: InertiaOperator | None = None, potential_strength: float = 0.0):
        return cls(structure=IMAGE, domain=domain, sigma_m_sq=sigma_m_sq,
                   inertia=inertia or InertiaOperator(),
                   potential_strength=potential_strength)


# --------------------------------------------------------------------------
# states

@dataclass
class LandmarkState:
    """Tangled landmark state: positions q, momentum weights p, comomenta sigma.

    The distributional momentum is sum_a p_a delta(q_a), supported on the
    template points. Zero-level data has p == sigma.
    """

    t: float
    q: np.ndarray
    p: np.ndarray
    sigma: np.ndarray

    def __post_init__(self):
        self.q = _as2d(self.q)
        self.p = _as2d(self.p)
        self.sigma = _as2d(self.sigma)
        if not (self.q.shape == self.p.shape == self.sigma.shape):
            raise ValueError("q, p, sigma must share one (k, d) shape")

    @property
    def mu(self) -> PointMomentum:
        return PointMomentum(self.q, self.p)

    @property
    def n(self) -> Landmarks:
        return Landmarks(self.q)

    @property
    def sigma_cotangent(self) -> LandmarkCotangent:
        return LandmarkCotangent(self.q, self.sigma)


@dataclass
class ImageState:
    """Tangled image state: momentum density mu, comomentum density sigma, image n."""

    t: float
    mu: OneFormDensity
    sigma: ScalarField
    n: ScalarField

    def __post_init__(self):
        if not (self.mu.domain == self.sigma.domain == self.n.domain):
            raise ValueError("state components live on different domains")


@dataclass
class LandmarkUntangledState:
    """Untangled landmark state: independent momentum cloud plus (q, sigma)."""

    t: float
    m_points: np.ndarray
    m_weights: np.ndarray
    q: np.ndarray
    sigma: np.ndarray

    def __post_init__(self):
        self.m_points = _as2d(self.m_points)
        self.m_weights = _as2d(self.m_weights)
        self.q = _as2d(self.q)
        self.sigma = _as2d(self.sigma)
        if self.m_points.shape != self.m_weights.shape:
            raise ValueError("momentum cloud points/weights shapes differ")
        if self.q.shape != self.sigma.shape:
            raise ValueError("q and sigma shapes differ")

    @property
    def M(self) -> PointMomentum:
        return PointMomentum(self.m_points, self.m_weights)


@dataclass
class ImageUntangledState:
    """Untangled image state in (M, sigma, n)."""

    t: float
    M: OneFormDensity
    sigma: ScalarField
    n: ScalarField

    def __post_init__(self):
        if not (self.M.domain == self.sigma.domain == self.n.domain):
            raise ValueError("state components live on different domains")


MetaState = Union[LandmarkState, ImageState]
UntangledState = Union[LandmarkUntangledState, ImageUntangledState]
AnyState = Union[LandmarkState, ImageState, LandmarkUntangledState, ImageUntangledState]


def payload(state: AnyState) -> tuple[np.ndarray, ...]:
    """Raw arrays of a state, in a fixed order shared with `rebuild`."""
    if isinstance(state, LandmarkState):
        return (state.q, state.p, state.sigma)
    if isinstance(state, ImageState):
        return (state.mu.values, state.sigma.values, state.n.values)
    if isinstance(state, LandmarkUntangledState):
        return (state.m_points, state.m_weights, state.q, state.sigma)
    if isinstance(state, ImageUntangledState):
        return (state.M.values, state.sigma.values, state.n.values)
    raise TypeError(f"not a state: {type(state).__name__}")


def rebuild(template: AnyState, arrays: tuple[np.ndarray, ...], t: float) -> AnyState:
    """New state of the same class as `template` from raw arrays."""
    if isinstance(template, LandmarkState):
        return LandmarkState(t, *arrays)
    if isinstance(template, ImageState):
        dom = template.n.domain
        return ImageState(t, OneFormDensity(dom, arrays[0]),
                          ScalarField(dom, arrays[1]), ScalarField(dom, arrays[2]))
    if isinstance(template, LandmarkUntangledState):
        return LandmarkUntangledState(t, *arrays)
    if isinstance(template, ImageUntangledState):
        dom = template.n.domain
        return ImageUntangledState(t, OneFormDensity(dom, arrays[0]),
                                   ScalarField(dom, arrays[1]), ScalarField(dom, arrays[2]))
    raise TypeError(f"not a state: {type(template).__name__}")


def state_axpy(state: AnyState, coef: float, increment: AnyState, t: float | None = None) -> AnyState:
    """state + coef * increment, with explicit time stamp."""
    arrays = tuple(a + coef * b for a, b in zip(payload(state), payload(increment)))
    return rebuild(state, arrays, state.t if t is None else t)


def state_is_finite(state: AnyState) -> bool:
    return all(np.all(np.isfinite(a)) for a in payload(state))


def zero_increment(state: AnyState) -> AnyState:
    return rebuild(state, tuple(np.zeros_like(a) for a in payload(state)), 0.0)


# --------------------------------------------------------------------------
# energies and the Legendre transform

def velocity_of(spec: LagrangianSpec, state: AnyState):
    """Velocity field carried by a state (tangled: from mu; untangled: from M - sigma diamond n)."""
    if isinstance(state, LandmarkState):
        return KernelVelocity(spec.kernel, state.q, state.p)
    if isinstance(state, ImageState):
        return velocity_from_momentum(state.mu, spec.inertia)
    if isinstance(state, LandmarkUntangledState):
        # mu = M - sigma diamond n = M + sum_a sigma_a delta(q_a)
        centers = np.vstack([state.m_points, state.q])
        weights = np.vstack([state.m_weights, state.sigma])
        return KernelVelocity(spec.kernel, centers, weights)
    if isinstance(state, ImageUntangledState):
        mu = OneFormDensity(state.M.domain,
                            state.M.values - state.sigma.values * gradient(state.n.values, state.n.domain))
        return velocity_from_momentum(mu, spec.inertia)
    raise TypeError(f"not a state: {type(state).__name__}")


def _potential_value(spec: LagrangianSpec, state: AnyState) -> float:
    kappa = spec.potential_strength
    if kappa == 0.0:
        return 0.0
    if isinstance(state, (LandmarkState, LandmarkUntangledState)):
        return 0.5 * kappa * float(np.sum(state.q ** 2))
    n = state.n
    return 0.5 * kappa * n.domain.integrate(n.values ** 2)


def legendre(spec: LagrangianSpec, u, nu, n):
    """Legendre transform of the reduced energy: (u, nu) -> (mu, sigma, h).

    mu = L u (grid) or the kernel weights themselves (landmarks),
    sigma = nu / sigma_m_sq, and

        h = <mu, u> + <sigma, nu> - ell = 1/2 <mu, u> + sigma_m_sq/2 ||sigma||^2 + V(n).
    """
    if spec.structure == IMAGE:
        mu = momentum_from_velocity(u, spec.inertia)
        sigma = ScalarField(nu.domain, nu.values / spec.sigma_m_sq)
        h = 0.5 * pair(mu, u) + 0.5 * spec.sigma_m_sq * scalar_pair(sigma, sigma)
        if spec.potential_strength:
            h += 0.5 * spec.potential_strength * n.domain.integrate(n.values ** 2)
        return mu, sigma, h
    if not isinstance(u, KernelVelocity):
        raise TypeError("landmark Legendre transform needs a kernel-represented velocity")
    mu = PointMomentum(u.centers, u.weights)
    sigma = LandmarkCotangent(nu.points, nu.vectors / spec.sigma_m_sq)
    h = 0.5 * pair(mu, u) + 0.5 * spec.sigma_m_sq * float(np.sum(sigma.covectors ** 2))
    if spec.potential_strength:
        h += 0.5 * spec.potential_strength * float(np.sum(n.points ** 2))
    return mu, sigma, h


def lagrangian_value(spec: LagrangianSpec, u, nu, n) -> float:
    """Reduced energy ell(u, n, nu) evaluated directly."""
    if spec.structure == IMAGE:
        mu = momentum_from_velocity(u, spec.inertia)
        kinetic = 0.5 * pair(mu, u)
        template = 0.5 / spec.sigma_m_sq * nu.domain.integrate(nu.values ** 2)
        pot = 0.5 * spec.potential_strength * n.domain.integrate(n.values ** 2) if spec.potential_strength else 0.0
        return kinetic + template - pot
    mu = PointMomentum(u.centers, u.weights)
    kinetic = 0.5 * pair(mu, u)
    template = 0.5 / spec.sigma_m_sq * float(np.sum(nu.vectors ** 2))
    pot = 0.5 * spec.potential_strength * float(np.sum(n.points ** 2)) if spec.potential_strength else 0.0
    return kinetic + template - pot


def hamiltonian(spec: LagrangianSpec, state: AnyState) -> float:
    """Energy h = 1/2 <mu, u> + sigma_m_sq/2 ||sigma||^2 + V(n) of a state."""
    if isinstance(state, (LandmarkState, LandmarkUntangledState)):
        if isinstance(state, LandmarkState):
            kmat = scalar_kernel_matrix(state.q, spec.kernel)
            kinetic = 0.5 * float(np.einsum("ai,ab,bi->", state.p, kmat, state.p))
        else:
            u = velocity_of(spec, state)
            centers = np.vstack([state.m_points, state.q])
            weights = np.vstack([state.m_weights, state.sigma])
            kinetic = 0.5 * float(np.sum(weights * u.velocity_at(centers)))
        template = 0.5 * spec.sigma_m_sq * float(np.sum(state.sigma ** 2))
        return kinetic + template + _potential_value(spec, state)
    u = velocity_of(spec, state)
    mu = state.mu if isinstance(state, ImageState) else momentum_from_velocity(u, spec.inertia)
    kinetic = 0.5 * pair(mu, u)
    template = 0.5 * spec.sigma_m_sq * scalar_pair(state.sigma, state.sigma)
    return kinetic + template + _potential_value(spec, state)


def lagrangian_of_state(spec: LagrangianSpec, state: AnyState) -> float:
    """ell evaluated along a trajectory state (used by the action integral)."""
    return hamiltonian(spec, state) - 2.0 * _potential_value(spec, state)


# --------------------------------------------------------------------------
# deterministic right-hand sides

def rhs_tangled(spec: LagrangianSpec, state: MetaState) -> MetaState:
    """Increment of the tangled (mu, sigma, n) system; returned with t = 0."""
    kappa = spec.potential_strength
    if isinstance(state, LandmarkState):
        # Fused kernel sums: u(q_a) = sum_b K_ab p_b and
        # (grad u(q_a))^T s_a = sum_b gradK(q_a - q_b) (p_b . s_a).
        disp = state.q[:, None, :] - state.q[None, :, :]
        kv = spec.kernel.value(disp)
        grad_k = -disp / spec.kernel.length_scale ** 2 * kv[..., None]
        u_at_q = kv @ state.p
        dq = spec.sigma_m_sq * state.sigma + u_at_q
        dsig = -np.sum(grad_k * (state.sigma @ state.p.T)[..., None], axis=1)
        dp = -np.sum(grad_k * (state.p @ state.p.T)[..., None], axis=1)
        if kappa:
            dsig = dsig - kappa * state.q
            dp = dp - kappa * state.q
        return LandmarkState(0.0, dq, dp, dsig)
    if isinstance(state, ImageState):
        dom = state.n.domain
        u = velocity_from_momentum(state.mu, spec.inertia)
        nu_vals = spec.sigma_m_sq * state.sigma.values
        grad_n = gradient(state.n.values, dom)
        dmu = -ad_star(u, state.mu).values
        dmu -= state.sigma.values * gradient(nu_vals, dom)
        dsig = -divergence(state.sigma.values * u.values, dom)
        dn = -np.sum(u.values * grad_n, axis=0) + nu_vals
        if kappa:
            w = kappa * state.n.values          # template force dh/dn
            dmu += w * grad_n
            dsig -= w
        return ImageState(0.0, OneFormDensity(dom, dmu), ScalarField(dom, dsig),
                          ScalarField(dom, dn))
    raise TypeError("rhs_tangled expects a tangled state")


def rhs_untangled(spec: LagrangianSpec, state: UntangledState) -> UntangledState:
    """Increment of the untangled (M, sigma, n) system; returned with t = 0."""
    kappa = spec.potential_strength
    if isinstance(state, LandmarkUntangledState):
        u = velocity_of(spec, state)
        dz, gz = u.velocity_and_gradient_at(state.m_points)
        dm = -np.sum(gz * state.m_weights[:, :, None], axis=1)
        u_at_q, gq = u.velocity_and_gradient_at(state.q)
        dq = spec.sigma_m_sq * state.sigma + u_at_q
        dsig = -np.sum(gq * state.sigma[:, :, None], axis=1)
        if kappa:
            dsig = dsig - kappa * state.q
        return LandmarkUntangledState(0.0, dz, dm, dq, dsig)
    if isinstance(state, ImageUntangledState):
        dom = state.n.domain
        u = velocity_of(spec, state)
        nu_vals = spec.sigma_m_sq * state.sigma.values
        dM = -ad_star(u, state.M).values
        dsig = -divergence(state.sigma.values * u.values, dom)
        dn = -np.sum(u.values * gradient(state.n.values, dom), axis=0) + nu_vals
        if kappa:
            dsig -= kappa * state.n.values
        return ImageUntangledState(0.0, OneFormDensity(dom, dM), ScalarField(dom, dsig),
                                   ScalarField(dom, dn))
    raise TypeError("rhs_untangled expects an untangled state")


def untangle(state: MetaState) -> UntangledState:
    """Assemble the untangled representation M = mu + sigma diamond n."""
    if isinstance(state, LandmarkState):
        return LandmarkUntangledState(state.t, state.q.copy(), state.p - state.sigma,
                                      state.q.copy(), state.sigma.copy())
    dom = state.n.domain
    M = OneFormDensity(dom, state.mu.values + state.sigma.values * gradient(state.n.values, dom))
    return ImageUntangledState(state.t, M, ScalarField(dom, state.sigma.values.copy()),
                               ScalarField(dom, state.n.values.copy()))


# --------------------------------------------------------------------------
# structural diagnostics

def total_momentum(spec: LagrangianSpec, state: AnyState):
    """Momentum map M = mu + sigma diamond n (already primal for untangled states)."""
    if isinstance(state, LandmarkState):
        return PointMomentum(state.q, state.p - state.sigma)
    if isinstance(state, ImageState):
        dom = state.n.domain
        return OneFormDensity(dom, state.mu.values
                              + state.sigma.values * gradient(state.n.values, dom))
    if isinstance(state, LandmarkUntangledState):
        return state.M
    if isinstance(state, ImageUntangledState):
        return state.M
    raise TypeError(f"not a state: {type(state).__name__}")


def _momentum_metric(spec: LagrangianSpec):
    return spec.kernel if spec.structure == LANDMARK else spec.inertia


def euler_lagrange_residual(spec: LagrangianSpec, state: AnyState) -> float:
    """Dual norm of the momentum map; zero exactly on the constrained extremals."""
    return momentum_norm(total_momentum(spec, state), _momentum_metric(spec))


def endpoint_residual(spec: LagrangianSpec, state: MetaState, n1) -> float:
    """Dual norm of mu(1) + sigma(1) diamond n1 against the target template n1."""
    if isinstance(state, LandmarkState):
        target = n1.points if isinstance(n1, Landmarks) else _as2d(n1)
        cloud = PointMomentum(state.q, state.p).stacked_with(PointMomentum(target, -state.sigma))
        return momentum_norm(cloud, spec.kernel)
    dom = state.n.domain
    resid = OneFormDensity(dom, state.mu.values
                           + state.sigma.values * gradient(n1.values, dom))
    return momentum_norm(resid, spec.inertia)


# --------------------------------------------------------------------------
# Poisson structure

@dataclass
class GradientTriple:
    """Functional gradient (d/d mu, d/d sigma, d/d n) for the image structure.

    Types mirror the dual slots: the mu-gradient is velocity-like, the
    sigma-gradient is a scalar function, the n-gradient a scalar density.
    """

    d_mu: VectorField
    d_sigma: ScalarField
    d_n: ScalarField


@dataclass
class LandmarkGradient:
    """Functional gradient (d/d sigma, d/d q) for the landmark reduction."""

    d_sigma: np.ndarray
    d_q: np.ndarray

    def __post_init__(self):
        self.d_sigma = _as2d(self.d_sigma)
        self.d_q = _as2d(self.d_q)


def lie_poisson_apply(spec: LagrangianSpec, state: AnyState, df, dh) -> float:
    """Evaluate the Poisson bracket {f, h} at a state from two gradients.

    Image structure: the full three-slot bracket whose rows generate the
    tangled equations. Landmark structure: the canonical (q, sigma) bracket
    of the finite-dimensional reduction.
    """
    if isinstance(df, LandmarkGradient) and isinstance(dh, LandmarkGradient):
        return float(np.sum(df.d_q * dh.d_sigma) - np.sum(df.d_sigma * dh.d_q))
    if not (isinstance(df, GradientTriple) and isinstance(dh, GradientTriple)):
        raise TypeError("gradients must both be GradientTriple or both LandmarkGradient")
    if not isinstance(state, ImageState):
        raise TypeError("the three-slot bracket is evaluated at tangled image states")
    dom = state.n.domain
    if df.d_mu.domain != dom or dh.d_mu.domain != dom:
        raise ValueError("gradient domains do not match the state")
    b_u, b_nu, b_w = dh.d_mu, dh.d_sigma, dh.d_n
    row_mu = -ad_star(b_u, state.mu).values \
        - state.sigma.values * gradient(b_nu.values, dom) \
        + b_w.values * gradient(state.n.values, dom)
    row_sigma = -divergence(state.sigma.values * b_u.values, dom) - b_w.values
    row_n = -np.sum(b_u.values * gradient(state.n.values, dom), axis=0) + b_nu.values
    out = pair(OneFormDensity(dom, row_mu), df.d_mu)
    out += dom.integrate(row_sigma * df.d_sigma.values)
    out += dom.integrate(row_n * df.d_n.values)
    return out
