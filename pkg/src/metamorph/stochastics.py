"""Time steppers: deterministic RK4, Stratonovich Heun, Ito Euler-Maruyama.

The stochastic steppers treat every evolved quantity with the same pair
(dt, dW): per noise mode the diffusion coefficient is the deterministic
transport operator with the drift velocity replaced by the correlation
field xi_i and all source terms dropped. The Heun predictor-corrector
converges to the Stratonovich solution; the Euler-Maruyama stepper solves
the equivalent Ito system, whose extra drift is half the double transport
action (a composition of Lie derivatives, not a Laplacian).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .algebra import pair
from .core import (
    ImageState,
    ImageUntangledState,
    LagrangianSpec,
    LandmarkState,
    LandmarkUntangledState,
    AnyState,
    euler_lagrange_residual,
    hamiltonian,
    payload,
    rebuild,
    rhs_tangled,
    rhs_untangled,
    state_is_finite,
    velocity_of,
)
from .domain import divergence, gradient
from .fields import OneFormDensity, PointMomentum, ScalarField, ScaledVelocitySum, VectorField
from .noise import NoiseBasis


class NumericalError(RuntimeError):
    """Raised when an integration produces a non-finite state."""


def _payload_finite(arrays) -> bool:
    # Summation propagates any NaN/Inf; far cheaper than per-array isfinite
    # masks in the stepper hot loop.
    total = 0.0
    for a in arrays:
        total += float(a.sum())
    return np.isfinite(total)


class SchemeChoice:
    DETERMINISTIC_RK4 = "deterministic_rk4"
    STRATONOVICH_HEUN = "stratonovich_heun"
    ITO_EULER_MARUYAMA = "ito_euler_maruyama"

    ALL = (DETERMINISTIC_RK4, STRATONOVICH_HEUN, ITO_EULER_MARUYAMA)

    @classmethod
    def validate(cls, scheme: str) -> str:
        if scheme not in cls.ALL:
            raise ValueError(f"unknown scheme {scheme!r}; choose one of {cls.ALL}")
        return scheme


@lru_cache(maxsize=None)
def _grid_modes(basis: NoiseBasis, domain) -> tuple:
    return tuple(basis.grid_fields(domain))


def drift(spec: LagrangianSpec, state: AnyState) -> AnyState:
    """Deterministic right-hand side for either representation."""
    if isinstance(state, (LandmarkState, ImageState)):
        return rhs_tangled(spec, state)
    return rhs_untangled(spec, state)


def diffusion_mode(spec: LagrangianSpec, state: AnyState, mode) -> AnyState:
    """Single-mode diffusion coefficient: transport of the state along xi."""
    if isinstance(state, LandmarkState):
        v, g = mode.velocity_and_gradient_at(state.q)
        return LandmarkState(0.0, v,
                             -np.sum(g * state.p[:, :, None], axis=1),
                             -np.sum(g * state.sigma[:, :, None], axis=1))
    if isinstance(state, LandmarkUntangledState):
        vz, gz = mode.velocity_and_gradient_at(state.m_points)
        vq, gq = mode.velocity_and_gradient_at(state.q)
        return LandmarkUntangledState(0.0, vz,
                                      -np.sum(gz * state.m_weights[:, :, None], axis=1),
                                      vq,
                                      -np.sum(gq * state.sigma[:, :, None], axis=1))
    if isinstance(state, (ImageState, ImageUntangledState)):
        dom = state.n.domain
        xi = mode if isinstance(mode, VectorField) else mode.grid_field(dom)
        from .algebra import lie_derivative_oneform_density
        m = state.mu if isinstance(state, ImageState) else state.M
        dm = -lie_derivative_oneform_density(xi, m).values
        dsig = -divergence(state.sigma.values * xi.values, dom)
        dn = -np.sum(xi.values * gradient(state.n.values, dom), axis=0)
        if isinstance(state, ImageState):
            return ImageState(0.0, OneFormDensity(dom, dm), ScalarField(dom, dsig),
                              ScalarField(dom, dn))
        return ImageUntangledState(0.0, OneFormDensity(dom, dm), ScalarField(dom, dsig),
                                   ScalarField(dom, dn))
    raise TypeError(f"not a state: {type(state).__name__}")


def _modes_for(spec: LagrangianSpec, state: AnyState, noise: NoiseBasis):
    if noise is None or noise.n_modes == 0:
        return []
    if isinstance(state, (ImageState, ImageUntangledState)):
        return list(_grid_modes(noise, state.n.domain))
    return list(noise.modes)


def transport_velocity_increment(spec: LagrangianSpec, state: AnyState,
                                 dt: float, dW: np.ndarray, noise: NoiseBasis):
    """Combined transport velocity u dt + sum_i xi_i dW_i as one field increment."""
    dW = np.atleast_1d(np.asarray(dW, dtype=float))
    n_modes = 0 if noise is None else noise.n_modes
    if dW.size != n_modes:
        raise ValueError(f"got {dW.size} increments for {n_modes} noise modes")
    u = velocity_of(spec, state)
    if isinstance(state, (ImageState, ImageUntangledState)):
        vals = dt * u.values
        for w, xi in zip(dW, _modes_for(spec, state, noise)):
            vals = vals + w * xi.values
        return VectorField(state.n.domain, vals)
    terms = [(dt, u)] + [(float(w), mode) for w, mode in zip(dW, noise.modes if noise else [])]
    return ScaledVelocitySum(terms)


def ito_drift_correction(spec: LagrangianSpec, state: AnyState,
                         noise: NoiseBasis, fd_eps: float = 1e-5) -> AnyState:
    """Stratonovich-to-Ito drift: half the sum of squared diffusion actions.

    Grid states: the diffusion is linear in the state, so the correction is
    the exact operator composition (the double transport action). Landmark
    states: the generic state-space formula (1/2) sum_i (D b_i) b_i via a
    centered difference along each b_i.
    """
    modes = _modes_for(spec, state, noise)
    arrays = [np.zeros_like(a) for a in payload(state)]
    if not modes:
        return rebuild(state, tuple(arrays), 0.0)
    if isinstance(state, (ImageState, ImageUntangledState)):
        for mode in modes:
            b = diffusion_mode(spec, state, mode)
            bb = diffusion_mode(spec, rebuild(state, payload(b), 0.0), mode)
            for acc, inc in zip(arrays, payload(bb)):
                acc += 0.5 * inc
        return rebuild(state, tuple(arrays), 0.0)
    scale = max(1.0, max(float(np.max(np.abs(a))) for a in payload(state)))
    for mode in modes:
        b = diffusion_mode(spec, state, mode)
        b_scale = max(float(np.max(np.abs(a))) for a in payload(b))
        if b_scale == 0.0:
            continue
        h = fd_eps * scale / b_scale
        plus = diffusion_mode(spec, rebuild(state, tuple(
            a + h * d for a, d in zip(payload(state), payload(b))), 0.0), mode)
        minus = diffusion_mode(spec, rebuild(state, tuple(
            a - h * d for a, d in zip(payload(state), payload(b))), 0.0), mode)
        for acc, pp, mm in zip(arrays, payload(plus), payload(minus)):
            acc += 0.5 * (pp - mm) / (2.0 * h)
    return rebuild(state, tuple(arrays), 0.0)


# --------------------------------------------------------------------------
# single steps

def step_rk4(spec: LagrangianSpec, state: AnyState, dt: float) -> AnyState:
    y = payload(state)
    k1 = payload(drift(spec, state))
    k2 = payload(drift(spec, rebuild(state, tuple(a + 0.5 * dt * b for a, b in zip(y, k1)), state.t)))
    k3 = payload(drift(spec, rebuild(state, tuple(a + 0.5 * dt * b for a, b in zip(y, k2)), state.t)))
    k4 = payload(drift(spec, rebuild(state, tuple(a + dt * b for a, b in zip(y, k3)), state.t)))
    new = tuple(a + dt / 6.0 * (b1 + 2.0 * b2 + 2.0 * b3 + b4)
                for a, b1, b2, b3, b4 in zip(y, k1, k2, k3, k4))
    if not _payload_finite(new):
        raise NumericalError("non-finite state after RK4 step")
    return rebuild(state, new, state.t + dt)


def _combined_increment(spec, state, dt, dW, modes):
    inc = [dt * a for a in payload(drift(spec, state))]
    for w, mode in zip(dW, modes):
        if w == 0.0:
            continue
        for acc, d in zip(inc, payload(diffusion_mode(spec, state, mode))):
            acc += w * d
    return inc


def step_heun(spec: LagrangianSpec, state: AnyState, dt: float,
              dW=None, noise: NoiseBasis | None = None) -> AnyState:
    """Stratonovich predictor-corrector step with shared (dt, dW)."""
    modes = _modes_for(spec, state, noise)
    dW = np.zeros(len(modes)) if dW is None else np.atleast_1d(np.asarray(dW, dtype=float))
    if dW.size != len(modes):
        raise ValueError(f"got {dW.size} increments for {len(modes)} noise modes")
    y = payload(state)
    inc0 = _combined_increment(spec, state, dt, dW, modes)
    predictor = rebuild(state, tuple(a + d for a, d in zip(y, inc0)), state.t + dt)
    inc1 = _combined_increment(spec, predictor, dt, dW, modes)
    new = tuple(a + 0.5 * (d0 + d1) for a, d0, d1 in zip(y, inc0, inc1))
    if not _payload_finite(new):
        raise NumericalError("non-finite state after Heun step")
    return rebuild(state, new, state.t + dt)


def step_euler_maruyama(spec: LagrangianSpec, state: AnyState, dt: float,
                        dW=None, noise: NoiseBasis | None = None) -> AnyState:
    """One Ito step: deterministic drift plus correction, then the noise terms."""
    modes = _modes_for(spec, state, noise)
    dW = np.zeros(len(modes)) if dW is None else np.atleast_1d(np.asarray(dW, dtype=float))
    if dW.size != len(modes):
        raise ValueError(f"got {dW.size} increments for {len(modes)} noise modes")
    y = payload(state)
    inc = _combined_increment(spec, state, dt, dW, modes)
    corr = payload(ito_drift_correction(spec, state, noise))
    new = tuple(a + d + dt * c for a, d, c in zip(y, inc, corr))
    if not _payload_finite(new):
        raise NumericalError("non-finite state after Euler-Maruyama step")
    return rebuild(state, new, state.t + dt)


def stochastic_hamiltonian_increment(spec: LagrangianSpec, state: AnyState,
                                     dt: float, dW, noise: NoiseBasis) -> float:
    """Energy increment h dt + sum_i <mu, xi_i> dW_i (diagnostic)."""
    dW = np.atleast_1d(np.asarray(dW, dtype=float))
    n_modes = 0 if noise is None else noise.n_modes
    if dW.size != n_modes:
        raise ValueError(f"got {dW.size} increments for {n_modes} noise modes")
    out = hamiltonian(spec, state) * dt
    if n_modes == 0:
        return out
    if isinstance(state, LandmarkState):
        mu = state.mu
        for w, mode in zip(dW, noise.modes):
            out += float(np.sum(mu.weights * mode.velocity_at(mu.points))) * w
    elif isinstance(state, LandmarkUntangledState):
        centers = np.vstack([state.m_points, state.q])
        weights = np.vstack([state.m_weights, state.sigma])
        for w, mode in zip(dW, noise.modes):
            out += float(np.sum(weights * mode.velocity_at(centers))) * w
    else:
        if isinstance(state, ImageState):
            mu = state.mu
        else:
            dom = state.n.domain
            mu = OneFormDensity(dom, state.M.values
                                - state.sigma.values * gradient(state.n.values, dom))
        for w, xi in zip(dW, _grid_modes(noise, state.n.domain)):
            out += pair(mu, xi) * w
    return out


# --------------------------------------------------------------------------
# trajectories

@dataclass
class Trajectory:
    """Integrated path with per-step invariant diagnostics.

    ``states`` holds every ``record_every``-th state (the initial and final
    states always included); ``times``, ``h_series`` and
    ``residual_series`` cover every step.
    """

    times: np.ndarray
    states: list
    state_times: np.ndarray
    h_series: np.ndarray
    residual_series: np.ndarray
    scheme: str
    dt: float
    dW: np.ndarray | None = None
    record_every: int = 1

    @property
    def initial(self) -> AnyState:
        return self.states[0]

    @property
    def terminal(self) -> AnyState:
        return self.states[-1]

    @property
    def has_full_states(self) -> bool:
        return self.record_every == 1

    def hamiltonian_drift(self) -> float:
        h0 = self.h_series[0]
        scale = abs(h0) if h0 != 0.0 else 1.0
        return float(np.max(np.abs(self.h_series - h0)) / scale)


def integrate(spec: LagrangianSpec, state0: AnyState, scheme: str, dt: float,
              n_steps: int, noise: NoiseBasis | None = None, dW: np.ndarray | None = None,
              record_every: int = 1, diagnostics: bool = True,
              observer=None) -> Trajectory:
    """Advance a state through n_steps and record invariant diagnostics.

    ``dW`` has shape ``(n_steps, n_modes)``; omitted increments mean a
    deterministic run (noise switched off reproduces the drift-only
    scheme exactly). An ``observer(step_index, state)`` callable, when
    given, sees every state without it being stored.
    """
    SchemeChoice.validate(scheme)
    n_modes = 0 if noise is None else noise.n_modes
    if scheme == SchemeChoice.DETERMINISTIC_RK4 and n_modes > 0 and dW is not None \
            and np.any(np.asarray(dW) != 0.0):
        raise ValueError("deterministic_rk4 cannot consume Brownian increments")
    if dW is None:
        dW = np.zeros((n_steps, n_modes))
    else:
        dW = np.asarray(dW, dtype=float)
        if dW.shape != (n_steps, n_modes):
            raise ValueError(f"dW shape {dW.shape} != {(n_steps, n_modes)}")

    times = state0.t + dt * np.arange(n_steps + 1)
    h_series = np.empty(n_steps + 1)
    res_series = np.empty(n_steps + 1)
    states = [state0]
    state_times = [state0.t]
    if diagnostics:
        h_series[0] = hamiltonian(spec, state0)
        res_series[0] = euler_lagrange_residual(spec, state0)
    if observer is not None:
        observer(0, state0)
    state = state0
    for k in range(n_steps):
        try:
            if scheme == SchemeChoice.DETERMINISTIC_RK4:
                state = step_rk4(spec, state, dt)
            elif scheme == SchemeChoice.STRATONOVICH_HEUN:
                state = step_heun(spec, state, dt, dW[k], noise)
            else:
                state = step_euler_maruyama(spec, state, dt, dW[k], noise)
        except NumericalError as err:
            raise NumericalError(f"step {k}: {err}") from None
        if diagnostics:
            h_series[k + 1] = hamiltonian(spec, state)
            res_series[k + 1] = euler_lagrange_residual(spec, state)
        if observer is not None:
            observer(k + 1, state)
        if (k + 1) % record_every == 0 or k + 1 == n_steps:
            states.append(state)
            state_times.append(state.t)
    if not diagnostics:
        h_series[:] = np.nan
        res_series[:] = np.nan
        h_series[0] = hamiltonian(spec, state0)
        h_series[-1] = hamiltonian(spec, states[-1])
    return Trajectory(times=times, states=states, state_times=np.asarray(state_times),
                      h_series=h_series, residual_series=res_series, scheme=scheme,
                      dt=dt, dW=dW if n_modes else None, record_every=record_every)
