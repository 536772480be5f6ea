"""Boundary-value matching by shooting on the initial comomentum.

Given endpoint templates n0 and n1, minimize

    J(sigma0) = action(sigma0) + misfit(n(1), n1) / epsilon^2

over the initial comomentum sigma0. The initial momentum is slaved to the
zero level of the momentum map, mu0 = -sigma0 diamond n0, which the
fixed-endpoint boundary conditions enforce and the flow preserves.

Two modes: ``penalty`` optimizes at a fixed epsilon, ``exact`` drives
epsilon down a continuation ladder so the endpoint constraint is met to
high accuracy. Gradients are central finite differences over the (small)
parameter vector; the optimizer is plain descent with a backtracking line
search, so accepted objective values are non-increasing.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .core import (
    IMAGE,
    ImageState,
    LagrangianSpec,
    LandmarkState,
    MetaState,
    endpoint_residual,
    lagrangian_of_state,
)
from .domain import Domain, TWO_PI, gradient
from .fields import Landmarks, OneFormDensity, ScalarField, _as2d
from .stochastics import SchemeChoice, Trajectory, integrate


@dataclass(frozen=True)
class MatchProblem:
    """Endpoint data and integrator settings for one matching run."""

    spec: LagrangianSpec
    n0: object
    n1: object
    dt: float = 0.01
    horizon: float = 1.0
    scheme: str = SchemeChoice.DETERMINISTIC_RK4

    def __post_init__(self):
        if not (0.0 < self.dt <= 0.1):
            raise ValueError("dt must lie in (0, 0.1]")
        if self.spec.structure == IMAGE:
            if not (isinstance(self.n0, ScalarField) and isinstance(self.n1, ScalarField)):
                raise ValueError("image matching needs ScalarField endpoints")
            if self.n0.domain != self.n1.domain or self.n0.domain != self.spec.domain:
                raise ValueError("endpoint templates live on different domains")
        else:
            q0 = self.n0.points if isinstance(self.n0, Landmarks) else _as2d(self.n0)
            q1 = self.n1.points if isinstance(self.n1, Landmarks) else _as2d(self.n1)
            if q0.shape != q1.shape:
                raise ValueError("endpoint landmark sets differ in shape")

    @property
    def n_steps(self) -> int:
        return int(round(self.horizon / self.dt))

    def endpoints(self):
        if self.spec.structure == IMAGE:
            return self.n0, self.n1
        q0 = self.n0.points if isinstance(self.n0, Landmarks) else _as2d(self.n0)
        q1 = self.n1.points if isinstance(self.n1, Landmarks) else _as2d(self.n1)
        return q0, q1


@dataclass
class MatchOptions:
    mode: str = "exact"                  # "exact" or "penalty"
    epsilon: float = 1e-2                # penalty-mode weight
    epsilon_target: float = 1e-4         # final rung of the exact-mode ladder
    max_iters: int = 200                 # per continuation stage
    grad_step: float = 1e-5
    step_tol: float = 1e-10
    residual_tol: float = 1e-6
    image_mode_cutoff: int = 1           # spectral parameterization order for images

    def __post_init__(self):
        if self.mode not in ("exact", "penalty"):
            raise ValueError("mode must be 'exact' or 'penalty'")

    def epsilon_ladder(self):
        if self.mode == "penalty":
            return [self.epsilon]
        ladder = [1e-1]
        while ladder[-1] > self.epsilon_target * 1.001:
            ladder.append(max(ladder[-1] * 0.1, self.epsilon_target))
        return ladder


@dataclass
class MatchResult:
    sigma0: object
    mu0: object
    trajectory: Trajectory
    action: float
    data_misfit: float
    endpoint_residual: float
    objective: float
    iterations: int
    converged: bool
    endpoint_ok: bool
    objective_history: list = field(default_factory=list)


# --------------------------------------------------------------------------
# parameterization of the initial comomentum

class _LandmarkParam:
    def __init__(self, problem: MatchProblem):
        q0, _ = problem.endpoints()
        self.shape = q0.shape

    @property
    def n_dims(self) -> int:
        return int(np.prod(self.shape))

    def sigma0(self, x: np.ndarray) -> np.ndarray:
        return x.reshape(self.shape)

    def pack(self, sigma0) -> np.ndarray:
        return _as2d(sigma0).ravel().copy()


class _ImageSpectralParam:
    """Coarse real trigonometric basis for the initial comomentum density."""

    def __init__(self, domain: Domain, cutoff: int):
        self.domain = domain
        unit = TWO_PI / domain.length
        modes = [("const", None)]
        wavevecs = []
        if domain.dim == 1:
            for m in range(1, cutoff + 1):
                wavevecs.append((m * unit,))
        else:
            for mx in range(0, cutoff + 1):
                for my in range(-cutoff, cutoff + 1):
                    if mx == 0 and my <= 0:
                        continue
                    wavevecs.append((mx * unit, my * unit))
        for kvec in wavevecs:
            modes.append(("cos", kvec))
            modes.append(("sin", kvec))
        self.modes = modes
        mesh = domain.mesh()
        self._basis = []
        for kind, kvec in modes:
            if kind == "const":
                self._basis.append(np.ones(domain.shape))
            else:
                phase = sum(k * mesh[a] for a, k in enumerate(kvec))
                self._basis.append(np.cos(phase) if kind == "cos" else np.sin(phase))

    @property
    def n_dims(self) -> int:
        return len(self._basis)

    def sigma0(self, x: np.ndarray) -> ScalarField:
        vals = np.zeros(self.domain.shape)
        for c, b in zip(x, self._basis):
            vals += c * b
        return ScalarField(self.domain, vals)

    def pack(self, sigma0) -> np.ndarray:
        # Least-squares projection onto the basis (used for warm starts).
        A = np.stack([b.ravel() for b in self._basis], axis=1)
        coef, *_ = np.linalg.lstsq(A, sigma0.values.ravel(), rcond=None)
        return coef


def _parameterization(problem: MatchProblem, options: MatchOptions):
    if problem.spec.structure == IMAGE:
        return _ImageSpectralParam(problem.spec.domain, options.image_mode_cutoff)
    return _LandmarkParam(problem)


# --------------------------------------------------------------------------
# shooting and the action

def initial_state(problem: MatchProblem, sigma0) -> MetaState:
    """Zero-level initial state (mu0 = -sigma0 diamond n0) for shooting."""
    if problem.spec.structure == IMAGE:
        n0 = problem.n0
        dom = n0.domain
        mu0 = OneFormDensity(dom, -sigma0.values * gradient(n0.values, dom))
        return ImageState(0.0, mu0, sigma0, ScalarField(dom, n0.values.copy()))
    q0, _ = problem.endpoints()
    sig = _as2d(sigma0)
    return LandmarkState(0.0, q0.copy(), sig.copy(), sig.copy())


def shoot(problem: MatchProblem, sigma0) -> Trajectory:
    """Integrate the tangled system from zero-level initial data."""
    state0 = initial_state(problem, sigma0)
    return integrate(problem.spec, state0, problem.scheme, problem.dt, problem.n_steps)


def action_value(trajectory: Trajectory, spec: LagrangianSpec) -> float:
    """Trapezoidal quadrature of the reduced energy along a stored trajectory."""
    if not trajectory.has_full_states:
        raise ValueError("action quadrature needs a trajectory recorded at every step")
    ell = np.array([lagrangian_of_state(spec, s) for s in trajectory.states])
    return float(np.trapz(ell, dx=trajectory.dt))


def data_misfit(problem: MatchProblem, terminal: MetaState) -> float:
    """Half squared distance between the terminal and the target template."""
    if problem.spec.structure == IMAGE:
        diff = terminal.n.values - problem.n1.values
        return 0.5 * problem.spec.domain.integrate(diff ** 2)
    _, q1 = problem.endpoints()
    return 0.5 * float(np.sum((terminal.q - q1) ** 2))


# --------------------------------------------------------------------------
# the optimizer

def _objective(problem, param, x, inv_eps_sq):
    traj = shoot(problem, param.sigma0(x))
    act = action_value(traj, problem.spec)
    mis = data_misfit(problem, traj.terminal)
    return act + inv_eps_sq * mis, traj, act, mis


def _fd_gradient(problem, param, x, inv_eps_sq, h0):
    grad = np.zeros_like(x)
    for i in range(x.size):
        h = h0 * max(1.0, abs(x[i]))
        xp = x.copy(); xp[i] += h
        xm = x.copy(); xm[i] -= h
        jp, *_ = _objective(problem, param, xp, inv_eps_sq)
        jm, *_ = _objective(problem, param, xm, inv_eps_sq)
        grad[i] = (jp - jm) / (2.0 * h)
    return grad


def match(problem: MatchProblem, options: MatchOptions | None = None) -> MatchResult:
    """Gradient-descent matching with backtracking line search.

    Returns the best iterate; all reported residuals come from a fresh
    shoot at the returned comomentum, never from line-search caches.
    """
    options = options or MatchOptions()
    param = _parameterization(problem, options)
    x = np.zeros(param.n_dims)
    history: list[float] = []
    total_iters = 0
    converged = True
    for eps in options.epsilon_ladder():
        inv_eps_sq = 1.0 / eps ** 2
        j, traj, act, mis = _objective(problem, param, x, inv_eps_sq)
        history.append(j)
        step = 1.0
        stage_converged = False
        for _ in range(options.max_iters):
            total_iters += 1
            g = _fd_gradient(problem, param, x, inv_eps_sq, options.grad_step)
            gnorm_sq = float(np.dot(g, g))
            if gnorm_sq == 0.0:
                stage_converged = True
                break
            accepted = False
            for _ in range(60):
                x_new = x - step * g
                j_new, *_ = _objective(problem, param, x_new, inv_eps_sq)
                if j_new <= j - 1e-4 * step * gnorm_sq:
                    accepted = True
                    break
                step *= 0.5
            if not accepted:
                stage_converged = True       # the line search hit float resolution
                break
            moved = float(np.max(np.abs(x_new - x)))
            x = x_new
            j = j_new
            history.append(j)
            step = min(step * 2.0, 1e6)
            if moved <= options.step_tol * max(1.0, float(np.max(np.abs(x)))):
                stage_converged = True
                break
        converged = converged and stage_converged
    sigma0 = param.sigma0(x)
    final = shoot(problem, sigma0)
    act = action_value(final, problem.spec)
    mis = data_misfit(problem, final.terminal)
    eps_final = options.epsilon_ladder()[-1]
    n1 = problem.n1 if problem.spec.structure == IMAGE else Landmarks(problem.endpoints()[1])
    resid = endpoint_residual(problem.spec, final.terminal, n1)
    state0 = initial_state(problem, sigma0)
    mu0 = state0.mu
    return MatchResult(
        sigma0=sigma0,
        mu0=mu0,
        trajectory=final,
        action=act,
        data_misfit=mis,
        endpoint_residual=resid,
        objective=act + mis / eps_final ** 2,
        iterations=total_iters,
        converged=converged,
        endpoint_ok=bool(resid <= options.residual_tol),
        objective_history=history,
    )
