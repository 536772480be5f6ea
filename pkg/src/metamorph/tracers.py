"""Material tracers carried by the (stochastic) transport velocity.

A tracer cloud realizes the Lagrange-to-Euler flow map: labelled points
advance with dx = u dt + sum_i xi_i dW^i, each additionally carrying the
flow gradient F = dx/dX, which evolves by dF = (grad u dt + sum_i grad
xi_i dW^i) F. The pair (x_j, F_j) is what pullback diagnostics of advected
momenta need.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import LagrangianSpec, velocity_of
from .fields import _as2d
from .noise import NoiseBasis
from .stochastics import NumericalError, Trajectory


@dataclass
class TracerCloud:
    """Labelled material points with current positions and flow gradients.

    ``labels`` are the seed positions (fixed), ``positions`` the current
    ones; ``deformation`` holds one d x d flow-gradient matrix per tracer,
    the identity at seeding time.
    """

    labels: np.ndarray
    positions: np.ndarray
    deformation: np.ndarray

    def __post_init__(self):
        self.labels = _as2d(self.labels)
        self.positions = _as2d(self.positions)
        if self.labels.shape != self.positions.shape:
            raise ValueError("labels and positions shapes differ")
        if self.count < 1:
            raise ValueError("a tracer cloud needs at least one point")
        d = self.labels.shape[1]
        if self.deformation.shape != (self.count, d, d):
            raise ValueError("deformation must have shape (count, d, d)")
        if not np.all(np.isfinite(self.positions)):
            raise ValueError("tracer positions must be finite")

    @classmethod
    def seed(cls, points) -> "TracerCloud":
        pts = _as2d(points)
        d = pts.shape[1]
        eye = np.broadcast_to(np.eye(d), (pts.shape[0], d, d)).copy()
        return cls(pts.copy(), pts.copy(), eye)

    @property
    def count(self) -> int:
        return self.labels.shape[0]


def _mode_eval(modes, pts):
    return [mode.velocity_and_gradient_at(pts) for mode in modes]


def advance_tracers(cloud: TracerCloud, trajectory: Trajectory, spec: LagrangianSpec,
                    noise: NoiseBasis | None = None,
                    return_series: bool = False):
    """Advance tracers through a stored trajectory with the same increments.

    Each step uses a Heun update with the velocity of the stored states at
    the two step endpoints, interpolated (grid) or kernel-evaluated
    (landmarks) at the tracer's own position, plus the trajectory's own
    Brownian increments. Spectral evaluation is intrinsically periodic, so
    positions are stored unwrapped; on the plane they are used as-is.
    """
    if not trajectory.has_full_states:
        raise ValueError("tracer advance needs a trajectory recorded at every step")
    # Noise modes are analytic objects; their node samples agree with the
    # grid fields the state solve uses, so point evaluation is consistent.
    modes = list(noise.modes) if noise is not None and noise.n_modes else []
    grid_modes = modes
    dW = trajectory.dW
    if modes and dW is None:
        raise ValueError("trajectory carries no Brownian increments for its noise")
    dt = trajectory.dt
    n_steps = len(trajectory.states) - 1
    pos = cloud.positions.copy()
    F = cloud.deformation.copy()
    series = [TracerCloud(cloud.labels.copy(), pos.copy(), F.copy())]
    for k in range(n_steps):
        u0 = velocity_of(spec, trajectory.states[k])
        u1 = velocity_of(spec, trajectory.states[k + 1])
        w = dW[k] if modes else ()

        v0 = u0.velocity_at(pos)
        g0 = u0.gradient_at(pos)
        dx0 = v0 * dt
        dF0 = np.einsum("aij,ajk->aik", g0, F) * dt
        for wi, mode in zip(w, grid_modes):
            mv, mg = mode.velocity_and_gradient_at(pos)
            dx0 += wi * mv
            dF0 += wi * np.einsum("aij,ajk->aik", mg, F)

        pos_p = pos + dx0
        F_p = F + dF0
        v1 = u1.velocity_at(pos_p)
        g1 = u1.gradient_at(pos_p)
        dx1 = v1 * dt
        dF1 = np.einsum("aij,ajk->aik", g1, F_p) * dt
        for wi, mode in zip(w, grid_modes):
            mv, mg = mode.velocity_and_gradient_at(pos_p)
            dx1 += wi * mv
            dF1 += wi * np.einsum("aij,ajk->aik", mg, F_p)

        pos = pos + 0.5 * (dx0 + dx1)
        F = F + 0.5 * (dF0 + dF1)
        if not (np.all(np.isfinite(pos)) and np.all(np.isfinite(F))):
            raise NumericalError(f"step {k}: non-finite tracer state")
        if return_series:
            series.append(TracerCloud(cloud.labels.copy(), pos.copy(), F.copy()))
    out = TracerCloud(cloud.labels.copy(), pos, F)
    if return_series:
        return series
    return out
