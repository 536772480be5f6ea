"""Monte Carlo ensembles, convergence studies and advection diagnostics.

Every sample owns a Brownian driver seeded by (master_seed, sample index),
so ensembles are reproducible bit for bit and independent of how many
worker threads execute them; results are merged by index.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .core import (
    IMAGE,
    ImageState,
    ImageUntangledState,
    LagrangianSpec,
    LandmarkState,
    LandmarkUntangledState,
    AnyState,
    payload,
    total_momentum,
)
from .noise import BrownianDriver, NoiseBasis, coarsen_increments
from .stochastics import NumericalError, SchemeChoice, Trajectory, integrate
from .tracers import TracerCloud, advance_tracers


# --------------------------------------------------------------------------
# terminal summaries

def summary_names(spec: LagrangianSpec, state: AnyState) -> list[str]:
    if isinstance(state, (LandmarkState, LandmarkUntangledState)):
        k, d = state.q.shape
        axes = "xy"[:d]
        names = [f"q{a}_{axes[i]}" for a in range(k) for i in range(d)]
        names += [f"sigma{a}_{axes[i]}" for a in range(k) for i in range(d)]
        return names
    probes = _image_probes(spec)
    names = [f"n_probe{i}" for i in range(len(probes))]
    names += ["n_l2", "sigma_l2", "momentum_l2"]
    return names


def _image_probes(spec: LagrangianSpec) -> np.ndarray:
    dom = spec.domain
    fracs = np.array([0.0, 0.25, 0.5, 0.75]) * dom.length
    if dom.dim == 1:
        return fracs[:, None]
    return np.stack([fracs, np.roll(fracs, 1)], axis=1)


def terminal_summary(spec: LagrangianSpec, state: AnyState) -> np.ndarray:
    if isinstance(state, (LandmarkState, LandmarkUntangledState)):
        return np.concatenate([state.q.ravel(), state.sigma.ravel()])
    probes = _image_probes(spec)
    vals = state.n.at(probes)
    m = total_momentum(spec, state)
    return np.concatenate([vals, [state.n.l2(), state.sigma.l2(), m.l2()]])


# --------------------------------------------------------------------------
# ensembles

@dataclass(frozen=True)
class EnsembleConfig:
    """Everything one Monte Carlo run needs, including its seeding policy."""

    spec: LagrangianSpec
    initial_state: AnyState
    noise: NoiseBasis
    scheme: str = SchemeChoice.STRATONOVICH_HEUN
    dt: float = 1e-3
    horizon: float = 1.0
    n_samples: int = 1024
    master_seed: int = 0
    n_checkpoints: int = 10

    def __post_init__(self):
        if self.n_samples < 1:
            raise ValueError("n_samples must be at least 1")
        if self.dt <= 0:
            raise ValueError("dt must be positive")
        SchemeChoice.validate(self.scheme)

    @property
    def n_steps(self) -> int:
        return int(round(self.horizon / self.dt))


@dataclass
class EnsembleResult:
    summary_names: list
    terminal_summaries: np.ndarray          # (n_ok, m)
    sample_indices: np.ndarray              # (n_ok,)
    checkpoint_times: np.ndarray
    checkpoint_summaries: np.ndarray        # (n_ok, n_cp, m)
    h_drift: np.ndarray                     # (n_ok,)
    failures: list = field(default_factory=list)
    master_seed: int = 0
    n_requested: int = 0

    @property
    def n_samples(self) -> int:
        return self.terminal_summaries.shape[0]


def _run_sample(config: EnsembleConfig, index: int):
    n_modes = config.noise.n_modes if config.noise else 0
    dW = None
    if n_modes and config.scheme != SchemeChoice.DETERMINISTIC_RK4:
        dW = BrownianDriver(config.master_seed, index, config.dt,
                            config.n_steps, n_modes).increments()
    record_every = max(1, config.n_steps // max(config.n_checkpoints, 1))
    traj = integrate(config.spec, config.initial_state, config.scheme, config.dt,
                     config.n_steps, config.noise, dW,
                     record_every=record_every, diagnostics=False)
    summaries = np.stack([terminal_summary(config.spec, s) for s in traj.states])
    h0, hT = traj.h_series[0], traj.h_series[-1]
    drift = abs(hT - h0) / (abs(h0) if h0 != 0.0 else 1.0)
    return traj.state_times, summaries, drift


def run_ensemble(config: EnsembleConfig, n_threads: int = 1) -> EnsembleResult:
    """Integrate n_samples independent trajectories and collect summaries.

    Failed samples (non-finite states) are reported by index and excluded
    from the statistics; the merge order is by sample index regardless of
    the thread count.
    """
    names = summary_names(config.spec, config.initial_state)
    indices = list(range(config.n_samples))
    outputs: dict[int, object] = {}
    failures: list[tuple[int, str]] = []

    def work(i):
        try:
            return i, _run_sample(config, i), None
        except NumericalError as err:
            return i, None, str(err)

    if n_threads > 1:
        with ThreadPoolExecutor(max_workers=n_threads) as pool:
            for i, ok, err in pool.map(work, indices):
                outputs[i] = (ok, err)
    else:
        for i in indices:
            _, ok, err = work(i)
            outputs[i] = (ok, err)

    terminal, checkpoints, drifts, kept = [], [], [], []
    times = None
    for i in indices:
        ok, err = outputs[i]
        if err is not None:
            failures.append((i, err))
            continue
        state_times, summaries, drift = ok
        times = state_times
        kept.append(i)
        terminal.append(summaries[-1])
        checkpoints.append(summaries)
        drifts.append(drift)
    if not kept:
        raise NumericalError("every ensemble sample failed")
    return EnsembleResult(
        summary_names=names,
        terminal_summaries=np.stack(terminal),
        sample_indices=np.asarray(kept),
        checkpoint_times=np.asarray(times),
        checkpoint_summaries=np.stack(checkpoints),
        h_drift=np.asarray(drifts),
        failures=failures,
        master_seed=config.master_seed,
        n_requested=config.n_samples,
    )


@dataclass
class EnsembleStatistics:
    names: list
    n_samples: int
    mean: np.ndarray
    covariance: np.ndarray | None
    total_variance: float | None
    h_drift_quantiles: dict
    variance_vs_time: np.ndarray | None = None
    checkpoint_times: np.ndarray | None = None


def ensemble_statistics(result: EnsembleResult, want_covariance: bool | None = None) -> EnsembleStatistics:
    """Unbiased mean/covariance of the terminal summaries plus drift quantiles.

    Covariance needs at least two samples; requesting it explicitly with
    fewer raises, while the default marks it unavailable.
    """
    n = result.n_samples
    if want_covariance is None:
        want_covariance = n >= 2
    if want_covariance and n < 2:
        raise ValueError("covariance needs at least 2 samples")
    mean = result.terminal_summaries.mean(axis=0)
    cov = None
    total_var = None
    var_t = None
    if want_covariance:
        centered = result.terminal_summaries - mean
        cov = centered.T @ centered / (n - 1)
        cov = 0.5 * (cov + cov.T)
        total_var = float(np.trace(cov))
        var_t = result.checkpoint_summaries.var(axis=0, ddof=1).sum(axis=1)
    qs = {q: float(np.quantile(result.h_drift, q)) for q in (0.5, 0.9, 1.0)}
    return EnsembleStatistics(
        names=result.summary_names,
        n_samples=n,
        mean=mean,
        covariance=cov,
        total_variance=total_var,
        h_drift_quantiles=qs,
        variance_vs_time=var_t,
        checkpoint_times=result.checkpoint_times,
    )


# --------------------------------------------------------------------------
# strong convergence measurement

def _state_distance(a: AnyState, b: AnyState) -> float:
    return float(np.sqrt(sum(float(np.sum((x - y) ** 2)) for x, y in zip(payload(a), payload(b)))))


@dataclass
class StrongOrderResult:
    slope: float
    dt_levels: np.ndarray
    mean_errors: np.ndarray
    n_paths: int


def strong_order_estimate(config: EnsembleConfig, dt_levels, n_paths: int | None = None) -> StrongOrderResult:
    """Least-squares slope of log mean terminal error against log dt.

    All levels share Brownian paths by exact block summation from the
    finest level, which serves as the reference; at least three levels are
    required. Deterministic schemes use a single path.
    """
    dts = sorted(float(d) for d in dt_levels)
    if len(dts) < 3:
        raise ValueError("strong order estimation needs at least 3 dt levels")
    dt_fine = dts[0]
    factors = []
    for d in dts:
        f = d / dt_fine
        if abs(f - round(f)) > 1e-9:
            raise ValueError("all dt levels must be integer multiples of the finest")
        factors.append(int(round(f)))
    n_fine = int(round(config.horizon / dt_fine))
    n_modes = config.noise.n_modes if config.noise else 0
    deterministic = (config.scheme == SchemeChoice.DETERMINISTIC_RK4) or n_modes == 0
    paths = 1 if deterministic else (n_paths or 64)
    errors = np.zeros((paths, len(dts) - 1))
    for ipath in range(paths):
        dw_fine = None
        if not deterministic:
            dw_fine = BrownianDriver(config.master_seed, ipath, dt_fine,
                                     n_fine, n_modes).increments()
        ref = integrate(config.spec, config.initial_state, config.scheme, dt_fine,
                        n_fine, config.noise, dw_fine,
                        record_every=n_fine, diagnostics=False).terminal
        for j, (d, f) in enumerate(zip(dts[1:], factors[1:])):
            dw = coarsen_increments(dw_fine, f) if dw_fine is not None else None
            term = integrate(config.spec, config.initial_state, config.scheme, d,
                             n_fine // f, config.noise, dw,
                             record_every=n_fine // f, diagnostics=False).terminal
            errors[ipath, j] = _state_distance(term, ref)
    mean_errors = errors.mean(axis=0)
    slope = float(np.polyfit(np.log(dts[1:]), np.log(mean_errors), 1)[0])
    return StrongOrderResult(slope=slope, dt_levels=np.asarray(dts[1:]),
                             mean_errors=mean_errors, n_paths=paths)


# --------------------------------------------------------------------------
# stochastic advection of the total momentum

@dataclass
class InvariantSeries:
    times: np.ndarray
    values: np.ndarray

    @property
    def rel_drift(self) -> float:
        c0 = self.values[0]
        scale = abs(c0) if c0 != 0.0 else 1.0
        return float(np.max(np.abs(self.values - c0)) / scale)


def advection_invariant_series(trajectory: Trajectory, w, spec: LagrangianSpec,
                               noise: NoiseBasis | None = None,
                               tracers: TracerCloud | None = None) -> InvariantSeries:
    """Pairing of the pulled-back total momentum with a fixed test field.

    The series c(t) = <pullback of M(t), w> is evaluated through tracers
    carrying the flow gradient; it is exactly conserved by the continuum
    flow, so its drift measures time-discretization error. Landmark runs
    must use the untangled representation (the momentum cloud rides the
    transport flow); image runs may use either.
    """
    if not trajectory.has_full_states:
        raise ValueError("invariant evaluation needs a trajectory recorded at every step")
    first = trajectory.states[0]
    if isinstance(first, LandmarkState):
        raise TypeError("landmark advection diagnostics need the untangled representation")
    if isinstance(first, LandmarkUntangledState):
        if tracers is None:
            tracers = TracerCloud.seed(first.m_points)
        series = advance_tracers(tracers, trajectory, spec, noise, return_series=True)
        w_at_labels = w.velocity_at(series[0].labels)
        values = []
        for cloud, state in zip(series, trajectory.states):
            pulled = np.einsum("aji,aj->ai", cloud.deformation, state.m_weights)
            values.append(float(np.sum(pulled * w_at_labels)))
        return InvariantSeries(times=trajectory.state_times, values=np.asarray(values))
    # image structure: material quadrature over tracers seeded at the nodes
    dom = spec.domain
    if tracers is None:
        tracers = TracerCloud.seed(dom.nodes())
    series = advance_tracers(tracers, trajectory, spec, noise, return_series=True)
    w_at_labels = w.velocity_at(series[0].labels)
    cell = dom.length ** dom.dim / tracers.count
    values = []
    for cloud, state in zip(series, trajectory.states):
        M = total_momentum(spec, state)
        m_at = M.at(cloud.positions)
        pulled = np.einsum("aji,aj->ai", cloud.deformation, m_at)
        dets = np.linalg.det(cloud.deformation)
        values.append(float(np.sum(pulled * w_at_labels * dets[:, None]) * cell))
    return InvariantSeries(times=trajectory.state_times, values=np.asarray(values))
