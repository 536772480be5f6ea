"""Configuration-driven command line: simulate, match, uq, verify.

All commands consume one JSON config file and write reproducible outputs:
CSV for time series and per-sample tables (with a comment header naming
the columns, the config hash and the master seed), JSON for manifests and
statistics. Identical config and seed give byte-identical files, whatever
the thread count.

Exit codes: 0 success, 1 invalid input, 2 numerical failure,
3 verification failure.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .core import (
    IMAGE,
    LANDMARK,
    ImageState,
    LagrangianSpec,
    LandmarkState,
    euler_lagrange_residual,
    hamiltonian,
)
from .algebra import InertiaOperator
from .domain import Domain, TWO_PI
from .fields import OneFormDensity, ScalarField
from .gridio import read_grid
from .kernels import Kernel
from .matching import MatchOptions, MatchProblem, match
from .noise import BrownianDriver, NoiseBasis
from .stochastics import NumericalError, SchemeChoice, integrate
from .uq import EnsembleConfig, ensemble_statistics, run_ensemble, summary_names, terminal_summary
from .verify import VerifyConfig, run_checks


class ConfigError(ValueError):
    """Invalid configuration; the message names the offending key."""


# --------------------------------------------------------------------------
# config parsing

_DEFAULTS = {
    "structure": "landmark",
    "domain": {"dim": 2, "grid": False, "points_per_axis": 64, "length": TWO_PI},
    "lagrangian": {
        "sigma_m_sq": 0.5,
        "kernel": {"length_scale": 1.0, "amplitude": 1.0},
        "inertia": {"alpha": 1.0, "power": 1},
        "potential_strength": 0.0,
    },
    "noise": {"kind": "none"},
    "scheme": "deterministic_rk4",
    "dt": 1e-3,
    "horizon": 1.0,
    "seed": 0,
    "initial": {},
    "match": {},
    "uq": {"n_samples": 1024, "n_checkpoints": 10},
}


def _require(mapping, key, path):
    if key not in mapping:
        raise ConfigError(f"{path}: missing required key '{key}'")
    return mapping[key]


def _merge_defaults(user: dict) -> dict:
    out = json.loads(json.dumps(_DEFAULTS))
    for key, val in user.items():
        if key not in out and key not in ("output_dir",):
            raise ConfigError(f"config: unknown key '{key}'")
        if isinstance(val, dict) and isinstance(out.get(key), dict):
            merged = dict(out[key])
            merged.update(val)
            out[key] = merged
        else:
            out[key] = val
    return out


@dataclass
class RunConfig:
    """Validated run configuration plus the objects it describes."""

    raw: dict
    spec: LagrangianSpec
    noise: NoiseBasis
    scheme: str
    dt: float
    horizon: float
    seed: int
    initial_cfg: dict
    match_cfg: dict
    uq_cfg: dict
    base_dir: Path = field(default_factory=Path)

    @property
    def n_steps(self) -> int:
        return int(round(self.horizon / self.dt))

    def config_hash(self) -> str:
        canon = json.dumps(self.raw, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canon.encode()).hexdigest()[:16]


def parse_config(data: dict, base_dir: Path | None = None) -> RunConfig:
    cfg = _merge_defaults(data)
    structure = cfg["structure"]
    if structure not in (LANDMARK, IMAGE):
        raise ConfigError(f"structure: must be 'landmark' or 'image', got {structure!r}")

    dom_cfg = cfg["domain"]
    dim = int(dom_cfg.get("dim", 2))
    if dim not in (1, 2):
        raise ConfigError(f"domain.dim: must be 1 or 2, got {dim}")
    try:
        if structure == IMAGE or dom_cfg.get("grid", structure == IMAGE):
            domain = Domain.grid(dim, int(dom_cfg.get("points_per_axis", 64)),
                                 float(dom_cfg.get("length", TWO_PI)))
        else:
            domain = Domain.plane(dim)
    except ValueError as err:
        raise ConfigError(f"domain: {err}") from None

    lag = cfg["lagrangian"]
    sigma_m_sq = float(lag.get("sigma_m_sq", 0.5))
    if sigma_m_sq <= 0:
        raise ConfigError("lagrangian.sigma_m_sq: must be strictly positive")
    potential = float(lag.get("potential_strength", 0.0))
    try:
        if structure == LANDMARK:
            kern = lag.get("kernel", {})
            kernel = Kernel(length_scale=float(kern.get("length_scale", 1.0)),
                            amplitude=float(kern.get("amplitude", 1.0)))
            spec = LagrangianSpec(structure=LANDMARK, domain=domain, sigma_m_sq=sigma_m_sq,
                                  kernel=kernel, potential_strength=potential)
        else:
            inert = lag.get("inertia", {})
            inertia = InertiaOperator(alpha=float(inert.get("alpha", 1.0)),
                                      power=int(inert.get("power", 1)))
            spec = LagrangianSpec(structure=IMAGE, domain=domain, sigma_m_sq=sigma_m_sq,
                                  inertia=inertia, potential_strength=potential)
    except ValueError as err:
        raise ConfigError(f"lagrangian: {err}") from None

    noise = _parse_noise(cfg["noise"], structure, domain)

    scheme = cfg["scheme"]
    if scheme not in SchemeChoice.ALL:
        raise ConfigError(f"scheme: unknown scheme {scheme!r}; choose one of {SchemeChoice.ALL}")
    if scheme == SchemeChoice.DETERMINISTIC_RK4 and noise.n_modes > 0:
        raise ConfigError("scheme: deterministic_rk4 cannot be combined with noise modes")

    dt = float(cfg["dt"])
    horizon = float(cfg["horizon"])
    if dt <= 0:
        raise ConfigError("dt: must be positive")
    if horizon <= 0:
        raise ConfigError("horizon: must be positive")
    seed = int(cfg["seed"])
    if seed < 0:
        raise ConfigError("seed: must be a nonnegative integer")

    return RunConfig(raw=cfg, spec=spec, noise=noise, scheme=scheme, dt=dt,
                     horizon=horizon, seed=seed, initial_cfg=cfg["initial"],
                     match_cfg=cfg["match"], uq_cfg=cfg["uq"],
                     base_dir=base_dir or Path.cwd())


def _parse_noise(noise_cfg: dict, structure: str, domain: Domain) -> NoiseBasis:
    kind = noise_cfg.get("kind", "none")
    if kind == "none":
        return NoiseBasis.none()
    if kind == "constant":
        vectors = _require(noise_cfg, "vectors", "noise")
        for v in vectors:
            if len(v) != domain.dim:
                raise ConfigError(f"noise.vectors: entries must have dim {domain.dim}")
        return NoiseBasis.constant(vectors)
    if kind == "fourier":
        if structure != IMAGE:
            raise ConfigError("noise.kind: 'fourier' modes are for the image structure")
        n_modes = int(noise_cfg.get("n_modes", 2))
        amplitude = float(noise_cfg.get("amplitude", 0.1))
        return NoiseBasis.fourier(domain, n_modes, amplitude)
    if kind == "gaussian_bumps":
        if structure != LANDMARK:
            raise ConfigError("noise.kind: 'gaussian_bumps' modes are for the landmark structure")
        centers = _require(noise_cfg, "centers", "noise")
        n = len(centers)
        amplitudes = noise_cfg.get("amplitudes", [0.1] * n)
        widths = noise_cfg.get("widths", [1.0] * n)
        components = noise_cfg.get("components", [i % domain.dim for i in range(n)])
        if not (len(amplitudes) == len(widths) == len(components) == n):
            raise ConfigError("noise: centers/amplitudes/widths/components lengths differ")
        return NoiseBasis.gaussian_bumps(centers, amplitudes, widths, components)
    raise ConfigError(f"noise.kind: unknown kind {kind!r}")


def _landmark_arrays(initial_cfg: dict):
    lm = _require(initial_cfg, "landmarks", "initial")
    q = np.asarray(_require(lm, "q", "initial.landmarks"), dtype=float)
    sigma = np.asarray(lm.get("sigma", np.zeros_like(q)), dtype=float)
    if q.ndim != 2:
        raise ConfigError("initial.landmarks.q: expected a list of points")
    if sigma.shape != q.shape:
        raise ConfigError("initial.landmarks.sigma: shape must match q")
    p = lm.get("p")
    p = sigma.copy() if p is None else np.asarray(p, dtype=float)
    if p.shape != q.shape:
        raise ConfigError("initial.landmarks.p: shape must match q")
    return q, p, sigma


def initial_state_from_config(run: RunConfig):
    if run.spec.structure == LANDMARK:
        q, p, sigma = _landmark_arrays(run.initial_cfg)
        if q.shape[1] != run.spec.domain.dim:
            raise ConfigError(f"initial.landmarks.q: points must have dim {run.spec.domain.dim}")
        return LandmarkState(0.0, q, p, sigma)
    img = _require(run.initial_cfg, "image", "initial")
    dom = run.spec.domain
    n_vals = _load_grid(run, _require(img, "n", "initial.image"), dom.shape, "initial.image.n")
    sig_path = img.get("sigma")
    sigma = ScalarField(dom, _load_grid(run, sig_path, dom.shape, "initial.image.sigma")) \
        if sig_path else ScalarField.zeros(dom)
    mu_path = img.get("mu")
    mu_shape = (dom.dim,) + dom.shape
    mu = OneFormDensity(dom, _load_grid(run, mu_path, mu_shape, "initial.image.mu")) \
        if mu_path else OneFormDensity.zeros(dom)
    return ImageState(0.0, mu, sigma, ScalarField(dom, n_vals))


def _load_grid(run: RunConfig, rel_path: str, expected_shape, key: str) -> np.ndarray:
    path = Path(rel_path)
    if not path.is_absolute():
        path = run.base_dir / path
    try:
        arr = read_grid(path)
    except (OSError, ValueError) as err:
        raise ConfigError(f"{key}: {err}") from None
    if arr.shape != tuple(expected_shape):
        raise ConfigError(f"{key}: grid shape {arr.shape} does not match domain {tuple(expected_shape)}")
    return arr


# --------------------------------------------------------------------------
# output helpers

def _fmt(x: float) -> str:
    return repr(float(x))


def write_csv(path: Path, header_cols, rows, config_hash: str, seed: int, title: str):
    lines = [f"# {title}",
             f"# config_hash={config_hash} master_seed={seed}",
             f"# columns: {','.join(header_cols)}",
             ",".join(header_cols)]
    for row in rows:
        lines.append(",".join(_fmt(v) for v in row))
    path.write_text("\n".join(lines) + "\n")


def write_json(path: Path, payload: dict):
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")


def manifest_dict(run: RunConfig, command: str, outputs: list[str]) -> dict:
    return {
        "command": command,
        "config": run.raw,
        "config_hash": run.config_hash(),
        "master_seed": run.seed,
        "outputs": sorted(outputs),
        "versions": {
            "metamorph": __version__,
            "numpy": np.__version__,
            "python": ".".join(map(str, sys.version_info[:3])),
        },
    }


# --------------------------------------------------------------------------
# commands

def cmd_simulate(run: RunConfig, out_dir: Path) -> int:
    state0 = initial_state_from_config(run)
    n_modes = run.noise.n_modes
    dW = None
    if n_modes and run.scheme != SchemeChoice.DETERMINISTIC_RK4:
        dW = BrownianDriver(run.seed, 0, run.dt, run.n_steps, n_modes).increments()
    names = summary_names(run.spec, state0)
    rows = []

    def observer(k, state):
        rows.append([state.t, hamiltonian(run.spec, state),
                     euler_lagrange_residual(run.spec, state)]
                    + list(terminal_summary(run.spec, state)))

    integrate(run.spec, state0, run.scheme, run.dt, run.n_steps, run.noise, dW,
              record_every=run.n_steps, diagnostics=False, observer=observer)
    csv_path = out_dir / "trajectory.csv"
    write_csv(csv_path, ["t", "hamiltonian", "el_residual"] + names, rows,
              run.config_hash(), run.seed, "metamorph trajectory")
    write_json(out_dir / "manifest.json",
               manifest_dict(run, "simulate", ["trajectory.csv", "manifest.json"]))
    return 0


def _match_problem(run: RunConfig) -> MatchProblem:
    target = _require(run.match_cfg, "target", "match")
    if run.spec.structure == LANDMARK:
        q0, p, sigma = _landmark_arrays(run.initial_cfg)
        q1 = np.asarray(_require(target, "q", "match.target"), dtype=float)
        if q1.shape != q0.shape:
            raise ConfigError("match.target.q: shape must match initial.landmarks.q")
        n0, n1 = q0, q1
    else:
        state0 = initial_state_from_config(run)
        n0 = state0.n
        dom = run.spec.domain
        n1 = ScalarField(dom, _load_grid(run, _require(target, "n", "match.target"),
                                         dom.shape, "match.target.n"))
    dt = float(run.match_cfg.get("dt", 0.01))
    try:
        return MatchProblem(run.spec, n0, n1, dt=dt, horizon=run.horizon)
    except ValueError as err:
        raise ConfigError(f"match: {err}") from None


def cmd_match(run: RunConfig, out_dir: Path) -> int:
    problem = _match_problem(run)
    mc = run.match_cfg
    try:
        options = MatchOptions(
            mode=mc.get("mode", "exact"),
            epsilon=float(mc.get("epsilon", 1e-2)),
            epsilon_target=float(mc.get("epsilon_target", 1e-4)),
            max_iters=int(mc.get("max_iters", 200)),
            image_mode_cutoff=int(mc.get("image_mode_cutoff", 1)),
        )
    except ValueError as err:
        raise ConfigError(f"match: {err}") from None
    result = match(problem, options)
    if run.spec.structure == LANDMARK:
        sigma0 = result.sigma0.tolist()
        mu0 = result.mu0.weights.tolist()
    else:
        sigma0 = result.sigma0.values.tolist()
        mu0 = result.mu0.values.tolist()
    payload = {
        "config_hash": run.config_hash(),
        "master_seed": run.seed,
        "sigma0": sigma0,
        "mu0": mu0,
        "action": result.action,
        "data_misfit": result.data_misfit,
        "endpoint_residual": result.endpoint_residual,
        "objective": result.objective,
        "iterations": result.iterations,
        "converged": result.converged,
        "endpoint_ok": result.endpoint_ok,
    }
    write_json(out_dir / "match_result.json", payload)
    traj = result.trajectory
    names = summary_names(run.spec, traj.initial)
    rows = []
    for s in traj.states:
        rows.append([s.t, hamiltonian(run.spec, s), euler_lagrange_residual(run.spec, s)]
                    + list(terminal_summary(run.spec, s)))
    write_csv(out_dir / "trajectory.csv", ["t", "hamiltonian", "el_residual"] + names,
              rows, run.config_hash(), run.seed, "metamorph matched trajectory")
    write_json(out_dir / "manifest.json",
               manifest_dict(run, "match", ["match_result.json", "trajectory.csv",
                                            "manifest.json"]))
    return 0 if result.converged else 2


def cmd_uq(run: RunConfig, out_dir: Path, n_threads: int = 1) -> int:
    state0 = initial_state_from_config(run)
    uq_cfg = run.uq_cfg
    n_samples = int(uq_cfg.get("n_samples", 1024))
    if n_samples < 1:
        raise ConfigError("uq.n_samples: must be at least 1")
    config = EnsembleConfig(
        spec=run.spec, initial_state=state0, noise=run.noise, scheme=run.scheme,
        dt=run.dt, horizon=run.horizon, n_samples=n_samples, master_seed=run.seed,
        n_checkpoints=int(uq_cfg.get("n_checkpoints", 10)),
    )
    result = run_ensemble(config, n_threads=n_threads)
    stats = ensemble_statistics(result, want_covariance=result.n_samples >= 2)

    rows = [[idx] + list(summ) for idx, summ in
            zip(result.sample_indices, result.terminal_summaries)]
    write_csv(out_dir / "samples.csv", ["sample"] + result.summary_names, rows,
              run.config_hash(), run.seed, "metamorph per-sample terminal summaries")

    var_rows = []
    if stats.variance_vs_time is not None:
        for t, v in zip(stats.checkpoint_times, stats.variance_vs_time):
            var_rows.append([t, v])
    write_csv(out_dir / "variance_vs_t.csv", ["t", "total_variance"], var_rows,
              run.config_hash(), run.seed, "metamorph ensemble variance vs time")

    stats_payload = {
        "config_hash": run.config_hash(),
        "master_seed": run.seed,
        "n_samples": stats.n_samples,
        "n_requested": result.n_requested,
        "failed_samples": [list(f) for f in result.failures],
        "summary_names": stats.names,
        "mean": stats.mean.tolist(),
        "covariance_available": stats.covariance is not None,
        "covariance": stats.covariance.tolist() if stats.covariance is not None else None,
        "total_variance": stats.total_variance,
        "h_drift_quantiles": {str(k): v for k, v in stats.h_drift_quantiles.items()},
    }
    write_json(out_dir / "statistics.json", stats_payload)
    write_json(out_dir / "manifest.json",
               manifest_dict(run, "uq", ["samples.csv", "variance_vs_t.csv",
                                         "statistics.json", "manifest.json"]))
    return 0


def cmd_verify(run: RunConfig | None, out_dir: Path) -> int:
    if run is not None:
        cfg = VerifyConfig(dt=run.dt, horizon=run.horizon,
                           n_noise_modes=run.noise.n_modes, seed=run.seed or 20240917)
        config_hash = run.config_hash()
        seed = run.seed
    else:
        cfg = VerifyConfig()
        config_hash = "default"
        seed = cfg.seed
    results = run_checks(cfg)
    width = max(len(r.name) for r in results)
    print(f"{'check':{width}s}  {'status':6s}  {'value':>12s}  threshold")
    for r in results:
        val = "-" if r.value is None else f"{r.value:.3e}"
        thr = "-" if r.threshold is None else f"{r.comparison} {r.threshold:g}"
        print(f"{r.name:{width}s}  {r.status.upper():6s}  {val:>12s}  {thr}")
    n_fail = sum(r.status == "fail" for r in results)
    n_skip = sum(r.status == "skip" for r in results)
    print(f"{len(results)} checks: {len(results) - n_fail - n_skip} passed, "
          f"{n_fail} failed, {n_skip} skipped")
    payload = {
        "config_hash": config_hash,
        "master_seed": seed,
        "checks": [
            {"name": r.name, "status": r.status, "value": r.value,
             "threshold": r.threshold, "comparison": r.comparison, "detail": r.detail}
            for r in results
        ],
        "n_failed": n_fail,
    }
    write_json(out_dir / "verify_report.json", payload)
    return 3 if n_fail else 0


# --------------------------------------------------------------------------
# entry point

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="metamorph",
        description="Dynamic-template transport: simulate, match, quantify, verify.")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in ("simulate", "match", "uq", "verify"):
        p = sub.add_parser(name)
        p.add_argument("--config", type=str, default=None,
                       required=(name != "verify"),
                       help="JSON run configuration")
        p.add_argument("--out", type=str, default=None, help="output directory")
        p.add_argument("--seed", type=int, default=None, help="override the master seed")
        p.add_argument("--threads", type=int, default=None,
                       help="worker threads (uq); METAMORPH_THREADS is the fallback")
    return parser


def _thread_count(args) -> int:
    if args.threads is not None:
        return max(1, args.threads)
    env = os.environ.get("METAMORPH_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            raise ConfigError("METAMORPH_THREADS: must be an integer")
    return 1


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        run = None
        if args.config is not None:
            cfg_path = Path(args.config)
            try:
                data = json.loads(cfg_path.read_text())
            except OSError as err:
                raise ConfigError(f"config: cannot read {cfg_path}: {err}")
            except json.JSONDecodeError as err:
                raise ConfigError(f"config: invalid JSON in {cfg_path}: {err}")
            if args.seed is not None:
                data["seed"] = args.seed
            run = parse_config(data, base_dir=cfg_path.parent)
        out_dir = Path(args.out) if args.out else Path(run.raw.get("output_dir", "out")
                                                       if run else "out")
        out_dir.mkdir(parents=True, exist_ok=True)
        if args.command == "simulate":
            return cmd_simulate(run, out_dir)
        if args.command == "match":
            return cmd_match(run, out_dir)
        if args.command == "uq":
            return cmd_uq(run, out_dir, n_threads=_thread_count(args))
        return cmd_verify(run, out_dir)
    except ConfigError as err:
        print(f"error: {err}", file=sys.stderr)
        return 1
    except NumericalError as err:
        print(f"numerical failure: {err}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    raise SystemExit(main())
