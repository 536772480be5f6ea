"""Executable verification of the structural identities and scheme contracts.

Each check returns a pass/fail/skip record with the measured value and its
threshold; the CLI renders them as a table. Stochastic checks are skipped
when the configuration carries no noise modes.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .algebra import (
    ad,
    ad_star,
    diamond,
    lie_derivative_scalar,
    momentum_norm,
    pair,
    star,
)
from .core import (
    GradientTriple,
    ImageState,
    LagrangianSpec,
    LandmarkGradient,
    LandmarkState,
    LandmarkUntangledState,
    euler_lagrange_residual,
    lie_poisson_apply,
    rhs_tangled,
    total_momentum,
    untangle,
    velocity_of,
)
from .domain import Domain, gradient, random_band_limited, spectral_derivative
from .fields import (
    LandmarkCotangent,
    Landmarks,
    OneFormDensity,
    PointMomentum,
    ScalarField,
    VectorField,
)
from .kernels import Kernel, KernelVelocity
from .noise import BrownianDriver, NoiseBasis, coarsen_increments
from .stochastics import (
    SchemeChoice,
    diffusion_mode,
    integrate,
    ito_drift_correction,
)
from .uq import advection_invariant_series


@dataclass
class CheckResult:
    name: str
    status: str            # "pass" | "fail" | "skip"
    value: float | None
    threshold: float | None
    comparison: str = "<="
    detail: str = ""

    @classmethod
    def from_value(cls, name, value, threshold, comparison="<=", detail=""):
        if comparison == "<=":
            ok = value <= threshold
        else:
            ok = value >= threshold
        return cls(name=name, status="pass" if ok else "fail", value=float(value),
                   threshold=float(threshold), comparison=comparison, detail=detail)

    @classmethod
    def skipped(cls, name, detail):
        return cls(name=name, status="skip", value=None, threshold=None, detail=detail)


@dataclass
class VerifyConfig:
    dt: float = 1e-3
    horizon: float = 1.0
    n_noise_modes: int = 2
    n_random: int = 20
    seed: int = 20240917
    grid_points: int = 64

    @property
    def stochastic(self) -> bool:
        return self.n_noise_modes > 0


def _default_landmark_case():
    q = np.array([[0.0, 0.0], [1.0, 0.2], [-0.6, 0.8]])
    sig = np.array([[0.9, 0.4], [-0.7, 0.3], [0.2, -0.9]])
    return q, sig


def _random_image_state(dom, spec, rng, k_max=6, amp=0.5):
    return ImageState(
        0.0,
        OneFormDensity(dom, np.stack([random_band_limited(dom, rng, k_max, amp)
                                      for _ in range(dom.dim)])),
        ScalarField(dom, random_band_limited(dom, rng, k_max, amp)),
        ScalarField(dom, random_band_limited(dom, rng, k_max, amp)),
    )


# --------------------------------------------------------------------------
# adjoint identities

def check_dualities(cfg: VerifyConfig):
    rng = np.random.default_rng(cfg.seed)
    dom = Domain.grid(1, cfg.grid_points)
    dom2 = Domain.grid(2, max(32, cfg.grid_points // 2))
    kernel = Kernel()
    results = []

    worst = {"diamond-image": 0.0, "star-image": 0.0, "adstar-grid": 0.0,
             "diamond-landmark": 0.0, "star-landmark": 0.0}
    for i in range(cfg.n_random):
        d = dom if i % 2 == 0 else dom2
        def rf(a=1.0):
            return random_band_limited(d, rng, k_max=6, amplitude=a)
        u = VectorField(d, np.stack([rf() for _ in range(d.dim)]))
        v = VectorField(d, np.stack([rf() for _ in range(d.dim)]))
        m = OneFormDensity(d, np.stack([rf() for _ in range(d.dim)]))
        pi = ScalarField(d, rf())
        n = ScalarField(d, rf())
        om = ScalarField(d, rf())
        scale = max(pi.l2() * n.l2() * u.l2(), 1e-30)
        resid = abs(pair(diamond(pi, n), u)
                    + d.integrate(pi.values * lie_derivative_scalar(u, n).values))
        worst["diamond-image"] = max(worst["diamond-image"], resid / scale)
        scale = max(pi.l2() * om.l2() * u.l2(), 1e-30)
        resid = abs(d.integrate(pi.values * lie_derivative_scalar(u, om).values)
                    - d.integrate(star(u, pi).values * om.values))
        worst["star-image"] = max(worst["star-image"], resid / scale)
        scale = max(m.l2() * u.l2() * v.l2(), 1e-30)
        resid = abs(pair(ad_star(u, m), v) - pair(m, ad(u, v)))
        worst["adstar-grid"] = max(worst["adstar-grid"], resid / scale)

        k = 1 + int(rng.integers(5))
        q = rng.normal(size=(k, 2))
        sig = rng.normal(size=(k, 2))
        w = rng.normal(size=(k, 2))
        uvel = KernelVelocity(kernel, rng.normal(size=(k, 2)), rng.normal(size=(k, 2)))
        lm_scale = max(np.linalg.norm(sig) * np.linalg.norm(w), 1e-30)
        # diamond: <sigma diamond q, u> = -sum sigma . u(q)
        resid = abs(pair(diamond(LandmarkCotangent(q, sig), Landmarks(q)), uvel)
                    + float(np.sum(sig * uvel.velocity_at(q))))
        worst["diamond-landmark"] = max(worst["diamond-landmark"], resid / lm_scale)
        # star: <sigma, grad(u) w> = <u star sigma, w>
        grads = uvel.gradient_at(q)
        lhs = float(np.sum(sig * np.einsum("aij,aj->ai", grads, w)))
        rhs = float(np.sum(star(uvel, LandmarkCotangent(q, sig)).covectors * w))
        worst["star-landmark"] = max(worst["star-landmark"], abs(lhs - rhs) / lm_scale)

    for key, val in worst.items():
        results.append(CheckResult.from_value(f"adjoint/{key}", val, 1e-10,
                                              detail=f"max over {cfg.n_random} random draws"))
    return results


# --------------------------------------------------------------------------
# coadjoint motion of the momentum map

def check_coadjoint(cfg: VerifyConfig):
    rng = np.random.default_rng(cfg.seed + 1)
    worst = 0.0
    for i in range(cfg.n_random):
        dom = Domain.grid(1, cfg.grid_points) if i % 2 == 0 else Domain.grid(2, 32)
        spec = LagrangianSpec.image(dom, sigma_m_sq=0.5,
                                    potential_strength=0.5 if i % 3 == 0 else 0.0)
        st = _random_image_state(dom, spec, rng)
        inc = rhs_tangled(spec, st)
        lhs = inc.mu.values \
            + inc.sigma.values * gradient(st.n.values, dom) \
            + st.sigma.values * gradient(inc.n.values, dom)
        u = velocity_of(spec, st)
        rhs = -ad_star(u, total_momentum(spec, st)).values
        scale = max(float(np.max(np.abs(rhs))), 1e-30)
        worst = max(worst, float(np.max(np.abs(lhs - rhs))) / scale)
    return [CheckResult.from_value("structure/coadjoint", worst, 1e-8,
                                   detail=f"{cfg.n_random} random grid states")]


# --------------------------------------------------------------------------
# conservation checks

def check_conservation(cfg: VerifyConfig):
    spec = LagrangianSpec.landmark(dim=2, sigma_m_sq=0.5)
    q, sig = _default_landmark_case()
    st = LandmarkState(0.0, q, sig.copy(), sig.copy())
    n_steps = int(round(cfg.horizon / cfg.dt))
    traj = integrate(spec, st, SchemeChoice.DETERMINISTIC_RK4, cfg.dt, n_steps)
    return [CheckResult.from_value("conservation/hamiltonian", traj.hamiltonian_drift(),
                                   1e-8, detail=f"3 landmarks, RK4, dt={cfg.dt:g}")]


def check_noether(cfg: VerifyConfig):
    results = []
    spec = LagrangianSpec.landmark(dim=2, sigma_m_sq=0.5)
    q, sig = _default_landmark_case()
    st = LandmarkState(0.0, q, sig.copy(), sig.copy())
    n_steps = int(round(cfg.horizon / cfg.dt))
    traj = integrate(spec, st, SchemeChoice.DETERMINISTIC_RK4, cfg.dt, n_steps)
    scale = max(momentum_norm(st.mu, spec.kernel), 1e-30)
    results.append(CheckResult.from_value("conservation/noether-landmark",
                                          float(np.max(traj.residual_series)) / scale, 1e-6))
    rng = np.random.default_rng(cfg.seed + 2)
    dom = Domain.grid(1, 128)
    spec_i = LagrangianSpec.image(dom, sigma_m_sq=0.5, potential_strength=0.5)
    n0 = ScalarField(dom, random_band_limited(dom, rng, 4, 1.0))
    s0 = ScalarField(dom, random_band_limited(dom, rng, 4, 0.5))
    mu0 = OneFormDensity(dom, -s0.values * gradient(n0.values, dom))
    st_i = ImageState(0.0, mu0, s0, n0)
    traj_i = integrate(spec_i, st_i, SchemeChoice.DETERMINISTIC_RK4, cfg.dt, n_steps)
    scale = max(momentum_norm(st_i.mu, spec_i.inertia), 1e-30)
    results.append(CheckResult.from_value("conservation/noether-image",
                                          float(np.max(traj_i.residual_series)) / scale, 1e-6))
    return results


def check_form_equivalence(cfg: VerifyConfig):
    spec = LagrangianSpec.landmark(dim=2, sigma_m_sq=0.5)
    q, sig = _default_landmark_case()
    st = LandmarkState(0.0, q, sig.copy(), sig.copy())
    n_steps = int(round(cfg.horizon / cfg.dt))
    t1 = integrate(spec, st, SchemeChoice.DETERMINISTIC_RK4, cfg.dt, n_steps)
    # Seed the zero-weight momentum cloud away from the template points so
    # the two integrations do not share their arithmetic.
    st_u = LandmarkUntangledState(0.0, q + 0.37, np.zeros_like(sig), q.copy(), sig.copy())
    t2 = integrate(spec, st_u, SchemeChoice.DETERMINISTIC_RK4, cfg.dt, n_steps)
    m1 = total_momentum(spec, t1.terminal)
    m2 = total_momentum(spec, t2.terminal)
    scale = max(float(np.linalg.norm(sig)), 1e-30)
    m_diff = momentum_norm(
        m1.stacked_with(PointMomentum(m2.points, -m2.weights)), spec.kernel) / scale
    traj_diff = (float(np.max(np.abs(t1.terminal.q - t2.terminal.q)))
                 + float(np.max(np.abs(t1.terminal.sigma - t2.terminal.sigma)))) / scale
    results = [CheckResult.from_value("structure/form-equivalence-landmark",
                                      max(m_diff, traj_diff), 1e-6,
                                      detail="3 landmarks, tangled vs untangled")]
    rng = np.random.default_rng(cfg.seed + 9)
    dom = Domain.grid(1, cfg.grid_points)
    spec_i = LagrangianSpec.image(dom, sigma_m_sq=0.5)
    st_i = _random_image_state(dom, spec_i, rng, k_max=4, amp=0.3)
    g1 = integrate(spec_i, st_i, SchemeChoice.DETERMINISTIC_RK4, cfg.dt, n_steps)
    g2 = integrate(spec_i, untangle(st_i), SchemeChoice.DETERMINISTIC_RK4, cfg.dt, n_steps)
    M1 = total_momentum(spec_i, g1.terminal)
    M2 = total_momentum(spec_i, g2.terminal)
    diff = OneFormDensity(dom, M1.values - M2.values)
    rel = momentum_norm(diff, spec_i.inertia) / max(momentum_norm(M1, spec_i.inertia), 1e-30)
    results.append(CheckResult.from_value("structure/form-equivalence-image", rel, 1e-6,
                                          detail="random data, smoothed momentum norm"))
    return results


# --------------------------------------------------------------------------
# bracket structure

def check_bracket(cfg: VerifyConfig):
    rng = np.random.default_rng(cfg.seed + 3)
    dom = Domain.grid(1, cfg.grid_points)
    spec = LagrangianSpec.image(dom, sigma_m_sq=0.5)
    worst = 0.0
    for _ in range(max(cfg.n_random // 2, 5)):
        st = _random_image_state(dom, spec, rng)
        def rg():
            return GradientTriple(
                VectorField(dom, np.stack([random_band_limited(dom, rng, 6, 1.0)
                                           for _ in range(dom.dim)])),
                ScalarField(dom, random_band_limited(dom, rng, 6, 1.0)),
                ScalarField(dom, random_band_limited(dom, rng, 6, 1.0)),
            )
        df, dh = rg(), rg()
        fh = lie_poisson_apply(spec, st, df, dh)
        hf = lie_poisson_apply(spec, st, dh, df)
        ff = lie_poisson_apply(spec, st, df, df)
        scale = max(abs(fh), abs(hf), 1.0)
        worst = max(worst, abs(fh + hf) / scale, abs(ff) / scale)
    results = [CheckResult.from_value("bracket/skew", worst, 1e-12,
                                      detail="random functional gradients, grid")]
    results.append(CheckResult.from_value("bracket/jacobi-landmark",
                                          landmark_jacobi_residual(seed=cfg.seed + 4), 1e-4,
                                          detail="finite differences on polynomial functionals"))
    return results


def landmark_jacobi_residual(seed=0, n_landmarks=2, fd_step=1e-5):
    """Cyclic Jacobi sum for three polynomial functionals on (q, sigma).

    Gradients of the inner brackets are taken by centered differences, so
    the residual measures the bracket's Jacobi identity up to O(h^2).
    """
    rng = np.random.default_rng(seed)
    spec = LagrangianSpec.landmark(dim=2)
    k = n_landmarks
    As = [rng.normal(size=(k, 2)) for _ in range(3)]
    Bs = [rng.normal(size=(k, 2)) for _ in range(3)]
    Cs = [rng.normal(size=(k, 2)) for _ in range(3)]

    def functional(i):
        # f_i = sum_a A.q + B.sigma + C_a (q_a . sigma_a) : polynomial, nonlinear
        def f(q, s):
            return float(np.sum(As[i] * q) + np.sum(Bs[i] * s)
                         + np.sum(Cs[i] * q * s * s))
        def grad(q, s):
            return LandmarkGradient(d_sigma=Bs[i] + 2.0 * Cs[i] * q * s,
                                    d_q=As[i] + Cs[i] * s * s)
        return f, grad

    fs = [functional(i) for i in range(3)]
    q0 = rng.normal(size=(k, 2))
    s0 = rng.normal(size=(k, 2))

    def bracket(i, j, q, s):
        st = LandmarkState(0.0, q, s.copy(), s.copy())
        return lie_poisson_apply(spec, st, fs[i][1](q, s), fs[j][1](q, s))

    def bracket_grad(i, j, q, s):
        dq = np.zeros_like(q)
        ds = np.zeros_like(s)
        for a in range(k):
            for c in range(2):
                for arr, out in ((q, dq), (s, ds)):
                    old = arr[a, c]
                    arr[a, c] = old + fd_step
                    fp = bracket(i, j, q, s)
                    arr[a, c] = old - fd_step
                    fm = bracket(i, j, q, s)
                    arr[a, c] = old
                    out[a, c] = (fp - fm) / (2.0 * fd_step)
        return LandmarkGradient(d_sigma=ds, d_q=dq)

    total = 0.0
    scale = 0.0
    st0 = LandmarkState(0.0, q0, s0.copy(), s0.copy())
    for (i, j, l) in ((0, 1, 2), (1, 2, 0), (2, 0, 1)):
        term = lie_poisson_apply(spec, st0, bracket_grad(i, j, q0, s0), fs[l][1](q0, s0))
        total += term
        scale += abs(term)
    return abs(total) / max(scale, 1e-30)


# --------------------------------------------------------------------------
# Ito / Stratonovich checks

def check_ito_correction(cfg: VerifyConfig):
    if not cfg.stochastic:
        return [CheckResult.skipped("ito/correction-image", "no noise modes configured")]
    rng = np.random.default_rng(cfg.seed + 5)
    dom = Domain.grid(1, cfg.grid_points)
    spec = LagrangianSpec.image(dom)
    n0 = ScalarField(dom, random_band_limited(dom, rng, 6, 1.0))
    st = ImageState(0.0, OneFormDensity.zeros(dom), ScalarField.zeros(dom), n0)
    noise = NoiseBasis.constant([[1.0]])
    corr = ito_drift_correction(spec, st, noise)
    expected = 0.5 * spectral_derivative(spectral_derivative(n0.values, 0, dom), 0, dom)
    scale = max(float(np.max(np.abs(expected))), 1e-30)
    val = float(np.max(np.abs(corr.n.values - expected))) / scale
    return [CheckResult.from_value("ito/correction-image", val, 1e-10,
                                   detail="constant field: directional heat drift")]


def check_pathwise_consistency(cfg: VerifyConfig):
    if not cfg.stochastic:
        return [CheckResult.skipped("ito/pathwise-consistency", "no noise modes configured")]
    spec = LagrangianSpec.landmark(dim=2)
    noise = NoiseBasis.gaussian_bumps([[0.7, 0.4]], [0.05], [2.0], [0])
    q0 = np.array([[0.0, 0.0], [1.1, 0.4]])
    s0 = np.array([[0.6, 0.2], [-0.4, 0.3]])
    st = LandmarkState(0.0, q0, s0.copy(), s0.copy())
    n_fine = 1000
    ratios = []
    for path in range(4):
        dw_fine = BrownianDriver(cfg.seed + 6, path, 1e-3, n_fine, 1).increments()
        gaps = []
        for dt in (4e-3, 2e-3, 1e-3):
            f = int(round(dt / 1e-3))
            dw = coarsen_increments(dw_fine, f) if f > 1 else dw_fine
            th = integrate(spec, st, SchemeChoice.STRATONOVICH_HEUN, dt, n_fine // f,
                           noise, dw, record_every=n_fine // f, diagnostics=False).terminal
            te = integrate(spec, st, SchemeChoice.ITO_EULER_MARUYAMA, dt, n_fine // f,
                           noise, dw, record_every=n_fine // f, diagnostics=False).terminal
            gaps.append(np.linalg.norm(th.q - te.q) + np.linalg.norm(th.sigma - te.sigma))
        ratios.extend([gaps[0] / gaps[1], gaps[1] / gaps[2]])
    return [CheckResult.from_value("ito/pathwise-consistency", min(ratios), 1.8,
                                   comparison=">=", detail="Heun vs Euler-Maruyama gap halving")]


def check_ito_mean(cfg: VerifyConfig, n_samples: int = 10000):
    if not cfg.stochastic:
        return [CheckResult.skipped("ito/mean-zero", "no noise modes configured")]
    spec = LagrangianSpec.landmark(dim=2)
    noise = NoiseBasis.gaussian_bumps([[0.5, 0.2]], [0.4], [1.2], [0])
    st = LandmarkState(0.0, [[0.1, -0.2]], [[0.5, 0.3]], [[0.5, 0.3]])
    b = diffusion_mode(spec, st, noise.modes[0])
    coeffs = np.concatenate([b.q.ravel(), b.p.ravel(), b.sigma.ravel()])
    dt = cfg.dt
    draws = np.stack([BrownianDriver(cfg.seed + 7, i, dt, 1, 1).increments()[0]
                      for i in range(n_samples)])
    incs = draws @ coeffs[None, :]     # (n, m): per-sample noise term b * dW
    mean = incs.mean(axis=0)
    se = incs.std(axis=0, ddof=1) / np.sqrt(n_samples)
    val = float(np.max(np.abs(mean) / np.maximum(3.0 * se, 1e-300)))
    return [CheckResult.from_value("ito/mean-zero", val, 1.0,
                                   detail=f"noise-term mean over {n_samples} samples, units of 3 SE")]


# --------------------------------------------------------------------------
# advection of the total momentum

def check_advection(cfg: VerifyConfig):
    results = []
    spec = LagrangianSpec.landmark(dim=2)
    stu = LandmarkUntangledState(0.0, [[0.3, -0.2], [0.9, 0.6]], [[0.4, 0.1], [-0.2, 0.3]],
                                 [[0.0, 0.0], [1.0, 0.3]], [[0.5, 0.2], [-0.3, 0.4]])
    w = KernelVelocity(spec.kernel, [[0.5, 0.0]], [[0.3, 0.5]])
    n_steps = int(round(cfg.horizon / cfg.dt))
    tr = integrate(spec, stu, SchemeChoice.DETERMINISTIC_RK4, cfg.dt, n_steps, record_every=1)
    inv = advection_invariant_series(tr, w, spec)
    results.append(CheckResult.from_value("advection/deterministic", inv.rel_drift, 1e-4,
                                          detail="pullback pairing drift, unit time"))
    if not cfg.stochastic:
        results.append(CheckResult.skipped("advection/stochastic-halving",
                                           "no noise modes configured"))
        return results
    noise = NoiseBasis.gaussian_bumps([[0.5, 0.2]], [0.2], [1.5], [1])
    n_fine = 1000
    ratios = []
    for path in range(8):
        dw_fine = BrownianDriver(cfg.seed + 8, path, 1e-3, n_fine, 1).increments()
        drifts = []
        for dt in (2e-3, 1e-3):
            f = int(round(dt / 1e-3))
            dw = coarsen_increments(dw_fine, f) if f > 1 else dw_fine
            trs = integrate(spec, stu, SchemeChoice.STRATONOVICH_HEUN, dt, n_fine // f,
                            noise, dw, record_every=1, diagnostics=False)
            drifts.append(advection_invariant_series(trs, w, spec, noise).rel_drift)
        ratios.append(drifts[0] / drifts[1])
    val = float(np.mean(ratios))
    results.append(CheckResult.from_value("advection/stochastic-halving", val, 1.8,
                                          comparison=">=",
                                          detail="mean drift ratio over 8 paths"))
    return results


def run_checks(cfg: VerifyConfig | None = None) -> list[CheckResult]:
    cfg = cfg or VerifyConfig()
    results = []
    results += check_dualities(cfg)
    results += check_coadjoint(cfg)
    results += check_conservation(cfg)
    results += check_noether(cfg)
    results += check_form_equivalence(cfg)
    results += check_bracket(cfg)
    results += check_ito_correction(cfg)
    results += check_pathwise_consistency(cfg)
    results += check_ito_mean(cfg)
    results += check_advection(cfg)
    return results
