import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from metamorph import (
    ConstantVelocity,
    InertiaOperator,
    Kernel,
    KernelVelocity,
    LandmarkCotangent,
    Landmarks,
    OneFormDensity,
    PointMomentum,
    ScalarField,
    VectorField,
    ad,
    ad_star,
    diamond,
    kernel_matrix,
    lie_derivative_oneform_density,
    lie_derivative_scalar,
    momentum_from_velocity,
    pair,
    star,
    velocity_from_momentum,
)
from metamorph.domain import Domain, gradient, interpolate, jacobian

from conftest import rand_oneform, rand_scalar, rand_vector


# --------------------------------------------------------------------------
# pairing

def test_pair_zero_form(dom1, rng):
    m = OneFormDensity.zeros(dom1)
    u = rand_vector(dom1, rng)
    assert pair(m, u) == 0.0


def test_pair_constant_1d(dom1):
    m = OneFormDensity(dom1, np.ones((1, 64)))
    u = VectorField(dom1, np.ones((1, 64)))
    assert pair(m, u) == pytest.approx(2 * np.pi, abs=1e-12)


def test_pair_landmark_unit():
    m = PointMomentum([[0.0, 0.0]], [[1.0, 0.0]])
    u = ConstantVelocity([1.0, 0.0])
    assert pair(m, u) == pytest.approx(1.0)


def test_pair_domain_mismatch(dom1, dom2, rng):
    m = rand_oneform(dom1, rng)
    u = rand_vector(dom2, rng)
    with pytest.raises(ValueError, match="domain mismatch"):
        pair(m, u)


@settings(max_examples=20, deadline=None)
@given(a=st.floats(-3, 3), b=st.floats(-3, 3))
def test_pair_bilinear(a, b):
    dom = Domain.grid(1, 32)
    rng = np.random.default_rng(42)
    m1, m2 = rand_oneform(dom, rng), rand_oneform(dom, rng)
    u = rand_vector(dom, rng)
    combo = OneFormDensity(dom, a * m1.values + b * m2.values)
    assert pair(combo, u) == pytest.approx(a * pair(m1, u) + b * pair(m2, u), abs=1e-10)


# --------------------------------------------------------------------------
# scalar Lie derivative and its flow oracle

def test_lie_scalar_zero_velocity(dom1, rng):
    f = rand_scalar(dom1, rng)
    out = lie_derivative_scalar(VectorField.zeros(dom1), f)
    assert np.max(np.abs(out.values)) == 0.0


def test_lie_scalar_analytic(dom1):
    x = dom1.axes()[0]
    u = VectorField(dom1, np.ones((1, 64)))
    f = ScalarField(dom1, np.sin(x))
    out = lie_derivative_scalar(u, f)
    assert np.max(np.abs(out.values + np.cos(x))) < 1e-12


def _advect(u, pts, eps, n_sub=8):
    h = eps / n_sub
    x = pts.copy()
    for _ in range(n_sub):
        k1 = u.velocity_at(x)
        k2 = u.velocity_at(x + 0.5 * h * k1)
        k3 = u.velocity_at(x + 0.5 * h * k2)
        k4 = u.velocity_at(x + h * k3)
        x = x + h / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
    return x


def test_lie_scalar_flow_oracle(dom1, rng):
    # u f must equal -(d/d eps)|_0 of f composed with the eps-flow of u.
    u = rand_vector(dom1, rng, k_max=4, amp=0.8)
    f = rand_scalar(dom1, rng, k_max=4)
    nodes = dom1.nodes()
    lie = lie_derivative_scalar(u, f).values.ravel()
    residuals = []
    for eps in (2e-3, 1e-3):
        fwd = f.at(_advect(u, nodes, eps))
        bwd = f.at(_advect(u, nodes, -eps))
        oracle = -(fwd - bwd) / (2 * eps)
        residuals.append(np.max(np.abs(oracle - lie)))
    assert residuals[0] < 1e-5
    assert residuals[0] / residuals[1] == pytest.approx(4.0, rel=0.2)


# --------------------------------------------------------------------------
# 1-form density Lie derivative

def test_lie_oneform_constant_field(dom1, rng):
    # constant transport field: only the advection term survives
    m = rand_oneform(dom1, rng, k_max=5)
    xi = VectorField(dom1, np.ones((1, 64)))
    out = lie_derivative_oneform_density(xi, m)
    expected = gradient(m.values[0], dom1)[0]
    assert np.max(np.abs(out.values[0] - expected)) < 1e-12


def test_lie_oneform_zero(dom1, rng):
    xi = rand_vector(dom1, rng)
    out = lie_derivative_oneform_density(xi, OneFormDensity.zeros(dom1))
    assert np.max(np.abs(out.values)) == 0.0


def test_lie_oneform_rejects_landmark_momenta(dom1, rng):
    xi = rand_vector(dom1, rng)
    with pytest.raises(TypeError):
        lie_derivative_oneform_density(xi, PointMomentum([[0.0]], [[1.0]]))


def _pullback_oneform(u, m, eps, dom, n_sub=8):
    # phi_eps^* m at the nodes: F^T m(phi(x)) det F with dF = grad(u) F.
    h = eps / n_sub
    x = dom.nodes()
    d = dom.dim
    F = np.broadcast_to(np.eye(d), (x.shape[0], d, d)).copy()
    for _ in range(n_sub):
        k1x = u.velocity_at(x); k1F = np.einsum("aij,ajk->aik", u.gradient_at(x), F)
        x2 = x + 0.5 * h * k1x; F2 = F + 0.5 * h * k1F
        k2x = u.velocity_at(x2); k2F = np.einsum("aij,ajk->aik", u.gradient_at(x2), F2)
        x3 = x + 0.5 * h * k2x; F3 = F + 0.5 * h * k2F
        k3x = u.velocity_at(x3); k3F = np.einsum("aij,ajk->aik", u.gradient_at(x3), F3)
        x4 = x + h * k3x; F4 = F + h * k3F
        k4x = u.velocity_at(x4); k4F = np.einsum("aij,ajk->aik", u.gradient_at(x4), F4)
        x = x + h / 6.0 * (k1x + 2 * k2x + 2 * k3x + k4x)
        F = F + h / 6.0 * (k1F + 2 * k2F + 2 * k3F + k4F)
    m_at = m.at(x)
    pulled = np.einsum("aji,aj->ai", F, m_at)
    return pulled * np.linalg.det(F)[:, None]


def test_lie_oneform_pullback_oracle(dom1, rng):
    xi = rand_vector(dom1, rng, k_max=4, amp=0.6)
    m = rand_oneform(dom1, rng, k_max=4)
    lie = lie_derivative_oneform_density(xi, m).values.reshape(1, -1).T
    residuals = []
    for eps in (2e-3, 1e-3):
        fwd = _pullback_oneform(xi, m, eps, dom1)
        bwd = _pullback_oneform(xi, m, -eps, dom1)
        oracle = (fwd - bwd) / (2 * eps)
        residuals.append(np.max(np.abs(oracle - lie)))
    assert residuals[0] < 1e-4
    assert residuals[0] / residuals[1] == pytest.approx(4.0, rel=0.2)


# --------------------------------------------------------------------------
# ad and ad*

def test_ad_constants(dom2):
    u = VectorField(dom2, np.stack([np.full(dom2.shape, 0.3), np.full(dom2.shape, -1.0)]))
    v = VectorField(dom2, np.stack([np.full(dom2.shape, 1.0), np.full(dom2.shape, 2.0)]))
    assert np.max(np.abs(ad(u, v).values)) == 0.0


def test_ad_analytic(dom1):
    x = dom1.axes()[0]
    u = VectorField(dom1, np.sin(x)[None])
    v = VectorField(dom1, np.ones((1, 64)))
    assert np.max(np.abs(ad(u, v).values[0] - np.cos(x))) < 1e-12


def test_ad_antisymmetry(dom2, rng):
    u = rand_vector(dom2, rng, k_max=5)
    v = rand_vector(dom2, rng, k_max=5)
    total = ad(u, v).values + ad(v, u).values
    assert np.max(np.abs(total)) < 1e-13


def test_ad_jacobi(dom1, rng):
    # band-limited so nested products stay alias-free
    u = rand_vector(dom1, rng, k_max=5)
    v = rand_vector(dom1, rng, k_max=5)
    w = rand_vector(dom1, rng, k_max=5)
    total = ad(u, ad(v, w)).values + ad(v, ad(w, u)).values + ad(w, ad(u, v)).values
    scale = max(u.l2() * v.l2() * w.l2(), 1e-30)
    assert np.max(np.abs(total)) / scale < 1e-8


@pytest.mark.parametrize("dim,n", [(1, 64), (2, 32)])
def test_ad_star_duality(dim, n, rng):
    dom = Domain.grid(dim, n)
    worst = 0.0
    for _ in range(5):
        u = rand_vector(dom, rng, k_max=5)
        v = rand_vector(dom, rng, k_max=5)
        m = rand_oneform(dom, rng, k_max=5)
        resid = abs(pair(ad_star(u, m), v) - pair(m, ad(u, v)))
        worst = max(worst, resid / max(m.l2() * u.l2() * v.l2(), 1e-30))
    assert worst < 1e-10


def test_ad_star_trivials(dom1, rng):
    const_u = VectorField(dom1, np.full((1, 64), 0.7))
    const_m = OneFormDensity(dom1, np.full((1, 64), -0.2))
    assert np.max(np.abs(ad_star(const_u, const_m).values)) < 1e-14
    u = rand_vector(dom1, rng)
    assert np.max(np.abs(ad_star(u, OneFormDensity.zeros(dom1)).values)) == 0.0


# --------------------------------------------------------------------------
# diamond

def test_diamond_flat_image(dom1, rng):
    pi = rand_scalar(dom1, rng)
    n = ScalarField(dom1, np.full(dom1.shape, 2.5))
    assert np.max(np.abs(diamond(pi, n).values)) == 0.0


def test_diamond_landmark_definition():
    sigma = LandmarkCotangent([[0.0, 0.0]], [[1.0, 0.0]])
    out = diamond(sigma, Landmarks([[0.0, 0.0]]))
    assert pair(out, ConstantVelocity([1.0, 0.0])) == pytest.approx(-1.0)


def test_diamond_identity_image(dom2, rng):
    worst = 0.0
    for _ in range(5):
        pi = rand_scalar(dom2, rng, k_max=5)
        n = rand_scalar(dom2, rng, k_max=5)
        u = rand_vector(dom2, rng, k_max=5)
        lhs = pair(diamond(pi, n), u)
        rhs = dom2.integrate(pi.values * lie_derivative_scalar(u, n).values)
        worst = max(worst, abs(lhs + rhs) / max(abs(lhs), 1e-30))
    assert worst < 1e-12


@settings(max_examples=25, deadline=None)
@given(k=st.integers(1, 5), seed=st.integers(0, 10_000))
def test_diamond_identity_landmarks(k, seed):
    rng = np.random.default_rng(seed)
    q = rng.normal(size=(k, 2))
    sig = rng.normal(size=(k, 2))
    u = KernelVelocity(Kernel(), rng.normal(size=(k, 2)), rng.normal(size=(k, 2)))
    lhs = pair(diamond(LandmarkCotangent(q, sig), Landmarks(q)), u)
    rhs = -float(np.sum(sig * u.velocity_at(q)))
    assert lhs == pytest.approx(rhs, abs=1e-12 * max(1.0, abs(rhs)))


def test_diamond_structure_mismatch(dom1, rng):
    with pytest.raises(TypeError):
        diamond(rand_scalar(dom1, rng), Landmarks([[0.0, 0.0]]))


# --------------------------------------------------------------------------
# star

def test_star_divergence_free_image(dom2):
    # sigma constant and div(u) = 0 make div(sigma u) vanish
    mesh = dom2.mesh()
    u = VectorField(dom2, np.stack([np.cos(mesh[1]), np.cos(mesh[0])]))
    sigma = ScalarField(dom2, np.full(dom2.shape, 1.7))
    assert np.max(np.abs(star(u, sigma).values)) < 1e-12


def test_star_landmark_constant_velocity():
    sigma = LandmarkCotangent([[0.2, -0.4]], [[1.0, 2.0]])
    out = star(ConstantVelocity([3.0, -1.0]), sigma)
    assert np.max(np.abs(out.covectors)) == 0.0


def test_star_adjoint_image(dom1, rng):
    worst = 0.0
    for _ in range(5):
        sigma = rand_scalar(dom1, rng, k_max=5)
        omega = rand_scalar(dom1, rng, k_max=5)
        u = rand_vector(dom1, rng, k_max=5)
        lhs = dom1.integrate(sigma.values * lie_derivative_scalar(u, omega).values)
        rhs = dom1.integrate(star(u, sigma).values * omega.values)
        scale = max(sigma.l2() * omega.l2() * u.l2(), 1e-30)
        worst = max(worst, abs(lhs - rhs) / scale)
    assert worst < 1e-10


@settings(max_examples=25, deadline=None)
@given(k=st.integers(1, 5), seed=st.integers(0, 10_000))
def test_star_adjoint_landmarks(k, seed):
    rng = np.random.default_rng(seed)
    q = rng.normal(size=(k, 2))
    sig = rng.normal(size=(k, 2))
    w = rng.normal(size=(k, 2))
    u = KernelVelocity(Kernel(), rng.normal(size=(k, 2)), rng.normal(size=(k, 2)))
    grads = u.gradient_at(q)
    lhs = float(np.sum(sig * np.einsum("aij,aj->ai", grads, w)))
    rhs = float(np.sum(star(u, LandmarkCotangent(q, sig)).covectors * w))
    assert lhs == pytest.approx(rhs, abs=1e-10 * max(1.0, abs(lhs)))


# --------------------------------------------------------------------------
# inertia operator and kernel

def test_velocity_from_zero_momentum(dom1):
    u = velocity_from_momentum(OneFormDensity.zeros(dom1), InertiaOperator())
    assert np.max(np.abs(u.values)) == 0.0


def test_single_landmark_velocity():
    u = velocity_from_momentum(PointMomentum([[0.0, 0.0]], [[1.0, 0.0]]), Kernel())
    assert np.allclose(u.velocity_at([[0.0, 0.0]]), [[1.0, 0.0]])


def test_momentum_velocity_round_trip(dom2, rng):
    mu = rand_oneform(dom2, rng, k_max=6)
    op = InertiaOperator(alpha=1.0, power=1)
    back = momentum_from_velocity(velocity_from_momentum(mu, op), op)
    assert np.max(np.abs(back.values - mu.values)) < 1e-12
    # the squared operator amplifies round-off by its condition number
    op2 = InertiaOperator(alpha=1.0, power=2)
    back2 = momentum_from_velocity(velocity_from_momentum(mu, op2), op2)
    cond = float(np.max(op2.multiplier(dom2)))
    assert np.max(np.abs(back2.values - mu.values)) < 1e-15 * cond


def test_helmholtz_eigenfunction(dom1):
    x = dom1.axes()[0]
    u = VectorField(dom1, np.sin(3 * x)[None])
    mu = momentum_from_velocity(u, InertiaOperator(alpha=1.0, power=1))
    assert np.max(np.abs(mu.values[0] - 10.0 * np.sin(3 * x))) < 1e-11


def test_inertia_symmetry_and_spd(dom1, rng):
    op = InertiaOperator()
    u = rand_vector(dom1, rng, k_max=8)
    v = rand_vector(dom1, rng, k_max=8)
    lhs = pair(momentum_from_velocity(u, op), v)
    rhs = pair(momentum_from_velocity(v, op), u)
    assert lhs == pytest.approx(rhs, rel=1e-12)
    assert pair(momentum_from_velocity(u, op), u) > 0


def test_momentum_from_velocity_rejects_landmarks():
    u = KernelVelocity(Kernel(), [[0.0, 0.0]], [[1.0, 0.0]])
    with pytest.raises(TypeError):
        momentum_from_velocity(u, InertiaOperator())


def test_kernel_matrix_single():
    km = kernel_matrix([[0.4, -0.1]], Kernel(amplitude=2.0))
    assert np.allclose(km, 2.0 * np.eye(2))


def test_kernel_matrix_coincident():
    km = kernel_matrix([[0.1, 0.2], [0.1, 0.2]], Kernel())
    assert np.allclose(km, np.kron(np.ones((2, 2)), np.eye(2)))


@settings(max_examples=20, deadline=None)
@given(k=st.integers(1, 5), seed=st.integers(0, 10_000))
def test_kernel_matrix_symmetric_psd(k, seed):
    rng = np.random.default_rng(seed)
    km = kernel_matrix(rng.normal(size=(k, 2)), Kernel())
    assert np.allclose(km, km.T)
    assert np.linalg.eigvalsh(km).min() >= -1e-12
