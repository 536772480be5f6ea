import numpy as np
import pytest

from metamorph import (
    Domain,
    ImageState,
    InertiaOperator,
    Kernel,
    LagrangianSpec,
    LandmarkState,
    OneFormDensity,
    ScalarField,
    VectorField,
)
from metamorph.domain import gradient, random_band_limited


@pytest.fixture
def rng():
    return np.random.default_rng(20240901)


@pytest.fixture
def dom1():
    return Domain.grid(1, 64)


@pytest.fixture
def dom2():
    return Domain.grid(2, 32)


@pytest.fixture
def landmark_spec():
    return LagrangianSpec.landmark(dim=2, sigma_m_sq=0.5)


@pytest.fixture
def image_spec(dom1):
    return LagrangianSpec.image(dom1, sigma_m_sq=0.5)


def rand_scalar(dom, rng, k_max=6, amp=1.0):
    return ScalarField(dom, random_band_limited(dom, rng, k_max, amp))


def rand_vector(dom, rng, k_max=6, amp=1.0):
    return VectorField(dom, np.stack([random_band_limited(dom, rng, k_max, amp)
                                      for _ in range(dom.dim)]))


def rand_oneform(dom, rng, k_max=6, amp=1.0):
    return OneFormDensity(dom, np.stack([random_band_limited(dom, rng, k_max, amp)
                                         for _ in range(dom.dim)]))


def rand_image_state(dom, rng, k_max=6, amp=0.5):
    return ImageState(0.0, rand_oneform(dom, rng, k_max, amp),
                      rand_scalar(dom, rng, k_max, amp),
                      rand_scalar(dom, rng, k_max, amp))


def zero_level_image_state(dom, rng, k_max=4, amp_n=1.0, amp_s=0.5):
    n0 = rand_scalar(dom, rng, k_max, amp_n)
    s0 = rand_scalar(dom, rng, k_max, amp_s)
    mu0 = OneFormDensity(dom, -s0.values * gradient(n0.values, dom))
    return ImageState(0.0, mu0, s0, n0)


def three_landmarks():
    q = np.array([[0.0, 0.0], [1.0, 0.2], [-0.6, 0.8]])
    sig = np.array([[0.9, 0.4], [-0.7, 0.3], [0.2, -0.9]])
    return LandmarkState(0.0, q, sig.copy(), sig.copy())
