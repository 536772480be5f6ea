"""Geometric engine for template matching with dynamically evolving templates.

Deterministic and stochastic transport dynamics for two data structures,
point landmarks on the plane and periodic scalar images, with
shooting-based matching, Monte Carlo uncertainty quantification and an
executable verification suite for the underlying geometric identities.
"""

__version__ = "0.1.0"

from .domain import Domain
from .fields import (
    ConstantVelocity,
    LandmarkCotangent,
    Landmarks,
    LandmarkTangent,
    OneFormDensity,
    PointMomentum,
    ScalarField,
    ScaledVelocitySum,
    VectorField,
)
from .kernels import Kernel, KernelVelocity, kernel_matrix
from .algebra import (
    InertiaOperator,
    ad,
    ad_star,
    diamond,
    lie_derivative_oneform_density,
    lie_derivative_scalar,
    momentum_from_velocity,
    momentum_norm,
    pair,
    scalar_pair,
    star,
    template_pair,
    velocity_from_momentum,
)
from .core import (
    GradientTriple,
    ImageState,
    ImageUntangledState,
    LagrangianSpec,
    LandmarkGradient,
    LandmarkState,
    LandmarkUntangledState,
    endpoint_residual,
    euler_lagrange_residual,
    hamiltonian,
    lagrangian_value,
    legendre,
    lie_poisson_apply,
    rhs_tangled,
    rhs_untangled,
    total_momentum,
    untangle,
    velocity_of,
)
from .noise import (
    BrownianDriver,
    ConstantMode,
    FourierMode,
    GaussianBumpMode,
    NoiseBasis,
    coarsen_increments,
)
from .stochastics import (
    NumericalError,
    SchemeChoice,
    Trajectory,
    integrate,
    ito_drift_correction,
    step_euler_maruyama,
    step_heun,
    step_rk4,
    stochastic_hamiltonian_increment,
    transport_velocity_increment,
)
from .tracers import TracerCloud, advance_tracers
from .matching import (
    MatchOptions,
    MatchProblem,
    MatchResult,
    action_value,
    match,
    shoot,
)
from .uq import (
    EnsembleConfig,
    EnsembleResult,
    advection_invariant_series,
    ensemble_statistics,
    run_ensemble,
    strong_order_estimate,
)
from .gridio import read_grid, write_grid
