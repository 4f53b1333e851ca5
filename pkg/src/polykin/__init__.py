"""Linearized Boltzmann collision operator for polyatomic gas mixtures.

Numerical construction and verification of the collision operator and its
linearization L = Lambda - K for multicomponent mixtures with discrete
internal energy levels: mixture/channel bookkeeping, collision kinematics,
cross-section families, the nonlinear operator Q, kernel assembly, spectral
diagnostics, and Monte Carlo oracles for every quadrature result.
"""

from .grids import (
    PlaneQuadrature,
    SphereQuadrature,
    VelocityGrid,
    build_plane_quadrature,
    build_sphere_quadrature,
    build_velocity_grid,
)
from .mixture import (
    CollisionChannel,
    EquilibriumParams,
    Mixture,
    Species,
    ValidationError,
    build_mixture,
    collision_invariants,
    enumerate_channels,
    maxwellian,
    maxwellian_field,
    partition_function,
    reverse_channel,
    weighted_null_basis,
)
from .cross_sections import (
    GradBounded,
    HardSphere,
    grad_bounded,
    hard_sphere,
    microreversibility_residual,
    psi,
    sigma,
    symmetry_residuals,
    validate_model,
)
from .kinematics import (
    CollisionPair,
    Lemma3Sample,
    PostState,
    build_lemma3_sample,
    caseII_post_state,
    caseIII_equal_mass_post_state,
    caseIII_post_state,
    check_conservation,
    lemma3_gap,
    lemma3_rho,
    make_pair,
    omega_post_state,
    plane_basis,
)
from .collision import (
    DomainError,
    GridField,
    MaxwellianProvider,
    apply_linearized,
    entropy_production,
    gamma_field,
    q_collision,
    q_collision_field,
    weak_bracket,
    weak_bracket_many,
)
from .linops import (
    AssembledOperators,
    BlockOperator,
    DiagonalOperator,
    assemble,
    dump_operator,
    hs_norm_k1_quadrature,
    kernel_k1,
    kernel_k2,
    kernel_k3,
    load_operator,
    nu,
    nu_field,
)

__version__ = "0.1.0"
