"""Explicit dynamics with approximate-dual test functions and row-sum mass lumping."""

from .assembly import (
    BoundarySpec,
    MassInverse,
    ModelSpec,
    OperatorPair,
    TestScheme,
    assemble_mass,
    assemble_operators,
    assemble_stiffness,
    row_sum_lump,
)
from .dual_basis import (
    ApproxInverse,
    approximate_inverse,
    assemble_gramian,
    compute_matrix_D,
    compute_matrix_U,
    dual_inverse,
    homogeneous_poly_F,
    improved_inverse,
)
from .dynamics import (
    TimeHistory,
    TimeIntegrationSetup,
    central_difference,
    critical_timestep_rule,
    l2_error_against,
    run_dynamics,
    stable_timestep,
)
from .errors import (
    CapabilityError,
    ConfigurationError,
    DomainError,
    GeometryError,
    IGADualLumpError,
    LumpingError,
    NumericalError,
    PairingError,
    StabilityError,
)
from .geometry import AffineMap, AnnulusMap, QuarterCircleArc, affine_map, annulus_map
from .spectral import (
    AnalyticalReference,
    SpectrumResult,
    analytical_bar,
    analytical_beam_free,
    analytical_plate_ss,
    convergence_rate,
    mode_l2_error,
    normalized_spectrum,
    solve_gep,
)
from .spline_core import SplineSpace, TensorSpace, eval_basis, gauss_rule, make_open_knot_vector

__version__ = "0.1.0"
