"""Numerical laboratory for jump-diffusion SDEs: paths, Jacobian flows,
integral-invariant kernels, random-field compositions and first-integral
certification."""

from .errors import (
    BlowUp,
    DegenerateJacobian,
    DomainEscape,
    GsdeError,
    IllConditionedEstimate,
    InvalidDiscretization,
    InverseMapDivergence,
    MassLoss,
    NumericalEvaluation,
    PositivityLoss,
    RatioUndefined,
    SingularJumpMap,
    UnstableDiscretization,
)
from .grid import GridSpec, interpolate, trapezoid
from .model import (
    JumpField,
    JumpMeasure,
    MatrixField,
    ScalarField,
    SdeSystem,
    VectorField,
    inverse_jump_map,
)
from .noise import NoiseRealization, SeedSpec, generate_ensemble, generate_noise, refine_noise
from .simulate import apply_generalized_ito, integrate_ensemble, integrate_path
from .jacobian_volume import check_lemma1, integrate_flow_ensemble, integrate_jacobian, volume_integral
from .kernel import (
    GridDensity,
    KernelCollection,
    build_first_integrals,
    check_normalization,
    evolve_kernel,
    evolve_log_kernel,
)
from .wentzell import (
    FieldSystem,
    RandomFieldState,
    check_proposition1,
    compose_direct,
    evolve_field,
    integrate_wentzell,
    run_wentzell,
)
from .integral_check import (
    ConditionReport,
    FirstIntegralCandidate,
    check_conditions,
    evolve_u_spde,
    monte_carlo_constancy,
)
from .convergence import fit_order
from .scenarios import get_scenario

__version__ = "0.1.0"
