"""Numerical laboratory for conformal metric flows on foliated products.

The manifold is a flat periodic base times a periodic fiber, carrying a
double-twisted metric exp(2 phi) g_base + exp(2 psi) g_fiber.  The flow
contracts the base factor by the divergence of the fibers' mean
curvature; on this class it reduces to leafwise heat equations, which
the package solves exactly in Fourier space (fiber-constant psi) or by
an implicit finite-difference march (fiber-varying psi), and every
structural identity of the geometry ships as a runnable checker.
"""

from .checks import (
    CheckReport,
    check_bperp_scaling,
    check_codim1_identity,
    check_decay_rate,
    check_divergence_identity,
    check_fd_convergence_order,
    check_harmonic_function_rigidity,
    check_monotonicity,
    check_oracle_agreement,
    check_preservation,
    check_uniform_equivalence,
    check_volume_ode,
    divergence_identity_sides,
    estimate_decay_rate,
    flat_spectral_gap,
    run_checks,
    uniform_equivalence_constant,
)
from .errors import (
    DegenerateTrajectoryError,
    FlowError,
    HypothesisViolationError,
    InputError,
    SolveError,
    UnsupportedScenarioError,
)
from .fdref import (
    FdScheme,
    fd_heat_run,
    fd_laplacian_conformal,
    fd_mean_curvature_from_metric,
)
from .fiber import (
    FiberGrid,
    OneFormField,
    SpectralField,
    d_perp,
    delta_perp,
    eigenvalue,
    evolve_values,
    gradient_values,
    harmonic_field,
    heat_evolve,
    heat_kernel,
    heat_time_integral,
    is_harmonic,
    oneform_heat_evolve,
    time_integral_values,
)
from .flows import (
    DiagnosticsRecord,
    FlowConfig,
    Trajectory,
    normalization_rate,
    project_unit_volume,
    reconstruct_metric,
    run_codim1,
    run_extrinsic_flow,
    run_normalized,
    run_prescribed,
    tau_of_state,
)
from .geometry import (
    ClassificationReport,
    DistributionFlags,
    ProductState,
    SecondFundamentalData,
    classify,
    conformal_change,
    div_perp,
    fiber_average,
    grad_perp,
    integrate,
    laplacian_perp,
    second_fundamental,
    theta_h,
    twisted_mean_curvature,
    volume,
)

__version__ = "0.1.0"

__all__ = [
    "CheckReport",
    "ClassificationReport",
    "DegenerateTrajectoryError",
    "DiagnosticsRecord",
    "DistributionFlags",
    "FdScheme",
    "FiberGrid",
    "FlowConfig",
    "FlowError",
    "HypothesisViolationError",
    "InputError",
    "OneFormField",
    "ProductState",
    "SecondFundamentalData",
    "SolveError",
    "SpectralField",
    "Trajectory",
    "UnsupportedScenarioError",
    "check_bperp_scaling",
    "check_codim1_identity",
    "check_decay_rate",
    "check_divergence_identity",
    "check_fd_convergence_order",
    "check_harmonic_function_rigidity",
    "check_monotonicity",
    "check_oracle_agreement",
    "check_preservation",
    "check_uniform_equivalence",
    "check_volume_ode",
    "classify",
    "conformal_change",
    "d_perp",
    "delta_perp",
    "div_perp",
    "divergence_identity_sides",
    "eigenvalue",
    "estimate_decay_rate",
    "evolve_values",
    "fd_heat_run",
    "fd_laplacian_conformal",
    "fd_mean_curvature_from_metric",
    "fiber_average",
    "flat_spectral_gap",
    "grad_perp",
    "gradient_values",
    "harmonic_field",
    "heat_evolve",
    "heat_kernel",
    "heat_time_integral",
    "integrate",
    "is_harmonic",
    "laplacian_perp",
    "normalization_rate",
    "oneform_heat_evolve",
    "project_unit_volume",
    "reconstruct_metric",
    "run_checks",
    "run_codim1",
    "run_extrinsic_flow",
    "run_normalized",
    "run_prescribed",
    "second_fundamental",
    "tau_of_state",
    "theta_h",
    "time_integral_values",
    "twisted_mean_curvature",
    "volume",
]
