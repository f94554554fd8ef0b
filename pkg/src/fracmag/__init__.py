"""Finite element tools for the fractional magnetic Schrödinger operator ``L^s_A + q``.

Galerkin assembly on uniform grids, exterior Dirichlet solves, DN maps and
the recovery of potential contrasts from exterior data.
"""

__version__ = "0.1.0"

from .assembly import (
    FormMatrix,
    GridFunction,
    assemble_form,
    assemble_fractional_laplacian,
    assemble_L,
    assemble_Q,
    mass_matrix,
)
from .config import RunConfig, load_config, parse_config
from .geometry import (
    ConfigError,
    DofPartition,
    DomainShape,
    FieldSpec,
    Grid,
    ProblemConfig,
    WindowSpec,
    build_grid,
    classify_dofs,
    sample_field,
)
from .inverse import (
    ContrastCells,
    ReconstructionResult,
    RungeResult,
    born_reconstruct,
    recover_contrast_oracle,
    runge_approximate,
)
from .kernel import KernelSpec, fractional_constant, fractional_kernel, kernel_from_heat
from .magnetic import PhaseContext, phase_factor, phase_locality_check
from .norms import norm_equivalence_report, seminorm_Hs, seminorm_HsA
from .pointwise import apply_pointwise
from .solver import (
    CoercivityError,
    DNMap,
    Model,
    check_coercivity,
    dn_map,
    integral_identity_residual,
    solve_dirichlet,
)

__all__ = [
    "CoercivityError", "ConfigError", "ContrastCells", "DNMap", "DofPartition", "DomainShape", "FieldSpec",
    "FormMatrix", "Grid", "GridFunction", "KernelSpec", "Model", "PhaseContext", "ProblemConfig",
    "ReconstructionResult", "RunConfig", "RungeResult", "WindowSpec", "apply_pointwise", "assemble_L",
    "assemble_Q", "assemble_form", "assemble_fractional_laplacian", "born_reconstruct", "build_grid",
    "check_coercivity", "classify_dofs", "dn_map", "fractional_constant", "fractional_kernel",
    "integral_identity_residual", "kernel_from_heat", "load_config", "mass_matrix",
    "norm_equivalence_report", "parse_config", "phase_factor", "phase_locality_check",
    "recover_contrast_oracle", "runge_approximate", "sample_field", "seminorm_Hs", "seminorm_HsA",
    "solve_dirichlet",
]
