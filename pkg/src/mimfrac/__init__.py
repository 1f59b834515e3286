"""Forward and inverse solvers for a mobile-immobile fractional diffusion model.

The package splits into a numerical core and two drivers:

- ``fem``: P1 triangulation of a rectangle, mass/stiffness assembly,
  nodal projection, frame masks for partial interior observation.
- ``fractime``: uniform time grids, L1 weights for the Caputo derivative,
  Riemann-Liouville integrals, and the scalar Volterra factor ``mu``.
- ``solver``: the coupled time march (backward Euler plus L1 memory sum),
  its adjoint, an independent heat reference, and a manufactured
  convergence study.
- ``inversion``: Tikhonov-regularized source recovery from noisy frame
  observations by conjugate-gradient descent with an adjoint gradient.
- ``duhamel``: representation check writing the source-driven solve as a
  convolution of ``mu`` with the initial-value propagator.
- ``config`` / ``cli``: flat key=value run configs and the ``mimfrac``
  command with forward, invert, tables and verify subcommands.
"""
from .config import (
    ConfigError,
    RunConfig,
    build_problem,
    canonical_manifest,
    inverse_config,
    load_config,
    parse_config,
)
from .duhamel import DuhamelReport, residual_refinement_study, verify_duhamel
from .fem import (
    Coefficients,
    Mesh,
    SolverError,
    assemble,
    build_mesh,
    l2_inner,
    mask_from_frame,
    project_function,
    zero_boundary,
)
from .fractime import (
    TimeGrid,
    TimeSeries,
    caputo_l1,
    l1_weights,
    rl_integral,
    solve_volterra_mu,
)
from .inversion import (
    InverseConfig,
    LineSearchError,
    ObservationData,
    add_noise,
    cost,
    generate_data,
    gradient,
    observed_nodes,
    reconstruct,
    relative_error,
    sensitivity_solve,
)
from .solver import (
    ModelProblem,
    backward_euler_heat,
    convergence_study,
    load_space_time,
    save_space_time,
    solve_adjoint,
    solve_forward,
)

__version__ = "0.1.0"

__all__ = [
    "Coefficients",
    "ConfigError",
    "DuhamelReport",
    "InverseConfig",
    "LineSearchError",
    "Mesh",
    "ModelProblem",
    "ObservationData",
    "RunConfig",
    "SolverError",
    "TimeGrid",
    "TimeSeries",
    "add_noise",
    "assemble",
    "backward_euler_heat",
    "build_mesh",
    "build_problem",
    "canonical_manifest",
    "caputo_l1",
    "convergence_study",
    "cost",
    "generate_data",
    "gradient",
    "inverse_config",
    "l1_weights",
    "l2_inner",
    "load_config",
    "load_space_time",
    "mask_from_frame",
    "observed_nodes",
    "parse_config",
    "project_function",
    "reconstruct",
    "relative_error",
    "rl_integral",
    "save_space_time",
    "sensitivity_solve",
    "solve_adjoint",
    "solve_forward",
    "solve_volterra_mu",
    "verify_duhamel",
    "zero_boundary",
]
