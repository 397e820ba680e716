"""Multiscale simulator for linear peridynamic composites.

Solves the fine-scale heterogeneous equation of motion, its two-scale
limit, and the homogenized coupled and memory-kernel dynamics on uniform
desk-scale grids, with the diagnostics needed to verify the strong
approximation and homogenization properties numerically.
"""

from .analysis import (
    ConvergenceReport,
    convergence_study,
    energy,
    error_bound,
    error_field,
    error_from_forcing,
    forcing_decomposition,
    lp_norm,
    pairing_limit,
    standard_test_spec,
    twoscale_pairing,
    window_average,
)
from .errors import (
    ConfigError,
    InvalidArgumentError,
    PeridynError,
    StepTooLargeError,
    UnsupportedError,
)
from .expressions import Expression, VectorData
from .grids import CellGrid, MacroGrid
from .homogenization import (
    CoupledTrajectory,
    MemoryHistory,
    MemoryRun,
    constitutive_force,
    solve_coupled,
    solve_memory,
    split,
)
from .microstructure import (
    CellGeometry,
    Microstructure,
    MollifiedMicrostructure,
    PhaseParams,
    Violation,
    wrap_cell,
)
from .nonlocal_ops import (
    ASSEMBLY_CAP,
    NormBound,
    OperatorHandle,
    acceleration_operator,
    alpha_sup,
    cell_average,
    cell_short_range_operator,
    corrector_generator,
    kernel_moment_matrix,
    long_range_norm_bound,
    long_range_operator,
    op_norm_estimate,
    short_range_norm_bound,
    short_range_operator,
    truncated_kernel_moment,
    twoscale_long_range_operator,
    uniform_norm_constant,
)
from .propagators import (
    SeriesPropagator,
    propagate_series,
    propagate_verlet,
    stability_budget,
)
from .solvers import ProblemSpec, rescale, rescale_field, solve_fine, solve_twoscale
from .trajectory import Trajectory

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]
