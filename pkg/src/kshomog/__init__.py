"""Effective coefficients and two-scale verification for the 1-D stochastic
Keller-Segel system."""
from .cell_solver import (
    CellSolution,
    PeriodicCoefficientField,
    analytic_effective,
    effective_from_cell,
    periodize,
    solve_cell_problems,
)
from .effective import EffectiveEstimate, estimate, reference_effective, rho_sweep
from .random_fields import (
    FieldKind,
    FieldSpec,
    FieldSpecError,
    RandomFieldRealization,
    ensemble_inverse_mean_D,
    make_realization,
    sample_path,
)
from .tridiag import thomas_solve

__version__ = "0.1.0"
