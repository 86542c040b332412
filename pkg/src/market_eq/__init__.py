"""Matrix-free solvers for competitive market equilibria.

Fisher markets with linear utilities are solved by restarted primal-dual
methods (PDHG on a lifted formulation, PDHCG with exact row subproblem
solves on the compact one); Arrow-Debreu exchange markets by a fixed-point
iteration on budgets with the Fisher solver as its inner oracle.
"""

from .driver import SolveConfig, run_solve
from .errors import (MarketError, OracleUnavailable, ParseError, StructureError,
                     SubproblemError, ValidationError)
from .exchange import FixedPointTrace, apply_T, solve_exchange, verify_fixed_point
from .fileio import load, save
from .instance import (ExchangeInstance, FisherInstance, GeneratorConfig,
                       generate_exchange, generate_fisher, normalize, validate)
from .kkt import (Residuals, residuals_compact, residuals_lifted,
                  scaled_kkt_residual, smoothed_gap)
from .oracle import analytic_equilibrium, brute_force_fisher
from .pdhg import solve_fisher_pdhg
from .pdhcg import solve_fisher_pdhcg, solve_row_subproblem
from .report import SolveReport, instance_fingerprint
from .sparse import RowView, SparseMatrix, column_sums, op_norm_estimate, row_dot
from .theory import run_property_suite

__version__ = "0.1.0"

__all__ = [
    "ExchangeInstance", "FisherInstance", "FixedPointTrace", "GeneratorConfig",
    "MarketError", "OracleUnavailable", "ParseError", "Residuals", "RowView",
    "SolveConfig", "SolveReport", "SparseMatrix", "StructureError",
    "SubproblemError", "ValidationError", "analytic_equilibrium", "apply_T",
    "brute_force_fisher", "column_sums", "generate_exchange", "generate_fisher",
    "instance_fingerprint", "load", "normalize", "op_norm_estimate",
    "residuals_compact", "residuals_lifted", "row_dot", "run_property_suite",
    "run_solve", "save", "scaled_kkt_residual", "smoothed_gap",
    "solve_exchange", "solve_fisher_pdhcg", "solve_fisher_pdhg",
    "solve_row_subproblem", "validate", "verify_fixed_point",
]
