"""Stationary mean field games on metric networks.

Finite-difference discretization with Kirchhoff-type transition conditions
at the vertices, solved directly as an overdetermined nonlinear least-squares
problem by damped Gauss-Newton with QR inner solves.
"""

from .coupling import CouplingOperator, eval_coupling, parse_coupling
from .hamiltonian import CostField, Hamiltonian, eval_cost, eval_g, godunov_flux
from .harness import (ErrorStudyRow, ExperimentConfig, RunResult, Solution,
                      build_problem, error_study, export_solution, preset_config,
                      read_solution, run_preset)
from .network import (Edge, Grid, Network, NetworkError, build_grid, build_network,
                      incidence, load_network, preset_self_similar, preset_tripod)
from .operators import (GridFunction, forward_diff, grad_pair, kirchhoff_m,
                        kirchhoff_u, second_diff, transport, weighted_inner)
from .solver import (RankDeficiencyError, SolveReport, SolverOptions, gauss_newton,
                     lsq_solve)
from .system import (Problem, SparseJacobian, assemble_jacobian, assemble_residual,
                     dump_system, fd_jacobian, kink_nodes)

__version__ = "0.1.0"

__all__ = [
    "CostField", "CouplingOperator", "Edge", "ErrorStudyRow", "ExperimentConfig",
    "Grid", "GridFunction", "Hamiltonian", "Network", "NetworkError", "Problem",
    "RankDeficiencyError", "RunResult", "Solution", "SolveReport", "SolverOptions",
    "SparseJacobian", "assemble_jacobian", "assemble_residual", "build_grid",
    "build_network", "build_problem", "dump_system", "error_study", "eval_cost",
    "eval_coupling", "eval_g", "export_solution", "fd_jacobian", "forward_diff",
    "gauss_newton", "godunov_flux", "grad_pair", "incidence", "kink_nodes",
    "kirchhoff_m", "kirchhoff_u", "load_network", "lsq_solve", "parse_coupling",
    "preset_config", "preset_self_similar", "preset_tripod", "read_solution",
    "run_preset", "second_diff", "transport", "weighted_inner",
]
