"""Energy-preserving HBVM(k, s) integrators for canonical Hamiltonian
systems, with fixed-point, simplified-Newton and blended stage solvers and
a benchmark harness.

The hot step loop has a compiled core (built from hbvm/_kernels.pyx) with
a pure-Python fallback selected automatically at import time; see
hbvm.kernels.backend_names() for what this installation provides.
"""

from .coefficients import (MethodTableau, QuadratureRule, build_tableau,
                           gauss_rule, legendre_basis, legendre_eval, rho_opt)
from .harness import (OrderCheckResult, RunReport, RunSpec, Table1Result,
                      Trajectory, emit_csv, emit_energy_csv, integrate,
                      order_check, rho_table, table1_experiment)
from .kernels import HAVE_COMPILED, backend_names
from .problems import (HamiltonianProblem, SeparableProblem, as_first_order,
                       check_derivatives, get_problem, hamiltonian_problem,
                       harmonic_oscillator, pendulum, quintic_oscillator,
                       separable_problem)
from .stepper_general import SolverConfig, StepStats

__version__ = "0.1.0"

__all__ = [
    "MethodTableau", "QuadratureRule", "build_tableau", "gauss_rule",
    "legendre_basis", "legendre_eval", "rho_opt",
    "HamiltonianProblem", "SeparableProblem", "as_first_order",
    "check_derivatives", "get_problem", "hamiltonian_problem",
    "harmonic_oscillator", "pendulum", "quintic_oscillator",
    "separable_problem",
    "SolverConfig", "StepStats",
    "RunSpec", "Trajectory", "RunReport", "integrate", "table1_experiment",
    "Table1Result", "order_check", "OrderCheckResult", "rho_table",
    "emit_csv", "emit_energy_csv",
    "HAVE_COMPILED", "backend_names",
    "__version__",
]
