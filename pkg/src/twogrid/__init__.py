"""Two-grid mixed finite element methods for the 2D incompressible Navier-Stokes equations."""

__version__ = "0.1.0"

from .errors import (ConfigError, MeshError, NewtonConvergenceError, SolverError,
                     SpaceMismatchError, TwoGridError)
from .mesh import Mesh, mesh_stats, refine, refine_uniform, unit_square_mesh
from .spaces import FAMILIES, FEFunction, MixedSpace, build_space, evaluate, interpolate, prolong
from .assembly import (assemble_operators, convection_matrix, discrete_leray_projection,
                       trilinear_b)
from .saddle import SaddleSystem, infsup_estimate, solve_saddle
from .stepper import (RunPlan, SchemeConfig, TwoGridState, coarse_step, fine_step_dpp,
                      fine_step_newton, fine_step_oseen, init_state, run_two_grid)
from .mms import CASES, error_norms, get_case, mms_eval
from .harness import (StudyPlan, StudyReport, couple_H, emit_report, estimate_rates,
                      run_convergence_study)
