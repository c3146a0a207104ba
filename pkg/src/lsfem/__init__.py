"""Least-squares finite elements with boundary residuals in dual norms.

A first-order system least-squares solver for second-order elliptic boundary
value problems with inhomogeneous mixed boundary conditions.  Boundary
residuals are measured in discretized dual norms over H(div)/H1 test spaces,
which turns the least-squares problem into a symmetric saddle-point system;
the built-in estimator splits into element indicators that drive adaptive
newest-vertex bisection.
"""

from .mesh import (BoundaryPart, DIRICHLET, NEUMANN, Triangulation,
                   initial_mesh_rect, bisect, refine, uniform_refine,
                   derive_boundary_matched_mesh, write_mesh)
from .quadrature import (QuadratureRule, triangle_quadrature, edge_quadrature,
                         graded_edge_quadrature, graded_triangle_quadrature)
from .elements import ReferenceBasis, lagrange_basis, rt_basis
from .spaces import (FeSpace, DiscreteField, build_space, eval_field,
                     interpolate, boundary_dofs)
from .assembly import (ProblemData, BlockSystem, assemble_gram_hdiv,
                       assemble_gram_h1semi, assemble_mass, assemble_ls_gram,
                       assemble_coupling_dirichlet, assemble_coupling_neumann,
                       assemble_rhs, build_block_system)
from .solver import SolveResult, SolverError, solve_saddle, residual_functionals
from .adaptivity import (ErrorReport, MarkingConfig, LevelRecord,
                         global_estimator, local_indicators, mark,
                         adaptive_loop, build_level_spaces)
from .verification import (InfSupProbe, infsup_probe_dirichlet,
                           infsup_probe_neumann, manufactured_suite,
                           reference_test_spaces)
from .problems import RegistryProblem, registry, get_problem, true_error
from .config import ExperimentConfig, make_config, parse_config_file
from .experiments import rate, fit_rate, run, run_study

__version__ = "0.1.0"
