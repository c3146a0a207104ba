"""A-posteriori estimation, bulk marking, and the adaptive loop.

The global estimator is

    E^2 = |lambda_b|_{H(div)}^2 + |lambda_c|_{H1}^2
          + |p - A grad u|_{L2}^2 + |b u - div p - g|_{L2}^2,

computable from the multipliers because the saddle-point solve realizes the
Riesz lift of the boundary residuals.  The lambda_c term uses the full H1
norm as reported; since its test Gram is the H1 seminorm, the seminorm
value is tracked alongside (on the Dirichlet-constrained test space the two
are equivalent).

Local indicators attach the volume parts to their own element; the
multiplier energies live on the (possibly coarser) boundary-matched test
meshes and are attributed through the shared boundary facets: the energy of
a boundary-touching test element is charged once, to the trial element
owning its first matched facet.  Interior multiplier energy is left out,
which keeps sum(eta^2) <= E^2.
"""

import time
from dataclasses import dataclass, field

import numpy as np

from .assembly import (BlockSystem, ProblemData, assemble_mass,
                       build_block_system, elementwise_energy_h1,
                       elementwise_energy_hdiv, elementwise_ls_residual)
from .config import ExperimentConfig
from .mesh import (DIRICHLET, NEUMANN, MeshError, Triangulation,
                   derive_boundary_matched_mesh, refine)
from .solver import SolveResult, solve_saddle
from .spaces import build_space


@dataclass
class MarkingConfig:
    theta: float = 0.6
    strategy: str = "doerfler-squared"
    theta_squared: bool = False  # threshold theta^2 * total instead of theta * total

    def __post_init__(self):
        if not 0.0 < self.theta < 1.0:
            raise ValueError(f"theta must be in (0, 1), got {self.theta}")
        if self.strategy != "doerfler-squared":
            raise ValueError(f"unknown marking strategy {self.strategy!r}")


@dataclass
class ErrorReport:
    """Global estimator value, its parts (squared), and optional extras."""

    estimator: float
    lambda_b_sq: float
    lambda_c_semi_sq: float
    lambda_c_full_sq: float
    field_sq: float
    div_sq: float
    eta: np.ndarray = None
    true_error: float = None
    true_error_hdiv: float = None
    true_error_h1: float = None
    effectivity: float = None

    @property
    def parts(self):
        return (self.lambda_b_sq, self.lambda_c_semi_sq, self.lambda_c_full_sq,
                self.field_sq, self.div_sq)


def global_estimator(result: SolveResult, system: BlockSystem,
                     quad_degree=None) -> ErrorReport:
    """Estimator from test-Gram energies of the multipliers plus the L2
    residual parts evaluated against the data."""
    lb, lc = result.lambda_b.coeffs, result.lambda_c.coeffs
    lam_b_sq = float(lb @ (system.A_b @ lb))
    lam_c_semi = float(lc @ (system.A_c @ lc))
    mass = assemble_mass(system.Yc)
    lam_c_full = lam_c_semi + float(lc @ (mass @ lc))
    field_sq, div_sq = elementwise_ls_residual(result.p, result.u, system.data,
                                               quad_degree)
    fs, ds = float(field_sq.sum()), float(div_sq.sum())
    est = float(np.sqrt(lam_b_sq + lam_c_full + fs + ds))
    return ErrorReport(estimator=est, lambda_b_sq=lam_b_sq,
                       lambda_c_semi_sq=lam_c_semi, lambda_c_full_sq=lam_c_full,
                       field_sq=fs, div_sq=ds)


def _facet_owners(mesh, part):
    """facet geometric key -> owning triangle, for one boundary part."""
    out = {}
    for e in mesh.part_edges(part):
        a, b = mesh.edges[e]
        pa, pb = tuple(mesh.vertices[a]), tuple(mesh.vertices[b])
        key = (pa, pb) if pa <= pb else (pb, pa)
        t, _l = mesh.edge_owner(int(e))
        out[key] = t
    return out


def local_indicators(result: SolveResult, system: BlockSystem,
                     quad_degree=None) -> np.ndarray:
    """Per-trial-element squared indicators eta_K^2.

    Requires the boundary facets of the test meshes to match the trial
    mesh's on their parts (raises otherwise).
    """
    mesh = system.P.mesh
    field_sq, div_sq = elementwise_ls_residual(result.p, result.u, system.data,
                                               quad_degree)
    eta = field_sq + div_sq

    for part, fld, energies in (
        (DIRICHLET, result.lambda_b,
         lambda f: elementwise_energy_hdiv(f, quad_degree)),
        (NEUMANN, result.lambda_c,
         lambda f: (lambda se_ma: se_ma[0] + se_ma[1])(
             elementwise_energy_h1(f, quad_degree))),
    ):
        tmesh = fld.space.mesh
        trial_owner = _facet_owners(mesh, part)
        test_owner = _facet_owners(tmesh, part)
        if set(trial_owner) != set(test_owner):
            raise MeshError(
                f"test mesh facets on {part.name} do not match the trial mesh")
        if not trial_owner:
            continue
        energy = energies(fld)
        first_facet_of = {}
        for key in sorted(test_owner):
            kp = test_owner[key]
            first_facet_of.setdefault(kp, key)
        for kp, key in first_facet_of.items():
            eta[trial_owner[key]] += energy[kp]
    return eta


def mark(eta, config: MarkingConfig) -> np.ndarray:
    """Minimal bulk-chasing set: smallest prefix of the indicators sorted
    descending whose sum reaches the theta fraction of the total; ties are
    broken by triangle id."""
    eta = np.asarray(eta, dtype=float)
    if np.any(eta < 0):
        raise ValueError("indicators must be nonnegative")
    n = len(eta)
    order = np.lexsort((np.arange(n), -eta))
    csum = np.cumsum(eta[order])
    total = csum[-1] if n else 0.0
    if total <= 0.0:
        return np.array([], dtype=np.int64)
    frac = config.theta ** 2 if config.theta_squared else config.theta
    threshold = frac * total
    idx = int(np.searchsorted(csum, threshold, side="left"))
    idx = min(idx, n - 1)
    return np.sort(order[:idx + 1])


@dataclass
class LevelRecord:
    """One pass of the solve-estimate-mark-refine loop."""

    level: int
    mesh: Triangulation
    mesh_d: Triangulation
    mesh_n: Triangulation
    system: BlockSystem
    result: SolveResult
    report: ErrorReport
    gamma_d: float = None
    gamma_n: float = None
    wall_ms: float = 0.0

    @property
    def trial_dofs(self):
        return self.system.trial_dofs

    @property
    def total_dofs(self):
        return self.system.total_dofs


def build_level_spaces(mesh, q, data_or_problem=None, test_mesh="matched"):
    """Trial pair (P, U) on the mesh and test pair (Yb, Yc) on the
    boundary-matched coarse meshes (or on the mesh itself with "full")."""
    if test_mesh == "matched":
        mesh_d = derive_boundary_matched_mesh(mesh, DIRICHLET)
        mesh_n = derive_boundary_matched_mesh(mesh, NEUMANN)
    elif test_mesh == "full":
        mesh_d = mesh_n = mesh
    else:
        raise ValueError(f"unknown test_mesh mode {test_mesh!r}")
    U = build_space(mesh, "lagrange", q + 1)
    P = build_space(mesh, "rt", q)
    Yb = build_space(mesh_d, "rt", q + 1, constraint=NEUMANN)
    Yc = build_space(mesh_n, "lagrange", q + 2, constraint=DIRICHLET)
    return P, U, Yb, Yc, mesh_d, mesh_n


def adaptive_loop(problem, q: int, config: ExperimentConfig,
                  stop_dofs=None, max_levels=None) -> list:
    """Run solve-estimate-mark-refine until the trial DOFs would exceed the
    budget (or `max_levels` is hit); returns the list of LevelRecord.

    `config.mode` "uniform" marks every element instead of bulk chasing.
    """
    from .problems import true_error
    from .verification import probe_level

    stop = stop_dofs if stop_dofs is not None else config.max_dofs
    mcfg = MarkingConfig(theta=config.theta, theta_squared=config.theta_squared)
    vdeg = config.volume_quad_degree or None
    bdeg = config.boundary_quad_degree or None

    history = []
    mesh = problem.initial_mesh()
    level = 0
    while max_levels is None or level < max_levels:
        t0 = time.perf_counter()
        P, U, Yb, Yc, mesh_d, mesh_n = build_level_spaces(
            mesh, q, test_mesh=config.test_mesh)
        if P.ndof + U.ndof > stop:
            break
        system = build_block_system(Yb, Yc, P, U, problem.data,
                                    volume_degree=vdeg, boundary_degree=bdeg,
                                    graded_levels=config.graded_edge_levels)
        result = solve_saddle(system)
        report = global_estimator(result, system)
        report.eta = local_indicators(result, system)
        if problem.exact is not None:
            hd, h1, comb = true_error(
                result, problem,
                quad_degree=config.true_error_quad_degree,
                graded_levels=config.true_error_graded_levels,
                graded_base_degree=config.true_error_graded_degree)
            report.true_error_hdiv, report.true_error_h1 = hd, h1
            report.true_error = comb
            report.effectivity = report.estimator / comb if comb > 0 else np.inf

        rec = LevelRecord(level=level, mesh=mesh, mesh_d=mesh_d, mesh_n=mesh_n,
                          system=system, result=result, report=report)
        if config.probe and system.trial_dofs <= config.probe_max_dofs:
            rec.gamma_d, rec.gamma_n = probe_level(P, U, Yb, Yc, q)
        rec.wall_ms = (time.perf_counter() - t0) * 1000.0
        history.append(rec)

        if config.mode == "uniform":
            marked = np.arange(mesh.num_triangles)
        else:
            marked = mark(report.eta, mcfg)
            if len(marked) == 0:
                break  # estimator identically zero: nothing to drive
        mesh = refine(mesh, marked)
        level += 1
    if not history:
        raise ValueError("dof budget too small for even the initial mesh")
    return history
