"""Named benchmark problems and the true-error computation.

All problems live on the rectangle (-1,1) x (0,1) meshed by the standard
8-triangle initial triangulation.  The polar-coordinate convention for the
singular benchmark measures theta from the positive x axis, theta in
[0, pi] on the closed upper half plane, which is exactly the branch of the
complex square root with a cut on the negative reals: u = Im sqrt(x + iy).
Its data work out to g = 0, h_N = 0, and h_D = 0 on the bottom-right
boundary segment.
"""

from dataclasses import dataclass

import numpy as np

from .assembly import ProblemData
from .elements import cell_geometry
from .mesh import Triangulation, initial_mesh_rect
from .quadrature import graded_triangle_quadrature, triangle_quadrature
from .spaces import local_coefficients


@dataclass(frozen=True)
class RegistryProblem:
    """A named boundary-value problem with optional exact solution.

    exact/exact_grad map (n, 2) arrays to values; exact_flux_div is the
    analytic div(A grad u*) = b u* - g, needed for the H(div) part of the
    true error.
    """

    name: str
    description: str
    data: ProblemData
    mesh_factory: object
    exact: object = None
    exact_grad: object = None
    exact_flux_div: object = None

    def initial_mesh(self) -> Triangulation:
        return self.mesh_factory()


def _singular_u(x):
    x = np.atleast_2d(x)
    z = x[:, 0] + 1j * np.maximum(x[:, 1], 0.0)
    return np.sqrt(z).imag


def _singular_grad(x):
    # d/dz sqrt(z) = 1/(2 sqrt(z)); for u = Im sqrt(z) this gives
    # grad u = (Im, Re) of that derivative.  Zeroed at the branch point.
    x = np.atleast_2d(x)
    z = x[:, 0] + 1j * np.maximum(x[:, 1], 0.0)
    r = np.abs(z)
    d = 0.5 / np.sqrt(np.where(r == 0.0, 1.0, z))
    out = np.column_stack([d.imag, d.real])
    out[r == 0.0] = 0.0
    return out


def _smooth_u(x):
    x = np.atleast_2d(x)
    return np.sin(np.pi * x[:, 0]) * np.sinh(np.pi * x[:, 1])


def _smooth_grad(x):
    x = np.atleast_2d(x)
    cx, sx = np.cos(np.pi * x[:, 0]), np.sin(np.pi * x[:, 0])
    cy, sy = np.cosh(np.pi * x[:, 1]), np.sinh(np.pi * x[:, 1])
    return np.pi * np.column_stack([cx * sy, sx * cy])


def registry():
    """Built-in problems, keyed by name."""
    zero = None
    problems = [
        RegistryProblem(
            name="singular-mixed",
            description=("Laplace on (-1,1)x(0,1), Neumann on [-1,0]x{0}, "
                         "exact solution r^(1/2) sin(theta/2): the classic "
                         "boundary corner singularity at the origin"),
            data=ProblemData(g=zero, h_D=_singular_u, h_N=zero,
                             singular_points=((0.0, 0.0),)),
            mesh_factory=initial_mesh_rect,
            exact=_singular_u,
            exact_grad=_singular_grad,
            exact_flux_div=None,  # harmonic
        ),
        RegistryProblem(
            name="poly-linear",
            description="u = x + y with mixed boundary parts; lies in every "
                        "trial space, so the solver must reproduce it exactly",
            data=ProblemData(g=zero, h_D=lambda x: x[:, 0] + x[:, 1],
                             h_N=lambda x: -np.ones(len(x))),
            mesh_factory=initial_mesh_rect,
            exact=lambda x: x[:, 0] + x[:, 1],
            exact_grad=lambda x: np.tile([1.0, 1.0], (len(x), 1)),
            exact_flux_div=None,
        ),
        RegistryProblem(
            name="smooth",
            description="harmonic u = sin(pi x) sinh(pi y), all-Dirichlet "
                        "boundary; full-order convergence expected",
            data=ProblemData(g=zero, h_D=_smooth_u, h_N=zero),
            mesh_factory=lambda: initial_mesh_rect(all_dirichlet=True),
            exact=_smooth_u,
            exact_grad=_smooth_grad,
            exact_flux_div=None,
        ),
    ]
    return {p.name: p for p in problems}


def get_problem(name: str) -> RegistryProblem:
    try:
        return registry()[name]
    except KeyError:
        raise KeyError(f"unknown problem {name!r}; available: "
                       f"{sorted(registry())}") from None


# -- true error -----------------------------------------------------------------


def _singular_local_vertices(mesh, singular_points):
    """Map triangle id -> local vertex index sitting on a singular point."""
    out = {}
    for s in singular_points:
        s = np.asarray(s, dtype=float)
        for t in range(mesh.num_triangles):
            for l in range(3):
                if np.allclose(mesh.vertices[mesh.triangles[t, l]], s,
                               atol=1e-14):
                    out[t] = l
    return out


def true_error(result, problem: RegistryProblem, quad_degree=12,
               graded_levels=3, graded_base_degree=7):
    """Errors against the exact solution:

        err_hdiv_p^2 = |A grad u* - p|_L2^2 + |div(A grad u* - p)|_L2^2
        err_h1_u^2   = |u* - u|_L2^2 + |grad(u* - u)|_L2^2

    Returns (err_hdiv_p, err_h1_u, combined).  Elements touching a singular
    point are integrated with a composite rule graded toward that vertex.
    """
    if problem.exact is None or problem.exact_grad is None:
        raise ValueError(f"problem {problem.name!r} has no exact solution")
    p_field, u_field = result.p, result.u
    mesh = p_field.space.mesh
    data = problem.data
    base = triangle_quadrature(quad_degree)
    singular = _singular_local_vertices(mesh, data.singular_points)
    graded = {l: graded_triangle_quadrature(l, graded_levels,
                                            triangle_quadrature(graded_base_degree))
              for l in set(singular.values())}

    A_cells = data.eval_A_cells(mesh)
    origin, J, det, invJT = cell_geometry(mesh)
    cp = local_coefficients(p_field)
    cu = local_coefficients(u_field)
    pb = p_field.space.basis
    ub = u_field.space.basis

    err_field = err_div = err_l2 = err_semi = 0.0
    plain = [t for t in range(mesh.num_triangles) if t not in singular]

    def accumulate(tris, rule):
        nonlocal err_field, err_div, err_l2, err_semi
        if len(tris) == 0:
            return
        tris = np.asarray(tris, dtype=np.int64)
        vhat = pb.eval_vec(rule.points)
        dhat = pb.eval_div(rule.points)
        phi = ub.eval(rule.points)
        ghat = ub.eval_grad(rule.points)
        for lo in range(0, len(tris), 1024):
            ts = tris[lo:lo + 1024]
            Jt, dt, it = J[ts], det[ts], invJT[ts]
            pv = np.einsum("tab,qib,ti->tqa", Jt, vhat, cp[ts]) / dt[:, None, None]
            pd = np.einsum("qi,ti->tq", dhat, cp[ts]) / dt[:, None]
            ug = np.einsum("tab,qib,ti->tqa", it, ghat, cu[ts])
            uv = np.einsum("qi,ti->tq", phi, cu[ts])
            pts = origin[ts, None, :] + np.einsum("tab,qb->tqa", Jt, rule.points)
            flat = pts.reshape(-1, 2)
            ustar = np.asarray(problem.exact(flat)).reshape(pts.shape[:2])
            gstar = np.asarray(problem.exact_grad(flat)).reshape(pts.shape[:2] + (2,))
            flux = np.einsum("tab,tqb->tqa", A_cells[ts], gstar)
            if problem.exact_flux_div is None:
                fdiv = np.zeros(pts.shape[:2])
            else:
                fdiv = np.asarray(problem.exact_flux_div(flat)).reshape(pts.shape[:2])
            w = rule.weights[None, :] * dt[:, None]
            r = flux - pv
            err_field += float(np.einsum("tq,tqa,tqa->", w, r, r))
            err_div += float(np.einsum("tq,tq->", w, (fdiv - pd) ** 2))
            err_l2 += float(np.einsum("tq,tq->", w, (ustar - uv) ** 2))
            rg = gstar - ug
            err_semi += float(np.einsum("tq,tqa,tqa->", w, rg, rg))

    accumulate(plain, base)
    for l, rule in graded.items():
        tris = [t for t, lv in singular.items() if lv == l]
        accumulate(tris, rule)

    err_hdiv = float(np.sqrt(err_field + err_div))
    err_h1 = float(np.sqrt(err_l2 + err_semi))
    return err_hdiv, err_h1, float(np.sqrt(err_field + err_div + err_l2 + err_semi))
