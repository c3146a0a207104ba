"""Numerical inf-sup probes and exact-reproduction checks.

The discretized dual norm of a trace residual cannot be compared with the
true dual norm directly, so the probe compares it against the same norm
over a much richer reference test space (one extra uniform refinement and
one extra degree).  The probed quantity

    gamma_hat = min over trial fields with nonzero trace of
                (sup over the test space) / (sup over the reference space)

lies in [0, 1]; a family-uniform lower bound is the stability evidence the
saddle-point formulation relies on.  Both sups are Gram-weighted norms of
the pairing matrix, so gamma_hat is the square root of the smallest
generalized eigenvalue of (C' G^-1 C, C_ref' G_ref^-1 C_ref) restricted to
the range of the reference form.
"""

from dataclasses import dataclass

import numpy as np
import scipy.sparse.linalg as spla

from .assembly import (ProblemData, assemble_coupling_dirichlet,
                       assemble_coupling_neumann, assemble_gram_h1semi,
                       assemble_gram_hdiv, build_block_system)
from .mesh import DIRICHLET, NEUMANN, initial_mesh_rect, uniform_refine
from .solver import solve_saddle
from .spaces import FeSpace, build_space


@dataclass(frozen=True)
class InfSupProbe:
    gamma_hat: float
    trial_dofs: int
    reference_space: str

    def __post_init__(self):
        if not -1e-10 <= self.gamma_hat <= 1.0 + 1e-10:
            raise ValueError(f"gamma_hat {self.gamma_hat} outside [0, 1]")


def dual_norm_ratio(C, G, C_ref, G_ref, rcond=1e-10):
    """min_x sqrt((x' C' G^-1 C x) / (x' C_ref' G_ref^-1 C_ref x)) over
    trial directions x with a nonzero reference dual norm."""
    nact = np.union1d(np.flatnonzero(np.diff(C.tocsc().indptr)),
                      np.flatnonzero(np.diff(C_ref.tocsc().indptr)))
    if len(nact) == 0:
        raise ValueError("trial space has zero trace on the probed part")

    def schur(Cmat, Gmat):
        lu = spla.splu(Gmat.tocsc())
        B = Cmat.tocsc()[:, nact]
        S = np.empty((len(nact), len(nact)))
        for lo in range(0, len(nact), 64):
            cols = slice(lo, min(lo + 64, len(nact)))
            S[:, cols] = B.T @ lu.solve(B[:, cols].toarray())
        return 0.5 * (S + S.T)

    S = schur(C, G)
    S_ref = schur(C_ref, G_ref)
    w, V = np.linalg.eigh(S_ref)
    keep = w > w.max() * rcond
    if not np.any(keep):
        raise ValueError("reference dual norm vanishes on the trial space")
    W = V[:, keep] / np.sqrt(w[keep])
    T = W.T @ S @ W
    lam = float(np.linalg.eigvalsh(0.5 * (T + T.T)).min())
    return float(np.sqrt(min(max(lam, 0.0), 1.0)))


def infsup_probe_dirichlet(U: FeSpace, Yb: FeSpace,
                           Yb_ref: FeSpace) -> InfSupProbe:
    """Stability of the Dirichlet-trace pairing int u (v.n) ds of the
    potential trial space against the H(div) test space."""
    C = assemble_coupling_dirichlet(Yb, U)
    C_ref = assemble_coupling_dirichlet(Yb_ref, U)
    G = assemble_gram_hdiv(Yb)
    G_ref = assemble_gram_hdiv(Yb_ref)
    gamma = dual_norm_ratio(C, G, C_ref, G_ref)
    ref = (f"rt{Yb_ref.basis.degree} on {Yb_ref.mesh.num_triangles} triangles")
    return InfSupProbe(gamma_hat=gamma, trial_dofs=U.ndof, reference_space=ref)


def infsup_probe_neumann(P: FeSpace, Yc: FeSpace,
                         Yc_ref: FeSpace) -> InfSupProbe:
    """Stability of the Neumann-trace pairing int (p.n) v ds of the flux
    trial space against the H1 test space (seminorm Gram)."""
    C = assemble_coupling_neumann(Yc, P)
    C_ref = assemble_coupling_neumann(Yc_ref, P)
    G = assemble_gram_h1semi(Yc)
    G_ref = assemble_gram_h1semi(Yc_ref)
    gamma = dual_norm_ratio(C, G, C_ref, G_ref)
    ref = (f"p{Yc_ref.basis.degree} on {Yc_ref.mesh.num_triangles} triangles")
    return InfSupProbe(gamma_hat=gamma, trial_dofs=P.ndof, reference_space=ref)


def reference_test_spaces(Yb: FeSpace, Yc: FeSpace, q: int):
    """Enriched reference spaces: one uniform refinement, one extra degree."""
    Yb_ref = build_space(uniform_refine(Yb.mesh), "rt", q + 2,
                         constraint=NEUMANN)
    Yc_ref = build_space(uniform_refine(Yc.mesh), "lagrange", q + 3,
                         constraint=DIRICHLET)
    return Yb_ref, Yc_ref


def probe_level(P, U, Yb, Yc, q):
    """(gamma_hat_D, gamma_hat_N) for one level of the adaptive loop."""
    Yb_ref, Yc_ref = reference_test_spaces(Yb, Yc, q)
    gd = infsup_probe_dirichlet(U, Yb, Yb_ref).gamma_hat
    has_neumann = len(P.mesh.part_edges(NEUMANN)) > 0
    gn = (infsup_probe_neumann(P, Yc, Yc_ref).gamma_hat
          if has_neumann else np.nan)
    return gd, gn


# -- manufactured solutions ---------------------------------------------------------


@dataclass(frozen=True)
class ManufacturedCase:
    label: str
    q: int
    error: float
    lambda_b_norm: float
    lambda_c_norm: float
    tolerance: float

    @property
    def passed(self):
        return (self.error <= self.tolerance
                and self.lambda_b_norm <= self.tolerance
                and self.lambda_c_norm <= self.tolerance)


def _manufactured_data(A, b_coef, u_fn, grad_fn, flux_div):
    """Mixed-boundary data on the rectangle for a prescribed solution."""
    Amat = np.eye(2) if A is None else np.asarray(A, dtype=float)

    def flux(x):
        return grad_fn(x) @ Amat.T

    def h_neumann(x):
        return -flux(x)[:, 1]  # bottom boundary, outward normal (0, -1)

    def g(x):
        react = b_coef * u_fn(x) if b_coef else 0.0
        return react - flux_div(x)

    return ProblemData(g=g, h_D=u_fn, h_N=h_neumann, A=A,
                       b=(lambda x, c=b_coef: np.full(len(x), float(c)))
                       if b_coef else None)


def manufactured_suite(tolerance=1e-9):
    """Exact-reproduction battery: polynomial solutions representable in the
    trial pair must be reproduced with zero residual and zero multipliers.

    Covers q in {0, 1}, identity and diag(2, 1) diffusion, and reaction
    coefficients {0, 1}.  Returns the list of ManufacturedCase results.
    """
    from .problems import RegistryProblem, true_error

    mesh0 = uniform_refine(initial_mesh_rect())
    cases = []

    def linear_fdiv(A):
        return lambda x: np.zeros(len(x))

    def quadratic_fdiv(A):
        # u = x^2 - y^2, flux = (2 A00 x, -2 A11 y): constant divergence
        Amat = np.eye(2) if A is None else np.asarray(A, dtype=float)
        c = 2.0 * Amat[0, 0] - 2.0 * Amat[1, 1]
        return lambda x: np.full(len(x), c)

    solutions = {
        0: (lambda x: x[:, 0] + x[:, 1],
            lambda x: np.tile([1.0, 1.0], (len(x), 1)),
            linear_fdiv),
        1: (lambda x: x[:, 0] ** 2 - x[:, 1] ** 2,
            lambda x: np.column_stack([2 * x[:, 0], -2 * x[:, 1]]),
            quadratic_fdiv),
    }
    for q in (0, 1):
        u_fn, grad_fn, fdiv_of = solutions[q]
        for A in (None, np.diag([2.0, 1.0])):
            for b_coef in (0, 1):
                fdiv = fdiv_of(A)
                data = _manufactured_data(A, b_coef, u_fn, grad_fn, fdiv)
                problem = RegistryProblem(
                    name="manufactured", description="",
                    data=data, mesh_factory=lambda: mesh0,
                    exact=u_fn, exact_grad=grad_fn, exact_flux_div=fdiv)
                from .adaptivity import build_level_spaces
                P, U, Yb, Yc, _md, _mn = build_level_spaces(mesh0, q)
                system = build_block_system(Yb, Yc, P, U, data)
                result = solve_saddle(system)
                _hd, _h1, err = true_error(result, problem)
                lb = result.lambda_b.coeffs
                lc = result.lambda_c.coeffs
                lbn = float(np.sqrt(max(0.0, lb @ (system.A_b @ lb))))
                lcn = float(np.sqrt(max(0.0, lc @ (system.A_c @ lc))))
                label = (f"q={q} A={'I' if A is None else 'diag(2,1)'} "
                         f"b={b_coef}")
                cases.append(ManufacturedCase(label=label, q=q, error=err,
                                              lambda_b_norm=lbn,
                                              lambda_c_norm=lcn,
                                              tolerance=tolerance))
    return cases
