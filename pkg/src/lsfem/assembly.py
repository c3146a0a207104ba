"""Assembly of the least-squares saddle-point system.

Unknown ordering is (lambda_b, lambda_c, p, u) and the full symmetric block
matrix reads

    [ A_b   0     0      C_D   ]
    [ 0     A_c   C_N    0     ]
    [ 0     C_N'  -M_pp  -M_pu ]
    [ C_D'  0     -M_pu' -M_uu ]

where A_b is the H(div) Gram of the Dirichlet test space, A_c the H1-semi
Gram of the Neumann test space, C_D/C_N the boundary pairings, and M_* the
blocks of the least-squares Gram of (q, w) -> (q - A grad w, b w - div q).
The right-hand side is (int h_D mu.n, int h_N mu, <g, div q>, -<g, b w>).

Element loops are chunked and vectorized; accumulation order is fixed, so
assembly is deterministic.
"""

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .elements import REF_VERTS, cell_geometry
from .mesh import DIRICHLET, NEUMANN
from .quadrature import (edge_quadrature, graded_edge_quadrature,
                         triangle_quadrature)
from .spaces import FeSpace, DiscreteField, local_coefficients


def _as_values(raw, n):
    return np.broadcast_to(np.asarray(raw, dtype=float), (n,))

_CHUNK = 4096


@dataclass
class ProblemData:
    """Coefficients and data of  -div(A grad u) + b u = g  with mixed
    boundary conditions u = h_D on the Dirichlet part and n.(A grad u) = h_N
    on the Neumann part.

    `A` is an SPD 2x2 array, a callable x -> 2x2 evaluated at element
    centroids (constant per element), or None for the identity.  `b` is a
    scalar callable (reaction), None meaning zero.  Data callbacks take an
    (n, 2) point array.  `singular_points` lists locations where boundary
    data or the exact solution is non-smooth; quadrature is graded there.
    """

    g: object = None
    h_D: object = None
    h_N: object = None
    A: object = None
    b: object = None
    singular_points: tuple = ()

    def eval_A_cells(self, mesh):
        nt = mesh.num_triangles
        if self.A is None:
            return np.broadcast_to(np.eye(2), (nt, 2, 2))
        if isinstance(self.A, np.ndarray):
            return np.broadcast_to(np.asarray(self.A, dtype=float), (nt, 2, 2))
        centroids = mesh.vertices[mesh.triangles].mean(axis=1)
        out = np.empty((nt, 2, 2))
        for t in range(nt):
            out[t] = np.asarray(self.A(centroids[t]), dtype=float)
        return out

    def eval_b(self, points):
        if self.b is None:
            return np.zeros(len(points))
        return _as_values(self.b(points), len(points))

    def eval_g(self, points):
        if self.g is None:
            return np.zeros(len(points))
        return _as_values(self.g(points), len(points))


# -- tabulation cache -------------------------------------------------------------

_tab_cache = {}


def _ref_tabulation(basis, rule):
    key = (basis.family, basis.degree, id(rule))
    hit = _tab_cache.get(key)
    if hit is not None:
        return hit[0]
    if basis.family == "lagrange":
        tab = (basis.eval(rule.points), basis.eval_grad(rule.points))
    else:
        tab = (basis.eval_vec(rule.points), basis.eval_div(rule.points))
    _tab_cache[key] = (tab, rule)  # keep the rule alive so ids stay unique
    return tab


def _chunks(n, size=_CHUNK):
    for lo in range(0, n, size):
        yield slice(lo, min(lo + size, n))


def default_volume_degree(*spaces):
    """2 * (max trial polynomial degree) + 2."""
    deg = 0
    for s in spaces:
        deg = max(deg, s.basis.degree + (1 if s.basis.family == "rt" else 0))
    return 2 * deg + 2


class _Scatter:
    """Triplet accumulator dropping constrained (-1) DOFs."""

    def __init__(self, nrows, ncols):
        self.shape = (nrows, ncols)
        self.rows, self.cols, self.vals = [], [], []

    def add(self, row_dofs, col_dofs, mats):
        ii = np.broadcast_to(row_dofs[:, :, None], mats.shape)
        jj = np.broadcast_to(col_dofs[:, None, :], mats.shape)
        mask = (ii >= 0) & (jj >= 0)
        self.rows.append(ii[mask])
        self.cols.append(jj[mask])
        self.vals.append(mats[mask])

    def tocsr(self):
        rows = np.concatenate(self.rows) if self.rows else np.zeros(0, dtype=np.int64)
        cols = np.concatenate(self.cols) if self.cols else np.zeros(0, dtype=np.int64)
        vals = np.concatenate(self.vals) if self.vals else np.zeros(0)
        mat = sp.coo_matrix((vals, (rows, cols)), shape=self.shape)
        return mat.tocsr()


def _phys_rt(space, rule, sl, J, det):
    """Sign-adjusted Piola basis on a chunk; contract with raw DOF values."""
    vhat, dhat = _ref_tabulation(space.basis, rule)
    vals = np.einsum("tab,qib->tqia", J[sl], vhat) / det[sl, None, None, None]
    divs = dhat[None, :, :] / det[sl, None, None]
    signs = space.cell_signs[sl]
    return vals * signs[:, None, :, None], divs * signs[:, None, :]


def _raw_cell_coeffs(field, sl):
    """Per-cell global DOF values without orientation signs; pairs with the
    sign-adjusted basis tabulations above."""
    padded = np.concatenate([field.coeffs, [0.0]])
    return padded[field.space.cell_dofs[sl]]


def _phys_lagrange_grads(space, rule, sl, invJT):
    _vhat, ghat = _ref_tabulation(space.basis, rule)
    return np.einsum("tab,qib->tqia", invJT[sl], ghat)


# -- Gram matrices -----------------------------------------------------------------


def assemble_gram_hdiv(space: FeSpace, quad_degree=None) -> sp.csr_matrix:
    """Gram of the H(div) inner product int v.w + div v div w."""
    if space.basis.family != "rt":
        raise ValueError("H(div) Gram requires a Raviart-Thomas space")
    rule = triangle_quadrature(quad_degree or default_volume_degree(space))
    _o, J, det, _i = cell_geometry(space.mesh)
    out = _Scatter(space.ndof, space.ndof)
    for sl in _chunks(space.mesh.num_triangles):
        vals, divs = _phys_rt(space, rule, sl, J, det)
        w = rule.weights[None, :] * det[sl, None]
        mats = (np.einsum("tq,tqia,tqja->tij", w, vals, vals)
                + np.einsum("tq,tqi,tqj->tij", w, divs, divs))
        out.add(space.cell_dofs[sl], space.cell_dofs[sl], mats)
    return out.tocsr()


def assemble_mass(space: FeSpace, quad_degree=None) -> sp.csr_matrix:
    """L2 Gram (mass matrix) of a Lagrange space."""
    if space.basis.family != "lagrange":
        raise ValueError("mass matrix implemented for Lagrange spaces")
    rule = triangle_quadrature(quad_degree or default_volume_degree(space))
    vhat, _g = _ref_tabulation(space.basis, rule)
    _o, J, det, _i = cell_geometry(space.mesh)
    out = _Scatter(space.ndof, space.ndof)
    for sl in _chunks(space.mesh.num_triangles):
        w = rule.weights[None, :] * det[sl, None]
        mats = np.einsum("tq,qi,qj->tij", w, vhat, vhat)
        out.add(space.cell_dofs[sl], space.cell_dofs[sl], mats)
    return out.tocsr()


def assemble_gram_h1semi(space: FeSpace, quad_degree=None) -> sp.csr_matrix:
    """Stiffness matrix int grad v . grad w; requires a constrained space so
    the seminorm is a norm (otherwise constants are in the kernel)."""
    if space.basis.family != "lagrange":
        raise ValueError("H1 seminorm Gram requires a Lagrange space")
    if space.constraint is None:
        raise ValueError("H1 seminorm is degenerate on an unconstrained space; "
                         "constrain a boundary part first")
    return _h1semi_matrix(space, quad_degree)


def _h1semi_matrix(space, quad_degree=None):
    rule = triangle_quadrature(quad_degree or default_volume_degree(space))
    _o, J, det, invJT = cell_geometry(space.mesh)
    out = _Scatter(space.ndof, space.ndof)
    for sl in _chunks(space.mesh.num_triangles):
        grads = _phys_lagrange_grads(space, rule, sl, invJT)
        w = rule.weights[None, :] * det[sl, None]
        mats = np.einsum("tq,tqia,tqja->tij", w, grads, grads)
        out.add(space.cell_dofs[sl], space.cell_dofs[sl], mats)
    return out.tocsr()


def assemble_ls_gram(P: FeSpace, U: FeSpace, data: ProblemData,
                     quad_degree=None) -> sp.csr_matrix:
    """Gram of (q, w) -> (q - A grad w, b w - div q) on (P x U)^2,
    as one symmetric positive semidefinite matrix over p then u."""
    if P.mesh is not U.mesh:
        raise ValueError("flux and potential spaces must share one mesh")
    if P.basis.family != "rt" or U.basis.family != "lagrange":
        raise ValueError("expected an RT flux space and a Lagrange potential space")
    mesh = P.mesh
    rule = triangle_quadrature(quad_degree or default_volume_degree(P, U))
    phi, _g = _ref_tabulation(U.basis, rule)
    origin, J, det, invJT = cell_geometry(mesh)
    A_cells = data.eval_A_cells(mesh)
    nP, nU = P.ndof, U.ndof
    out = _Scatter(nP + nU, nP + nU)
    for sl in _chunks(mesh.num_triangles):
        vals, divs = _phys_rt(P, rule, sl, J, det)
        grads = _phys_lagrange_grads(U, rule, sl, invJT)
        agrad = np.einsum("tab,tqjb->tqja", A_cells[sl], grads)
        pts = origin[sl, None, :] + np.einsum("tab,qb->tqa", J[sl], rule.points)
        bvals = data.eval_b(pts.reshape(-1, 2)).reshape(pts.shape[:2])
        w = rule.weights[None, :] * det[sl, None]
        m_pp = (np.einsum("tq,tqia,tqja->tij", w, vals, vals)
                + np.einsum("tq,tqi,tqj->tij", w, divs, divs))
        m_pu = -(np.einsum("tq,tqia,tqja->tij", w, vals, agrad)
                 + np.einsum("tq,tqi,tq,qj->tij", w, divs, bvals, phi))
        m_uu = (np.einsum("tq,tqia,tqja->tij", w, agrad, agrad)
                + np.einsum("tq,tq,qi,qj->tij", w, bvals ** 2, phi, phi))
        pd = P.cell_dofs[sl]
        ud = np.where(U.cell_dofs[sl] >= 0, U.cell_dofs[sl] + nP, -1)
        out.add(pd, pd, m_pp)
        out.add(pd, ud, m_pu)
        out.add(ud, pd, np.transpose(m_pu, (0, 2, 1)))
        out.add(ud, ud, m_uu)
    return out.tocsr()


# -- boundary pairings --------------------------------------------------------------


class _PartTrace:
    """Trace evaluation on the edges of one boundary part of one mesh."""

    def __init__(self, mesh, part):
        self.mesh = mesh
        self.part = part
        self.edges = [int(e) for e in mesh.part_edges(part)]
        self.seg = {}
        for e in self.edges:
            a, b = mesh.edges[e]
            self.seg[e] = (mesh.vertices[a].copy(), mesh.vertices[b].copy())

    def locate(self, point, tol=1e-12):
        """Edge of this part containing the physical point."""
        for e in self.edges:
            pa, pb = self.seg[e]
            d = pb - pa
            L2 = d @ d
            t = (point - pa) @ d / L2
            if -tol <= t <= 1 + tol:
                off = point - (pa + t * d)
                if off @ off < tol * max(L2, 1.0):
                    return e
        raise ValueError(f"point {point} not on boundary part {self.part}")

    def ref_points(self, e, phys_points):
        """(owner triangle, reference coordinates) for points on edge e."""
        t, l = self.mesh.edge_owner(e)
        start, end = (l + 1) % 3, (l + 2) % 3
        ps = self.mesh.vertices[self.mesh.triangles[t, start]]
        pe = self.mesh.vertices[self.mesh.triangles[t, end]]
        d = pe - ps
        tpar = (np.atleast_2d(phys_points) - ps) @ d / (d @ d)
        ref = (REF_VERTS[start][None, :]
               + tpar[:, None] * (REF_VERTS[end] - REF_VERTS[start])[None, :])
        return t, ref


def _outward_normal(mesh, e):
    t, l = mesh.edge_owner(e)
    tri = mesh.triangles[t]
    ps = mesh.vertices[tri[(l + 1) % 3]]
    pe = mesh.vertices[tri[(l + 2) % 3]]
    d = (pe - ps) / np.linalg.norm(pe - ps)
    return np.array([d[1], -d[0]])


def _integration_edges(test_trace, trial_trace):
    """Pick the finer facet partition of the shared part as the integration
    domain; for matched meshes the facet sets coincide and either works."""
    if len(test_trace.edges) >= len(trial_trace.edges):
        return test_trace
    return trial_trace


def _assemble_part_pairing(test_space, trial_space, part, trace_kind,
                           quad_degree):
    """Matrix of int_part (test trace_i) (trial trace_j) ds.

    trace_kind selects which side carries the normal trace: "test_normal"
    pairs an RT test space's v.n with scalar trial values; "trial_normal"
    pairs scalar test values with an RT trial space's v.n.
    """
    test_trace = _PartTrace(test_space.mesh, part)
    trial_trace = _PartTrace(trial_space.mesh, part)
    domain = _integration_edges(test_trace, trial_trace)
    rule = edge_quadrature(quad_degree)
    out = _Scatter(test_space.ndof, trial_space.ndof)

    for e in domain.edges:
        pa, pb = domain.seg[e]
        length = np.linalg.norm(pb - pa)
        mid = (pa + pb) / 2.0
        n = _outward_normal(domain.mesh, e)
        phys = pa[None, :] + rule.points[:, None] * (pb - pa)[None, :]
        w = rule.weights * length

        te = e if domain is test_trace else test_trace.locate(mid)
        t_test, ref_test = test_trace.ref_points(te, phys)
        tr = e if domain is trial_trace else trial_trace.locate(mid)
        t_trial, ref_trial = trial_trace.ref_points(tr, phys)

        if trace_kind == "test_normal":
            vt = test_space.basis.eval_vec(ref_test)
            _o, J, det, _i = cell_geometry(test_space.mesh)
            vt = (np.einsum("ab,qib->qia", J[t_test], vt) / det[t_test]) @ n
            vt = vt * test_space.cell_signs[t_test][None, :]
            st = trial_space.basis.eval(ref_trial)
        else:
            vt = test_space.basis.eval(ref_test)
            sv = trial_space.basis.eval_vec(ref_trial)
            _o, J, det, _i = cell_geometry(trial_space.mesh)
            st = (np.einsum("ab,qib->qia", J[t_trial], sv) / det[t_trial]) @ n
            st = st * trial_space.cell_signs[t_trial][None, :]

        mats = np.einsum("q,qi,qj->ij", w, vt, st)
        out.add(test_space.cell_dofs[t_test][None, :],
                trial_space.cell_dofs[t_trial][None, :], mats[None, :, :])
    return out.tocsr()


def assemble_coupling_dirichlet(Yb: FeSpace, U: FeSpace,
                                quad_degree=None) -> sp.csr_matrix:
    """C_D[i, j] = int_{Dirichlet part} phi_j (psi_i . n) ds with the outward
    normal; rows over the H(div) test space, columns over the potential."""
    if Yb.basis.family != "rt" or U.basis.family != "lagrange":
        raise ValueError("expected RT rows and Lagrange columns")
    deg = quad_degree or (default_volume_degree(Yb, U) + 4)
    return _assemble_part_pairing(Yb, U, DIRICHLET, "test_normal", deg)


def assemble_coupling_neumann(Yc: FeSpace, P: FeSpace,
                              quad_degree=None) -> sp.csr_matrix:
    """C_N[i, j] = int_{Neumann part} (psi_j . n) phi_i ds with the outward
    normal; rows over the H1 test space, columns over the flux."""
    if Yc.basis.family != "lagrange" or P.basis.family != "rt":
        raise ValueError("expected Lagrange rows and RT columns")
    deg = quad_degree or (default_volume_degree(Yc, P) + 4)
    return _assemble_part_pairing(Yc, P, NEUMANN, "trial_normal", deg)


# -- right-hand side ----------------------------------------------------------------


def _edge_rule_for(pa, pb, singular_points, degree, graded_levels):
    """Graded rule when an endpoint is singular, plain Gauss otherwise."""
    base = edge_quadrature(degree)
    for s in singular_points:
        s = np.asarray(s, dtype=float)
        if np.allclose(pa, s, atol=1e-14):
            return graded_edge_quadrature(0, graded_levels, base)
        if np.allclose(pb, s, atol=1e-14):
            return graded_edge_quadrature(1, graded_levels, base)
    return base


def _boundary_load(space, part, datum, data, quad_degree, graded_levels,
                   normal_trace):
    rhs = np.zeros(space.ndof)
    if datum is None:
        return rhs
    trace = _PartTrace(space.mesh, part)
    _o, J, det, _i = cell_geometry(space.mesh)
    for e in trace.edges:
        pa, pb = trace.seg[e]
        rule = _edge_rule_for(pa, pb, data.singular_points, quad_degree,
                              graded_levels)
        length = np.linalg.norm(pb - pa)
        phys = pa[None, :] + rule.points[:, None] * (pb - pa)[None, :]
        w = rule.weights * length
        hvals = _as_values(datum(phys), len(phys))
        if not np.all(np.isfinite(hvals)):
            raise ValueError(f"boundary datum not finite on edge {e}")
        t, ref = trace.ref_points(e, phys)
        if normal_trace:
            n = _outward_normal(space.mesh, e)
            vt = space.basis.eval_vec(ref)
            vt = (np.einsum("ab,qib->qia", J[t], vt) / det[t]) @ n
            vt = vt * space.cell_signs[t][None, :]
        else:
            vt = space.basis.eval(ref)
        local = np.einsum("q,q,qi->i", w, hvals, vt)
        dofs = space.cell_dofs[t]
        valid = dofs >= 0
        np.add.at(rhs, dofs[valid], local[valid])
    return rhs


def assemble_rhs(Yb: FeSpace, Yc: FeSpace, P: FeSpace, U: FeSpace,
                 data: ProblemData, volume_degree=None, boundary_degree=None,
                 graded_levels=30):
    """Load vectors (rhs_b, rhs_c, rhs_pu) of the saddle-point system."""
    vdeg = volume_degree or default_volume_degree(P, U)
    bdeg = boundary_degree or (default_volume_degree(Yb, Yc, P, U) + 4)
    rhs_b = _boundary_load(Yb, DIRICHLET, data.h_D, data, bdeg, graded_levels,
                           normal_trace=True)
    rhs_c = _boundary_load(Yc, NEUMANN, data.h_N, data, bdeg, graded_levels,
                           normal_trace=False)

    nP, nU = P.ndof, U.ndof
    rhs_pu = np.zeros(nP + nU)
    if data.g is not None:
        mesh = P.mesh
        rule = triangle_quadrature(vdeg)
        phi, _g = _ref_tabulation(U.basis, rule)
        origin, J, det, _invJT = cell_geometry(mesh)
        for sl in _chunks(mesh.num_triangles):
            _vals, divs = _phys_rt(P, rule, sl, J, det)
            pts = origin[sl, None, :] + np.einsum("tab,qb->tqa", J[sl], rule.points)
            flat = pts.reshape(-1, 2)
            gvals = data.eval_g(flat).reshape(pts.shape[:2])
            bvals = data.eval_b(flat).reshape(pts.shape[:2])
            w = rule.weights[None, :] * det[sl, None]
            loc_p = np.einsum("tq,tq,tqi->ti", w, gvals, divs)
            loc_u = -np.einsum("tq,tq,tq,qi->ti", w, gvals, bvals, phi)
            pd, ud = P.cell_dofs[sl].ravel(), U.cell_dofs[sl].ravel()
            pm, um = pd >= 0, ud >= 0
            np.add.at(rhs_pu, pd[pm], loc_p.ravel()[pm])
            np.add.at(rhs_pu, nP + ud[um], loc_u.ravel()[um])
    return rhs_b, rhs_c, rhs_pu


# -- the block system ----------------------------------------------------------------


@dataclass
class BlockSystem:
    """Assembled blocks plus the spaces and data they came from."""

    Yb: FeSpace
    Yc: FeSpace
    P: FeSpace
    U: FeSpace
    A_b: sp.csr_matrix
    A_c: sp.csr_matrix
    C_D: sp.csr_matrix
    C_N: sp.csr_matrix
    M: sp.csr_matrix
    rhs_b: np.ndarray
    rhs_c: np.ndarray
    rhs_pu: np.ndarray
    data: ProblemData = None
    volume_degree: int = 0

    @property
    def dims(self):
        return (self.Yb.ndof, self.Yc.ndof, self.P.ndof, self.U.ndof)

    @property
    def trial_dofs(self):
        return self.P.ndof + self.U.ndof

    @property
    def total_dofs(self):
        return sum(self.dims)

    def full_matrix(self) -> sp.csr_matrix:
        nb, nc, npp, nu = self.dims
        Z = None
        M_pp = self.M[:npp, :npp]
        M_pu = self.M[:npp, npp:]
        M_uu = self.M[npp:, npp:]
        return sp.bmat([
            [self.A_b, Z, Z, self.C_D],
            [Z, self.A_c, self.C_N, Z],
            [Z, self.C_N.T, -M_pp, -M_pu],
            [self.C_D.T, Z, -M_pu.T, -M_uu],
        ], format="csr")

    def full_rhs(self):
        return np.concatenate([self.rhs_b, self.rhs_c, self.rhs_pu])


def build_block_system(Yb, Yc, P, U, data: ProblemData, volume_degree=None,
                       boundary_degree=None, graded_levels=30) -> BlockSystem:
    """Assemble every block of the saddle-point system for given spaces."""
    vdeg = volume_degree or default_volume_degree(Yb, Yc, P, U)
    bdeg = boundary_degree or (vdeg + 4)
    A_b = assemble_gram_hdiv(Yb, vdeg)
    A_c = assemble_gram_h1semi(Yc, vdeg)
    C_D = assemble_coupling_dirichlet(Yb, U, bdeg)
    C_N = assemble_coupling_neumann(Yc, P, bdeg)
    M = assemble_ls_gram(P, U, data, vdeg)
    rhs_b, rhs_c, rhs_pu = assemble_rhs(Yb, Yc, P, U, data, vdeg, bdeg,
                                        graded_levels)
    return BlockSystem(Yb=Yb, Yc=Yc, P=P, U=U, A_b=A_b, A_c=A_c, C_D=C_D,
                       C_N=C_N, M=M, rhs_b=rhs_b, rhs_c=rhs_c, rhs_pu=rhs_pu,
                       data=data, volume_degree=vdeg)


# -- elementwise quantities (estimator, residuals) ------------------------------------


def elementwise_ls_residual(p_field: DiscreteField, u_field: DiscreteField,
                            data: ProblemData, quad_degree=None):
    """Per-element squared L2 residuals (|p - A grad u|^2, |b u - div p - g|^2)."""
    P, U = p_field.space, u_field.space
    if P.mesh is not U.mesh:
        raise ValueError("fields live on different meshes")
    mesh = P.mesh
    rule = triangle_quadrature(quad_degree or (default_volume_degree(P, U) + 2))
    phi, _ = _ref_tabulation(U.basis, rule)
    origin, J, det, invJT = cell_geometry(mesh)
    A_cells = data.eval_A_cells(mesh)
    field_sq = np.empty(mesh.num_triangles)
    div_sq = np.empty(mesh.num_triangles)
    for sl in _chunks(mesh.num_triangles):
        vals, divs = _phys_rt(P, rule, sl, J, det)
        grads = _phys_lagrange_grads(U, rule, sl, invJT)
        cp = _raw_cell_coeffs(p_field, sl)
        cu = _raw_cell_coeffs(u_field, sl)
        pvals = np.einsum("tqia,ti->tqa", vals, cp)
        pdivs = np.einsum("tqi,ti->tq", divs, cp)
        ugrad = np.einsum("tqia,ti->tqa", grads, cu)
        uvals = np.einsum("qi,ti->tq", phi, cu)
        agrad = np.einsum("tab,tqb->tqa", A_cells[sl], ugrad)
        pts = origin[sl, None, :] + np.einsum("tab,qb->tqa", J[sl], rule.points)
        flat = pts.reshape(-1, 2)
        gvals = data.eval_g(flat).reshape(pts.shape[:2])
        bvals = data.eval_b(flat).reshape(pts.shape[:2])
        w = rule.weights[None, :] * det[sl, None]
        r1 = pvals - agrad
        r2 = bvals * uvals - pdivs - gvals
        field_sq[sl] = np.einsum("tq,tqa,tqa->t", w, r1, r1)
        div_sq[sl] = np.einsum("tq,tq->t", w, r2 * r2)
    return field_sq, div_sq


def elementwise_energy_hdiv(field: DiscreteField, quad_degree=None):
    """Per-element squared H(div) energy int |v|^2 + (div v)^2."""
    space = field.space
    rule = triangle_quadrature(quad_degree or default_volume_degree(space))
    _o, J, det, _i = cell_geometry(space.mesh)
    out = np.empty(space.mesh.num_triangles)
    for sl in _chunks(space.mesh.num_triangles):
        vals, divs = _phys_rt(space, rule, sl, J, det)
        c = _raw_cell_coeffs(field, sl)
        v = np.einsum("tqia,ti->tqa", vals, c)
        d = np.einsum("tqi,ti->tq", divs, c)
        w = rule.weights[None, :] * det[sl, None]
        out[sl] = np.einsum("tq,tqa,tqa->t", w, v, v) + np.einsum("tq,tq->t", w, d * d)
    return out


def elementwise_energy_h1(field: DiscreteField, quad_degree=None):
    """Per-element (squared seminorm, squared L2 norm) of a Lagrange field."""
    space = field.space
    rule = triangle_quadrature(quad_degree or default_volume_degree(space))
    phi, _ = _ref_tabulation(space.basis, rule)
    _o, J, det, invJT = cell_geometry(space.mesh)
    semi = np.empty(space.mesh.num_triangles)
    mass = np.empty(space.mesh.num_triangles)
    for sl in _chunks(space.mesh.num_triangles):
        grads = _phys_lagrange_grads(space, rule, sl, invJT)
        c = _raw_cell_coeffs(field, sl)
        g = np.einsum("tqia,ti->tqa", grads, c)
        v = np.einsum("qi,ti->tq", phi, c)
        w = rule.weights[None, :] * det[sl, None]
        semi[sl] = np.einsum("tq,tqa,tqa->t", w, g, g)
        mass[sl] = np.einsum("tq,tq->t", w, v * v)
    return semi, mass
