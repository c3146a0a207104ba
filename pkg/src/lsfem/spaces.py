"""Global finite-element spaces: DOF numbering, conformity, constraints.

Shared entities are numbered once (vertices, then edges, then cells, in mesh
insertion order).  Essential constraints are imposed by elimination: DOFs on
the constrained boundary part are simply absent from the numbering and show
up as -1 in the cell-to-global map.

Inter-element matching uses a global edge convention: every edge runs from
its lower- to its higher-numbered vertex.  The conventional edge normal is
the direction rotated by -90 degrees for interior edges, and the outward
normal for boundary edges.  Lagrange edge nodes are ordered along the
global direction.  RT edge moments are taken against shifted Legendre
polynomials in the global parameter; an element traversing the edge
backwards sees the moment of order j scaled by (-1)^(j+1) on interior
edges (a sign from the reversed normal times (-1)^j from the Legendre
reflection) and by (-1)^j on boundary edges (reflection only).
"""

from dataclasses import dataclass

import numpy as np

from .elements import ReferenceBasis, lagrange_basis, rt_basis, cell_geometry
from .mesh import BoundaryPart, Triangulation
from .quadrature import edge_quadrature, triangle_quadrature


@dataclass(frozen=True)
class FeSpace:
    mesh: Triangulation
    basis: ReferenceBasis
    constraint: BoundaryPart | None
    ndof: int
    cell_dofs: np.ndarray   # (nt, nloc), -1 for eliminated DOFs
    cell_signs: np.ndarray  # (nt, nloc)
    dof_entity: tuple       # per global DOF: ("vertex", v) | ("edge", e, j) | ("cell", t, j)

    def __repr__(self):
        c = f", constraint={self.constraint.name}" if self.constraint else ""
        return (f"FeSpace({self.basis.family}{self.basis.degree} on "
                f"{self.mesh.num_triangles} triangles, ndof={self.ndof}{c})")


def _constrained_entities(mesh, part):
    """Vertex and edge id sets lying on the closed boundary part."""
    edges = set()
    verts = set()
    if part is not None:
        for e in mesh.part_edges(part):
            edges.add(int(e))
            a, b = mesh.edges[e]
            verts.add(int(a))
            verts.add(int(b))
    return verts, edges


def build_space(mesh: Triangulation, family: str, degree: int,
                constraint: BoundaryPart | None = None) -> FeSpace:
    """Build a global space: family "lagrange" (C0) or "rt" (H(div)).

    `constraint` eliminates the trace DOFs on that boundary part: all nodes
    on the closed part for Lagrange, all normal moments of the part's edges
    for RT.
    """
    if family == "lagrange":
        basis = lagrange_basis(degree)
    elif family == "rt":
        basis = rt_basis(degree)
    else:
        raise ValueError(f"unsupported family {family!r}")

    bad_verts, bad_edges = _constrained_entities(mesh, constraint)
    tri = mesh.triangles
    k = degree
    dof_entity = []

    if family == "lagrange":
        vertex_dof = np.full(mesh.num_vertices, -1, dtype=np.int64)
        for v in range(mesh.num_vertices):
            if v not in bad_verts:
                vertex_dof[v] = len(dof_entity)
                dof_entity.append(("vertex", v))
        per_edge = k - 1
        edge_dof = np.full((mesh.num_edges, max(per_edge, 1)), -1, dtype=np.int64)
        for e in range(mesh.num_edges):
            if e in bad_edges:
                continue
            for j in range(per_edge):
                edge_dof[e, j] = len(dof_entity)
                dof_entity.append(("edge", e, j))
        per_cell = basis.ndof - 3 - 3 * per_edge
        cell_dof = np.full((mesh.num_triangles, max(per_cell, 1)), -1, dtype=np.int64)
        for t in range(mesh.num_triangles):
            for j in range(per_cell):
                cell_dof[t, j] = len(dof_entity)
                dof_entity.append(("cell", t, j))

        cell_dofs = np.full((mesh.num_triangles, basis.ndof), -1, dtype=np.int64)
        cell_signs = np.ones((mesh.num_triangles, basis.ndof))
        for i, tag in enumerate(basis.entity_dofs):
            if tag[0] == "vertex":
                cell_dofs[:, i] = vertex_dof[tri[:, tag[1]]]
            elif tag[0] == "edge":
                l, j = tag[1], tag[2]
                ge = mesh.tri_edges[:, l]
                fwd = tri[:, (l + 1) % 3] < tri[:, (l + 2) % 3]
                pos = np.where(fwd, j, per_edge - 1 - j)
                cell_dofs[:, i] = edge_dof[ge, pos]
            else:
                cell_dofs[:, i] = cell_dof[:, tag[1]]

    else:  # rt
        per_edge = k + 1
        edge_dof = np.full((mesh.num_edges, per_edge), -1, dtype=np.int64)
        for e in range(mesh.num_edges):
            if e in bad_edges:
                continue
            for j in range(per_edge):
                edge_dof[e, j] = len(dof_entity)
                dof_entity.append(("edge", e, j))
        per_cell = k * (k + 1)
        cell_dof = np.full((mesh.num_triangles, max(per_cell, 1)), -1, dtype=np.int64)
        for t in range(mesh.num_triangles):
            for j in range(per_cell):
                cell_dof[t, j] = len(dof_entity)
                dof_entity.append(("cell", t, j))

        cell_dofs = np.full((mesh.num_triangles, basis.ndof), -1, dtype=np.int64)
        cell_signs = np.ones((mesh.num_triangles, basis.ndof))
        for i, tag in enumerate(basis.entity_dofs):
            if tag[0] == "edge":
                l, j = tag[1], tag[2]
                ge = mesh.tri_edges[:, l]
                fwd = tri[:, (l + 1) % 3] < tri[:, (l + 2) % 3]
                on_boundary = mesh.edge_tris[ge, 1] == -1
                bwd_sign = np.where(on_boundary, (-1.0) ** j, (-1.0) ** (j + 1))
                cell_dofs[:, i] = edge_dof[ge, j]
                cell_signs[:, i] = np.where(fwd, 1.0, bwd_sign)
            else:
                cell_dofs[:, i] = cell_dof[:, tag[1]]

    cell_dofs.setflags(write=False)
    cell_signs.setflags(write=False)
    return FeSpace(mesh=mesh, basis=basis, constraint=constraint,
                   ndof=len(dof_entity), cell_dofs=cell_dofs,
                   cell_signs=cell_signs, dof_entity=tuple(dof_entity))


@dataclass
class DiscreteField:
    space: FeSpace
    coeffs: np.ndarray

    def __post_init__(self):
        self.coeffs = np.asarray(self.coeffs, dtype=float)
        if self.coeffs.shape != (self.space.ndof,):
            raise ValueError(f"coefficient vector must have length "
                             f"{self.space.ndof}, got {self.coeffs.shape}")


def local_coefficients(field: DiscreteField, tri_ids=None):
    """Per-cell local coefficients with orientation signs applied."""
    space = field.space
    dofs = space.cell_dofs if tri_ids is None else space.cell_dofs[tri_ids]
    signs = space.cell_signs if tri_ids is None else space.cell_signs[tri_ids]
    padded = np.concatenate([field.coeffs, [0.0]])
    return padded[dofs] * signs


def eval_field(field: DiscreteField, tri_ids, ref_points):
    """Evaluate on the given triangles at shared reference points.

    Lagrange fields return (values, gradients) with shapes (nt, np) and
    (nt, np, 2); RT fields return (values, divergences) with shapes
    (nt, np, 2) and (nt, np).
    """
    space = field.space
    tri_ids = np.atleast_1d(np.asarray(tri_ids, dtype=np.int64))
    pts = np.atleast_2d(ref_points)
    loc = local_coefficients(field, tri_ids)
    _origin, J, det, invJT = cell_geometry(space.mesh)
    J, det, invJT = J[tri_ids], det[tri_ids], invJT[tri_ids]
    if space.basis.family == "lagrange":
        vals = space.basis.eval(pts)
        grads = space.basis.eval_grad(pts)
        values = np.einsum("pi,ti->tp", vals, loc)
        phys_grad = np.einsum("tab,pib,ti->tpa", invJT, grads, loc)
        return values, phys_grad
    vals = space.basis.eval_vec(pts)
    divs = space.basis.eval_div(pts)
    values = np.einsum("tab,pib,ti->tpa", J, vals, loc) / det[:, None, None]
    dvals = np.einsum("pi,ti->tp", divs, loc) / det[:, None]
    return values, dvals


def _edge_geometry(mesh, e):
    """(start, end, conventional unit normal, length) of a global edge.

    Start/end follow the low-to-high vertex convention; the normal is
    outward for boundary edges, rotate(-90) of the direction otherwise.
    """
    a, b = mesh.edges[e]
    pa, pb = mesh.vertices[a], mesh.vertices[b]
    d = pb - pa
    length = float(np.linalg.norm(d))
    t = d / length
    normal = np.array([t[1], -t[0]])
    if mesh.edge_tris[e, 1] == -1:
        to, lo = mesh.edge_owner(e)
        tri = mesh.triangles[to]
        if not tri[(lo + 1) % 3] < tri[(lo + 2) % 3]:
            normal = -normal  # owner traverses high-to-low: flip to outward
    return pa, pb, normal, length


def interpolate(space: FeSpace, fn) -> DiscreteField:
    """Canonical interpolation: nodal values (Lagrange) or edge/interior
    moments (RT).  `fn` maps an (n, 2) array to (n,) or (n, 2) values."""
    from .elements import shifted_legendre

    coeffs = np.zeros(space.ndof)
    mesh = space.mesh
    k = space.basis.degree

    if space.basis.family == "lagrange":
        nodes = space.basis.nodes
        _origin, J, _det, _invJT = cell_geometry(mesh)
        for gid, tag in enumerate(space.dof_entity):
            if tag[0] == "vertex":
                x = mesh.vertices[tag[1]][None, :]
            elif tag[0] == "edge":
                e, j = tag[1], tag[2]
                a, b = mesh.edges[e]
                tpar = (j + 1) / k
                x = (mesh.vertices[a] + tpar * (mesh.vertices[b] - mesh.vertices[a]))[None, :]
            else:
                t, j = tag[1], tag[2]
                ref = None
                for i, btag in enumerate(space.basis.entity_dofs):
                    if btag == ("cell", j):
                        ref = nodes[i]
                        break
                x = (mesh.vertices[mesh.triangles[t, 0]] + ref @ J[t].T)[None, :]
            coeffs[gid] = np.asarray(fn(x)).reshape(-1)[0]
        return DiscreteField(space, coeffs)

    # RT: global edge moments against Legendre weights, then interior moments
    q = k
    erule = edge_quadrature(2 * q + 4)
    leg = np.array([shifted_legendre(j, erule.points) for j in range(q + 1)])
    edge_gid = {}
    cell_gid = {}
    for gid, tag in enumerate(space.dof_entity):
        if tag[0] == "edge":
            edge_gid[(tag[1], tag[2])] = gid
        else:
            cell_gid[(tag[1], tag[2])] = gid
    for e in range(mesh.num_edges):
        if (e, 0) not in edge_gid:
            continue
        pa, pb, normal, length = _edge_geometry(mesh, e)
        x = pa[None, :] + erule.points[:, None] * (pb - pa)[None, :]
        fn_n = np.asarray(fn(x)) @ normal
        for j in range(q + 1):
            moment = float(np.sum(erule.weights * leg[j] * fn_n) * length)
            coeffs[edge_gid[(e, j)]] = moment
    if q >= 1:
        trule = triangle_quadrature(2 * q + 2)
        vals = space.basis.eval_vec(trule.points)
        divs = space.basis.eval_div(trule.points)
        origin, J, det, _invJT = cell_geometry(mesh)
        from .elements import _monomial_exponents, _eval_monomials
        interior_exps = _monomial_exponents(q - 1)
        for t in range(mesh.num_triangles):
            phys_pts = origin[t] + trule.points @ J[t].T
            phys_vals = np.einsum("ab,pib->pia", J[t], vals) / det[t]
            mono = _eval_monomials(interior_exps, phys_pts)  # (np, nm)
            w = trule.weights * det[t]
            # moment matrix over all local dofs: rows (monomial, component)
            A = np.einsum("p,pm,pid->mdi", w, mono, phys_vals).reshape(-1, space.basis.ndof)
            fvals = np.asarray(fn(phys_pts))
            rhs = np.einsum("p,pm,pd->md", w, mono, fvals).reshape(-1)
            loc_dofs = space.cell_dofs[t]
            loc_signs = space.cell_signs[t]
            interior_loc = [i for i, tag in enumerate(space.basis.entity_dofs)
                            if tag[0] == "cell"]
            other_loc = [i for i in range(space.basis.ndof) if i not in interior_loc]
            contrib = np.zeros(len(rhs))
            for i in other_loc:
                gd = loc_dofs[i]
                c = coeffs[gd] * loc_signs[i] if gd >= 0 else 0.0
                contrib += c * A[:, i]
            Ai = A[:, interior_loc]
            sol = np.linalg.solve(Ai, rhs - contrib)
            for idx, i in enumerate(interior_loc):
                coeffs[loc_dofs[i]] = sol[idx] * loc_signs[i]
    return DiscreteField(space, coeffs)


def boundary_dofs(space: FeSpace, part: BoundaryPart):
    """Global DOFs whose trace on the given part can be nonzero.

    Lagrange: nodes on the closed part; RT: normal moments of part edges.
    """
    mesh = space.mesh
    verts, edges = _constrained_entities(mesh, part)
    out = []
    for gid, tag in enumerate(space.dof_entity):
        if tag[0] == "vertex" and tag[1] in verts:
            out.append(gid)
        elif tag[0] == "edge" and tag[1] in edges:
            out.append(gid)
    return np.array(out, dtype=np.int64)
