"""Reference-element bases and affine element maps.

Continuous Lagrange bases (nodal, principal lattice) and Raviart-Thomas
bases on the reference triangle with vertices (0,0), (1,0), (0,1).  Local
edge l connects vertices (l+1)%3 and (l+2)%3, traversed in that order; for
counterclockwise triangles the outward normal is the traversal direction
rotated by -90 degrees.

RT degrees of freedom are normal moments against shifted Legendre
polynomials on each edge (arclength measure) plus interior moments against
vector monomials of one degree less, the standard unisolvent set.  Using
Legendre moments makes the inter-element matching diagonal: reversing the
edge parameter only flips the sign of odd moments.
"""

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .quadrature import edge_quadrature, triangle_quadrature

REF_VERTS = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])


def _edge_endpoints(l):
    return REF_VERTS[(l + 1) % 3], REF_VERTS[(l + 2) % 3]


def _edge_normal(l):
    a, b = _edge_endpoints(l)
    t = (b - a) / np.linalg.norm(b - a)
    return np.array([t[1], -t[0]])  # rotate -90deg: outward for CCW triangles


def shifted_legendre(j, t):
    """Legendre polynomial of degree j mapped to [0, 1], L_0 = 1."""
    c = np.zeros(j + 1)
    c[j] = 1.0
    return np.polynomial.legendre.legval(2.0 * np.asarray(t) - 1.0, c)


def _monomial_exponents(degree):
    return [(a, b) for total in range(degree + 1) for a in range(total, -1, -1)
            for b in [total - a]]


def _eval_monomials(exps, points):
    pts = np.atleast_2d(points)
    out = np.empty((len(pts), len(exps)))
    for j, (a, b) in enumerate(exps):
        out[:, j] = pts[:, 0] ** a * pts[:, 1] ** b
    return out


def _eval_monomial_grads(exps, points):
    pts = np.atleast_2d(points)
    out = np.zeros((len(pts), len(exps), 2))
    for j, (a, b) in enumerate(exps):
        if a > 0:
            out[:, j, 0] = a * pts[:, 0] ** (a - 1) * pts[:, 1] ** b
        if b > 0:
            out[:, j, 1] = b * pts[:, 0] ** a * pts[:, 1] ** (b - 1)
    return out


@dataclass(frozen=True)
class ReferenceBasis:
    """A basis on the reference triangle with tagged degrees of freedom.

    entity_dofs entries are ("vertex", i), ("edge", l, j) with j the moment
    order (RT) or the node position along the local edge (Lagrange), or
    ("cell", j).
    """

    family: str
    degree: int
    entity_dofs: tuple
    _data: dict = field(repr=False)

    @property
    def ndof(self):
        return len(self.entity_dofs)

    def dofs_per_entity(self):
        counts = {"vertex": 0, "edge": 0, "cell": 0}
        for tag in self.entity_dofs:
            counts[tag[0]] += 1
        return (counts["vertex"] // 3, counts["edge"] // 3, counts["cell"])

    # -- scalar (Lagrange) interface ------------------------------------------

    def eval(self, points):
        """Values at reference points: (npts, ndof)."""
        exps, coeff = self._data["exps"], self._data["coeff"]
        return _eval_monomials(exps, points) @ coeff

    def eval_grad(self, points):
        """Gradients at reference points: (npts, ndof, 2)."""
        exps, coeff = self._data["exps"], self._data["coeff"]
        g = _eval_monomial_grads(exps, points)
        return np.einsum("psd,si->pid", g, coeff)

    @property
    def nodes(self):
        return self._data["nodes"]

    # -- vector (Raviart-Thomas) interface -------------------------------------

    def eval_vec(self, points):
        """Vector values at reference points: (npts, ndof, 2)."""
        span = self._data["span"](points)
        return np.einsum("psd,si->pid", span, self._data["coeff"])

    def eval_div(self, points):
        """Divergences at reference points: (npts, ndof)."""
        return self._data["span_div"](points) @ self._data["coeff"]


@lru_cache(maxsize=None)
def lagrange_basis(degree: int) -> ReferenceBasis:
    """Nodal Lagrange basis on the principal lattice, degrees 1..4.

    Degrees 1..3 are the trial/test degrees used by the solver; degree 4
    exists to build enriched reference spaces for the inf-sup probes.
    """
    if not 1 <= degree <= 4:
        raise ValueError(f"unsupported Lagrange degree {degree}")
    k = degree
    nodes, tags = [], []
    # vertices
    for i in range(3):
        nodes.append(REF_VERTS[i])
        tags.append(("vertex", i))
    # edge nodes ordered by increasing parameter toward the local end vertex
    for l in range(3):
        a, b = _edge_endpoints(l)
        for j in range(k - 1):
            t = (j + 1) / k
            nodes.append(a + t * (b - a))
            tags.append(("edge", l, j))
    # interior lattice nodes, lexicographic in barycentric indices
    j = 0
    for i0 in range(1, k):
        for i1 in range(1, k - i0):
            i2 = k - i0 - i1
            if i2 < 1:
                continue
            nodes.append((i1 * REF_VERTS[1] + i2 * REF_VERTS[2]) / k
                         + (i0 / k) * REF_VERTS[0])
            tags.append(("cell", j))
            j += 1
    nodes = np.array(nodes)
    exps = _monomial_exponents(k)
    V = _eval_monomials(exps, nodes)
    coeff = np.linalg.inv(V)
    return ReferenceBasis("lagrange", k, tuple(tags),
                          {"exps": exps, "coeff": coeff, "nodes": nodes})


def _rt_span(degree):
    """Span of RT_q: P_q^2 plus x times homogeneous degree-q scalars."""
    q = degree
    scalar = _monomial_exponents(q)
    homog = [(q - j, j) for j in range(q + 1)]

    def span(points):
        pts = np.atleast_2d(points)
        mono = _eval_monomials(scalar, pts)
        out = np.zeros((len(pts), 2 * len(scalar) + len(homog), 2))
        out[:, :len(scalar), 0] = mono
        out[:, len(scalar):2 * len(scalar), 1] = mono
        hom = _eval_monomials(homog, pts)
        base = 2 * len(scalar)
        out[:, base:, 0] = hom * pts[:, 0:1]
        out[:, base:, 1] = hom * pts[:, 1:2]
        return out

    def span_div(points):
        pts = np.atleast_2d(points)
        out = np.zeros((len(pts), 2 * len(scalar) + len(homog)))
        for j, (a, b) in enumerate(scalar):
            if a > 0:
                out[:, j] = a * pts[:, 0] ** (a - 1) * pts[:, 1] ** b
            if b > 0:
                out[:, len(scalar) + j] = b * pts[:, 0] ** a * pts[:, 1] ** (b - 1)
        hom = _eval_monomials(homog, pts)
        out[:, 2 * len(scalar):] = (q + 2) * hom
        return out

    return span, span_div, 2 * len(scalar) + len(homog)


@lru_cache(maxsize=None)
def rt_basis(degree: int) -> ReferenceBasis:
    """Raviart-Thomas basis of the given degree (0..3), dual to edge normal
    moments (Legendre weights, q+1 per edge) and interior vector moments.

    Degrees 0..2 are used by the solver; degree 3 exists for probe
    enrichment.  dim RT_q = (q+1)(q+3).
    """
    if not 0 <= degree <= 3:
        raise ValueError(f"unsupported Raviart-Thomas degree {degree}")
    q = degree
    span, span_div, nspan = _rt_span(q)

    tags = []
    functionals = []  # callables: (npts, nspan, 2) span values -> moments
    erule = edge_quadrature(2 * q + 3)
    for l in range(3):
        a, b = _edge_endpoints(l)
        n = _edge_normal(l)
        length = np.linalg.norm(b - a)
        pts = a[None, :] + erule.points[:, None] * (b - a)[None, :]
        spn = span(pts)  # (nq, nspan, 2)
        normal_trace = spn @ n  # (nq, nspan)
        for j in range(q + 1):
            w = erule.weights * shifted_legendre(j, erule.points) * length
            functionals.append(w @ normal_trace)
            tags.append(("edge", l, j))
    if q >= 1:
        trule = triangle_quadrature(2 * q + 1)
        spn = span(trule.points)
        interior = _monomial_exponents(q - 1)
        j = 0
        for (a, b) in interior:
            m = (trule.points[:, 0] ** a * trule.points[:, 1] ** b)
            for d in range(2):
                functionals.append((trule.weights * m) @ spn[:, :, d])
                tags.append(("cell", j))
                j += 1
    D = np.array(functionals)  # (ndof, nspan)
    assert D.shape == (nspan, nspan)
    coeff = np.linalg.inv(D)
    return ReferenceBasis("rt", q, tuple(tags),
                          {"span": span, "span_div": span_div, "coeff": coeff})


# -- affine maps ----------------------------------------------------------------


@dataclass(frozen=True)
class ElementMap:
    """Affine map x = origin + J xhat from the reference triangle."""

    origin: np.ndarray
    jacobian: np.ndarray
    det: float
    inv_jacobian_t: np.ndarray

    @classmethod
    def from_vertices(cls, v):
        v = np.asarray(v, dtype=float)
        J = np.column_stack([v[1] - v[0], v[2] - v[0]])
        det = float(np.linalg.det(J))
        if det <= 0:
            raise ValueError("degenerate or inverted element")
        invJT = np.linalg.inv(J).T
        return cls(origin=v[0], jacobian=J, det=det, inv_jacobian_t=invJT)

    def apply(self, ref_points):
        return self.origin + np.atleast_2d(ref_points) @ self.jacobian.T


_geo_cache = {}


def cell_geometry(mesh):
    """Batched affine-map data for all triangles of a mesh (cached).

    Returns (origin, J, det, invJT) with shapes (nt,2), (nt,2,2), (nt,),
    (nt,2,2).  det equals twice the triangle area and is positive.
    """
    hit = _geo_cache.get(id(mesh))
    if hit is not None and hit[0] is mesh:
        return hit[1]
    v = mesh.vertices[mesh.triangles]
    J = np.stack([v[:, 1] - v[:, 0], v[:, 2] - v[:, 0]], axis=-1)
    det = J[:, 0, 0] * J[:, 1, 1] - J[:, 0, 1] * J[:, 1, 0]
    inv = np.empty_like(J)
    inv[:, 0, 0] = J[:, 1, 1]
    inv[:, 0, 1] = -J[:, 0, 1]
    inv[:, 1, 0] = -J[:, 1, 0]
    inv[:, 1, 1] = J[:, 0, 0]
    inv /= det[:, None, None]
    invJT = np.transpose(inv, (0, 2, 1))
    geo = (v[:, 0].copy(), J, det, invJT)
    if len(_geo_cache) > 64:
        _geo_cache.clear()
    _geo_cache[id(mesh)] = (mesh, geo)
    return geo


def map_scalar(emap: ElementMap, values, ref_grads=None):
    """Push scalar basis data to the physical element.

    Values are unchanged; gradients transform with the inverse-transpose
    Jacobian.  Returns values or (values, grads).
    """
    if emap.det <= 0:
        raise ValueError("degenerate element")
    if ref_grads is None:
        return values
    return values, np.einsum("ab,pib->pia", emap.inv_jacobian_t, ref_grads)


def map_vector_piola(emap: ElementMap, ref_values, ref_divs=None):
    """Contravariant (Piola) transform: v = J vhat / det, div = divhat / det.

    Preserves edge normal moments, hence H(div) conformity.
    """
    if emap.det <= 0:
        raise ValueError("degenerate element")
    vals = np.einsum("ab,pib->pia", emap.jacobian, ref_values) / emap.det
    if ref_divs is None:
        return vals
    return vals, ref_divs / emap.det
