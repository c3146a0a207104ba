"""Conforming 2D simplicial meshes with newest-vertex bisection (NVB).

Triangles store their vertices counterclockwise with the newest vertex last,
so the refinement edge is the edge opposite the last vertex.  Refinement
returns a new mesh (meshes are immutable); `refine` computes the smallest
conforming refinement bisecting all marked triangles, by the usual
edge-marking closure.  Boundary edges carry a part tag (Dirichlet/Neumann)
that children inherit on bisection.
"""

from enum import IntEnum

import numpy as np


class BoundaryPart(IntEnum):
    DIRICHLET = 1
    NEUMANN = 2


DIRICHLET = BoundaryPart.DIRICHLET
NEUMANN = BoundaryPart.NEUMANN


class MeshError(Exception):
    pass


def _edge_key(a, b):
    return (a, b) if a < b else (b, a)


class Triangulation:
    """Immutable triangulation with edge tables and boundary tags.

    Attributes
    ----------
    vertices : (nv, 2) float array
    triangles : (nt, 3) int array, CCW, newest vertex last
    generation : (nt,) int array, NVB depth
    parent : (nt,) int array, id in the mesh this one was refined from
        (-1 for root meshes, own id for triangles copied unchanged)
    edges : (ne, 2) int array of sorted vertex pairs, first-seen order
    tri_edges : (nt, 3) int array, local edge l sits opposite vertex l
    edge_tris : (ne, 2) int array of owner triangles (-1 if boundary)
    boundary_tag : (ne,) int array, 0 for interior edges
    """

    def __init__(self, vertices, triangles, generation=None, parent=None,
                 boundary_tags=None, root=None):
        self.vertices = np.asarray(vertices, dtype=float)
        self.triangles = np.asarray(triangles, dtype=np.int64)
        nt = len(self.triangles)
        self.generation = (np.zeros(nt, dtype=np.int64) if generation is None
                           else np.asarray(generation, dtype=np.int64))
        self.parent = (np.full(nt, -1, dtype=np.int64) if parent is None
                       else np.asarray(parent, dtype=np.int64))
        self._root = root
        self._boundary_tag_map = dict(boundary_tags or {})
        self._build_edge_tables()
        self._check_orientation()
        for arr in (self.vertices, self.triangles, self.generation, self.parent,
                    self.edges, self.tri_edges, self.edge_tris, self.boundary_tag):
            arr.setflags(write=False)

    # -- construction helpers -------------------------------------------------

    def _build_edge_tables(self):
        index = {}
        edges = []
        owners = []
        nt = len(self.triangles)
        tri_edges = np.empty((nt, 3), dtype=np.int64)
        for t in range(nt):
            v = self.triangles[t]
            for l in range(3):
                key = _edge_key(v[(l + 1) % 3], v[(l + 2) % 3])
                e = index.get(key)
                if e is None:
                    e = len(edges)
                    index[key] = e
                    edges.append(key)
                    owners.append([t, -1])
                else:
                    if owners[e][1] != -1:
                        raise MeshError(f"edge {key} shared by >2 triangles")
                    owners[e][1] = t
                tri_edges[t, l] = e
        self.edges = np.array(edges, dtype=np.int64).reshape(-1, 2)
        self.tri_edges = tri_edges
        self.edge_tris = np.array(owners, dtype=np.int64)
        self._edge_index = index
        tag = np.zeros(len(edges), dtype=np.int64)
        for key, part in self._boundary_tag_map.items():
            e = index.get(key)
            if e is not None:
                tag[e] = int(part)
        self.boundary_tag = tag

    def _check_orientation(self):
        v = self.vertices[self.triangles]
        cross = ((v[:, 1, 0] - v[:, 0, 0]) * (v[:, 2, 1] - v[:, 0, 1])
                 - (v[:, 1, 1] - v[:, 0, 1]) * (v[:, 2, 0] - v[:, 0, 0]))
        if np.any(cross <= 0):
            bad = int(np.argmax(cross <= 0))
            raise MeshError(f"triangle {bad} has non-positive area")

    # -- basic queries ---------------------------------------------------------

    @property
    def num_vertices(self):
        return len(self.vertices)

    @property
    def num_triangles(self):
        return len(self.triangles)

    @property
    def num_edges(self):
        return len(self.edges)

    def family_root(self):
        """Root mesh of the NVB family this mesh descends from."""
        return self if self._root is None else self._root

    def areas(self):
        v = self.vertices[self.triangles]
        return 0.5 * ((v[:, 1, 0] - v[:, 0, 0]) * (v[:, 2, 1] - v[:, 0, 1])
                      - (v[:, 1, 1] - v[:, 0, 1]) * (v[:, 2, 0] - v[:, 0, 0]))

    def min_angle(self):
        """Smallest interior angle over all triangles, in degrees."""
        v = self.vertices[self.triangles]
        worst = np.inf
        for i in range(3):
            a = v[:, (i + 1) % 3] - v[:, i]
            b = v[:, (i + 2) % 3] - v[:, i]
            cosang = np.sum(a * b, axis=1) / (
                np.linalg.norm(a, axis=1) * np.linalg.norm(b, axis=1))
            worst = min(worst, np.degrees(np.arccos(np.clip(cosang, -1, 1))).min())
        return worst

    def boundary_edges(self):
        """Ids of edges with exactly one owner triangle."""
        return np.flatnonzero(self.edge_tris[:, 1] == -1)

    def part_edges(self, part: BoundaryPart):
        return np.flatnonzero(self.boundary_tag == int(part))

    def edge_owner(self, e):
        """(triangle id, local edge index) of the first owner of edge e."""
        t = int(self.edge_tris[e, 0])
        l = int(np.flatnonzero(self.tri_edges[t] == e)[0])
        return t, l

    def refinement_edge(self, t):
        v = self.triangles[t]
        return _edge_key(v[0], v[1])

    def facet_keys(self, part: BoundaryPart):
        """Geometric keys (sorted coordinate pairs) of the part's facets.

        NVB midpoints of dyadic coordinates are exact in binary floating
        point, so facets of different meshes in one family compare exactly.
        """
        keys = set()
        for e in self.part_edges(part):
            a, b = self.edges[e]
            pa, pb = tuple(self.vertices[a]), tuple(self.vertices[b])
            keys.add((pa, pb) if pa <= pb else (pb, pa))
        return keys

    def check_conforming(self):
        """Raise MeshError on hanging vertices or untagged boundary edges."""
        vert_of_tri = set()
        for t in range(self.num_triangles):
            vert_of_tri.update(int(v) for v in self.triangles[t])
        if len(vert_of_tri) != self.num_vertices:
            raise MeshError("unused vertices present")
        # NVB creates vertices only at edge midpoints, so a hanging vertex is
        # exactly an existing vertex sitting at the midpoint of a live edge
        positions = {tuple(p) for p in self.vertices}
        for e in range(self.num_edges):
            a, b = self.edges[e]
            mid = tuple((self.vertices[a] + self.vertices[b]) / 2.0)
            if mid in positions:
                raise MeshError(f"edge {e} has a hanging vertex at {mid}")
        for e in self.boundary_edges():
            if self.boundary_tag[e] == 0:
                raise MeshError(f"boundary edge {e} has no part tag")
        if np.any((self.boundary_tag != 0) & (self.edge_tris[:, 1] != -1)):
            raise MeshError("interior edge carries a boundary tag")
        return True

    def __repr__(self):
        return (f"Triangulation({self.num_vertices} vertices, "
                f"{self.num_triangles} triangles, {self.num_edges} edges)")


# -- initial meshes ------------------------------------------------------------


def initial_mesh_rect(all_dirichlet=False) -> Triangulation:
    """Initial mesh of the rectangle (-1,1) x (0,1): 8 right isosceles
    triangles, 4 around each unit-square center; the centers are the newest
    vertices, so every refinement edge lies on a square side.

    Boundary parts: Neumann on [-1,0] x {0}, Dirichlet elsewhere (or all
    Dirichlet if `all_dirichlet`).
    """
    verts = np.array([
        [-1.0, 0.0], [0.0, 0.0], [1.0, 0.0], [1.0, 1.0],
        [0.0, 1.0], [-1.0, 1.0], [-0.5, 0.5], [0.5, 0.5],
    ])
    tris = np.array([
        [0, 1, 6], [1, 4, 6], [4, 5, 6], [5, 0, 6],
        [1, 2, 7], [2, 3, 7], [3, 4, 7], [4, 1, 7],
    ])
    tags = {
        _edge_key(0, 1): NEUMANN if not all_dirichlet else DIRICHLET,
        _edge_key(1, 2): DIRICHLET,
        _edge_key(2, 3): DIRICHLET,
        _edge_key(3, 4): DIRICHLET,
        _edge_key(4, 5): DIRICHLET,
        _edge_key(5, 0): DIRICHLET,
    }
    return Triangulation(verts, tris, boundary_tags=tags)


# -- refinement ----------------------------------------------------------------


def bisect(mesh: Triangulation, tri_id: int) -> Triangulation:
    """Bisect one triangle through its refinement-edge midpoint.

    The result may be non-conforming; `refine` is the conforming entry point.
    """
    if not 0 <= tri_id < mesh.num_triangles:
        raise MeshError(f"invalid triangle id {tri_id}")
    v0, v1, v2 = (int(x) for x in mesh.triangles[tri_id])
    mid = (mesh.vertices[v0] + mesh.vertices[v1]) / 2.0
    verts = np.vstack([mesh.vertices, mid])
    m = len(verts) - 1
    tris, gens, pars = [], [], []
    for t in range(mesh.num_triangles):
        if t == tri_id:
            continue
        tris.append(mesh.triangles[t])
        gens.append(mesh.generation[t])
        pars.append(t)
    g = mesh.generation[tri_id] + 1
    tris += [[v2, v0, m], [v1, v2, m]]
    gens += [g, g]
    pars += [tri_id, tri_id]
    tags = dict(mesh._boundary_tag_map)
    old = _edge_key(v0, v1)
    if old in tags:
        part = tags.pop(old)
        tags[_edge_key(v0, m)] = part
        tags[_edge_key(m, v1)] = part
    return Triangulation(verts, np.array(tris), np.array(gens), np.array(pars),
                         boundary_tags=tags, root=mesh.family_root())


def refine(mesh: Triangulation, marked) -> Triangulation:
    """Smallest conforming NVB refinement bisecting every marked triangle.

    Closure: whenever any edge of a triangle is marked for bisection, its
    refinement edge is marked too; this propagates until stable.  Newly
    created edges are never marked, so each triangle splits at most twice.
    """
    marked = sorted(set(int(t) for t in marked))
    for t in marked:
        if not 0 <= t < mesh.num_triangles:
            raise MeshError(f"invalid triangle id {t}")
    if not marked:
        return mesh

    tri = mesh.triangles
    marked_edges = set()
    stack = list(marked)
    while stack:
        t = stack.pop()
        e = mesh.tri_edges[t, 2]  # refinement edge is opposite vertex 2
        if e in marked_edges:
            continue
        marked_edges.add(e)
        for owner in mesh.edge_tris[e]:
            if owner != -1:
                stack.append(int(owner))

    # midpoints, in deterministic (edge id) order
    new_verts = [mesh.vertices]
    midpoint = {}
    nv = mesh.num_vertices
    for e in sorted(marked_edges):
        a, b = mesh.edges[e]
        new_verts.append((mesh.vertices[a] + mesh.vertices[b]) / 2.0)
        midpoint[_edge_key(int(a), int(b))] = nv
        nv += 1
    verts = np.vstack([new_verts[0]] + [v[None, :] for v in new_verts[1:]])

    tags = dict(mesh._boundary_tag_map)
    for key, m in midpoint.items():
        if key in tags:
            part = tags.pop(key)
            tags[_edge_key(key[0], m)] = part
            tags[_edge_key(m, key[1])] = part

    tris, gens, pars = [], [], []

    def emit(v0, v1, v2, gen, ancestor):
        key = _edge_key(v0, v1)
        m = midpoint.get(key)
        if m is None:
            tris.append((v0, v1, v2))
            gens.append(gen)
            pars.append(ancestor)
        else:
            emit(v2, v0, m, gen + 1, ancestor)
            emit(v1, v2, m, gen + 1, ancestor)

    for t in range(mesh.num_triangles):
        v0, v1, v2 = (int(x) for x in tri[t])
        emit(v0, v1, v2, int(mesh.generation[t]), t)

    return Triangulation(verts, np.array(tris), np.array(gens), np.array(pars),
                         boundary_tags=tags, root=mesh.family_root())


def uniform_refine(mesh: Triangulation) -> Triangulation:
    return refine(mesh, range(mesh.num_triangles))


def derive_boundary_matched_mesh(mesh: Triangulation,
                                 part: BoundaryPart) -> Triangulation:
    """Coarsest NVB family member whose `part` facets coincide with `mesh`'s.

    Starting from the family root, repeatedly mark every triangle owning a
    `part` edge that is not a facet of `mesh`, and refine, until fixpoint.
    The iteration never overshoots `mesh` since each closure is minimal.
    """
    target = mesh.facet_keys(part)
    current = mesh.family_root()
    max_rounds = 4 * (int(mesh.generation.max(initial=0)) + 2)
    for _ in range(max_rounds):
        to_mark = []
        for e in current.part_edges(part):
            a, b = current.edges[e]
            pa, pb = tuple(current.vertices[a]), tuple(current.vertices[b])
            key = (pa, pb) if pa <= pb else (pb, pa)
            if key not in target:
                t, _l = current.edge_owner(e)
                to_mark.append(t)
        if not to_mark:
            return current
        current = refine(current, to_mark)
    raise MeshError("boundary matching did not reach a fixpoint; "
                    "is the mesh an NVB descendant of the family root?")


def write_mesh(mesh: Triangulation, path):
    """Plain-text dump: header 'V E T', vertex lines 'x y', boundary-edge
    lines 'v0 v1 tag', triangle lines 'v0 v1 v2 gen'; insertion order."""
    bdry = mesh.boundary_edges()
    lines = [f"{mesh.num_vertices} {len(bdry)} {mesh.num_triangles}"]
    for x, y in mesh.vertices:
        lines.append(f"{x!r} {y!r}")
    names = {int(DIRICHLET): "D", int(NEUMANN): "N"}
    for e in bdry:
        a, b = mesh.edges[e]
        lines.append(f"{a} {b} {names.get(int(mesh.boundary_tag[e]), '?')}")
    for t in range(mesh.num_triangles):
        v = mesh.triangles[t]
        lines.append(f"{v[0]} {v[1]} {v[2]} {mesh.generation[t]}")
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")
