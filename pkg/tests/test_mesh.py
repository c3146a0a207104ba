import numpy as np
import pytest

from lsfem.mesh import (DIRICHLET, NEUMANN, MeshError, Triangulation, bisect,
                        derive_boundary_matched_mesh, initial_mesh_rect,
                        refine, uniform_refine, write_mesh)


@pytest.fixture
def t0():
    return initial_mesh_rect()


# -- initial mesh ----------------------------------------------------------------


def test_initial_counts(t0):
    assert t0.num_triangles == 8
    assert t0.num_vertices == 8
    assert len(t0.boundary_edges()) == 6
    assert len(t0.part_edges(NEUMANN)) == 1
    assert len(t0.part_edges(DIRICHLET)) == 5


def test_initial_euler(t0):
    # V - E + F = 2 with the outer face included
    assert t0.num_vertices - t0.num_edges + (t0.num_triangles + 1) == 2
    assert t0.num_edges == 15


def test_initial_conforming(t0):
    assert np.all(t0.areas() > 0)
    assert t0.areas().sum() == pytest.approx(2.0, abs=1e-14)
    t0.check_conforming()


def test_initial_newest_vertices(t0):
    # the newest vertex of every triangle is one of the square centers
    centers = {6, 7}
    assert set(int(t[2]) for t in t0.triangles) <= centers


def test_neumann_edge_is_bottom_left(t0):
    (e,) = t0.part_edges(NEUMANN)
    pts = t0.vertices[t0.edges[e]]
    assert np.allclose(sorted(pts[:, 0]), [-1.0, 0.0])
    assert np.allclose(pts[:, 1], 0.0)


# -- bisection -------------------------------------------------------------------


def test_bisect_adds_one_triangle(t0):
    m = bisect(t0, 0)
    assert m.num_triangles == 9
    assert m.num_vertices == 9


def test_bisect_child_generations(t0):
    m = bisect(t0, 3)
    children = np.flatnonzero(m.parent == 3)
    assert len(children) == 2
    assert np.all(m.generation[children] == t0.generation[3] + 1)


def test_bisect_invalid_id(t0):
    with pytest.raises(MeshError):
        bisect(t0, 99)


def _shape_class(pts):
    """Similarity invariant: sorted squared side lengths, normalized."""
    d = [np.sum((pts[i] - pts[(i + 1) % 3]) ** 2) for i in range(3)]
    d = sorted(d)
    return tuple(np.round(np.array(d) / d[0], 9))


def test_bisection_similarity_classes(t0):
    # brute-force all shapes to depth 10 starting from one initial triangle
    classes = set()
    frontier = [t0.vertices[t0.triangles[0]]]
    classes.add(_shape_class(frontier[0]))
    for _depth in range(10):
        nxt = []
        for pts in frontier:
            v0, v1, v2 = pts
            m = (v0 + v1) / 2.0
            for child in (np.array([v2, v0, m]), np.array([v1, v2, m])):
                cls = _shape_class(child)
                if cls not in classes or _depth < 2:
                    nxt.append(child)
                classes.add(cls)
        frontier = nxt
    assert len(classes) <= 4  # right isosceles initial mesh: actually 1
    assert len(classes) == 1


# -- conforming refinement -------------------------------------------------------


def test_refine_empty_is_identity(t0):
    assert refine(t0, []) is t0


def test_refine_all_doubles(t0):
    m = refine(t0, range(8))
    assert m.num_triangles == 16
    m.check_conforming()


def test_uniform_refine_counts(t0):
    m1 = uniform_refine(t0)
    m2 = uniform_refine(m1)
    assert m1.num_triangles == 16
    assert m2.num_triangles == 32
    m1.check_conforming()
    m2.check_conforming()


def _tri_pts(mesh, t):
    return tuple(tuple(p) for p in mesh.vertices[mesh.triangles[t]])


def _oracle_minimal_closure(mesh, marked_tri):
    """Brute-force the smallest conforming mesh bisecting one triangle.

    States are frozensets of triangle point-tuples (newest vertex last);
    transitions bisect any single triangle.  BFS by bisection count, so the
    first conforming hit with the target bisected is minimal.
    """
    def children(tri):
        v0, v1, v2 = (np.array(p) for p in tri)
        m = tuple((v0 + v1) / 2.0)
        return ((tuple(v2), tuple(v0), m), (tuple(v1), tuple(v2), m))

    def is_conforming(state):
        verts = set()
        for tri in state:
            verts.update(tri)
        for tri in state:
            for i in range(3):
                a, b = np.array(tri[i]), np.array(tri[(i + 1) % 3])
                if tuple((a + b) / 2.0) in verts:
                    return False
        return True

    start = frozenset(_tri_pts(mesh, t) for t in range(mesh.num_triangles))
    target = _tri_pts(mesh, marked_tri)
    layer = {start}
    for _depth in range(8):
        nxt = set()
        for state in layer:
            for tri in state:
                new = frozenset((state - {tri}) | set(children(tri)))
                nxt.add(new)
        hits = [s for s in nxt if target not in s and is_conforming(s)]
        if hits:
            return min(len(s) for s in hits), hits
        layer = nxt
    raise AssertionError("oracle search failed")


@pytest.mark.parametrize("marked", [0, 1, 5])
def test_refine_single_minimal(t0, marked):
    out = refine(t0, [marked])
    out.check_conforming()
    children = np.flatnonzero(out.parent == marked)
    assert len(children) >= 2
    min_size, hits = _oracle_minimal_closure(t0, marked)
    assert out.num_triangles == min_size
    assert frozenset(_tri_pts(out, t) for t in range(out.num_triangles)) in hits


def test_area_preserved_along_random_refinements(t0):
    rng = np.random.default_rng(7)
    m = t0
    for _ in range(6):
        marked = rng.choice(m.num_triangles, size=max(1, m.num_triangles // 5),
                            replace=False)
        m = refine(m, marked)
        m.check_conforming()
        assert m.areas().sum() == pytest.approx(2.0, abs=1e-12)


def test_min_angle_never_degrades(t0):
    # the family's worst angle, measured once on a deep uniform refinement
    deep = t0
    for _ in range(4):
        deep = uniform_refine(deep)
    family_min = deep.min_angle()
    rng = np.random.default_rng(3)
    m = t0
    for _ in range(7):
        marked = rng.choice(m.num_triangles, size=max(1, m.num_triangles // 6),
                            replace=False)
        m = refine(m, marked)
    assert m.min_angle() >= family_min - 1e-10
    assert family_min == pytest.approx(45.0, abs=1e-9)


def test_boundary_tags_inherited(t0):
    m = uniform_refine(uniform_refine(t0))
    m.check_conforming()
    neu = m.part_edges(NEUMANN)
    for e in neu:
        pts = m.vertices[m.edges[e]]
        assert np.all(pts[:, 1] == 0.0) and np.all(pts[:, 0] <= 0.0)
    # Neumann length preserved
    lengths = [np.linalg.norm(np.diff(m.vertices[m.edges[e]], axis=0)) for e in neu]
    assert np.sum(lengths) == pytest.approx(1.0, abs=1e-14)


# -- boundary-matched coarse meshes ----------------------------------------------


def test_matched_mesh_of_root_is_root(t0):
    assert derive_boundary_matched_mesh(t0, DIRICHLET) is t0


def test_matched_mesh_after_uniform(t0):
    m = uniform_refine(uniform_refine(t0))
    td = derive_boundary_matched_mesh(m, DIRICHLET)
    assert td.facet_keys(DIRICHLET) == m.facet_keys(DIRICHLET)
    assert td.num_triangles <= m.num_triangles
    td.check_conforming()


def test_matched_mesh_idempotent(t0):
    m = uniform_refine(uniform_refine(uniform_refine(t0)))
    td = derive_boundary_matched_mesh(m, DIRICHLET)
    td2 = derive_boundary_matched_mesh(td, DIRICHLET)
    assert np.array_equal(td.vertices, td2.vertices)
    assert np.array_equal(td.triangles, td2.triangles)


def test_matched_mesh_cardinality_bound(t0):
    # #T_D - #T_0 stays proportional to the number of Dirichlet facets
    # across a refinement sequence clustered at the origin
    rng = np.random.default_rng(11)
    m = t0
    ratios = []
    for _level in range(6):
        # refine triangles nearest the origin plus a random sprinkle
        centroids = m.vertices[m.triangles].mean(axis=1)
        dist = np.linalg.norm(centroids, axis=1)
        marked = set(np.argsort(dist)[:max(2, m.num_triangles // 8)].tolist())
        marked.update(rng.choice(m.num_triangles, size=2, replace=False).tolist())
        m = refine(m, marked)
        td = derive_boundary_matched_mesh(m, DIRICHLET)
        assert td.facet_keys(DIRICHLET) == m.facet_keys(DIRICHLET)
        nfacets = len(m.part_edges(DIRICHLET))
        ratios.append((td.num_triangles - t0.num_triangles) / nfacets)
    assert max(ratios) < 8.0


def test_write_mesh_roundtrip_format(tmp_path, t0):
    path = tmp_path / "mesh.txt"
    write_mesh(t0, path)
    lines = path.read_text().strip().splitlines()
    header = lines[0].split()
    assert [int(x) for x in header] == [8, 6, 8]
    assert len(lines) == 1 + 8 + 6 + 8
    # deterministic output
    write_mesh(t0, tmp_path / "mesh2.txt")
    assert (tmp_path / "mesh2.txt").read_text() == path.read_text()


def test_orientation_enforced():
    verts = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])
    with pytest.raises(MeshError):
        Triangulation(verts, np.array([[0, 2, 1]]),
                      boundary_tags={(0, 1): DIRICHLET, (1, 2): DIRICHLET,
                                     (0, 2): DIRICHLET})
