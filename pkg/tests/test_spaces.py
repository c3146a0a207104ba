import numpy as np
import pytest

from lsfem.mesh import DIRICHLET, NEUMANN, initial_mesh_rect, refine, uniform_refine
from lsfem.quadrature import edge_quadrature
from lsfem.spaces import (DiscreteField, boundary_dofs, build_space, eval_field,
                          interpolate, local_coefficients, _edge_geometry)


@pytest.fixture
def t0():
    return initial_mesh_rect()


@pytest.fixture
def t2(t0):
    return uniform_refine(uniform_refine(t0))


# -- DOF counts -------------------------------------------------------------------


def test_p1_unconstrained_count(t0):
    assert build_space(t0, "lagrange", 1).ndof == 8


def test_rt0_unconstrained_count(t0):
    # one DOF per edge; #edges = 15 by Euler's formula
    assert build_space(t0, "rt", 0).ndof == 15


def test_p1_dirichlet_constrained_count(t0):
    # closed Dirichlet part touches 6 of the 8 vertices
    space = build_space(t0, "lagrange", 1, constraint=DIRICHLET)
    assert space.ndof == 2


@pytest.mark.parametrize("q", [0, 1, 2])
def test_rt_dimension_formula(t0, q):
    for mesh in (t0, uniform_refine(t0), uniform_refine(uniform_refine(t0))):
        space = build_space(mesh, "rt", q)
        expected = (q + 1) * mesh.num_edges + q * (q + 1) * mesh.num_triangles
        assert space.ndof == expected


@pytest.mark.parametrize("k", [1, 2, 3])
def test_lagrange_dimension_formula(t0, k):
    for mesh in (t0, uniform_refine(t0)):
        space = build_space(mesh, "lagrange", k)
        expected = (mesh.num_vertices + (k - 1) * mesh.num_edges
                    + ((k - 1) * (k - 2) // 2) * mesh.num_triangles)
        assert space.ndof == expected


def test_unsupported_family(t0):
    with pytest.raises(ValueError):
        build_space(t0, "nedelec", 1)


# -- evaluation --------------------------------------------------------------------


def test_zero_field_evaluates_to_zero(t2):
    space = build_space(t2, "lagrange", 2)
    field = DiscreteField(space, np.zeros(space.ndof))
    vals, grads = eval_field(field, [0, 3], np.array([[0.3, 0.3], [0.1, 0.2]]))
    assert np.all(vals == 0) and np.all(grads == 0)


def test_p1_interpolant_reproduces_linear(t2):
    space = build_space(t2, "lagrange", 1)
    field = interpolate(space, lambda x: x[:, 0] + x[:, 1])
    pts = np.array([[0.21, 0.13], [0.4, 0.1], [1 / 3, 1 / 3]])
    from lsfem.elements import cell_geometry
    origin, J, _det, _invJT = cell_geometry(t2)
    for t in range(t2.num_triangles):
        phys = origin[t] + pts @ J[t].T
        vals, grads = eval_field(field, [t], pts)
        assert np.allclose(vals[0], phys[:, 0] + phys[:, 1], atol=1e-12)
        assert np.allclose(grads[0], [1.0, 1.0], atol=1e-12)


def test_rt0_single_edge_dof_unit_flux(t2):
    space = build_space(t2, "rt", 0)
    rule = edge_quadrature(6)
    for gid in [0, space.ndof // 2, space.ndof - 1]:
        e = space.dof_entity[gid][1]
        coeffs = np.zeros(space.ndof)
        coeffs[gid] = 1.0
        field = DiscreteField(space, coeffs)
        pa, pb, normal, length = _edge_geometry(t2, e)
        t, l = t2.edge_owner(e)
        start, end = (l + 1) % 3, (l + 2) % 3
        from lsfem.elements import REF_VERTS
        a_ref, b_ref = REF_VERTS[start], REF_VERTS[end]
        # global parameter runs from the lower to the higher vertex id
        fwd = t2.triangles[t, start] < t2.triangles[t, end]
        tpar = rule.points if fwd else 1.0 - rule.points
        ref_pts = a_ref[None, :] + tpar[:, None] * (b_ref - a_ref)[None, :]
        vals, _div = eval_field(field, [t], ref_pts)
        flux = np.sum(rule.weights * (vals[0] @ normal)) * length
        assert flux == pytest.approx(1.0, abs=1e-12)


# -- interpolation -----------------------------------------------------------------


def test_constant_into_p2_gives_unit_coeffs(t0):
    space = build_space(t0, "lagrange", 2)
    field = interpolate(space, lambda x: np.ones(len(x)))
    assert np.allclose(field.coeffs, 1.0, atol=1e-13)


def test_constant_vector_into_rt0(t0):
    space = build_space(t0, "rt", 0)
    field = interpolate(space, lambda x: np.tile([1.0, 1.0], (len(x), 1)))
    for gid, tag in enumerate(space.dof_entity):
        e = tag[1]
        _pa, _pb, normal, length = _edge_geometry(t0, e)
        expected = (normal @ [1.0, 1.0]) * length
        assert field.coeffs[gid] == pytest.approx(expected, abs=1e-12)


def test_gradient_of_x2_into_rt1(t2):
    space = build_space(t2, "rt", 1)
    field = interpolate(space, lambda x: np.column_stack([2 * x[:, 0],
                                                          np.zeros(len(x))]))
    rng = np.random.default_rng(0)
    pts = rng.dirichlet(np.ones(3), size=6)[:, 1:]
    from lsfem.elements import cell_geometry
    origin, J, _det, _invJT = cell_geometry(t2)
    tris = [0, 5, t2.num_triangles - 1]
    vals, divs = eval_field(field, tris, pts)
    for k, t in enumerate(tris):
        phys = origin[t] + pts @ J[t].T
        assert np.allclose(vals[k, :, 0], 2 * phys[:, 0], atol=1e-12)
        assert np.allclose(vals[k, :, 1], 0.0, atol=1e-12)
        assert np.allclose(divs[k], 2.0, atol=1e-12)


# -- conformity --------------------------------------------------------------------


def _edge_trace_points(mesh, e, t, rule):
    from lsfem.elements import REF_VERTS
    l = int(np.flatnonzero(mesh.tri_edges[t] == e)[0])
    start, end = (l + 1) % 3, (l + 2) % 3
    fwd = mesh.triangles[t, start] < mesh.triangles[t, end]
    tpar = rule.points if fwd else 1.0 - rule.points
    return REF_VERTS[start][None, :] + tpar[:, None] * (REF_VERTS[end] - REF_VERTS[start])[None, :]


@pytest.mark.parametrize("q", [0, 1, 2])
def test_hdiv_normal_trace_continuity(t2, q):
    space = build_space(t2, "rt", q)
    rng = np.random.default_rng(q + 10)
    field = DiscreteField(space, rng.standard_normal(space.ndof))
    rule = edge_quadrature(8)
    interior = [e for e in range(t2.num_edges) if t2.edge_tris[e, 1] != -1]
    for e in interior[::3]:
        t1, t2_ = (int(x) for x in t2.edge_tris[e])
        _pa, _pb, normal, length = _edge_geometry(t2, e)
        vals1, _ = eval_field(field, [t1], _edge_trace_points(t2, e, t1, rule))
        vals2, _ = eval_field(field, [t2_], _edge_trace_points(t2, e, t2_, rule))
        jump = np.sum(rule.weights * np.abs((vals1[0] - vals2[0]) @ normal)) * length
        assert jump < 1e-10


@pytest.mark.parametrize("k", [1, 2, 3])
def test_c0_continuity(t2, k):
    space = build_space(t2, "lagrange", k)
    rng = np.random.default_rng(k + 20)
    field = DiscreteField(space, rng.standard_normal(space.ndof))
    rule = edge_quadrature(8)
    interior = [e for e in range(t2.num_edges) if t2.edge_tris[e, 1] != -1]
    for e in interior[::3]:
        t1, t2_ = (int(x) for x in t2.edge_tris[e])
        vals1, _ = eval_field(field, [t1], _edge_trace_points(t2, e, t1, rule))
        vals2, _ = eval_field(field, [t2_], _edge_trace_points(t2, e, t2_, rule))
        assert np.allclose(vals1[0], vals2[0], atol=1e-12)


def test_constrained_trace_vanishes(t2):
    rng = np.random.default_rng(42)
    rule = edge_quadrature(8)
    # Lagrange trace on the Dirichlet part
    yc = build_space(t2, "lagrange", 2, constraint=DIRICHLET)
    field = DiscreteField(yc, rng.standard_normal(yc.ndof))
    for e in t2.part_edges(DIRICHLET):
        t, _l = t2.edge_owner(e)
        vals, _ = eval_field(field, [t], _edge_trace_points(t2, e, t, rule))
        assert np.max(np.abs(vals)) < 1e-12
    # RT normal trace on the Neumann part
    yb = build_space(t2, "rt", 1, constraint=NEUMANN)
    field = DiscreteField(yb, rng.standard_normal(yb.ndof))
    for e in t2.part_edges(NEUMANN):
        t, _l = t2.edge_owner(e)
        _pa, _pb, normal, _length = _edge_geometry(t2, e)
        vals, _ = eval_field(field, [t], _edge_trace_points(t2, e, t, rule))
        assert np.max(np.abs(vals[0] @ normal)) < 1e-12


def test_boundary_dofs_identifies_trace_dofs(t2):
    u = build_space(t2, "lagrange", 2)
    dofs = boundary_dofs(u, DIRICHLET)
    assert len(dofs) > 0
    # a field supported on those DOFs has nonzero Dirichlet trace
    coeffs = np.zeros(u.ndof)
    coeffs[dofs] = 1.0
    field = DiscreteField(u, coeffs)
    rule = edge_quadrature(4)
    total = 0.0
    for e in t2.part_edges(DIRICHLET):
        t, _l = t2.edge_owner(e)
        vals, _ = eval_field(field, [t], _edge_trace_points(t2, e, t, rule))
        total += np.sum(np.abs(vals))
    assert total > 1.0


def test_local_coefficients_signs(t0):
    space = build_space(t0, "rt", 1)
    rng = np.random.default_rng(5)
    field = DiscreteField(space, rng.standard_normal(space.ndof))
    loc = local_coefficients(field)
    assert loc.shape == (t0.num_triangles, space.basis.ndof)
