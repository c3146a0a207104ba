import numpy as np
import pytest

from lsfem.elements import (REF_VERTS, ElementMap, lagrange_basis, map_scalar,
                            map_vector_piola, rt_basis, shifted_legendre,
                            _edge_endpoints, _edge_normal)
from lsfem.quadrature import edge_quadrature, triangle_quadrature


def random_interior_points(n, rng):
    b = rng.dirichlet(np.ones(3), size=n)
    return b[:, 1:3] * 0.9 + 0.03  # keep away from edges for FD stencils


# -- Lagrange ------------------------------------------------------------------


def test_lagrange_p1_nodal_identity():
    basis = lagrange_basis(1)
    vals = basis.eval(REF_VERTS)
    assert np.allclose(vals, np.eye(3), atol=1e-13)


def test_lagrange_p2_partition_of_unity():
    basis = lagrange_basis(2)
    centroid = np.array([[1.0 / 3.0, 1.0 / 3.0]])
    assert basis.eval(centroid).sum() == pytest.approx(1.0, abs=1e-13)


@pytest.mark.parametrize("degree", [1, 2, 3, 4])
def test_lagrange_nodal_duality(degree):
    basis = lagrange_basis(degree)
    vals = basis.eval(basis.nodes)
    assert np.allclose(vals, np.eye(basis.ndof), atol=1e-12)


def test_lagrange_p3_gradients_match_finite_differences():
    basis = lagrange_basis(3)
    rng = np.random.default_rng(0)
    pts = random_interior_points(5, rng)
    grads = basis.eval_grad(pts)
    h = 1e-6
    for d, e in enumerate(np.eye(2)):
        fd = (basis.eval(pts + h * e) - basis.eval(pts - h * e)) / (2 * h)
        assert np.allclose(grads[:, :, d], fd, atol=1e-7)


@pytest.mark.parametrize("degree", [1, 2, 3, 4])
def test_lagrange_interpolates_polynomials(degree):
    # nodal interpolation of a degree-`degree` polynomial is exact
    basis = lagrange_basis(degree)
    rng = np.random.default_rng(degree)
    coef = rng.standard_normal((degree + 1, degree + 1))

    def poly(p):
        return sum(coef[a, b] * p[:, 0] ** a * p[:, 1] ** b
                   for a in range(degree + 1) for b in range(degree + 1 - a))

    nodal = poly(basis.nodes)
    pts = rng.random((40, 2)) * 0.5
    assert np.allclose(basis.eval(pts) @ nodal, poly(pts), atol=1e-12)


# -- Raviart-Thomas --------------------------------------------------------------


def edge_moment(vecfun, l, j, degree_hint=12):
    a, b = _edge_endpoints(l)
    n = _edge_normal(l)
    rule = edge_quadrature(degree_hint)
    pts = a[None, :] + rule.points[:, None] * (b - a)[None, :]
    length = np.linalg.norm(b - a)
    vals = vecfun(pts)
    return np.sum(rule.weights * shifted_legendre(j, rule.points)
                  * (vals @ n)) * length


def test_rt0_dimension_and_duality():
    basis = rt_basis(0)
    assert basis.ndof == 3
    for i in range(3):
        for l in range(3):
            m = edge_moment(lambda p, i=i: basis.eval_vec(p)[:, i, :], l, 0)
            assert m == pytest.approx(1.0 if i == l else 0.0, abs=1e-12)


@pytest.mark.parametrize("degree, dim", [(0, 3), (1, 8), (2, 15), (3, 24)])
def test_rt_dimension(degree, dim):
    # dim RT_q = (q+1)(q+3); verified against the rank of the DOF matrix
    basis = rt_basis(degree)
    assert basis.ndof == dim
    rng = np.random.default_rng(1)
    pts = rng.random((200, 2)) * 0.4 + 0.05
    V = basis.eval_vec(pts).transpose(1, 0, 2).reshape(dim, -1)
    assert np.linalg.matrix_rank(V) == dim


def test_rt0_divergence_constant():
    basis = rt_basis(0)
    rng = np.random.default_rng(2)
    pts = rng.random((20, 2)) * 0.4
    divs = basis.eval_div(pts)
    assert np.allclose(divs, divs[0], atol=1e-12)


@pytest.mark.parametrize("degree", [0, 1, 2, 3])
def test_rt_divergence_matches_finite_differences(degree):
    basis = rt_basis(degree)
    rng = np.random.default_rng(3)
    pts = random_interior_points(5, rng)
    divs = basis.eval_div(pts)
    h = 1e-6
    fd = ((basis.eval_vec(pts + h * np.array([1, 0]))[:, :, 0]
           - basis.eval_vec(pts - h * np.array([1, 0]))[:, :, 0])
          + (basis.eval_vec(pts + h * np.array([0, 1]))[:, :, 1]
             - basis.eval_vec(pts - h * np.array([0, 1]))[:, :, 1])) / (2 * h)
    assert np.allclose(divs, fd, atol=1e-6)


def test_rt_edge_moment_duality_high_order():
    basis = rt_basis(2)
    idx = {tag: i for i, tag in enumerate(basis.entity_dofs)}
    for l in range(3):
        for j in range(3):
            i = idx[("edge", l, j)]
            for l2 in range(3):
                for j2 in range(3):
                    m = edge_moment(lambda p, i=i: basis.eval_vec(p)[:, i, :], l2, j2)
                    expected = 1.0 if (l2, j2) == (l, j) else 0.0
                    assert m == pytest.approx(expected, abs=1e-11)


# -- Piola maps -------------------------------------------------------------------


def test_identity_map_preserves_values():
    emap = ElementMap.from_vertices(REF_VERTS)
    basis = rt_basis(1)
    pts = np.array([[0.2, 0.3], [0.1, 0.5]])
    vals = basis.eval_vec(pts)
    divs = basis.eval_div(pts)
    mv, md = map_vector_piola(emap, vals, divs)
    assert np.allclose(mv, vals, atol=1e-14)
    assert np.allclose(md, divs, atol=1e-14)
    lb = lagrange_basis(2)
    sv, sg = map_scalar(emap, lb.eval(pts), lb.eval_grad(pts))
    assert np.allclose(sv, lb.eval(pts), atol=1e-14)
    assert np.allclose(sg, lb.eval_grad(pts), atol=1e-14)


def test_piola_preserves_edge_normal_moments():
    # int_e v.n m ds is invariant under the contravariant map (det > 0)
    rng = np.random.default_rng(4)
    basis = rt_basis(1)
    rule = edge_quadrature(10)
    def cross_z(u, v):
        return u[0] * v[1] - u[1] * v[0]

    for _trial in range(5):
        verts = rng.standard_normal((3, 2)) * 2.0
        if cross_z(verts[1] - verts[0], verts[2] - verts[0]) < 0:
            verts = verts[[0, 2, 1]]
        if abs(cross_z(verts[1] - verts[0], verts[2] - verts[0])) < 0.3:
            continue
        emap = ElementMap.from_vertices(verts)
        for l in range(3):
            aref, bref = _edge_endpoints(l)
            a, b = emap.apply(aref[None])[0], emap.apply(bref[None])[0]
            tang = (b - a) / np.linalg.norm(b - a)
            n_phys = np.array([tang[1], -tang[0]])
            pts_ref = aref[None, :] + rule.points[:, None] * (bref - aref)[None, :]
            vals_ref = basis.eval_vec(pts_ref)
            vals_phys = map_vector_piola(emap, vals_ref)
            length = np.linalg.norm(b - a)
            for i in range(basis.ndof):
                for j in range(2):
                    leg = shifted_legendre(j, rule.points)
                    phys_m = np.sum(rule.weights * leg * (vals_phys[:, i, :] @ n_phys)) * length
                    ref_m = edge_moment(lambda p, i=i: basis.eval_vec(p)[:, i, :], l, j)
                    assert phys_m == pytest.approx(ref_m, abs=1e-10 * max(1, abs(ref_m)))


def test_piola_divergence_scaling():
    rng = np.random.default_rng(5)
    verts = np.array([[0.0, 0.0], [2.0, 0.1], [0.3, 1.7]])
    emap = ElementMap.from_vertices(verts)
    basis = rt_basis(0)
    pts = rng.random((7, 2)) * 0.4
    _vals, divs = map_vector_piola(emap, basis.eval_vec(pts), basis.eval_div(pts))
    assert np.allclose(divs, basis.eval_div(pts) / emap.det, atol=1e-13)


def test_degenerate_element_rejected():
    verts = np.array([[0.0, 0.0], [1.0, 0.0], [2.0, 0.0]])
    with pytest.raises(ValueError):
        ElementMap.from_vertices(verts)


# -- symbolic oracle for RT_0 on the reference element ----------------------------


def test_rt0_stiffness_against_symbolic_oracle():
    sympy = pytest.importorskip("sympy")
    x, y = sympy.symbols("x y")
    basis = rt_basis(0)
    # recover each basis function symbolically: RT_0 span is (a + c x, b + c y)
    pts = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0], [0.25, 0.25]])
    vals = basis.eval_vec(pts)
    sym_basis = []
    for i in range(3):
        A = np.array([
            [1, 0, pts[0, 0], ],
            [0, 1, pts[0, 1], ],
            [1, 0, pts[1, 0], ],
        ])
        bvec = np.array([vals[0, i, 0], vals[0, i, 1], vals[1, i, 0]])
        a, b, c = np.linalg.solve(A, bvec)
        f = (a + c * x, b + c * y)
        # consistency at a fourth point
        assert float(f[0].subs({x: 0.25, y: 0.25})) == pytest.approx(vals[3, i, 0], abs=1e-12)
        assert float(f[1].subs({x: 0.25, y: 0.25})) == pytest.approx(vals[3, i, 1], abs=1e-12)
        sym_basis.append(f)
    # H(div) element matrix, exactly integrated
    gram_exact = np.zeros((3, 3))
    for i in range(3):
        for j in range(3):
            fi, fj = sym_basis[i], sym_basis[j]
            div_i = sympy.diff(fi[0], x) + sympy.diff(fi[1], y)
            div_j = sympy.diff(fj[0], x) + sympy.diff(fj[1], y)
            expr = fi[0] * fj[0] + fi[1] * fj[1] + div_i * div_j
            val = sympy.integrate(sympy.integrate(expr, (y, 0, 1 - x)), (x, 0, 1))
            gram_exact[i, j] = float(val)
    rule = triangle_quadrature(4)
    v = basis.eval_vec(rule.points)
    d = basis.eval_div(rule.points)
    gram_num = (np.einsum("q,qia,qja->ij", rule.weights, v, v)
                + np.einsum("q,qi,qj->ij", rule.weights, d, d))
    assert np.allclose(gram_num, gram_exact, atol=1e-12)
