import math

import numpy as np
import pytest

from lsfem.quadrature import (edge_quadrature, graded_edge_quadrature,
                              graded_triangle_quadrature, triangle_quadrature)


def exact_triangle_monomial(a, b):
    # int_T x^a y^b over the reference triangle = a! b! / (a+b+2)!
    return math.factorial(a) * math.factorial(b) / math.factorial(a + b + 2)


def test_triangle_constant():
    rule = triangle_quadrature(0)
    assert rule.weights.sum() == pytest.approx(0.5, abs=1e-15)


def test_triangle_linear():
    rule = triangle_quadrature(1)
    val = np.sum(rule.weights * rule.points[:, 0])
    assert val == pytest.approx(1.0 / 6.0, abs=1e-15)


@pytest.mark.parametrize("degree", range(0, 13))
def test_triangle_exactness(degree):
    rule = triangle_quadrature(degree)
    for a in range(degree + 1):
        for b in range(degree + 1 - a):
            val = np.sum(rule.weights * rule.points[:, 0] ** a * rule.points[:, 1] ** b)
            assert val == pytest.approx(exact_triangle_monomial(a, b), rel=1e-12)


@pytest.mark.parametrize("degree", range(0, 13))
def test_triangle_weight_sum(degree):
    rule = triangle_quadrature(degree)
    assert rule.weights.sum() == pytest.approx(0.5, rel=1e-14)
    assert np.all(rule.weights > 0)


def test_edge_cubic():
    rule = edge_quadrature(3)
    assert np.sum(rule.weights * rule.points ** 3) == pytest.approx(0.25, abs=1e-15)


@pytest.mark.parametrize("degree", range(0, 14))
def test_edge_exactness(degree):
    rule = edge_quadrature(degree)
    for p in range(degree + 1):
        val = np.sum(rule.weights * rule.points ** p)
        assert val == pytest.approx(1.0 / (p + 1), rel=1e-13)


def test_graded_sqrt():
    rule = graded_edge_quadrature(0, levels=30, base_rule=edge_quadrature(7))
    val = np.sum(rule.weights * np.sqrt(rule.points))
    assert val == pytest.approx(2.0 / 3.0, abs=1e-10)


def test_graded_polynomial_exact():
    for levels in (1, 3, 17):
        rule = graded_edge_quadrature(0, levels=levels, base_rule=edge_quadrature(3))
        assert np.sum(rule.weights * rule.points) == pytest.approx(0.5, abs=1e-14)


def test_graded_monotone_error():
    errs = []
    for levels in range(5, 31, 5):
        rule = graded_edge_quadrature(0, levels=levels, base_rule=edge_quadrature(7))
        val = np.sum(rule.weights * np.sqrt(rule.points))
        errs.append(abs(val - 2.0 / 3.0))
    assert all(e2 < e1 for e1, e2 in zip(errs, errs[1:]))


def test_graded_endpoint_one():
    rule = graded_edge_quadrature(1, levels=25, base_rule=edge_quadrature(7))
    val = np.sum(rule.weights * np.sqrt(1.0 - rule.points))
    assert val == pytest.approx(2.0 / 3.0, abs=1e-10)


def test_graded_triangle_weight_sum():
    rule = graded_triangle_quadrature(0, levels=4, base_rule=triangle_quadrature(7))
    assert rule.weights.sum() == pytest.approx(0.5, rel=1e-13)


def test_graded_triangle_singular_integrand():
    # int_T r^{-1/2} dx over the reference triangle, singular at vertex 0;
    # in polar coordinates this reduces to (2/3) int_0^{pi/2} (cos+sin)^{-3/2}
    from scipy.integrate import quad

    ref, aerr = quad(lambda t: (np.cos(t) + np.sin(t)) ** -1.5, 0, np.pi / 2,
                     epsabs=1e-14, epsrel=1e-14)
    ref *= 2.0 / 3.0
    assert aerr < 1e-12

    def value(levels, degree):
        rule = graded_triangle_quadrature(0, levels=levels,
                                          base_rule=triangle_quadrature(degree))
        r = np.linalg.norm(rule.points, axis=1)
        return np.sum(rule.weights / np.sqrt(r))

    # accuracy is limited by the base rule (annuli are self-similar) once
    # enough levels control the truncation near the vertex
    assert value(25, 7) == pytest.approx(ref, rel=2e-5)
    assert value(40, 16) == pytest.approx(ref, rel=1e-8)
    # too few levels leave a visible truncation error
    assert abs(value(2, 16) - ref) > abs(value(40, 16) - ref) * 1e3


def test_graded_triangle_polynomial_exact():
    rule = graded_triangle_quadrature(2, levels=3, base_rule=triangle_quadrature(5))
    for a, b in [(1, 0), (2, 1), (0, 3)]:
        val = np.sum(rule.weights * rule.points[:, 0] ** a * rule.points[:, 1] ** b)
        assert val == pytest.approx(exact_triangle_monomial(a, b), rel=1e-12)
