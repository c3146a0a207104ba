"""Quadrature rules on the reference triangle and the unit interval.

Triangle rules are conical-product (Gauss-Jacobi collapsed) rules on the
reference triangle T = {x >= 0, y >= 0, x + y <= 1}; they are exact for any
requested polynomial degree and have positive weights.  Edge rules are
Gauss-Legendre on [0, 1].  Graded composite rules resolve endpoint/corner
singularities of the r^alpha type by geometric subdivision.
"""

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.special import roots_jacobi


@dataclass(frozen=True)
class QuadratureRule:
    """Points and weights; points are (n, 2) on the triangle, (n,) on [0, 1]."""

    points: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        self.points.setflags(write=False)
        self.weights.setflags(write=False)

    @property
    def npoints(self):
        return len(self.weights)


@lru_cache(maxsize=None)
def edge_quadrature(degree: int) -> QuadratureRule:
    """Gauss-Legendre rule on [0, 1], exact for polynomials up to `degree`.

    Uses degree+1 points, roughly double the minimal count: edge rules also
    act as base rules of graded composites over non-polynomial data, where
    the extra points buy the accuracy the composites are specified to reach.
    """
    if degree < 0:
        raise ValueError(f"degree must be nonnegative, got {degree}")
    n = max(1, degree + 1)
    x, w = np.polynomial.legendre.leggauss(n)
    return QuadratureRule(points=(x + 1.0) / 2.0, weights=w / 2.0)


@lru_cache(maxsize=None)
def triangle_quadrature(degree: int) -> QuadratureRule:
    """Conical-product rule on the reference triangle, exact up to `degree`.

    Built from Gauss-Legendre in the collapsed coordinate and Gauss-Jacobi
    (weight 1 - b) in the radial coordinate, so the weights sum to 1/2.
    """
    if degree < 0:
        raise ValueError(f"degree must be nonnegative, got {degree}")
    n = max(1, (degree + 2) // 2)
    a, wa = np.polynomial.legendre.leggauss(n)
    a = (a + 1.0) / 2.0
    wa = wa / 2.0
    b, wb = roots_jacobi(n, 1.0, 0.0)
    b = (b + 1.0) / 2.0
    wb = wb / 4.0  # absorbs the (1 - b) Jacobian factor and the [0,1] map
    A, B = np.meshgrid(a, b, indexing="ij")
    pts = np.column_stack([(A * (1.0 - B)).ravel(), B.ravel()])
    w = np.outer(wa, wb).ravel()
    return QuadratureRule(points=pts, weights=w)


def graded_edge_quadrature(singular_endpoint: int, levels: int,
                           base_rule: QuadratureRule) -> QuadratureRule:
    """Composite rule on [0, 1], geometrically graded toward one endpoint.

    The interval is split into `levels` subintervals whose lengths halve
    toward `singular_endpoint` (0 or 1); `base_rule` is applied on each.
    """
    if singular_endpoint not in (0, 1):
        raise ValueError("singular_endpoint must be 0 or 1")
    if levels < 1:
        raise ValueError("levels must be >= 1")
    # breakpoints 0, 2^-(L-1), 2^-(L-2), ..., 1/2, 1 (toward endpoint 0)
    breaks = np.concatenate([[0.0], 0.5 ** np.arange(levels - 1, -1, -1.0)])
    pts, wts = [], []
    for lo, hi in zip(breaks[:-1], breaks[1:]):
        pts.append(lo + (hi - lo) * base_rule.points)
        wts.append((hi - lo) * base_rule.weights)
    p = np.concatenate(pts)
    w = np.concatenate(wts)
    if singular_endpoint == 1:
        p = 1.0 - p
    return QuadratureRule(points=p, weights=w)


def graded_triangle_quadrature(singular_vertex: int, levels: int,
                               base_rule: QuadratureRule) -> QuadratureRule:
    """Composite rule on the reference triangle, graded toward one vertex.

    The triangle is split into `levels` geometric annuli shrinking by 1/2
    toward the vertex (local index 0, 1 or 2) plus an innermost similar
    triangle; each annulus is covered by two affine images of `base_rule`.
    """
    if singular_vertex not in (0, 1, 2):
        raise ValueError("singular_vertex must be 0, 1 or 2")
    if levels < 1:
        raise ValueError("levels must be >= 1")
    verts = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])
    vs = verts[singular_vertex]
    a = verts[(singular_vertex + 1) % 3]
    b = verts[(singular_vertex + 2) % 3]

    pts, wts = [], []

    def add_subtriangle(p0, p1, p2):
        # map reference rule onto triangle (p0, p1, p2)
        J = np.column_stack([p1 - p0, p2 - p0])
        det = abs(np.linalg.det(J))
        pts.append(p0 + base_rule.points @ J.T)
        wts.append(base_rule.weights * det)

    for k in range(levels):
        s_out, s_in = 0.5 ** k, 0.5 ** (k + 1)
        a_out, b_out = vs + s_out * (a - vs), vs + s_out * (b - vs)
        a_in, b_in = vs + s_in * (a - vs), vs + s_in * (b - vs)
        add_subtriangle(a_in, a_out, b_out)
        add_subtriangle(a_in, b_out, b_in)
    s = 0.5 ** levels
    add_subtriangle(vs, vs + s * (a - vs), vs + s * (b - vs))
    return QuadratureRule(points=np.concatenate(pts), weights=np.concatenate(wts))
