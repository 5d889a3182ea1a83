"""Quadrature exactness against closed-form monomial integrals."""

import math

import numpy as np
import pytest

from divfree_flow.quadrature import (
    physical_cell_rule,
    physical_facet_rule,
    segment_rule,
    triangle_rule,
)


def exact_triangle_monomial(a, b):
    # int_T x^a y^b over the unit reference triangle = a! b! / (a+b+2)!
    return math.factorial(a) * math.factorial(b) / math.factorial(a + b + 2)


@pytest.mark.parametrize("degree", range(0, 12))
def test_triangle_exactness(degree):
    rule = triangle_rule(degree)
    assert abs(rule.weights.sum() - 0.5) <= 1e-14
    for a in range(degree + 1):
        for b in range(degree + 1 - a):
            val = (rule.points[:, 0] ** a * rule.points[:, 1] ** b) @ rule.weights
            assert val == pytest.approx(exact_triangle_monomial(a, b), rel=1e-13)


@pytest.mark.parametrize("degree", range(0, 12))
def test_segment_exactness(degree):
    rule = segment_rule(degree)
    for a in range(degree + 1):
        val = (rule.points[:, 0] ** a) @ rule.weights
        assert val == pytest.approx(1.0 / (a + 1), rel=1e-13)


def test_physical_cell_rule_area_scaling():
    verts = np.array([[1.0, 1.0], [3.0, 1.5], [1.5, 4.0]])
    pts, w = physical_cell_rule(verts, 4)
    e1, e2 = verts[1] - verts[0], verts[2] - verts[0]
    area = 0.5 * abs(e1[0] * e2[1] - e1[1] * e2[0])
    assert w.sum() == pytest.approx(area, rel=1e-14)
    # integral of x over the triangle = area * centroid_x
    assert (pts[:, 0] @ w) == pytest.approx(area * verts[:, 0].mean(), rel=1e-13)


def test_physical_facet_rule_length_and_moment():
    a, b = np.array([0.0, 1.0]), np.array([3.0, 5.0])
    pts, w = physical_facet_rule(a, b, 3)
    L = np.hypot(*(b - a))
    assert w.sum() == pytest.approx(L, rel=1e-14)
    # midpoint moment: int x ds = L * mid_x
    assert (pts[:, 0] @ w) == pytest.approx(L * 1.5, rel=1e-13)
