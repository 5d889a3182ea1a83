"""Quadrature rules on reference and physical cells.

Contains:
    QuadratureRule     -- points/weights with stated exactness degree
    triangle_rule      -- rule on the reference triangle (0,0)-(1,0)-(0,1)
    segment_rule       -- Gauss-Legendre rule on [0, 1]
    physical_cell_rule -- mapped rule on an affine triangle
    physical_facet_rule-- mapped rule on a straight facet

Triangle rules come from a Duffy-collapsed Gauss-Legendre tensor grid,
which is exact for any requested polynomial degree.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np


@dataclass(frozen=True)
class QuadratureRule:
    points: np.ndarray  # (nq, dim)
    weights: np.ndarray  # (nq,)
    degree: int  # exact for polynomials up to this degree


@lru_cache(maxsize=None)
def segment_rule(degree: int) -> QuadratureRule:
    """Gauss-Legendre rule on [0,1], exact to the given degree."""
    n = max(1, (degree + 2) // 2)
    xs, ws = np.polynomial.legendre.leggauss(n)
    pts = 0.5 * (xs + 1.0)
    return QuadratureRule(pts.reshape(-1, 1), 0.5 * ws, 2 * n - 1)


@lru_cache(maxsize=None)
def triangle_rule(degree: int) -> QuadratureRule:
    """Rule on the unit reference triangle, exact to the given degree.

    Collapse of a GL x GL grid on the unit square: x = s(1-t), y = t,
    with Jacobian (1-t).  A monomial x^a y^b pulls back to degree a in s
    and a+b+1 in t, so n points per direction cover degree 2n-2.
    """
    n = max(1, (degree + 2 + 1) // 2)  # 2n-1 >= degree+1
    xs, ws = np.polynomial.legendre.leggauss(n)
    s = 0.5 * (xs + 1.0)
    w = 0.5 * ws
    S, T = np.meshgrid(s, s, indexing="ij")
    WS, WT = np.meshgrid(w, w, indexing="ij")
    X = (S * (1.0 - T)).ravel()
    Y = T.ravel()
    W = (WS * WT * (1.0 - T)).ravel()
    return QuadratureRule(np.column_stack([X, Y]), W, degree)


def physical_cell_rule(verts: np.ndarray, degree: int):
    """Return (points, weights) on the affine triangle with rows `verts`."""
    rule = triangle_rule(degree)
    v0, v1, v2 = verts
    J = np.column_stack([v1 - v0, v2 - v0])
    detJ = abs(np.linalg.det(J))
    pts = rule.points @ J.T + v0
    return pts, rule.weights * detJ


def physical_facet_rule(a: np.ndarray, b: np.ndarray, degree: int):
    """Return (points, weights) on the segment from a to b."""
    rule = segment_rule(degree)
    t = rule.points[:, 0]
    pts = a + np.outer(t, b - a)
    length = float(np.hypot(*(np.asarray(b) - np.asarray(a))))
    return pts, rule.weights * length
