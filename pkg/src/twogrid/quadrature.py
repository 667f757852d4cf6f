"""Quadrature on the reference triangle.

Rules are collapsed (Duffy) tensor products: Gauss-Legendre in the radial
direction and Gauss-Jacobi with weight ``(1 - s)`` in the collapsed one, so a
rule with ``k`` points per direction integrates polynomials of total degree
``2k - 1`` exactly.
"""

from functools import lru_cache

import numpy as np
from scipy.special import roots_jacobi


class TriangleRule:
    """Quadrature points in barycentric coordinates with weights summing to one.

    ``integral over T of f  ~=  area(T) * sum(weights * f(points))``
    """

    def __init__(self, degree, points, weights):
        self.degree = degree
        self.points = points
        self.weights = weights

    def __len__(self):
        return len(self.weights)

    def __repr__(self):
        return "TriangleRule(degree={}, npoints={})".format(self.degree, len(self))


@lru_cache(maxsize=None)
def triangle_rule(degree):
    if degree < 0:
        raise ValueError("quadrature degree must be nonnegative")
    k = max(1, (degree + 2) // 2)
    r, wr = np.polynomial.legendre.leggauss(k)
    r = 0.5 * (r + 1.0)
    wr = 0.5 * wr
    z, wz = roots_jacobi(k, 1.0, 0.0)
    s = 0.5 * (z + 1.0)
    wz = wz / 4.0
    R, S = np.meshgrid(r, s, indexing="ij")
    W = np.outer(wr, wz)
    xi = (R * (1.0 - S)).ravel()
    eta = S.ravel()
    w = W.ravel()
    w = w / w.sum()
    points = np.column_stack([1.0 - xi - eta, xi, eta])
    points.setflags(write=False)
    w.setflags(write=False)
    return TriangleRule(degree, points, w)
