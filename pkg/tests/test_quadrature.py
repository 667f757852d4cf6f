from math import factorial

import numpy as np
import pytest
from hypothesis import given, strategies as st

from twogrid.quadrature import triangle_rule


def exact_barycentric_monomial(a, b, c):
    # integral over the unit-area-normalised triangle of l0^a l1^b l2^c, divided by area
    return 2.0 * factorial(a) * factorial(b) * factorial(c) / factorial(a + b + c + 2)


@pytest.mark.parametrize("degree", range(0, 17))
def test_weights_and_points(degree):
    rule = triangle_rule(degree)
    assert rule.weights.sum() == pytest.approx(1.0, abs=1e-15)
    assert np.all(rule.weights > 0)
    assert np.allclose(rule.points.sum(axis=1), 1.0, atol=1e-15)
    assert rule.points.min() > 0


@given(st.integers(0, 16), st.data())
def test_exact_up_to_degree(degree, data):
    a = data.draw(st.integers(0, degree))
    b = data.draw(st.integers(0, degree - a))
    c = degree - a - b
    rule = triangle_rule(degree)
    lam = rule.points
    got = np.sum(rule.weights * lam[:, 0] ** a * lam[:, 1] ** b * lam[:, 2] ** c)
    assert got == pytest.approx(exact_barycentric_monomial(a, b, c), rel=1e-13, abs=1e-16)


def test_rejects_negative_degree():
    with pytest.raises(ValueError):
        triangle_rule(-1)
