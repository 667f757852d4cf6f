"""Manufactured solutions and error norms against them.

``polystream``: ``u = curl psi`` with ``psi = g(t) X(x) X(y)``,
``X(s) = s^2 (1 - s)^2``, ``g(t) = 1 + sin(t) / 2``, and
``p = g(t) (x^3 + y^3 - 1/2)``. The forcing is written out from closed-form
derivatives of ``X``.

``stokes_poly``: steady ``u = curl(X(x) X(y))``, ``p = x - 1/2`` with forcing
``-lap u + grad p`` (no convection), used to validate the Stokes solver.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import ConfigError
from .quadrature import triangle_rule
from .spaces import physical_points, pressure_field, velocity_field


def _X(s):
    return s ** 2 * (1 - s) ** 2


def _dX(s):
    return 2 * s * (s - 1) * (2 * s - 1)


def _d2X(s):
    return 2 * (6 * s ** 2 - 6 * s + 1)


def _d3X(s):
    return 12 * (2 * s - 1)


def _g(t):
    return 1.0 + 0.5 * np.sin(t)


def _dg(t):
    return 0.5 * np.cos(t)


@dataclass(frozen=True)
class ManufacturedCase:
    name: str
    u: Callable
    grad_u: Callable
    p: Callable
    f: Callable
    steady: bool = False
    equation: str = "navier_stokes"
    notes: str = field(default="")

    def u0(self, x, y):
        return self.u(0.0, x, y)


def _poly_u(t, x, y):
    g = _g(t)
    return np.stack([g * _X(x) * _dX(y), -g * _dX(x) * _X(y)], axis=-1)


def _poly_grad_u(t, x, y):
    g = _g(t)
    G = np.empty(np.broadcast(x, y).shape + (2, 2))
    G[..., 0, 0] = g * _dX(x) * _dX(y)
    G[..., 0, 1] = g * _X(x) * _d2X(y)
    G[..., 1, 0] = -g * _d2X(x) * _X(y)
    G[..., 1, 1] = -g * _dX(x) * _dX(y)
    return G


def _poly_p(t, x, y):
    return _g(t) * (x ** 3 + y ** 3 - 0.5)


def _poly_f(t, x, y):
    g, dg = _g(t), _dg(t)
    X, dX, d2X, d3X = _X(x), _dX(x), _d2X(x), _d3X(x)
    Y, dY, d2Y, d3Y = _X(y), _dX(y), _d2X(y), _d3X(y)
    f1 = (dg * X * dY - g * (d2X * dY + X * d3Y)
          + g * g * X * dX * (dY * dY - Y * d2Y) + 3 * g * x ** 2)
    f2 = (-dg * dX * Y + g * (d3X * Y + dX * d2Y)
          + g * g * Y * dY * (dX * dX - X * d2X) + 3 * g * y ** 2)
    return np.stack([f1, f2], axis=-1)


def _stokes_u(t, x, y):
    return _poly_u(0.0, x, y) / _g(0.0)


def _stokes_grad_u(t, x, y):
    return _poly_grad_u(0.0, x, y) / _g(0.0)


def _stokes_p(t, x, y):
    return np.broadcast_to(x - 0.5, np.broadcast(x, y).shape)


def _stokes_f(t, x, y):
    X, dX, d2X, d3X = _X(x), _dX(x), _d2X(x), _d3X(x)
    Y, dY, d2Y, d3Y = _X(y), _dX(y), _d2X(y), _d3X(y)
    f1 = -(d2X * dY + X * d3Y) + 1.0
    f2 = (d3X * Y + dX * d2Y) + 0.0 * y
    return np.stack([f1, f2], axis=-1)


CASES = {
    "polystream": ManufacturedCase(
        "polystream", _poly_u, _poly_grad_u, _poly_p, _poly_f,
        notes="smooth, polynomial in space; zero-mean pressure"),
    "stokes_poly": ManufacturedCase(
        "stokes_poly", _stokes_u, _stokes_grad_u, _stokes_p, _stokes_f,
        steady=True, equation="stokes", notes="steady Stokes, p = x - 1/2"),
}


def get_case(name):
    if isinstance(name, ManufacturedCase):
        return name
    try:
        return CASES[name]
    except KeyError:
        raise ConfigError("unknown manufactured case {!r}; choose from {}".format(
            name, sorted(CASES))) from None


def mms_eval(case, t, x, y):
    """Exact velocity, pressure and forcing at ``(t, x, y)``."""
    case = get_case(case)
    return case.u(t, x, y), case.p(t, x, y), case.f(t, x, y)


ERROR_QUADRATURE_DEGREE = 10


def error_norms(fe_u, fe_p, case, t, degree=ERROR_QUADRATURE_DEGREE):
    """L2 and H1 velocity errors and the L2/R pressure error at time ``t``.

    Returns a dict with ``vel_l2``, ``vel_h1`` (full norm), ``vel_h1_semi`` and
    ``p_l2_quotient`` (None without a pressure). Both pressures have their own
    mean removed before differencing.
    """
    case = get_case(case)
    space = fe_u.space
    rule = triangle_rule(degree)
    x = physical_points(space.mesh, rule.points)
    W = space.area[:, None] * rule.weights[None, :]
    uh, gh = velocity_field(fe_u, space.mesh, rule)
    eu = uh - case.u(t, x[..., 0], x[..., 1])
    eg = gh - case.grad_u(t, x[..., 0], x[..., 1])
    l2 = float(np.sqrt(np.einsum("tq,tqc,tqc->", W, eu, eu)))
    semi = float(np.sqrt(np.einsum("tq,tqcd,tqcd->", W, eg, eg)))
    out = {"vel_l2": l2, "vel_h1": float(np.hypot(l2, semi)), "vel_h1_semi": semi,
           "p_l2_quotient": None}
    if fe_p is not None:
        ph, _ = pressure_field(fe_p, fe_p.space.mesh, rule)
        pe = case.p(t, x[..., 0], x[..., 1])
        area = W.sum()
        d = (ph - np.einsum("tq,tq->", W, ph) / area) - (pe - np.einsum("tq,tq->", W, pe) / area)
        out["p_l2_quotient"] = float(np.sqrt(np.einsum("tq,tq,tq->", W, d, d)))
    return out
