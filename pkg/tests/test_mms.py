import numpy as np
import pytest

from twogrid.errors import ConfigError
from twogrid.harness import estimate_rates
from twogrid.mesh import unit_square_mesh
from twogrid.mms import CASES, ManufacturedCase, error_norms, get_case, mms_eval
from twogrid.spaces import FEFunction, build_space, interpolate
from twogrid.quadrature import triangle_rule
from twogrid.spaces import physical_points

POLY = get_case("polystream")


@pytest.mark.parametrize("name", sorted(CASES))
def test_divergence_free_and_boundary(name):
    case = get_case(name)
    s = np.linspace(0, 1, 50)
    x, y = np.meshgrid(s, s)
    for t in (0.0, 0.3, 1.7):
        G = case.grad_u(t, x, y)
        assert np.abs(G[..., 0, 0] + G[..., 1, 1]).max() <= 1e-13
        b = np.concatenate([np.zeros(50), np.ones(50), s, s])
        c = np.concatenate([s, s, np.zeros(50), np.ones(50)])
        assert np.abs(case.u(t, b, c)).max() <= 1e-13
        assert np.abs(case.u(t, c, b)).max() <= 1e-13


@pytest.mark.parametrize("name", sorted(CASES))
def test_pressure_has_zero_mean(name):
    case = get_case(name)
    sp = build_space(unit_square_mesh(2), "taylor_hood_2")
    rule = triangle_rule(6)
    x = physical_points(sp.mesh, rule.points)
    assert abs(np.einsum("tq,tq->", sp.weights(rule), case.p(0.4, x[..., 0], x[..., 1]))) <= 1e-15


def _fd_residual(t, x, y, k=1e-5):
    u, p = POLY.u, POLY.p
    ut = (u(t + k, x, y) - u(t - k, x, y)) / (2 * k)
    ux = (u(t, x + k, y) - u(t, x - k, y)) / (2 * k)
    uy = (u(t, x, y + k) - u(t, x, y - k)) / (2 * k)
    lap = (u(t, x + k, y) + u(t, x - k, y) + u(t, x, y + k) + u(t, x, y - k)
           - 4 * u(t, x, y)) / k ** 2
    px = (p(t, x + k, y) - p(t, x - k, y)) / (2 * k)
    py = (p(t, x, y + k) - p(t, x, y - k)) / (2 * k)
    uu = u(t, x, y)
    conv = uu[..., :1] * ux + uu[..., 1:] * uy
    return ut - lap + conv + np.stack([px, py], axis=-1)


def test_forcing_matches_finite_difference_residual():
    rng = np.random.default_rng(7)
    t, x, y = rng.uniform(0, 1, size=(3, 200))
    f = POLY.f(t, x, y)
    fd = _fd_residual(t, x, y)
    assert np.abs(fd - f).max() <= 1e-6 * np.abs(f).max()


def test_forcing_matches_symbolic_samples(oracle):
    data = oracle["forcing"]
    pts = np.array(data["points"])
    f = POLY.f(pts[:, 0], pts[:, 1], pts[:, 2])
    assert np.abs(f - np.array(data["f"])).max() <= 1e-13


def test_stokes_forcing_matches_finite_differences():
    case = get_case("stokes_poly")
    k = 1e-5
    rng = np.random.default_rng(3)
    x, y = rng.uniform(0, 1, size=(2, 100))
    u = case.u
    lap = (u(0, x + k, y) + u(0, x - k, y) + u(0, x, y + k) + u(0, x, y - k)
           - 4 * u(0, x, y)) / k ** 2
    fd = -lap + np.stack([np.ones_like(x), np.zeros_like(x)], axis=-1)
    f = case.f(0, x, y)
    assert np.abs(fd - f).max() <= 1e-6 * np.abs(f).max()


def test_mms_eval_shapes():
    u, p, f = mms_eval("polystream", 0.2, np.zeros(3), np.linspace(0, 1, 3))
    assert u.shape == (3, 2) and p.shape == (3,) and f.shape == (3, 2)


def test_unknown_case():
    with pytest.raises(ConfigError):
        get_case("vortex")
    with pytest.raises(ConfigError):
        mms_eval("vortex", 0, 0.5, 0.5)


def _linear_case():
    def u(t, x, y):
        return np.stack([x + 2 * y, 3 * x - y + 0 * t], axis=-1)

    def grad(t, x, y):
        G = np.empty(np.broadcast(x, y).shape + (2, 2))
        G[...] = [[1.0, 2.0], [3.0, -1.0]]
        return G

    def p(t, x, y):
        return x - y

    return ManufacturedCase("linear", u, grad, p, u)


@pytest.mark.parametrize("family", ["taylor_hood_2", "mini"])
def test_in_space_field_has_zero_error(family):
    case = _linear_case()
    sp = build_space(unit_square_mesh(3), family)
    u = interpolate(lambda x, y: case.u(0, x, y), sp)
    p = interpolate(lambda x, y: case.p(0, x, y), sp, kind="pressure")
    e = error_norms(u, p, case, 0.0)
    assert e["vel_l2"] <= 1e-12 and e["vel_h1"] <= 1e-12 and e["p_l2_quotient"] <= 1e-12


def test_pressure_shift_invariance():
    sp = build_space(unit_square_mesh(4), "taylor_hood_2")
    u = interpolate(POLY.u0, sp)
    p = interpolate(lambda x, y: POLY.p(0.0, x, y), sp, kind="pressure")
    shifted = FEFunction(sp, "pressure", p.coefficients + 3.7)
    a = error_norms(u, p, POLY, 0.0)["p_l2_quotient"]
    b = error_norms(u, shifted, POLY, 0.0)["p_l2_quotient"]
    assert abs(a - b) <= 1e-12
    assert error_norms(u, None, POLY, 0.0)["p_l2_quotient"] is None


def test_full_h1_norm_contains_l2_and_seminorm():
    sp = build_space(unit_square_mesh(4), "mini")
    e = error_norms(interpolate(POLY.u0, sp), None, POLY, 0.0)
    assert e["vel_h1"] == pytest.approx(np.hypot(e["vel_l2"], e["vel_h1_semi"]), rel=1e-14)


def test_p2_interpolant_rate():
    ns = (4, 8, 16)
    errs = [error_norms(interpolate(POLY.u0, build_space(unit_square_mesh(n), "taylor_hood_2")),
                        None, POLY, 0.0)["vel_l2"] for n in ns]
    rate = estimate_rates(errs, [1.0 / n for n in ns])
    assert abs(rate - 3.0) <= 0.2


def test_error_quadrature_degree_is_converged():
    sp = build_space(unit_square_mesh(16), "taylor_hood_2")
    u = interpolate(POLY.u0, sp)
    p = interpolate(lambda x, y: POLY.p(0.0, x, y) + 0.1 * np.sin(5 * x), sp, kind="pressure")
    a = error_norms(u, p, POLY, 0.0)
    b = error_norms(u, p, POLY, 0.0, degree=8)
    for key in ("vel_l2", "vel_h1", "p_l2_quotient"):
        assert abs(a[key] - b[key]) <= 1e-3 * a[key]
