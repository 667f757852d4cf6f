import numpy as np
import pytest
import scipy.sparse as sps

from twogrid.assembly import assemble_operators, load_vector
from twogrid.errors import SolverError
from twogrid.mesh import unit_square_mesh
from twogrid.mms import error_norms, get_case
from twogrid.saddle import (SaddleFactorization, SaddleSystem, infsup_estimate,
                            nested_dissection, saddle_ordering, solve_saddle)
from twogrid.spaces import FEFunction, build_space

FAMILIES = ["taylor_hood_2", "mini"]


def stokes_system(sp, gauge="lagrange_mean", ordering=True):
    ops = assemble_operators(sp)
    case = get_case("stokes_poly")
    rhs = load_vector(lambda x, y: case.f(0.0, x, y), sp)[sp.free_dofs]
    return SaddleSystem(ops.A_free, ops.B_free, rhs, np.zeros(sp.pressure_dofs),
                        ops.pressure_mean_weights, gauge,
                        saddle_ordering(sp, gauge) if ordering else None)


def as_functions(sp, uf, p):
    c = np.zeros(sp.velocity_dofs)
    c[sp.free_dofs] = uf
    return FEFunction(sp, "velocity", c), FEFunction(sp, "pressure", p)


@pytest.mark.parametrize("family", FAMILIES)
def test_zero_rhs_gives_zero(family):
    sp = build_space(unit_square_mesh(4), family)
    sys = stokes_system(sp)
    sys.rhs_u = np.zeros_like(sys.rhs_u)
    u, p = solve_saddle(sys)
    assert np.all(u == 0.0) and np.all(p == 0.0)


@pytest.mark.parametrize("family", FAMILIES)
def test_stokes_mms_converges(family):
    errs = []
    for n in (4, 8, 16):
        sp = build_space(unit_square_mesh(n), family)
        sys = stokes_system(sp)
        uf, p = solve_saddle(sys)
        assert np.linalg.norm(sys.B @ uf) <= 1e-10 * np.linalg.norm(sys.rhs_u)
        assert abs(sys.mean_weights @ p) <= 1e-13
        u, ph = as_functions(sp, uf, p)
        errs.append(error_norms(u, ph, "stokes_poly", 0.0))
    for key in ("vel_l2", "vel_h1", "p_l2_quotient"):
        e = [d[key] for d in errs]
        assert e[0] > e[1] > e[2]
    expected = 3.0 if family == "taylor_hood_2" else 2.0
    rate = np.log2(errs[1]["vel_l2"] / errs[2]["vel_l2"])
    assert abs(rate - expected) <= 0.3


def test_gauges_and_orderings_agree():
    sp = build_space(unit_square_mesh(8), "taylor_hood_2")
    ref_u, ref_p = solve_saddle(stokes_system(sp))
    for gauge in ("lagrange_mean", "pin_and_shift"):
        for ordering in (True, False):
            u, p = solve_saddle(stokes_system(sp, gauge, ordering))
            assert np.abs(u - ref_u).max() <= 1e-8
            assert np.abs(p - ref_p).max() <= 1e-8


def test_pressure_rhs_constant_is_ignored():
    sp = build_space(unit_square_mesh(4), "mini")
    sys = stokes_system(sp)
    fac = SaddleFactorization(sys.K, sys.B, sys.mean_weights, ordering=sys.ordering)
    u1, p1 = fac.solve(sys.rhs_u, np.zeros(sp.pressure_dofs))
    u2, p2 = fac.solve(sys.rhs_u, np.full(sp.pressure_dofs, 3.0))
    assert np.abs(u1 - u2).max() <= 1e-13 and np.abs(p1 - p2).max() <= 1e-13


def test_solve_is_bitwise_reproducible():
    sp = build_space(unit_square_mesh(8), "mini")
    a = solve_saddle(stokes_system(sp))
    b = solve_saddle(stokes_system(sp))
    assert np.array_equal(a[0], b[0]) and np.array_equal(a[1], b[1])


def test_singular_velocity_block_is_named():
    sp = build_space(unit_square_mesh(3), "taylor_hood_2")
    ops = assemble_operators(sp)
    K = sps.csr_matrix(ops.A_free.shape)
    with pytest.raises(SolverError) as info:
        SaddleFactorization(K, ops.B_free, ops.pressure_mean_weights)
    assert info.value.block == "K"


def test_nonfinite_inputs_rejected():
    sp = build_space(unit_square_mesh(2), "taylor_hood_2")
    sys = stokes_system(sp)
    rhs = sys.rhs_u.copy()
    rhs[0] = np.nan
    fac = SaddleFactorization(sys.K, sys.B, sys.mean_weights)
    with pytest.raises(SolverError):
        fac.solve(rhs)
    K = sys.K.copy()
    K.data[0] = np.inf
    with pytest.raises(SolverError) as info:
        SaddleFactorization(K, sys.B, sys.mean_weights)
    assert info.value.block == "K"


def test_unknown_gauge():
    sp = build_space(unit_square_mesh(2), "taylor_hood_2")
    sys = stokes_system(sp)
    with pytest.raises(ValueError):
        SaddleFactorization(sys.K, sys.B, sys.mean_weights, gauge="nope")


def test_nested_dissection_is_permutation():
    sp = build_space(unit_square_mesh(8), "mini")
    for gauge in ("lagrange_mean", "pin_and_shift"):
        perm = saddle_ordering(sp, gauge)
        n = stokes_system(sp, gauge).K.shape[0] + sp.pressure_dofs + (gauge == "lagrange_mean") \
            - (gauge == "pin_and_shift")
        assert sorted(perm.tolist()) == list(range(n))
    g = sps.random(50, 50, density=0.1, random_state=0)
    g = (g + g.T).tocsr()
    perm = nested_dissection(g, np.random.default_rng(0).uniform(size=(50, 2)), leaf=8)
    assert sorted(perm.tolist()) == list(range(50))


@pytest.mark.parametrize("family", FAMILIES)
def test_infsup_positive_on_small_meshes(family):
    betas = [infsup_estimate(build_space(unit_square_mesh(n), family)) for n in (2, 4)]
    assert min(betas) > 0.1


def test_infsup_p1p1_degenerates():
    assert infsup_estimate(build_space(unit_square_mesh(4), "p1_p1")) < 1e-6
