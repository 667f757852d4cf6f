import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from twogrid.errors import MeshError
from twogrid.mesh import (dump_mesh, load_mesh, mesh_stats, refine, refine_uniform,
                          unit_square_mesh)


@pytest.mark.parametrize("n, nt, nv, nb", [(1, 2, 4, 4), (2, 8, 9, 8), (4, 32, 25, 16)])
def test_counts(n, nt, nv, nb):
    m = unit_square_mesh(n)
    assert m.num_triangles == nt
    assert m.num_vertices == nv
    assert m.boundary_vertex_flags.sum() == nb
    assert m.level == 0 and m.parent is None


def test_h_max():
    assert unit_square_mesh(4).h_max == pytest.approx(math.sqrt(2) / 4, abs=1e-15)


@pytest.mark.parametrize("bad", [0, -3, 2.5, True, "4"])
def test_rejects_bad_n(bad):
    with pytest.raises(MeshError):
        unit_square_mesh(bad)


def test_refine_once_from_n1():
    m = refine_uniform(unit_square_mesh(1))
    assert m.num_triangles == 8
    assert m.num_vertices == 9
    assert m.level == 1


def test_refine_twice_matches_direct_mesh():
    fine = refine(unit_square_mesh(2), 2)
    direct = unit_square_mesh(8)
    a = sorted(map(tuple, np.round(fine.vertices, 14)))
    b = sorted(map(tuple, np.round(direct.vertices, 14)))
    assert a == b
    tri_a = sorted(tuple(sorted(map(tuple, np.round(fine.vertices[t], 14)))) for t in fine.triangles)
    tri_b = sorted(tuple(sorted(map(tuple, np.round(direct.vertices[t], 14)))) for t in direct.triangles)
    assert tri_a == tri_b


@pytest.mark.parametrize("n", [1, 2, 4, 8])
def test_refine_halves_h_exactly(n):
    m = unit_square_mesh(n)
    assert refine_uniform(m).h_max == m.h_max / 2


@pytest.mark.parametrize("n", [3, 5, 7])
def test_refine_halves_h_to_rounding(n):
    # i/n is not exact in binary, so midpoints can differ in the last bit
    m = unit_square_mesh(n)
    assert refine_uniform(m).h_max == pytest.approx(m.h_max / 2, rel=4e-16)


def test_refine_rejects_non_mesh():
    with pytest.raises(MeshError):
        refine_uniform("mesh")


def test_stats_structured():
    s = mesh_stats(unit_square_mesh(4))
    assert s["min_angle"] == pytest.approx(45.0, abs=1e-12)
    assert s["h_max"] == pytest.approx(math.sqrt(2) / 4)


def test_regularity_ratio_constant_along_chain():
    m = unit_square_mesh(2)
    r0 = mesh_stats(m)["regularity_ratio"]
    for _ in range(3):
        m = refine_uniform(m)
        assert mesh_stats(m)["regularity_ratio"] == pytest.approx(r0, rel=1e-12)
    # right isosceles: R / r = 1 + sqrt(2)
    assert r0 == pytest.approx(1 + math.sqrt(2), rel=1e-12)


def _check_invariants(m):
    assert np.all(m.signed_areas() > 0)
    assert m.num_vertices - m.num_edges + m.num_triangles == 1
    counts = np.bincount(m.tri_edges.ravel(), minlength=m.num_edges)
    assert np.all(counts[m.boundary_edge_flags] == 1)
    assert np.all(counts[~m.boundary_edge_flags] == 2)
    x, y = m.vertices.T
    expect = (np.minimum.reduce([x, 1 - x, y, 1 - y]) < 1e-12)
    assert np.array_equal(expect, m.boundary_vertex_flags)
    # local edge k is opposite local vertex k
    for k in range(3):
        e = m.edges[m.tri_edges[:, k]]
        assert not np.any(e == m.triangles[:, [k]])
    # all triangles congruent
    areas = np.abs(m.signed_areas())
    assert np.allclose(areas, areas[0], rtol=1e-12)


@given(st.integers(min_value=1, max_value=12))
def test_structured_invariants(n):
    _check_invariants(unit_square_mesh(n))


@given(st.integers(min_value=1, max_value=4), st.integers(min_value=1, max_value=2))
def test_refined_invariants_and_nesting(n, k):
    coarse = unit_square_mesh(n)
    fine = refine(coarse, k)
    _check_invariants(fine)
    # coarse vertices keep their indices and coordinates bitwise
    assert np.array_equal(fine.vertices[:coarse.num_vertices], coarse.vertices)
    assert fine.is_descendant_of(coarse)
    assert not coarse.is_descendant_of(fine)
    # each parent has exactly four children whose areas add up to the parent's
    cells = fine.ancestor_cells(coarse)
    assert np.all(np.bincount(cells) == 4 ** k)
    summed = np.bincount(cells, weights=fine.signed_areas())
    assert np.allclose(summed, coarse.signed_areas(), rtol=1e-13)
    # children lie inside their parent: centroids have nonnegative barycentric coordinates
    cen = fine.vertices[fine.triangles].mean(axis=1)
    P = coarse.vertices[coarse.triangles[cells]]
    J = np.stack([P[:, 1] - P[:, 0], P[:, 2] - P[:, 0]], axis=2)
    st_ = np.linalg.solve(J, (cen - P[:, 0])[..., None])[..., 0]
    assert st_.min() > 0 and st_.sum(axis=1).max() < 1


def test_ancestor_cells_rejects_unrelated():
    with pytest.raises(MeshError):
        unit_square_mesh(4).ancestor_cells(unit_square_mesh(2))


def test_dump_and_load_roundtrip(tmp_path):
    m = refine_uniform(unit_square_mesh(2))
    path = tmp_path / "m.txt"
    dump_mesh(m, path)
    lines = path.read_text().splitlines()
    assert lines[0].startswith("v ") and lines[-1].startswith("t ")
    assert sum(l.startswith("v ") for l in lines) == m.num_vertices
    back = load_mesh(path)
    assert np.array_equal(back.vertices, m.vertices)
    assert np.array_equal(back.triangles, m.triangles)
    assert np.array_equal(back.boundary_edge_flags, m.boundary_edge_flags)


def test_load_rejects_garbage(tmp_path):
    path = tmp_path / "bad.txt"
    path.write_text("v 0 0\nq 1 2 3\n")
    with pytest.raises(MeshError):
        load_mesh(path)


def test_mesh_is_read_only():
    m = unit_square_mesh(2)
    with pytest.raises(ValueError):
        m.vertices[0, 0] = 3.0
