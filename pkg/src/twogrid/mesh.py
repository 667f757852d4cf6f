"""Structured triangulations of the unit square and uniform red refinement.

Meshes produced here are nested: ``refine_uniform(unit_square_mesh(n))`` is
geometrically identical to ``unit_square_mesh(2 * n)`` and keeps a link to
the mesh it was refined from, so functions on a coarse mesh can be evaluated
exactly on any descendant.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import MeshError

BOUNDARY_TOL = 1e-12


def _frozen(a):
    a = np.ascontiguousarray(a)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class Mesh:
    """Triangular mesh of the unit square.

    Attributes
    ----------
    vertices : (nv, 2) float array
    triangles : (nt, 3) int array, counterclockwise
    edges : (ne, 2) int array, sorted vertex pairs; row index is the edge id
    tri_edges : (nt, 3) int array; local edge ``k`` is opposite local vertex ``k``
    boundary_vertex_flags, boundary_edge_flags : bool arrays
    level : refinement depth
    parent : mesh this one was refined from, or None
    parent_cell : (nt,) int array mapping each triangle to its parent triangle
    """

    vertices: np.ndarray
    triangles: np.ndarray
    edges: np.ndarray
    tri_edges: np.ndarray
    boundary_vertex_flags: np.ndarray
    boundary_edge_flags: np.ndarray
    level: int = 0
    parent: Optional["Mesh"] = None
    parent_cell: Optional[np.ndarray] = None
    n: Optional[int] = None

    @property
    def num_vertices(self):
        return self.vertices.shape[0]

    @property
    def num_triangles(self):
        return self.triangles.shape[0]

    @property
    def num_edges(self):
        return self.edges.shape[0]

    @property
    def h_max(self):
        d = self.vertices[self.edges[:, 1]] - self.vertices[self.edges[:, 0]]
        return float(np.sqrt((d ** 2).sum(axis=1)).max())

    def signed_areas(self):
        v = self.vertices[self.triangles]
        e1 = v[:, 1] - v[:, 0]
        e2 = v[:, 2] - v[:, 0]
        return 0.5 * (e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0])

    def edge_midpoints(self):
        return 0.5 * (self.vertices[self.edges[:, 0]] + self.vertices[self.edges[:, 1]])

    def ancestor_cells(self, ancestor):
        """Index of the ``ancestor`` triangle containing each triangle of this mesh."""
        cells = np.arange(self.num_triangles)
        m = self
        while m is not ancestor:
            if m.parent is None:
                raise MeshError("mesh is not a refinement of the given ancestor")
            cells = m.parent_cell[cells]
            m = m.parent
        return cells

    def is_descendant_of(self, other):
        m = self
        while m is not None:
            if m is other:
                return True
            m = m.parent
        return False

    def __repr__(self):
        return "Mesh(level={}, vertices={}, triangles={})".format(
            self.level, self.num_vertices, self.num_triangles)


def _build(vertices, triangles, level=0, parent=None, parent_cell=None, n=None):
    triangles = np.asarray(triangles, dtype=np.int64)
    # local edge k joins local vertices k+1, k+2
    local = np.stack([triangles[:, [1, 2]], triangles[:, [2, 0]], triangles[:, [0, 1]]], axis=1)
    local = np.sort(local.reshape(-1, 2), axis=1)
    edges, inverse, counts = np.unique(local, axis=0, return_inverse=True, return_counts=True)
    inverse = inverse.reshape(-1)
    tri_edges = inverse.reshape(-1, 3)

    x, y = vertices[:, 0], vertices[:, 1]
    on_bnd = ((np.abs(x) < BOUNDARY_TOL) | (np.abs(x - 1.0) < BOUNDARY_TOL)
              | (np.abs(y) < BOUNDARY_TOL) | (np.abs(y - 1.0) < BOUNDARY_TOL))
    if np.any(counts > 2):
        raise MeshError("non-manifold edge: shared by more than two triangles")
    return Mesh(
        vertices=_frozen(np.asarray(vertices, dtype=float)),
        triangles=_frozen(triangles),
        edges=_frozen(edges.astype(np.int64)),
        tri_edges=_frozen(tri_edges.astype(np.int64)),
        boundary_vertex_flags=_frozen(on_bnd),
        boundary_edge_flags=_frozen(counts == 1),
        level=level,
        parent=parent,
        parent_cell=None if parent_cell is None else _frozen(parent_cell),
        n=n,
    )


def unit_square_mesh(n):
    """Uniform ``n x n`` grid of squares, each cut by its lower-left to upper-right diagonal."""
    if isinstance(n, bool) or not isinstance(n, (int, np.integer)) or n < 1:
        raise MeshError("number of subdivisions must be a positive integer, got {!r}".format(n))
    n = int(n)
    t = np.arange(n + 1) / n
    X, Y = np.meshgrid(t, t)
    vertices = np.column_stack([X.ravel(), Y.ravel()])
    i, j = np.meshgrid(np.arange(n), np.arange(n))
    a = (j * (n + 1) + i).ravel()
    b = a + 1
    c = a + n + 2
    d = a + n + 1
    lower = np.column_stack([a, b, c])
    upper = np.column_stack([a, c, d])
    triangles = np.stack([lower, upper], axis=1).reshape(-1, 3)
    return _build(vertices, triangles, n=n)


def refine_uniform(m):
    """Red refinement: split every triangle into four through its edge midpoints.

    New vertices are appended after the old ones in edge order, and children of
    triangle ``t`` are stored at ``4 * t + k``.
    """
    if not isinstance(m, Mesh):
        raise MeshError("expected a Mesh")
    nv = m.num_vertices
    vertices = np.vstack([m.vertices, m.edge_midpoints()])
    v0, v1, v2 = m.triangles.T
    m0, m1, m2 = (nv + m.tri_edges).T
    children = np.stack([
        np.column_stack([v0, m2, m1]),
        np.column_stack([m2, v1, m0]),
        np.column_stack([m1, m0, v2]),
        np.column_stack([m0, m1, m2]),
    ], axis=1).reshape(-1, 3)
    parent_cell = np.repeat(np.arange(m.num_triangles), 4)
    return _build(vertices, children, level=m.level + 1, parent=m,
                  parent_cell=parent_cell, n=None if m.n is None else 2 * m.n)


def refine(m, times=1):
    for _ in range(times):
        m = refine_uniform(m)
    return m


def mesh_stats(m):
    """Longest edge, smallest interior angle (degrees) and worst circumradius/inradius ratio."""
    v = m.vertices[m.triangles]
    la = np.linalg.norm(v[:, 1] - v[:, 2], axis=1)
    lb = np.linalg.norm(v[:, 2] - v[:, 0], axis=1)
    lc = np.linalg.norm(v[:, 0] - v[:, 1], axis=1)
    ang_a = np.arccos(np.clip((lb ** 2 + lc ** 2 - la ** 2) / (2 * lb * lc), -1, 1))
    ang_b = np.arccos(np.clip((la ** 2 + lc ** 2 - lb ** 2) / (2 * la * lc), -1, 1))
    ang_c = np.pi - ang_a - ang_b
    area = np.abs(m.signed_areas())
    s = 0.5 * (la + lb + lc)
    circumradius = la * lb * lc / (4 * area)
    inradius = area / s
    return {
        "h_max": m.h_max,
        "min_angle": float(np.degrees(np.min([ang_a.min(), ang_b.min(), ang_c.min()]))),
        "regularity_ratio": float((circumradius / inradius).max()),
    }


def dump_mesh(m, path):
    """Write the plain-text ``v x y`` / ``t i j k`` format."""
    with open(path, "w") as fh:
        for x, y in m.vertices:
            fh.write("v {!r} {!r}\n".format(float(x), float(y)))
        for i, j, k in m.triangles:
            fh.write("t {} {} {}\n".format(i, j, k))


def load_mesh(path):
    verts, tris = [], []
    with open(path) as fh:
        for line in fh:
            parts = line.split()
            if not parts:
                continue
            if parts[0] == "v":
                verts.append((float(parts[1]), float(parts[2])))
            elif parts[0] == "t":
                tris.append((int(parts[1]), int(parts[2]), int(parts[3])))
            else:
                raise MeshError("unrecognised mesh line: {!r}".format(line))
    return _build(np.array(verts, dtype=float), np.array(tris, dtype=np.int64))
