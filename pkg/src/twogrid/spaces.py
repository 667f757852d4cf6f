"""Mixed finite element spaces: mini-element and quadratic Taylor-Hood.

Velocity coefficients are stored node by node with the two components
interleaved, ``dof = 2 * node + component``. Scalar velocity nodes are numbered
vertices first, then edge midpoints (P2), then element bubbles (mini).
Pressure is continuous P1 on the vertices in both families.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import SpaceMismatchError
from .mesh import Mesh
from .quadrature import triangle_rule


@dataclass(frozen=True)
class ElementFamily:
    name: str
    velocity_degree: int
    bubble: bool
    pressure_degree: int
    quadrature_degree: int
    stable: bool = True


FAMILIES = {
    "mini": ElementFamily("mini", 1, True, 1, 8),
    "taylor_hood_2": ElementFamily("taylor_hood_2", 2, False, 1, 6),
    # equal-order pair, only used as the inf-sup negative control
    "p1_p1": ElementFamily("p1_p1", 1, False, 1, 4, stable=False),
}


def get_family(family):
    if isinstance(family, ElementFamily):
        return family
    try:
        return FAMILIES[family]
    except KeyError:
        raise SpaceMismatchError("unknown element family {!r}; choose from {}".format(
            family, sorted(FAMILIES))) from None


# --- reference basis functions, evaluated at barycentric points (..., 3) ---

def p1_basis(lam):
    lam = np.asarray(lam, dtype=float)
    d = np.broadcast_to(np.eye(3), lam.shape[:-1] + (3, 3))
    return lam.copy(), d


def p2_basis(lam):
    lam = np.asarray(lam, dtype=float)
    shape = lam.shape[:-1]
    vals = np.empty(shape + (6,))
    d = np.zeros(shape + (6, 3))
    for k in range(3):
        a, b = (k + 1) % 3, (k + 2) % 3
        vals[..., k] = lam[..., k] * (2.0 * lam[..., k] - 1.0)
        d[..., k, k] = 4.0 * lam[..., k] - 1.0
        vals[..., 3 + k] = 4.0 * lam[..., a] * lam[..., b]
        d[..., 3 + k, a] = 4.0 * lam[..., b]
        d[..., 3 + k, b] = 4.0 * lam[..., a]
    return vals, d


def p1_bubble_basis(lam):
    """P1 hats plus the cubic bubble normalized to 1 at the barycenter."""
    lam = np.asarray(lam, dtype=float)
    shape = lam.shape[:-1]
    vals = np.empty(shape + (4,))
    d = np.zeros(shape + (4, 3))
    vals[..., :3] = lam
    d[..., :3, :] = np.eye(3)
    l0, l1, l2 = lam[..., 0], lam[..., 1], lam[..., 2]
    vals[..., 3] = 27.0 * l0 * l1 * l2
    d[..., 3, 0] = 27.0 * l1 * l2
    d[..., 3, 1] = 27.0 * l0 * l2
    d[..., 3, 2] = 27.0 * l0 * l1
    return vals, d


BUBBLE_MEAN = 27.0 * 2.0 / 120.0  # mean of 27 l0 l1 l2 over a triangle


def _velocity_basis_fn(family):
    if family.bubble:
        return p1_bubble_basis
    if family.velocity_degree == 2:
        return p2_basis
    if family.velocity_degree == 1:
        return p1_basis
    raise NotImplementedError("velocity degree {}".format(family.velocity_degree))


def _local_node_barycentric(family):
    verts = np.eye(3)
    if family.bubble:
        return np.vstack([verts, np.full((1, 3), 1.0 / 3.0)])
    if family.velocity_degree == 2:
        mids = np.array([[0.0, 0.5, 0.5], [0.5, 0.0, 0.5], [0.5, 0.5, 0.0]])
        return np.vstack([verts, mids])
    return verts


def gradient_lambda(mesh):
    """Physical gradients of the barycentric coordinates, shape (nt, 3, 2), and areas."""
    v = mesh.vertices[mesh.triangles]
    J = np.stack([v[:, 1] - v[:, 0], v[:, 2] - v[:, 0]], axis=2)  # columns are edge vectors
    det = J[:, 0, 0] * J[:, 1, 1] - J[:, 0, 1] * J[:, 1, 0]
    inv = np.empty_like(J)
    inv[:, 0, 0] = J[:, 1, 1] / det
    inv[:, 0, 1] = -J[:, 0, 1] / det
    inv[:, 1, 0] = -J[:, 1, 0] / det
    inv[:, 1, 1] = J[:, 0, 0] / det
    g = np.empty((mesh.num_triangles, 3, 2))
    g[:, 1] = inv[:, 0]
    g[:, 2] = inv[:, 1]
    g[:, 0] = -(g[:, 1] + g[:, 2])
    return g, 0.5 * det


def physical_points(mesh, lam):
    """Map barycentric points (nq, 3) to physical coordinates on every triangle, (nt, nq, 2)."""
    v = mesh.vertices[mesh.triangles]
    return np.einsum("qk,tkd->tqd", lam, v)


def barycentric_in(mesh, cells, x):
    """Barycentric coordinates of physical points ``x`` (nt, nq, 2) in triangles ``cells``."""
    g, _ = gradient_lambda(mesh)
    v0 = mesh.vertices[mesh.triangles[cells, 0]]
    rel = x - v0[:, None, :]
    lam = np.empty(x.shape[:-1] + (3,))
    lam[..., 1] = np.einsum("td,tqd->tq", g[cells, 1], rel)
    lam[..., 2] = np.einsum("td,tqd->tq", g[cells, 2], rel)
    lam[..., 0] = 1.0 - lam[..., 1] - lam[..., 2]
    return lam


class MixedSpace:
    """Degree-of-freedom layout for one element family on one mesh.

    Treated as immutable once built. Per-mesh evaluation tables are cached.
    """

    def __init__(self, mesh, family):
        self.mesh = mesh
        self.family = family
        nv, ne, nt = mesh.num_vertices, mesh.num_edges, mesh.num_triangles
        tri = mesh.triangles
        if family.bubble:
            self.cell_nodes = np.hstack([tri, (nv + np.arange(nt))[:, None]])
            node_coords = np.vstack([mesh.vertices, mesh.vertices[tri].mean(axis=1)])
            node_bnd = np.concatenate([mesh.boundary_vertex_flags, np.zeros(nt, dtype=bool)])
        elif family.velocity_degree == 2:
            self.cell_nodes = np.hstack([tri, nv + mesh.tri_edges])
            node_coords = np.vstack([mesh.vertices, mesh.edge_midpoints()])
            node_bnd = np.concatenate([mesh.boundary_vertex_flags, mesh.boundary_edge_flags])
        else:
            self.cell_nodes = tri.copy()
            node_coords = mesh.vertices.copy()
            node_bnd = mesh.boundary_vertex_flags.copy()
        self.num_nodes = node_coords.shape[0]
        self.node_coords = node_coords
        self.nloc = self.cell_nodes.shape[1]
        self.cell_vdofs = np.empty((nt, 2 * self.nloc), dtype=np.int64)
        self.cell_vdofs[:, 0::2] = 2 * self.cell_nodes
        self.cell_vdofs[:, 1::2] = 2 * self.cell_nodes + 1
        self.cell_pdofs = tri
        self.velocity_dofs = 2 * self.num_nodes
        self.pressure_dofs = nv
        self.node_boundary = node_bnd
        self.dirichlet_mask = np.repeat(node_bnd, 2)
        self.free_dofs = np.flatnonzero(~self.dirichlet_mask)
        self.rule = triangle_rule(family.quadrature_degree)
        self.grad_lambda, self.area = gradient_lambda(mesh)
        self._basis = _velocity_basis_fn(family)
        self._cache = {}
        for a in ("cell_nodes", "cell_vdofs", "node_coords", "dirichlet_mask", "free_dofs"):
            getattr(self, a).setflags(write=False)

    def __repr__(self):
        return "MixedSpace({}, level={}, velocity_dofs={}, pressure_dofs={})".format(
            self.family.name, self.mesh.level, self.velocity_dofs, self.pressure_dofs)

    @property
    def num_free(self):
        return self.free_dofs.size

    def velocity_basis(self, lam):
        return self._basis(lam)

    def local_node_barycentric(self):
        return _local_node_barycentric(self.family)

    def velocity_tables(self, rule=None):
        """Basis values (nq, nloc) and physical gradients (nt, nq, nloc, 2) at ``rule`` points."""
        rule = rule or self.rule
        key = ("v", rule.degree)
        if key not in self._cache:
            vals, dlam = self._basis(rule.points)
            grads = np.einsum("qlk,tkd->tqld", dlam, self.grad_lambda)
            self._cache[key] = (vals, grads)
        return self._cache[key]

    def pressure_tables(self, rule=None):
        rule = rule or self.rule
        key = ("p", rule.degree)
        if key not in self._cache:
            vals, dlam = p1_basis(rule.points)
            grads = np.einsum("qlk,tkd->tqld", dlam, self.grad_lambda)
            self._cache[key] = (vals, grads)
        return self._cache[key]

    def weights(self, rule=None):
        """Quadrature weights scaled by element area, (nt, nq)."""
        rule = rule or self.rule
        return self.area[:, None] * rule.weights[None, :]

    def zero_velocity(self):
        return FEFunction(self, "velocity", np.zeros(self.velocity_dofs))

    def zero_pressure(self):
        return FEFunction(self, "pressure", np.zeros(self.pressure_dofs))


def build_space(mesh, family):
    if not isinstance(mesh, Mesh):
        raise SpaceMismatchError("build_space expects a Mesh")
    return MixedSpace(mesh, get_family(family))


@dataclass(eq=False)
class FEFunction:
    """Coefficient vector tagged with its space and kind (``velocity`` or ``pressure``)."""

    space: MixedSpace
    kind: str
    coefficients: np.ndarray

    def __post_init__(self):
        if self.kind not in ("velocity", "pressure"):
            raise SpaceMismatchError("kind must be 'velocity' or 'pressure'")
        self.coefficients = np.asarray(self.coefficients, dtype=float)
        n = self.space.velocity_dofs if self.kind == "velocity" else self.space.pressure_dofs
        if self.coefficients.shape != (n,):
            raise SpaceMismatchError("expected {} coefficients for {}, got {}".format(
                n, self.kind, self.coefficients.shape))

    def copy(self):
        return FEFunction(self.space, self.kind, self.coefficients.copy())


def _source_tables(f, target_mesh, rule):
    """Basis values/gradients of ``f.space`` at ``rule`` points of ``target_mesh`` cells.

    Returns (cells, vals, grads) with vals of shape (nq, nloc) on the same mesh,
    otherwise (nt, nq, nloc); grads always (nt, nq, nloc, 2).
    """
    sp = f.space
    src = sp.mesh
    if target_mesh is src:
        cells = np.arange(src.num_triangles)
        if f.kind == "velocity":
            vals, grads = sp.velocity_tables(rule)
        else:
            vals, grads = sp.pressure_tables(rule)
        return cells, vals, grads
    key = ("x", f.kind, id(target_mesh), rule.degree)
    if key not in sp._cache:
        if not target_mesh.is_descendant_of(src):
            raise SpaceMismatchError("target mesh is not a refinement of the function's mesh")
        cells = target_mesh.ancestor_cells(src)
        x = physical_points(target_mesh, rule.points)
        lam = barycentric_in(src, cells, x)
        if f.kind == "velocity":
            vals, dlam = sp.velocity_basis(lam)
        else:
            vals, dlam = p1_basis(lam)
        grads = np.einsum("tqlk,tkd->tqld", dlam, sp.grad_lambda[cells])
        # keep a reference to the mesh so id() stays unique while cached
        sp._cache[key] = (cells, vals, grads, target_mesh)
    cells, vals, grads, _ = sp._cache[key]
    return cells, vals, grads


def velocity_field(u, target_mesh=None, rule=None):
    """Values (nt, nq, 2) and gradients (nt, nq, 2, 2) of a velocity at quadrature points.

    ``grads[..., c, d]`` is the derivative of component ``c`` along ``d``. The
    target mesh may be any refinement of the function's mesh; the coarse basis is
    then evaluated exactly at the fine points.
    """
    if u.kind != "velocity":
        raise SpaceMismatchError("expected a velocity function")
    target_mesh = target_mesh or u.space.mesh
    rule = rule or u.space.rule
    cells, vals, grads = _source_tables(u, target_mesh, rule)
    C = u.coefficients.reshape(-1, 2)[u.space.cell_nodes[cells]]  # (nt, nloc, 2)
    if vals.ndim == 2:
        v = np.einsum("ql,tlc->tqc", vals, C)
    else:
        v = np.einsum("tql,tlc->tqc", vals, C)
    g = np.einsum("tlc,tqld->tqcd", C, grads)
    return v, g


def pressure_field(p, target_mesh=None, rule=None):
    if p.kind != "pressure":
        raise SpaceMismatchError("expected a pressure function")
    target_mesh = target_mesh or p.space.mesh
    rule = rule or p.space.rule
    cells, vals, grads = _source_tables(p, target_mesh, rule)
    C = p.coefficients[p.space.cell_pdofs[cells]]
    if vals.ndim == 2:
        v = np.einsum("ql,tl->tq", vals, C)
    else:
        v = np.einsum("tql,tl->tq", vals, C)
    g = np.einsum("tl,tqld->tqd", C, grads)
    return v, g


def evaluate(f, element, bary, gradient=False):
    """Evaluate ``f`` at barycentric point ``bary`` of triangle ``element``."""
    sp = f.space
    if not 0 <= element < sp.mesh.num_triangles:
        raise IndexError("element {} out of range".format(element))
    lam = np.asarray(bary, dtype=float)[None, :]
    gl = sp.grad_lambda[element]
    if f.kind == "velocity":
        vals, dlam = sp.velocity_basis(lam)
        C = f.coefficients.reshape(-1, 2)[sp.cell_nodes[element]]
        value = vals[0] @ C
        grad = C.T @ (dlam[0] @ gl)
    else:
        vals, dlam = p1_basis(lam)
        C = f.coefficients[sp.cell_pdofs[element]]
        value = float(vals[0] @ C)
        grad = C @ (dlam[0] @ gl)
    return (value, grad) if gradient else value


def interpolate(func, space, kind="velocity"):
    """Nodal interpolant of ``func(x, y)``, which returns shape ``x.shape + (2,)`` for velocities.

    For the mini-element the bubble coefficient makes the interpolant exact at
    the element barycenter.
    """
    if kind == "pressure":
        x, y = space.mesh.vertices.T
        return FEFunction(space, "pressure", np.broadcast_to(func(x, y), x.shape).astype(float))
    x, y = space.node_coords.T
    vals = np.array(func(x, y), dtype=float).reshape(space.num_nodes, 2)
    if space.family.bubble:
        nv = space.mesh.num_vertices
        vals[nv:] -= vals[space.mesh.triangles].mean(axis=1)
    return FEFunction(space, "velocity", vals.ravel())


def prolong(f, fine):
    """Represent a coarse function in the space ``fine`` built on a refined mesh.

    Taylor-Hood velocities and P1 pressures are reproduced exactly by nodal
    interpolation. A coarse mini-element bubble is cubic on each child triangle
    and so has no exact representation in the fine mini space; vertex values
    are interpolated and each fine bubble coefficient is set so that the
    integral over every child triangle is preserved.
    """
    sp = f.space
    if sp.family != fine.family:
        raise SpaceMismatchError("cannot prolong between families {} and {}".format(
            sp.family.name, fine.family.name))
    if not fine.mesh.is_descendant_of(sp.mesh):
        raise SpaceMismatchError("fine mesh is not a refinement of the coarse mesh")
    if fine.mesh is sp.mesh:
        return FEFunction(fine, f.kind, f.coefficients.copy())
    cells = fine.mesh.ancestor_cells(sp.mesh)
    x = fine.mesh.vertices[fine.mesh.triangles]  # (nt, 3, 2)
    if f.kind == "pressure":
        lam = barycentric_in(sp.mesh, cells, x)
        vals, _ = p1_basis(lam)
        C = f.coefficients[sp.cell_pdofs[cells]]
        local = np.einsum("tql,tl->tq", vals, C)
        out = np.empty(fine.pressure_dofs)
        out[fine.mesh.triangles] = local
        return FEFunction(fine, "pressure", out)

    nodes = fine.local_node_barycentric()
    xn = np.einsum("qk,tkd->tqd", nodes, x)
    lam = barycentric_in(sp.mesh, cells, xn)
    vals, _ = sp.velocity_basis(lam)
    C = f.coefficients.reshape(-1, 2)[sp.cell_nodes[cells]]
    local = np.einsum("tql,tlc->tqc", vals, C)
    out = np.empty((fine.num_nodes, 2))
    if not fine.family.bubble:
        out[fine.cell_nodes] = local
    else:
        out[fine.cell_nodes[:, :3]] = local[:, :3]
        v, _ = velocity_field(f, fine.mesh, fine.rule)
        mean_coarse = np.einsum("q,tqc->tc", fine.rule.weights, v)
        mean_p1 = local[:, :3].mean(axis=1)
        out[fine.cell_nodes[:, 3]] = (mean_coarse - mean_p1) / BUBBLE_MEAN
    return FEFunction(fine, "velocity", out.ravel())
