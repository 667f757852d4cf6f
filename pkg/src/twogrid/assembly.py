"""Assembly of the finite element operators.

All integrals use the family's quadrature rule, which is exact for every
polynomial integrand met here, including the trilinear convection form, so
its skew-symmetry holds to rounding. No mass lumping anywhere.

Velocity matrices act on the interleaved vector layout of :mod:`.spaces`.
Dirichlet conditions are homogeneous; solvers restrict to ``space.free_dofs``,
which is the same as symmetric elimination with identity rows on the
boundary.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sps

from .errors import SpaceMismatchError
from .quadrature import triangle_rule
from .spaces import FEFunction, physical_points, velocity_field


class ScatterPattern:
    """CSR sparsity of an element-by-element assembly, computed once.

    ``assemble(local)`` sums local matrices of shape (nt, nr, nc) into a CSR
    matrix with sorted, duplicate-free column indices. Contributions to each
    entry are added in element order, so symmetric local matrices give an
    exactly symmetric result.
    """

    def __init__(self, rows, cols, shape):
        nt, nr = rows.shape
        nc = cols.shape[1]
        r = np.broadcast_to(rows[:, :, None], (nt, nr, nc)).ravel()
        c = np.broadcast_to(cols[:, None, :], (nt, nr, nc)).ravel()
        key = r.astype(np.int64) * shape[1] + c
        uniq, inv = np.unique(key, return_inverse=True)
        self.shape = shape
        self.inverse = inv.reshape(-1)
        self.indices = (uniq % shape[1]).astype(np.int32)
        counts = np.bincount(uniq // shape[1], minlength=shape[0])
        self.indptr = np.concatenate([[0], np.cumsum(counts)]).astype(np.int32)
        self.nnz = uniq.size

    def assemble(self, local):
        data = np.bincount(self.inverse, weights=local.ravel(), minlength=self.nnz)
        A = sps.csr_matrix((data, self.indices.copy(), self.indptr.copy()), shape=self.shape)
        A.has_sorted_indices = True
        return A


def _pattern(space, kind):
    key = ("pattern", kind)
    if key not in space._cache:
        if kind == "vv":
            rows = cols = space.cell_vdofs
            shape = (space.velocity_dofs, space.velocity_dofs)
        elif kind == "pv":
            rows, cols = space.cell_pdofs, space.cell_vdofs
            shape = (space.pressure_dofs, space.velocity_dofs)
        elif kind == "pp":
            rows = cols = space.cell_pdofs
            shape = (space.pressure_dofs, space.pressure_dofs)
        else:
            raise ValueError(kind)
        space._cache[key] = ScatterPattern(rows, cols, shape)
    return space._cache[key]


def _vectorize(S):
    """Scalar local matrix (nt, n, n) -> componentwise block (nt, 2n, 2n), interleaved."""
    nt, n, _ = S.shape
    V = np.zeros((nt, n, 2, n, 2))
    V[:, :, 0, :, 0] = S
    V[:, :, 1, :, 1] = S
    return V.reshape(nt, 2 * n, 2 * n)


def _sym(S):
    return 0.5 * (S + S.transpose(0, 2, 1))


@dataclass(frozen=True, eq=False)
class OperatorSet:
    """Unmasked global operators of one space.

    M, A : velocity mass and vector Laplacian stiffness
    B : ``B[k, j] = (q_k, div phi_j)``
    Mp : pressure mass
    """

    space: object
    M: sps.csr_matrix
    A: sps.csr_matrix
    B: sps.csr_matrix
    Mp: sps.csr_matrix

    def free(self, K):
        """Restrict a velocity-velocity matrix to the free (non-Dirichlet) dofs."""
        f = self.space.free_dofs
        return K[f][:, f].tocsr()

    @property
    def M_free(self):
        return self._lazy("M_free", lambda: self.free(self.M))

    @property
    def A_free(self):
        return self._lazy("A_free", lambda: self.free(self.A))

    @property
    def B_free(self):
        return self._lazy("B_free", lambda: self.B[:, self.space.free_dofs].tocsr())

    @property
    def pressure_mean_weights(self):
        """Vector ``m`` with ``m @ p`` equal to the integral of ``p``."""
        return self._lazy("pmean", lambda: np.asarray(self.Mp.sum(axis=0)).ravel())

    def _lazy(self, name, fn):
        cache = self.space._cache
        key = ("op", name)
        if key not in cache:
            cache[key] = fn()
        return cache[key]


def assemble_operators(space):
    key = ("operators",)
    if key in space._cache:
        return space._cache[key]
    W = space.weights()
    vals, grads = space.velocity_tables()
    pvals, _ = space.pressure_tables()

    Ms = _sym(np.einsum("tq,qi,qj->tij", W, vals, vals))
    As = _sym(np.einsum("tq,tqid,tqjd->tij", W, grads, grads))
    vv = _pattern(space, "vv")
    M = vv.assemble(_vectorize(Ms))
    A = vv.assemble(_vectorize(As))

    nt = W.shape[0]
    Bl = np.einsum("tq,qk,tqjc->tkjc", W, pvals, grads).reshape(nt, 3, 2 * space.nloc)
    B = _pattern(space, "pv").assemble(Bl)
    Mpl = _sym(np.einsum("tq,qk,ql->tkl", W, pvals, pvals))
    Mp = _pattern(space, "pp").assemble(Mpl)

    ops = OperatorSet(space, M, A, B, Mp)
    space._cache[key] = ops
    return ops


def scalar_mass_p1(space):
    """Unmasked scalar P1 mass matrix on the vertices (same as the pressure mass)."""
    return assemble_operators(space).Mp


def _coarse_field(w, space):
    if w.kind != "velocity":
        raise SpaceMismatchError("convecting field must be a velocity")
    if not space.mesh.is_descendant_of(w.space.mesh):
        raise SpaceMismatchError("convecting field lives on a mesh that is not an ancestor")
    return velocity_field(w, space.mesh, space.rule)


def convection_matrix(w, space, mode="skew"):
    """Linearised convection operator with convecting field ``w``.

    ``plain``: ``((w . grad) phi_j, phi_i)``.
    ``skew``: ``(F(w, phi_j), phi_i)`` with ``F(w, v) = (w . grad) v + 0.5 div(w) v``.
    ``newton_pair``: returns ``(N1, N2)`` where ``N1`` is the skew matrix and
    ``N2 x`` discretises ``F(x, w)``.

    ``w`` may live on any ancestor mesh; it is evaluated exactly at this mesh's
    quadrature points.
    """
    wv, wg = _coarse_field(w, space)
    W = space.weights()
    vals, grads = space.velocity_tables()
    vv = _pattern(space, "vv")
    adv = np.einsum("tqd,tqjd->tqj", wv, grads)
    plain = np.einsum("tq,qi,tqj->tij", W, vals, adv)
    if mode == "plain":
        return vv.assemble(_vectorize(plain))
    div = wg[..., 0, 0] + wg[..., 1, 1]
    react = 0.5 * np.einsum("tq,qi,qj->tij", W * div, vals, vals)
    skew = vv.assemble(_vectorize(plain + react))
    if mode == "skew":
        return skew
    if mode != "newton_pair":
        raise ValueError("unknown convection mode {!r}".format(mode))
    nt, n = W.shape[0], vals.shape[1]
    L = np.einsum("tq,qi,qj,tqdc->tidjc", W, vals, vals, wg)
    L += 0.5 * np.einsum("tq,qi,tqjc,tqd->tidjc", W, vals, grads, wv)
    return skew, vv.assemble(L.reshape(nt, 2 * n, 2 * n))


def divergence_reaction_matrix(w, space):
    """``(0.5 div(w) phi_j, phi_i)``: the difference between skew and plain modes."""
    wv, wg = _coarse_field(w, space)
    W = space.weights()
    vals, _ = space.velocity_tables()
    div = wg[..., 0, 0] + wg[..., 1, 1]
    react = 0.5 * np.einsum("tq,qi,qj->tij", W * div, vals, vals)
    return _pattern(space, "vv").assemble(_vectorize(react))


# analytic data is integrated with its own rule: exact for polynomial data of
# degree <= 14 against quadratic test functions
LOAD_QUADRATURE_DEGREE = 16


def load_from_values(space, fvals, rule=None):
    """Load vector ``(f, phi_i)`` from values of ``f`` at quadrature points, (nt, nq, 2)."""
    W = space.weights(rule)
    vals, _ = space.velocity_tables(rule)
    local = np.einsum("tq,qi,tqc->tic", W, vals, fvals)
    return np.bincount(space.cell_vdofs.ravel(), weights=local.ravel(),
                       minlength=space.velocity_dofs)


def quadrature_points(space, rule=None):
    rule = rule or space.rule
    key = ("qp", rule.degree)
    if key not in space._cache:
        space._cache[key] = physical_points(space.mesh, rule.points)
    return space._cache[key]


def load_vector(func, space, degree=LOAD_QUADRATURE_DEGREE):
    """``(func, phi_i)`` for an analytic vector field ``func(x, y) -> (..., 2)``."""
    rule = triangle_rule(degree)
    x = quadrature_points(space, rule)
    return load_from_values(space, func(x[..., 0], x[..., 1]), rule)


def convective_load(w, space, form="skew"):
    """``(F(w, w), phi_i)`` (``skew``) or ``((w . grad) w, phi_i)`` (``plain``) on ``space``."""
    wv, wg = _coarse_field(w, space)
    conv = np.einsum("tqd,tqcd->tqc", wv, wg)
    if form == "skew":
        div = wg[..., 0, 0] + wg[..., 1, 1]
        conv = conv + 0.5 * div[..., None] * wv
    elif form != "plain":
        raise ValueError("unknown form {!r}".format(form))
    return load_from_values(space, conv)


def trilinear_b(u, v, w):
    """``b(u, v, w) = ((u . grad) v + 0.5 div(u) v, w)``.

    ``v`` and ``w`` must share a space; ``u`` may be on an ancestor space.
    """
    for f in (u, v, w):
        if f.kind != "velocity":
            raise SpaceMismatchError("trilinear_b takes velocity functions")
    if v.space is not w.space:
        raise SpaceMismatchError("v and w must live on the same space")
    space = v.space
    uv, ug = _coarse_field(u, space)
    _, vg = velocity_field(v)
    wv, _ = velocity_field(w)
    vv, _ = velocity_field(v)
    div = ug[..., 0, 0] + ug[..., 1, 1]
    F = np.einsum("tqd,tqcd->tqc", uv, vg) + 0.5 * div[..., None] * vv
    return float(np.einsum("tq,tqc,tqc->", space.weights(), F, wv))


def h1_norm(u):
    """Full H1 norm of a discrete velocity via the assembled mass and stiffness."""
    ops = assemble_operators(u.space)
    c = u.coefficients
    return float(np.sqrt(c @ (ops.M @ c) + c @ (ops.A @ c)))


def l2_norm(u):
    ops = assemble_operators(u.space)
    c = u.coefficients
    if u.kind == "velocity":
        return float(np.sqrt(c @ (ops.M @ c)))
    return float(np.sqrt(c @ (ops.Mp @ c)))


def discrete_leray_projection(g, space, gauge="lagrange_mean"):
    """L2-orthogonal projection of ``g(x, y)`` onto the discretely divergence-free velocities.

    Solves ``(u, phi) - (lam, div phi) = (g, phi)``, ``(div u, q) = 0`` over the
    free velocity dofs.
    """
    from .saddle import SaddleSystem, saddle_ordering, solve_saddle

    ops = assemble_operators(space)
    rhs = load_vector(g, space)[space.free_dofs]
    sys = SaddleSystem(K=ops.M_free, B=ops.B_free, rhs_u=rhs,
                       rhs_p=np.zeros(space.pressure_dofs),
                       mean_weights=ops.pressure_mean_weights, gauge=gauge,
                       ordering=saddle_ordering(space, gauge))
    uf, _ = solve_saddle(sys)
    c = np.zeros(space.velocity_dofs)
    c[space.free_dofs] = uf
    return FEFunction(space, "velocity", c)
