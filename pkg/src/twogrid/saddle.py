"""Saddle-point solves for the Stokes/Oseen/Newton steps and the inf-sup estimator.

The block system on the free velocity dofs reads::

    K u - B^T p = rhs_u
       -B u     = -rhs_p

Pressures are only defined up to a constant. With ``lagrange_mean`` one extra
row and column enforce zero mean; with ``pin_and_shift`` the first pressure
dof is fixed and the mean is subtracted afterwards. Either way the returned
pressure has zero mean.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Optional

import numpy as np
import scipy.linalg
import scipy.sparse as sps
import scipy.sparse.linalg as spla

from .assembly import assemble_operators
from .errors import SolverError

log = logging.getLogger(__name__)

RTOL = 1e-10
GAUGES = ("lagrange_mean", "pin_and_shift")


@dataclass
class SaddleSystem:
    K: sps.spmatrix
    B: sps.spmatrix
    rhs_u: np.ndarray
    rhs_p: np.ndarray
    mean_weights: np.ndarray
    gauge: str = "lagrange_mean"
    ordering: Optional[np.ndarray] = None


def nested_dissection(graph, coords, leaf=64):
    """Geometric nested-dissection ordering of a symmetric sparsity graph.

    Nodes are split at the median coordinate along the longer extent; nodes of
    the first half adjacent to the second half form the separator, which is
    numbered after both halves.
    """
    graph = sps.csr_matrix(graph)
    n = graph.shape[0]
    stack = [(np.arange(n), 0)]
    # explicit depth-first stack; a block tagged 1 is a separator, emitted as-is
    blocks = []
    while stack:
        idx, tag = stack.pop()
        if tag == 1 or idx.size <= leaf:
            blocks.append(idx)
            continue
        c = coords[idx]
        axis = int(np.argmax(c.max(axis=0) - c.min(axis=0)))
        key = c[:, axis]
        left = key < np.median(key)
        if left.all() or not left.any():
            left = np.arange(idx.size) < idx.size // 2
        L, R = idx[left], idx[~left]
        in_right = np.zeros(n)
        in_right[R] = 1.0
        touch = (graph[L] @ in_right) > 0
        # popped in reverse: L first, then R, then the separator
        stack.append((L[touch], 1))
        stack.append((R, 0))
        stack.append((L[~touch], 0))
    return np.concatenate(blocks) if blocks else np.arange(0)


def saddle_ordering(space, gauge="lagrange_mean"):
    """Fill-reducing ordering of the saddle matrix for ``space`` (cached per space)."""
    key = ("saddle_ordering", gauge)
    if key not in space._cache:
        ops = assemble_operators(space)
        free = space.free_dofs
        K = abs(ops.M_free) + abs(ops.A_free)
        B = abs(ops.B_free)
        pressures = np.arange(space.pressure_dofs)
        if gauge == "pin_and_shift":
            B = B[1:]
            pressures = pressures[1:]
        G = sps.bmat([[K, B.T], [B, None]], format="csr")
        coords = np.vstack([space.node_coords[free // 2], space.mesh.vertices[pressures]])
        perm = nested_dissection(G, coords)
        if gauge == "lagrange_mean":
            perm = np.concatenate([perm, [G.shape[0]]])
        space._cache[key] = perm
    return space._cache[key]


class SaddleFactorization:
    """Sparse LU factorization of one saddle matrix, reusable for many right-hand sides.

    ``ordering`` is a symmetric permutation of the full saddle matrix, e.g. from
    :func:`saddle_ordering`; without it SuperLU picks its own column ordering.
    """

    def __init__(self, K, B, mean_weights, gauge="lagrange_mean", ordering=None):
        if gauge not in GAUGES:
            raise ValueError("unknown gauge {!r}".format(gauge))
        K = sps.csr_matrix(K)
        B = sps.csr_matrix(B)
        for name, mat in (("K", K), ("B", B)):
            if not np.all(np.isfinite(mat.data)):
                raise SolverError("non-finite entries in block {}".format(name), block=name)
        self.K, self.B, self.gauge = K, B, gauge
        self.m = np.asarray(mean_weights, dtype=float)
        self.nu, self.np_ = K.shape[0], B.shape[0]
        if gauge == "lagrange_mean":
            m = sps.csr_matrix(self.m[:, None])
            kkt = sps.bmat([[K, -B.T, None], [-B, None, m], [None, m.T, None]], format="csr")
        else:
            Bp = B[1:]
            kkt = sps.bmat([[K, -Bp.T], [-Bp, None]], format="csr")
        self.kkt = kkt
        self._abs = None
        self.perm = ordering
        self.pivot_thresh = 0.0
        try:
            self._factor()
        except RuntimeError:
            self._refactor_with_pivoting()

    def _factor(self):
        # Diagonal pivoting keeps the nested-dissection fill; solve() falls back
        # to threshold pivoting if iterative refinement cannot recover accuracy.
        opts = {"SymmetricMode": True}
        if self.perm is None:
            self.lu = spla.splu(self.kkt.tocsc(), permc_spec="MMD_AT_PLUS_A",
                                diag_pivot_thresh=self.pivot_thresh, options=opts)
        else:
            P = self.kkt[self.perm][:, self.perm].tocsc()
            self.lu = spla.splu(P, permc_spec="NATURAL", diag_pivot_thresh=self.pivot_thresh,
                                options=opts)

    def _refactor_with_pivoting(self):
        self.pivot_thresh = 0.1
        try:
            self._factor()
        except RuntimeError as exc:
            block = "K" if _is_singular(self.K) else "B (pressure coupling)"
            raise SolverError("singular saddle matrix, failing block {}: {}".format(block, exc),
                              block=block) from None

    def _lu_solve(self, rhs):
        if self.perm is None:
            return self.lu.solve(rhs)
        x = np.empty_like(rhs)
        x[self.perm] = self.lu.solve(rhs[self.perm])
        return x

    def _scale(self, rhs, x):
        if self._abs is None:
            self._abs = abs(self.kkt)
        return np.linalg.norm(rhs) + np.linalg.norm(self._abs @ np.abs(x))

    def _refine(self, rhs, rtol):
        """LU solve plus up to four refinement steps; None if still inaccurate."""
        x = self._lu_solve(rhs)
        for _ in range(4):
            r = rhs - self.kkt @ x
            if np.all(np.isfinite(x)) and np.linalg.norm(r) <= rtol * self._scale(rhs, x):
                return x
            x = x + self._lu_solve(r)
        self._last = x
        return None

    def solve(self, rhs_u, rhs_p=None, rtol=RTOL):
        rhs_u = np.asarray(rhs_u, dtype=float)
        rhs_p = np.zeros(self.np_) if rhs_p is None else np.asarray(rhs_p, dtype=float)
        if not (np.all(np.isfinite(rhs_u)) and np.all(np.isfinite(rhs_p))):
            raise SolverError("non-finite right-hand side", block="rhs")
        # constants are orthogonal to the range of B on free dofs; drop that component
        rhs_p = rhs_p - rhs_p.mean()
        if self.gauge == "lagrange_mean":
            rhs = np.concatenate([rhs_u, -rhs_p, [0.0]])
        else:
            rhs = np.concatenate([rhs_u, -rhs_p[1:]])
        x = self._refine(rhs, rtol)
        if x is None:
            if self.pivot_thresh == 0.0:
                log.debug("saddle solve: refinement stalled, refactoring with pivoting")
                self._refactor_with_pivoting()
                x = self._refine(rhs, rtol)
            if x is None:
                x = self._last
        u = x[:self.nu]
        if self.gauge == "lagrange_mean":
            p = x[self.nu:self.nu + self.np_]
        else:
            p = np.concatenate([[0.0], x[self.nu:]])
        p = p - (self.m @ p) / self.m.sum()
        # backward-error scale: equals ||rhs|| up to a constant unless the product cancels
        scale = self._scale(rhs, x)
        ru = rhs_u - (self.K @ u - self.B.T @ p)
        rp = rhs_p - self.B @ u
        for block, r in (("velocity", ru), ("divergence", rp)):
            if np.linalg.norm(r) > rtol * scale:
                raise SolverError("saddle solve residual above tolerance in {} block".format(block),
                                  block=block, residual=float(np.linalg.norm(r)))
        if not (np.all(np.isfinite(u)) and np.all(np.isfinite(p))):
            raise SolverError("non-finite solution", block="solution")
        return u, p


def _is_singular(K):
    try:
        spla.splu(sps.csc_matrix(K))
        return False
    except RuntimeError:
        return True


def solve_saddle(sys, rtol=RTOL):
    """Solve a :class:`SaddleSystem`; returns free velocity coefficients and a zero-mean pressure."""
    fac = SaddleFactorization(sys.K, sys.B, sys.mean_weights, sys.gauge, sys.ordering)
    return fac.solve(sys.rhs_u, sys.rhs_p, rtol=rtol)


def infsup_estimate(space):
    """Discrete inf-sup constant of a mixed space.

    Square root of the smallest eigenvalue of ``B A^{-1} B^T q = lam Mp q`` on
    pressures orthogonal to constants, with ``A`` the velocity stiffness on the
    free dofs. Dense; meant for small meshes.
    """
    ops = assemble_operators(space)
    A = sps.csc_matrix(ops.A_free)
    B = ops.B_free
    X = spla.splu(A).solve(B.T.toarray())
    S = B @ X
    S = 0.5 * (S + S.T)
    Mp = ops.Mp.toarray()
    Z = scipy.linalg.null_space(ops.pressure_mean_weights[None, :])
    try:
        lam = scipy.linalg.eigh(Z.T @ S @ Z, Z.T @ Mp @ Z, eigvals_only=True,
                                subset_by_index=[0, 0])
    except (np.linalg.LinAlgError, ValueError) as exc:
        raise SolverError("inf-sup eigenvalue solve failed: {}".format(exc)) from None
    return float(np.sqrt(max(lam[0], 0.0)))
