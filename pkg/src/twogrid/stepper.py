"""Time stepping for the coarse Galerkin level and the linearised fine level.

One step of a two-grid run first advances the coarse nonlinear Galerkin
solution, then solves a single linear problem on the fine mesh in which the
new coarse velocity linearises the convection:

* ``alg1`` (Oseen): fine convection ``(u_H . grad) u_h`` (or its skew form);
* ``alg2`` (one Newton step): ``b(u_H, u_h, .) + b(u_h, u_H, .)`` on the left
  and ``b(u_H, u_H, .)`` added to the load;
* ``dpp`` (dynamical postprocessing): a Stokes step with ``-(u_H . grad) u_H``
  in the load.

The fine level never feeds back into the coarse one. Time integration is
backward Euler or BDF2, whose first step is backward Euler on each level.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from . import assembly
from .errors import ConfigError, NewtonConvergenceError, SpaceMismatchError
from .mms import get_case
from .saddle import SaddleFactorization, saddle_ordering
from .spaces import FEFunction

log = logging.getLogger(__name__)

SCHEMES = ("backward_euler", "bdf2")
ALGORITHMS = ("galerkin_only", "alg1", "alg2", "dpp")
BDF2 = (1.5, -2.0, 0.5)


@dataclass(frozen=True)
class SchemeConfig:
    scheme: str = "bdf2"
    dt: float = 0.05
    T: float = 0.5
    newton_tol: float = 1e-12
    newton_max_iters: int = 25
    fine_convection: str = "plain"
    gauge: str = "lagrange_mean"

    def __post_init__(self):
        if self.scheme not in SCHEMES:
            raise ConfigError("scheme must be one of {}".format(SCHEMES))
        if self.fine_convection not in ("plain", "skew"):
            raise ConfigError("fine_convection must be 'plain' or 'skew'")
        if not self.dt > 0:
            raise ConfigError("dt must be positive")
        n = self.n_steps
        if self.scheme == "bdf2" and n < 2:
            raise ConfigError("bdf2 needs at least two steps")

    @property
    def n_steps(self):
        n = int(round(self.T / self.dt))
        if n < 0 or abs(n * self.dt - self.T) > 1e-9 * max(1.0, abs(self.T)):
            raise ConfigError("T = {} is not an integer multiple of dt = {}".format(self.T, self.dt))
        return n

    @classmethod
    def from_steps(cls, scheme, T, N, **kw):
        if N < 1:
            raise ConfigError("number of steps must be positive")
        return cls(scheme=scheme, dt=T / N, T=T, **kw)


@dataclass
class TwoGridState:
    """Coarse and fine discrete fields plus the one extra level of BDF2 history.

    The coarse level runs at most one step ahead of the fine one within a step.
    """

    t_coarse: float
    t_fine: float
    coarse_u: FEFunction
    coarse_p: Optional[FEFunction] = None
    fine_u: Optional[FEFunction] = None
    fine_p: Optional[FEFunction] = None
    coarse_prev: Optional[FEFunction] = None
    fine_prev: Optional[FEFunction] = None
    step: int = 0

    @property
    def t(self):
        return self.t_fine if self.fine_u is not None else self.t_coarse

    def copy(self):
        def c(f):
            return None if f is None else f.copy()
        return TwoGridState(self.t_coarse, self.t_fine, c(self.coarse_u), c(self.coarse_p),
                            c(self.fine_u), c(self.fine_p), c(self.coarse_prev),
                            c(self.fine_prev), self.step)


def init_state(u0, coarse_space, fine_space=None, gauge="lagrange_mean"):
    """Discrete Leray projections of ``u0(x, y)`` onto both levels, at t = 0."""
    if fine_space is not None and not fine_space.mesh.is_descendant_of(coarse_space.mesh):
        raise SpaceMismatchError("fine mesh must be a refinement of the coarse mesh")
    uc = assembly.discrete_leray_projection(u0, coarse_space, gauge)
    uf = None if fine_space is None else assembly.discrete_leray_projection(u0, fine_space, gauge)
    return TwoGridState(0.0, 0.0, uc, fine_u=uf)


def _time_weights(cfg, now, prev):
    """Leading coefficient, history combination and extrapolated guess (coefficient arrays)."""
    if cfg.scheme == "bdf2" and prev is not None:
        a0, a1, a2 = BDF2
        return a0, -(a1 * now + a2 * prev), 2.0 * now - prev
    return 1.0, now.copy(), now.copy()


def _forcing_load(f, t, space):
    return assembly.load_vector(lambda x, y: f(t, x, y), space)[space.free_dofs]


def _with_free(space, free_values):
    c = np.zeros(space.velocity_dofs)
    c[space.free_dofs] = free_values
    return FEFunction(space, "velocity", c)


def coarse_step(state, cfg, f):
    """Advance the coarse Galerkin solution by one step with Newton's method.

    Solves ``alpha M u + dt (A u + N(u) u - B^T p) = M h + dt F`` with the skew
    convection ``N``, ``h`` the BDF history. Returns a new state.
    """
    sp = state.coarse_u.space
    ops = assembly.assemble_operators(sp)
    free = sp.free_dofs
    dt = cfg.dt
    t_new = state.t_coarse + dt
    now = state.coarse_u.coefficients
    prev = None if state.coarse_prev is None else state.coarse_prev.coefficients
    alpha, hist, guess = _time_weights(cfg, now, prev)
    M, A, B = ops.M_free, ops.A_free, ops.B_free
    rhs = M @ hist[free] + dt * _forcing_load(f, t_new, sp)
    scale = max(np.linalg.norm(rhs), np.finfo(float).tiny)

    def residual(uf, ph):
        u = _with_free(sp, uf)
        conv = assembly.convective_load(u, sp, "skew")[free]
        ru = alpha * (M @ uf) + dt * (A @ uf + conv) - B.T @ ph - rhs
        rp = B @ uf
        return ru, rp, float(np.sqrt(ru @ ru + rp @ rp))

    uf = guess[free].copy()
    ph = np.zeros(sp.pressure_dofs) if state.coarse_p is None else dt * state.coarse_p.coefficients
    ru, rp, res = residual(uf, ph)
    base = alpha * M + dt * A
    for it in range(1, cfg.newton_max_iters + 1):
        N1, N2 = assembly.convection_matrix(_with_free(sp, uf), sp, "newton_pair")
        J = base + dt * ops.free(N1 + N2)
        du, dp = SaddleFactorization(J, B, ops.pressure_mean_weights, cfg.gauge,
                                     saddle_ordering(sp, cfg.gauge)).solve(-ru, -rp)
        step = 1.0
        for _ in range(6):
            cand = residual(uf + step * du, ph + step * dp)
            if cand[2] <= res or step <= 1.0 / 32:
                break
            step *= 0.5
        uf, ph = uf + step * du, ph + step * dp
        ru, rp, res = cand
        log.debug("coarse Newton t=%.4g it=%d residual=%.3e step=%g", t_new, it, res / scale, step)
        if res <= cfg.newton_tol * scale:
            break
    else:
        raise NewtonConvergenceError(
            "coarse Newton did not converge at t={:.6g}: relative residual {:.3e}".format(
                t_new, res / scale), residual=res / scale)

    new = state.copy()
    new.coarse_prev = state.coarse_u.copy()
    new.coarse_u = _with_free(sp, uf)
    new.coarse_p = FEFunction(sp, "pressure", ph / dt)
    new.t_coarse = t_new
    return new


def _fine_linear_step(state, cfg, f, extra_matrix, extra_load, cache_key=None):
    sp = state.fine_u.space
    ops = assembly.assemble_operators(sp)
    free = sp.free_dofs
    dt = cfg.dt
    if abs(state.t_coarse - (state.t_fine + dt)) > 1e-9 * max(1.0, state.t_coarse):
        raise ValueError("coarse level must be advanced to t_fine + dt before the fine step")
    t_new = state.t_fine + dt
    now = state.fine_u.coefficients
    prev = None if state.fine_prev is None else state.fine_prev.coefficients
    alpha, hist, _ = _time_weights(cfg, now, prev)
    M, A, B = ops.M_free, ops.A_free, ops.B_free
    rhs = M @ hist[free] + dt * _forcing_load(f, t_new, sp)
    if extra_load is not None:
        rhs = rhs + dt * extra_load[free]
    fac = None
    if cache_key is not None:
        key = ("stokes_fac", alpha, dt, cfg.gauge)
        fac = sp._cache.get(key)
    if fac is None:
        K = alpha * M + dt * A
        if extra_matrix is not None:
            K = K + dt * ops.free(extra_matrix)
        fac = SaddleFactorization(K, B, ops.pressure_mean_weights, cfg.gauge,
                                  saddle_ordering(sp, cfg.gauge))
        if cache_key is not None:
            sp._cache[key] = fac
    uf, ph = fac.solve(rhs)
    new = state.copy()
    new.fine_prev = state.fine_u.copy()
    new.fine_u = _with_free(sp, uf)
    new.fine_p = FEFunction(sp, "pressure", ph / dt)
    new.t_fine = t_new
    return new


def fine_step_oseen(state, cfg, f):
    """Oseen step linearised about the coarse velocity at the new time level."""
    N = assembly.convection_matrix(state.coarse_u, state.fine_u.space, cfg.fine_convection)
    return _fine_linear_step(state, cfg, f, N, None)


def fine_step_newton(state, cfg, f):
    """One Newton step on the fine mesh starting from the coarse velocity."""
    sp = state.fine_u.space
    N1, N2 = assembly.convection_matrix(state.coarse_u, sp, "newton_pair")
    load = assembly.convective_load(state.coarse_u, sp, "skew")
    return _fine_linear_step(state, cfg, f, N1 + N2, load)


def fine_step_dpp(state, cfg, f):
    """Stokes step with the coarse convection ``(u_H . grad) u_H`` moved to the load."""
    load = -assembly.convective_load(state.coarse_u, state.fine_u.space, "plain")
    return _fine_linear_step(state, cfg, f, None, load, cache_key=True)


FINE_STEPS = {"alg1": fine_step_oseen, "alg2": fine_step_newton, "dpp": fine_step_dpp}


@dataclass
class RunPlan:
    """Everything needed for one simulation.

    ``forcing`` and ``u0`` default to the manufactured case; ``snapshot_steps``
    lists the step indices to record (default: only the final one).
    """

    algorithm: str
    coarse_space: object
    fine_space: object = None
    cfg: SchemeConfig = field(default_factory=SchemeConfig)
    case: object = "polystream"
    forcing: Optional[Callable] = None
    u0: Optional[Callable] = None
    snapshot_steps: Optional[tuple] = None


def run_two_grid(plan):
    """Advance coarse then fine level step by step; return recorded state snapshots."""
    if plan.algorithm not in ALGORITHMS:
        raise ConfigError("algorithm must be one of {}".format(ALGORITHMS))
    if plan.algorithm != "galerkin_only" and plan.fine_space is None:
        raise ConfigError("two-grid algorithms need a fine space")
    case = get_case(plan.case)
    f = plan.forcing or case.f
    u0 = plan.u0 or case.u0
    cfg = plan.cfg
    n_steps = cfg.n_steps
    fine_space = None if plan.algorithm == "galerkin_only" else plan.fine_space
    want = {n_steps} if plan.snapshot_steps is None else set(plan.snapshot_steps)

    state = init_state(u0, plan.coarse_space, fine_space, cfg.gauge)
    snaps = []
    if 0 in want:
        snaps.append(state.copy())
    fine_step = FINE_STEPS.get(plan.algorithm)
    for n in range(1, n_steps + 1):
        state = coarse_step(state, cfg, f)
        if fine_step is not None:
            state = fine_step(state, cfg, f)
        state.step = n
        if n in want:
            snaps.append(state.copy())
    return snaps
