"""Convergence studies: mesh and time-step ladders, coarse/fine coupling, rates, reports."""

from __future__ import annotations

import csv
import io
import logging
import math
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np

from . import __version__
from .errors import ConfigError, SpaceMismatchError, TwoGridError
from .mesh import refine, unit_square_mesh
from .mms import error_norms, get_case
from .spaces import build_space, get_family
from .stepper import ALGORITHMS, SCHEMES, RunPlan, SchemeConfig, run_two_grid

log = logging.getLogger(__name__)

CSV_HEADER = ("h", "H", "dt", "vel_l2", "vel_h1", "p_l2", "wall_s")
ERROR_COLUMNS = ("vel_l2", "vel_h1", "p_l2")
COUPLING_EXPONENTS = {"h_half": 0.5, "h_two_thirds": 2.0 / 3.0, "h_three_quarters": 0.75}
DT_RULES = ("fixed", "proportional_to_h", "proportional_to_h_three_halves")
THREADS_ENV = "TWOGRID_THREADS"


def _is_dyadic(n):
    return n >= 1 and n & (n - 1) == 0


def parse_coupling(rule):
    """``'h_half'`` etc. -> ('power', alpha); ``'fixed_ratio:k'`` -> ('ratio', k)."""
    if rule in COUPLING_EXPONENTS:
        return "power", COUPLING_EXPONENTS[rule]
    if isinstance(rule, str) and rule.startswith("fixed_ratio"):
        _, _, k = rule.partition(":")
        try:
            k = int(k)
        except ValueError:
            raise ConfigError("fixed_ratio needs an integer level count, e.g. 'fixed_ratio:2'") from None
        if k < 0:
            raise ConfigError("fixed_ratio level count must be >= 0")
        return "ratio", k
    raise ConfigError("unknown coupling rule {!r}".format(rule))


def couple_H(n_fine, rule, base=1):
    """Coarse subdivision count paired with fine ``n_fine`` under ``rule``.

    Meshes exist only at ``base * 2**j``. Power rules ``H* = h**alpha`` (with
    ``h = 1/n``) snap to the coarsest such mesh whose size ``1/n`` is at most
    ``H*``; ``fixed_ratio:k`` goes exactly ``k`` levels down.
    """
    if n_fine % base or not _is_dyadic(n_fine // base):
        raise ConfigError("fine n={} is not on the chain {}*2^j".format(n_fine, base))
    kind, val = parse_coupling(rule)
    level = int(round(math.log2(n_fine // base)))
    if kind == "ratio":
        if val > level:
            raise ConfigError("nesting chain too short: n={} has only {} coarser levels, "
                              "{} requested".format(n_fine, level, val))
        return n_fine >> val
    target = n_fine ** val * (1.0 - 1e-12)  # need n_c >= n^alpha
    n_c = n_fine
    while n_c // 2 >= target and n_c // 2 >= base and n_c % 2 == 0:
        n_c //= 2
    if n_c < target:
        raise ConfigError("nesting chain too short for n={} under {}".format(n_fine, rule))
    return n_c


def steps_for(n, dt_rule, T):
    """Number of time steps for a fine mesh with ``n`` subdivisions."""
    kind, _, arg = str(dt_rule).partition(":")
    if kind == "fixed":
        try:
            N = int(arg)
        except ValueError:
            raise ConfigError("fixed dt rule needs a step count, e.g. 'fixed:16'") from None
    elif kind == "proportional_to_h":
        N = n
    elif kind == "proportional_to_h_three_halves":
        N = int(math.ceil(n ** 1.5 - 1e-9))
    else:
        raise ConfigError("unknown dt rule {!r}; choose from {}".format(dt_rule, DT_RULES))
    if N < 1:
        raise ConfigError("dt rule gives no time steps")
    return N


@dataclass
class StudyPlan:
    algorithm: str = "galerkin_only"
    family: str = "taylor_hood_2"
    case: str = "polystream"
    levels: tuple = (8, 16, 32)
    coupling: str = "h_half"
    scheme: str = "bdf2"
    dt_rule: str = "proportional_to_h"
    T: float = 0.5
    out_csv: Optional[str] = None
    out_svg: Optional[str] = None
    fine_convection: str = "plain"

    def __post_init__(self):
        self.levels = tuple(int(n) for n in self.levels)
        if self.algorithm not in ALGORITHMS:
            raise ConfigError("algorithm must be one of {}".format(ALGORITHMS))
        if self.scheme not in SCHEMES:
            raise ConfigError("scheme must be one of {}".format(SCHEMES))
        try:
            get_family(self.family)
        except SpaceMismatchError as exc:
            raise ConfigError(str(exc)) from None
        get_case(self.case)
        if not self.levels:
            raise ConfigError("levels must not be empty")
        if any(b <= a for a, b in zip(self.levels, self.levels[1:])):
            raise ConfigError("levels must be strictly increasing")
        if not self.T > 0:
            raise ConfigError("T must be positive")
        parse_coupling(self.coupling)
        for n in self.levels:
            steps_for(n, self.dt_rule, self.T)
            if self.algorithm != "galerkin_only":
                couple_H(n, self.coupling, self.base)

    @property
    def base(self):
        """Coarsest mesh of the chain: the largest odd factor shared by every level."""
        g = 0
        for n in self.levels:
            g = math.gcd(g, n)
        while g % 2 == 0:
            g //= 2
        return g


PLAN_KEYS = ("algorithm", "family", "case", "levels", "coupling", "scheme", "dt_rule", "T",
             "out_csv", "out_svg")


def load_plan(path):
    """Read a TOML plan; keys may sit at top level or under a ``[study]`` table."""
    import tomli

    with open(path, "rb") as fh:
        try:
            data = tomli.load(fh)
        except tomli.TOMLDecodeError as exc:
            raise ConfigError("cannot parse plan {}: {}".format(path, exc)) from None
    if "study" in data and isinstance(data["study"], dict):
        data = data["study"]
    extra = set(data) - set(PLAN_KEYS)
    if extra:
        raise ConfigError("unknown plan keys: {}".format(", ".join(sorted(extra))))
    missing = [k for k in ("algorithm", "family", "case", "levels") if k not in data]
    if missing:
        raise ConfigError("plan is missing keys: {}".format(", ".join(missing)))
    base = os.path.dirname(os.path.abspath(path))
    for key in ("out_csv", "out_svg"):
        if data.get(key):
            data[key] = os.path.join(base, data[key])
    try:
        return StudyPlan(**data)
    except TypeError as exc:
        raise ConfigError(str(exc)) from None


@dataclass
class StudyRow:
    n: int
    n_coarse: int
    h: float
    H: float
    dt: float
    vel_l2: float
    vel_h1: float
    p_l2: float
    wall_s: float


@dataclass
class StudyReport:
    plan: StudyPlan
    rows: list = field(default_factory=list)
    rates: dict = field(default_factory=dict)
    version: str = __version__

    def column(self, name):
        return np.array([getattr(r, name) for r in self.rows])


def estimate_rates(errors, sizes):
    """Least-squares slope of ``log(error)`` against ``log(size)``."""
    e = np.asarray(errors, dtype=float)
    s = np.asarray(sizes, dtype=float)
    if e.shape != s.shape or e.ndim != 1 or e.size < 2:
        raise ValueError("need two equally long sequences of at least 2 values")
    if not (np.all(e > 0) and np.all(s > 0)) or not np.all(np.isfinite(e)):
        raise ValueError("errors and sizes must be positive and finite")
    if np.any(np.diff(s) >= 0):
        raise ValueError("sizes must be strictly decreasing")
    x, y = np.log(s), np.log(e)
    if e.size == 2:
        return float((y[1] - y[0]) / (x[1] - x[0]))
    x0 = x - x.mean()
    return float(x0 @ (y - y.mean()) / (x0 @ x0))


def run_cell(plan, n):
    """One study cell: build both meshes, run, return a :class:`StudyRow`."""
    N = steps_for(n, plan.dt_rule, plan.T)
    cfg = SchemeConfig.from_steps(plan.scheme, plan.T, N, fine_convection=plan.fine_convection)
    galerkin = plan.algorithm == "galerkin_only"
    n_c = n if galerkin else couple_H(n, plan.coupling, plan.base)
    t0 = time.perf_counter()
    coarse_mesh = unit_square_mesh(n_c)
    coarse = build_space(coarse_mesh, plan.family)
    fine = None
    if not galerkin:
        fine = build_space(refine(coarse_mesh, int(round(math.log2(n // n_c)))), plan.family)
    final = run_two_grid(RunPlan(plan.algorithm, coarse, fine, cfg, plan.case))[-1]
    if galerkin:
        u, p = final.coarse_u, final.coarse_p
    else:
        u, p = final.fine_u, final.fine_p
    err = error_norms(u, p, plan.case, final.t)
    wall = time.perf_counter() - t0
    log.info("cell n=%d H=1/%d N=%d: %s (%.2fs)", n, n_c, N, err, wall)
    row = StudyRow(n, n_c, 1.0 / n, 1.0 / n_c, cfg.dt, err["vel_l2"], err["vel_h1"],
                   err["p_l2_quotient"], wall)
    bad = [k for k in ERROR_COLUMNS if not np.isfinite(getattr(row, k))]
    if bad:
        raise TwoGridError("cell n={} produced non-finite {}".format(n, bad))
    return row


def _threads(serial):
    if serial:
        return 1
    try:
        return max(1, int(os.environ.get(THREADS_ENV, "1")))
    except ValueError:
        raise ConfigError("{} must be an integer".format(THREADS_ENV)) from None


def run_convergence_study(plan, serial=False):
    """Run every level of ``plan`` and collect errors and observed rates.

    Cells run concurrently when ``TWOGRID_THREADS`` > 1 and ``serial`` is
    false; with ``serial`` the wall times are recorded as 0 so that reruns give
    byte-identical CSV files.
    """
    def cell(n):
        try:
            return run_cell(plan, n)
        except TwoGridError as exc:
            exc.args = ("study cell n={}: {}".format(n, exc.args[0] if exc.args else exc),)
            raise

    workers = _threads(serial)
    if workers > 1 and len(plan.levels) > 1:
        with ThreadPoolExecutor(workers) as pool:
            rows = list(pool.map(cell, plan.levels))
    else:
        rows = [cell(n) for n in plan.levels]
    if serial:
        for r in rows:
            r.wall_s = 0.0
    report = StudyReport(plan, rows)
    if len(rows) >= 3:
        h = report.column("h")
        report.rates = {k: estimate_rates(report.column(k), h) for k in ERROR_COLUMNS}
    return report


def _fmt(x):
    return "{:.12g}".format(x)


def report_csv(report):
    out = io.StringIO()
    w = csv.writer(out, lineterminator="\n")
    w.writerow(CSV_HEADER)
    for r in report.rows:
        w.writerow([_fmt(getattr(r, k)) for k in ("h", "H", "dt", "vel_l2", "vel_h1", "p_l2", "wall_s")])
    if report.rates:
        out.write("# rates," + ",".join("{}={}".format(k, _fmt(report.rates[k]))
                                        for k in ERROR_COLUMNS) + "\n")
    return out.getvalue()


def read_csv(path):
    """Rows of an emitted CSV as dicts of floats, plus the rates comment (or {})."""
    rows, rates = [], {}
    with open(path) as fh:
        lines = fh.read().splitlines()
    header = lines[0].split(",")
    for line in lines[1:]:
        if line.startswith("# rates,"):
            for item in line[len("# rates,"):].split(","):
                k, _, v = item.partition("=")
                rates[k] = float(v)
        elif line:
            rows.append(dict(zip(header, map(float, line.split(",")))))
    return rows, rates


def _svg(report, path):
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    h = report.column("h")
    fig, ax = plt.subplots(figsize=(5, 4))
    for k in ERROR_COLUMNS:
        ax.loglog(h, report.column(k), "o-", label=k)
    if h.size:
        # reference slopes anchored at the coarsest row of the H1 column
        e0 = report.column("vel_h1")[0]
        for p in (1, 2, 3):
            ax.loglog(h, e0 * (h / h[0]) ** p, ":", color="gray", linewidth=0.8)
            ax.annotate("h^{}".format(p), (h[-1], e0 * (h[-1] / h[0]) ** p), fontsize=7,
                        color="gray")
    ax.set_xlabel("h")
    ax.set_ylabel("error at T")
    ax.set_title("{} / {}".format(report.plan.algorithm, report.plan.family))
    ax.legend()
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)


def emit_report(report, fmt, path):
    """Write ``report`` as ``csv`` or ``svg_plot`` to ``path``."""
    if fmt == "csv":
        with open(path, "w") as fh:
            fh.write(report_csv(report))
    elif fmt in ("svg", "svg_plot"):
        _svg(report, path)
    else:
        raise ValueError("unknown report format {!r}".format(fmt))
    return path


def plan_echo(plan):
    return {k: v for k, v in asdict(plan).items()}
