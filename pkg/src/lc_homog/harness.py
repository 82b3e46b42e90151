"""Cell averages, zero extensions, weak-convergence proxies and the eps-sweep."""
from __future__ import annotations

import logging
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Any, Optional, Sequence, Union

import numpy as np

from .cell_problems import DegenerateCell, EffectiveTensors, compute_effective_tensors
from .expr import ZERO, VectorExpr
from .geometry import GridSpec, ObstacleShape, PerforatedGrid, build_perforated_grid
from .limit import bilinear_sample, build_g, darcy_solve, run_effective_director
from .linalg import SolveConfig
from .perforated import SimConfig, StaggeredOps, cell_gradient, run_simulation

log = logging.getLogger(__name__)

DEFAULT_TEST_FUNCTIONS = (("1", "1"), ("sin(pi*x)*sin(pi*y)", "sin(pi*x)*sin(pi*y)"),
                          ("x*y", "x*y"))


class ZeroGradient(ValueError):
    pass


class NoValidPairs(ValueError):
    pass


@dataclass
class AveragedField:
    """One value (or vector) per unit cell, ``values`` of shape ``(m, m)`` or ``(2, m, m)``."""

    values: np.ndarray
    n: int

    def full(self) -> np.ndarray:
        """Broadcast to the cell grid, piecewise constant on every unit cell."""
        rep = np.ones((self.n, self.n))
        if self.values.ndim == 2:
            return np.kron(self.values, rep)
        return np.stack([np.kron(v, rep) for v in self.values])


def _as_cells(f: np.ndarray, grid: PerforatedGrid) -> np.ndarray:
    """Accept fluid vectors ``(n_fluid,)`` / ``(2, n_fluid)`` or cell arrays; return cell arrays."""
    f = np.asarray(f, dtype=float)
    N = grid.N
    if f.shape[-2:] == (N, N):
        return f
    out = np.zeros(f.shape[:-1] + (N, N))
    out[..., grid.fluid] = f
    return out


def zero_extend(f: np.ndarray, grid: PerforatedGrid) -> np.ndarray:
    """Copy fluid values, zero on obstacle cells."""
    return np.where(grid.fluid, _as_cells(f, grid), 0.0)


def cell_average(f: np.ndarray, grid: PerforatedGrid, full_cell: bool = False) -> AveragedField:
    """Fluid mean per unit cell (or the mean over the whole cell with ``full_cell``)."""
    cells = zero_extend(f, grid)
    m, n = grid.m, grid.n
    fl = grid.fluid.reshape(m, n, m, n)
    count = float(n * n) if full_cell else fl.sum(axis=(1, 3))

    def avg(a):
        return a.reshape(m, n, m, n).sum(axis=(1, 3)) / count

    vals = avg(cells) if cells.ndim == 2 else np.stack([avg(c) for c in cells])
    return AveragedField(values=vals, n=n)


def pairing(fields: Sequence[np.ndarray], phi: VectorExpr, times: Sequence[float]) -> float:
    """Trapezoid-in-time, midpoint-in-space quadrature of ``int int phi . f``.

    ``fields`` are cell arrays ``(N, N)`` (paired with the first component of
    ``phi``) or ``(2, N, N)``.
    """
    vals = []
    for f, t in zip(fields, times):
        f = np.asarray(f, dtype=float)
        N = f.shape[-1]
        c = (np.arange(N) + 0.5) / N
        x, y = np.meshgrid(c, c, indexing="ij")
        p1, p2 = phi(x, y, t)
        s = p1 * f if f.ndim == 2 else p1 * f[0] + p2 * f[1]
        vals.append(float(s.sum()) / N ** 2)
    return trapezoid(vals, times)


def trapezoid(vals: Sequence[float], times: Sequence[float]) -> float:
    if len(vals) == 1:
        return 0.0
    return float(np.trapezoid(vals, times)) if hasattr(np, "trapezoid") else float(np.trapz(vals, times))


def _dirichlet_differences(a: np.ndarray, h: float) -> list[np.ndarray]:
    """Difference quotients of ``a`` padded with zeros in both directions."""
    p = np.pad(a, 1)
    return [np.diff(p, axis=0)[:, 1:-1] / h, np.diff(p, axis=1)[1:-1, :] / h]


def poincare_ratio(f: Union[np.ndarray, tuple], grid: PerforatedGrid, q: float = 2.0) -> float:
    """``||f||_q / (eps ||grad f||_q)`` for a field vanishing off the fluid.

    ``f`` is either a cell array (zero on obstacle cells) or a pair of face
    arrays ``(ux, uy)`` as produced for velocities.  Gradients are zero-padded
    difference quotients, so the homogeneous boundary values enter.
    """
    h = grid.h
    comps = [np.asarray(c, dtype=float) for c in f] if isinstance(f, tuple) else [zero_extend(f, grid)]
    num = sum(float((np.abs(c) ** q).sum()) for c in comps) * h * h
    den = sum(float((np.abs(dq) ** q).sum()) for c in comps
              for dq in _dirichlet_differences(c, h)) * h * h
    den = den ** (1.0 / q)
    if den < 1e-14:
        raise ZeroGradient("gradient vanishes")
    return num ** (1.0 / q) / (grid.eps * den)


def contiguous_mean_ratio(f: np.ndarray, grid: PerforatedGrid, s: float = 2.0) -> float:
    """Max over side-sharing unit-cell pairs of ``|mean_k - mean_j| / (eps^(1-2/s) ||grad f||_{L^s(Z)})``.

    ``f`` is a fluid vector ``(n_fluid,)`` or ``(2, n_fluid)``; gradients are
    the centred cell gradients, ``Z`` the fluid part of the two cells.
    """
    if s not in (1, 2, 4):
        raise ValueError("s must be 1, 2 or 4")
    f = np.asarray(f, dtype=float)
    if f.shape[-1] != grid.n_fluid:
        f = f[..., grid.fluid]
    comps = f.reshape(-1, grid.n_fluid)
    ops = StaggeredOps(grid)
    g2 = np.zeros(grid.n_fluid)
    for c in comps:
        gx, gy = cell_gradient(ops, c)
        g2 += gx * gx + gy * gy
    m, n, h = grid.m, grid.n, grid.h
    gs = np.zeros((grid.N, grid.N))
    gs[grid.fluid] = np.sqrt(g2) ** s
    local = gs.reshape(m, n, m, n).sum(axis=(1, 3)) * h * h
    means = np.stack([cell_average(c, grid).values for c in comps])
    scale = grid.eps ** (1.0 - 2.0 / s)
    best = None
    for di, dj in ((1, 0), (0, 1)):
        for k1 in range(m - di):
            for k2 in range(m - dj):
                den = scale * (local[k1, k2] + local[k1 + di, k2 + dj]) ** (1.0 / s)
                if den < 1e-14:
                    continue
                diff = float(np.linalg.norm(means[:, k1, k2] - means[:, k1 + di, k2 + dj]))
                r = diff / den
                best = r if best is None else max(best, r)
    if best is None:
        raise NoValidPairs("every adjacent pair has zero gradient")
    return float(best)


# ---- sweep -----------------------------------------------------------------

@dataclass(frozen=True)
class SweepConfig:
    eps_list: tuple[float, ...] = (1 / 4, 1 / 8, 1 / 16)
    n_per_cell: int = 16
    shape: ObstacleShape = ObstacleShape.disk(0.25)
    t_end: float = 0.1
    forcing_f: VectorExpr = VectorExpr("sin(2*pi*y)", "0")
    forcing_h: VectorExpr = ZERO
    d_init: VectorExpr = VectorExpr("cos(pi*x)", "sin(pi*x)")
    reference_grid_n: int = 256
    test_functions: tuple[VectorExpr, ...] = tuple(VectorExpr(*p) for p in DEFAULT_TEST_FUNCTIONS)
    n_snapshots: int = 11
    solver: SolveConfig = SolveConfig()
    threads: int = 1

    def __post_init__(self) -> None:
        eps = list(self.eps_list)
        if len(eps) < 3:
            raise ValueError("eps_list needs at least three values")
        if any(b >= a for a, b in zip(eps, eps[1:])):
            raise ValueError("eps_list must be strictly decreasing")
        for e in eps:
            m = 1.0 / e
            if abs(m - round(m)) > 1e-9 or round(m) < 2:
                raise ValueError(f"eps={e} is not 1/m with integer m >= 2")
        if self.n_snapshots < 2:
            raise ValueError("n_snapshots must be >= 2")

    @property
    def m_list(self) -> list[int]:
        return [int(round(1.0 / e)) for e in self.eps_list]


@dataclass
class SweepReport:
    records: list[dict[str, Any]] = field(default_factory=list)
    verdicts: dict[str, bool] = field(default_factory=dict)
    runtime: float = 0.0
    incomplete: bool = False
    error: Optional[str] = None
    tensors: Optional[dict] = None
    limit: dict[str, Any] = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return not self.incomplete and bool(self.verdicts) and all(self.verdicts.values())

    def to_dict(self) -> dict[str, Any]:
        return dict(records=self.records, verdicts=self.verdicts, runtime=self.runtime,
                    incomplete=self.incomplete, error=self.error, tensors=self.tensors,
                    limit=self.limit, passed=self.passed)


def _aligned_dt(t_end: float, h: float, n_intervals: int) -> float:
    """Automatic step shrunk so every snapshot time is hit exactly."""
    per = math.ceil(t_end / (n_intervals * 0.5 * h) - 1e-9)
    return t_end / (n_intervals * per)


def _within_factor(vals: Sequence[float], factor: float = 3.0) -> bool:
    v = [abs(x) for x in vals]
    return bool(min(v) > 0 and max(v) / min(v) <= factor)


def _strictly_decreasing(vals: Sequence[float]) -> bool:
    return all(b < a for a, b in zip(vals, vals[1:]))


def _limit_cells(ux: np.ndarray, uy: np.ndarray) -> np.ndarray:
    return np.stack([0.5 * (ux[:-1] + ux[1:]), 0.5 * (uy[:, :-1] + uy[:, 1:])])


def compute_limits(cfg: SweepConfig, tensors: EffectiveTensors, times: Sequence[float]):
    """Limit velocity (per time) and limit director on the reference grid."""
    N = cfg.reference_grid_n
    steady = not (cfg.forcing_f.time_dependent or cfg.forcing_h.time_dependent)
    u_lim = []
    darcy = None
    for t in times:
        if darcy is None or not steady:
            g = build_g(tensors, cfg.forcing_f, cfg.forcing_h, t, N)
            darcy = darcy_solve(tensors.b, g, N)
        u_lim.append(_limit_cells(*darcy.u))
    diag: dict = {}
    dt = _aligned_dt(cfg.t_end, 1.0 / N, cfg.n_snapshots - 1)
    states = run_effective_director(tensors.a, tensors.theta, cfg.d_init, cfg.t_end, dt, N,
                                    snapshot_times=times, diagnostics=diag)
    return u_lim, states, darcy, diag


def _sample(field_ref: np.ndarray, grid: PerforatedGrid) -> np.ndarray:
    x, y = grid.cell_centers()
    return np.stack([bilinear_sample(c, x, y) for c in field_ref])


def _l2(a: np.ndarray, h: float, mask: Optional[np.ndarray] = None) -> float:
    sq = (a * a).sum(axis=0) if a.ndim == 3 else a * a
    if mask is not None:
        sq = sq[mask]
    return math.sqrt(float(sq.sum()) * h * h)


def _lp(a: np.ndarray, h: float, p: float) -> float:
    return (float((np.abs(a) ** p).sum()) * h * h) ** (1.0 / p)


def measure_one(cfg: SweepConfig, m: int, tensors: EffectiveTensors, times: Sequence[float],
                u_lim: Sequence[np.ndarray], d_lim: Sequence[np.ndarray],
                limit_pairings: Sequence[float]) -> dict[str, Any]:
    t0 = time.perf_counter()
    grid = build_perforated_grid(GridSpec(m=m, n=cfg.n_per_cell, shape=cfg.shape))
    eps, h = grid.eps, grid.h
    dt = _aligned_dt(cfg.t_end, h, cfg.n_snapshots - 1)
    sim = SimConfig(grid=grid.spec, t_end=cfg.t_end, dt=dt, forcing_f=cfg.forcing_f,
                    forcing_h=cfg.forcing_h, d_init=cfg.d_init, solver=cfg.solver,
                    snapshot_times=tuple(times))
    snaps, ledger, exts = run_simulation(sim, grid)
    ops = StaggeredOps(grid)
    stimes = [s.t for s in snaps]
    x, y = grid.cell_centers()
    interior = (x > 0.1) & (x < 0.9) & (y > 0.1) & (y < 0.9)
    u_sq, u_err_sq, p_sq, d_errs, d_tilde = [], [], [], [], []
    for s, P, ul, dl in zip(snaps, exts, u_lim, d_lim):
        ux, uy = ops.velocity_to_faces(s.u)
        u_sq.append(h * h * float((ux * ux).sum() + (uy * uy).sum()))
        uc = np.stack(ops.velocity_to_cells(s.u)) / eps
        avg_u = cell_average(uc, grid, full_cell=True).full()
        u_err_sq.append(_l2(avg_u - _sample(ul, grid), h) ** 2)
        p_sq.append(_lp(P.values, h, 1.5) ** 2)
        avg_d = cell_average(s.d, grid).full()
        d_errs.append(_l2(avg_d - _sample(dl, grid), h, interior))
        d_tilde.append(zero_extend(s.d, grid))
    norm_u = math.sqrt(trapezoid(u_sq, stimes))
    last = snaps[-1]
    pair_err = [abs(pairing(d_tilde, phi, stimes) - tensors.theta * lp)
                for phi, lp in zip(cfg.test_functions, limit_pairings)]
    rec = dict(eps=eps, m=m, h=h, dt=ledger.dt, steps=ledger.steps,
               norm_u_tilde=norm_u, norm_u_tilde_over_eps=norm_u / eps,
               err_u_avg=math.sqrt(trapezoid(u_err_sq, stimes) / cfg.t_end),
               err_d_avg=max(d_errs),
               pairing_errors=pair_err,
               norm_epsP_Lp=eps * math.sqrt(trapezoid(p_sq, stimes)),
               poincare_ratio_u=poincare_ratio(ops.velocity_to_faces(last.u), grid, 2.0),
               mean_diff_ratio_d=contiguous_mean_ratio(last.d, grid, 2.0),
               energy_min_slack=ledger.min_slack,
               energy_scale=ledger.scale(),
               max_abs_d=ledger.max_abs_d,
               max_divergence=ledger.max_divergence,
               snapshot_times=stimes,
               runtime=time.perf_counter() - t0)
    log.info("eps=1/%d done in %.1fs", m, rec["runtime"])
    return rec


def run_sweep(cfg: SweepConfig, tensors: Optional[EffectiveTensors] = None) -> SweepReport:
    t0 = time.perf_counter()
    report = SweepReport()
    if cfg.shape.is_none:
        raise DegenerateCell("the sweep needs an obstacle (no permeability without one)")
    try:
        tensors = tensors or compute_effective_tensors(cfg.shape, cfg.n_per_cell)
        report.tensors = tensors.to_dict()
        times = [float(t) for t in np.linspace(0.0, cfg.t_end, cfg.n_snapshots)]
        u_lim, states, darcy, diag = compute_limits(cfg, tensors, times)
        d_lim = [s.d for s in states]
        ltimes = [s.t for s in states]
        limit_pairings = [pairing(d_lim, phi, ltimes) for phi in cfg.test_functions]
        report.limit = dict(darcy_residuals=darcy.residuals, director_dt=diag["dt"],
                            director_max_abs_d=diag["max_abs_d"],
                            pairings=limit_pairings, reference_grid_n=cfg.reference_grid_n)

        def job(m):
            return measure_one(cfg, m, tensors, times, u_lim, d_lim, limit_pairings)

        if cfg.threads > 1:
            with ThreadPoolExecutor(max_workers=cfg.threads) as pool:
                report.records = list(pool.map(job, cfg.m_list))
        else:
            report.records = [job(m) for m in cfg.m_list]
    except Exception as exc:  # partial report, flagged
        report.incomplete = True
        report.error = f"{type(exc).__name__}: {exc}"
        report.runtime = time.perf_counter() - t0
        log.error("sweep aborted: %s", report.error)
        raise SweepAborted(report) from exc
    report.verdicts = sweep_verdicts(report.records)
    report.runtime = time.perf_counter() - t0
    return report


class SweepAborted(RuntimeError):
    def __init__(self, report: SweepReport):
        self.report = report
        super().__init__(report.error)


def sweep_verdicts(records: Sequence[dict]) -> dict[str, bool]:
    col = lambda k: [r[k] for r in records]  # noqa: E731
    v = {
        "err_u_avg_decreasing": _strictly_decreasing(col("err_u_avg")),
        "err_d_avg_decreasing": _strictly_decreasing(col("err_d_avg")),
        "norm_u_over_eps_bounded": _within_factor(col("norm_u_tilde_over_eps")),
        "norm_epsP_bounded": _within_factor(col("norm_epsP_Lp")),
    }
    npair = len(records[0]["pairing_errors"]) if records else 0
    v["pairing_errors_decreasing"] = all(
        _strictly_decreasing([r["pairing_errors"][i] for r in records]) for i in range(npair))
    v["poincare_ratio_bounded"] = _within_factor(col("poincare_ratio_u"))
    v["mean_diff_ratio_bounded"] = _within_factor(col("mean_diff_ratio_d"))
    return {k: bool(x) for k, x in v.items()}
