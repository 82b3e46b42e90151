"""Coupled Stokes / director time stepping on the perforated domain.

Each step re-solves the quasi-static Stokes system for ``(u, p)`` from the
current director, then advances ``d`` by an IMEX step: explicit upwind
transport, explicit cubic reaction, implicit diffusion.  Directors are
stored as arrays of shape ``(2, n_fluid)``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, NamedTuple, Optional

import numpy as np
import scipy.sparse as sp

from .expr import ZERO, VectorExpr
from .geometry import GridSpec, PerforatedGrid, build_perforated_grid
from .linalg import SolveConfig, cg_solve, spd_factor, stokes_saddle_solve
from .staggered import StaggeredOps, _shift

DIRECTOR_SOLVER = SolveConfig(rel_tol=1e-12)


class MaxPrincipleViolation(RuntimeError):
    pass


class InitialDataError(ValueError):
    pass


@dataclass(frozen=True)
class SimConfig:
    grid: GridSpec
    t_end: float
    dt: float = 0.0
    forcing_f: VectorExpr = ZERO
    forcing_h: VectorExpr = ZERO
    d_init: VectorExpr = VectorExpr("1", "0")
    solver: SolveConfig = SolveConfig()
    snapshot_times: Optional[tuple[float, ...]] = None
    director_solver: SolveConfig = DIRECTOR_SOLVER
    # sparse LU for inner velocity solves and implicit diffusion; CG otherwise
    direct: bool = True
    # apply F_eps = F / eps and H_eps = eps H
    scale_forcing: bool = True

    def __post_init__(self) -> None:
        if not self.t_end > 0.0:
            raise ValueError("t_end must be positive")
        if self.dt < 0.0:
            raise ValueError("dt must be >= 0 (0 selects the automatic step)")

    def snapshots(self) -> tuple[float, ...]:
        if self.snapshot_times is not None:
            return tuple(self.snapshot_times)
        return tuple(float(t) for t in np.linspace(0.0, self.t_end, 11))


@dataclass
class SimState:
    t: float
    u: np.ndarray
    p: np.ndarray
    d: np.ndarray


@dataclass
class EnergyLedger:
    e_initial: float
    e_current: float
    dissipation_accum: float = 0.0
    work_accum: float = 0.0
    slack: float = 0.0
    min_slack: float = math.inf
    history: list[dict] = field(default_factory=list)
    dt: float = 0.0
    steps: int = 0
    max_abs_d: float = 0.0
    max_divergence: float = 0.0

    def scale(self) -> float:
        return abs(self.e_initial) + abs(self.work_accum) + 1.0

    def record(self, t: float, max_abs_d: float, norm_u: float) -> None:
        self.history.append(dict(t=t, e_current=self.e_current,
                                 dissipation_accum=self.dissipation_accum,
                                 work_accum=self.work_accum, slack=self.slack,
                                 max_abs_d=max_abs_d, norm_u=norm_u))


@dataclass
class PressureExtensionField:
    values: np.ndarray
    rule_tag: str = "cell-average fill"


class SimResult(NamedTuple):
    snapshots: list
    ledger: EnergyLedger
    extensions: list


# ---- discrete building blocks ----------------------------------------------

def cell_gradient(ops: StaggeredOps, v: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Centred cell gradient, one-sided where a neighbour is missing."""
    g = ops.grid
    v = np.asarray(v, dtype=float)
    ii, jj = np.nonzero(g.fluid)
    out = []
    for axis in (0, 1):
        fw, _ = _shift(ops.p_idx, ops.p_idx, axis, 1, g.periodic)
        bw, _ = _shift(ops.p_idx, ops.p_idx, axis, -1, g.periodic)
        f, b = fw[ii, jj], bw[ii, jj]
        hf, hb = f >= 0, b >= 0
        vf = np.where(hf, v[np.maximum(f, 0)], v)
        vb = np.where(hb, v[np.maximum(b, 0)], v)
        span = (hf.astype(float) + hb.astype(float)) * g.h
        out.append(np.divide(vf - vb, span, out=np.zeros_like(v), where=span > 0))
    return out[0], out[1]


def cells_to_faces(ops: StaggeredOps, fx: np.ndarray, fy: np.ndarray) -> np.ndarray:
    """Average a cell vector field onto the velocity unknowns."""
    (ax, bx, _, _), (ay, by, _, _) = ops.fluid_face_pairs()
    return np.concatenate([0.5 * (fx[ax] + fx[bx]), 0.5 * (fy[ay] + fy[by])])


def sample_faces(ops: StaggeredOps, v: VectorExpr, t: float, scale: float = 1.0) -> np.ndarray:
    """Evaluate a vector expression at the centres of the velocity unknowns."""
    g = ops.grid
    xx, xy = g.xface_centers()
    yx, yy = g.yface_centers()
    mx, my = ops.ux_idx >= 0, ops.uy_idx >= 0
    f1, _ = v(xx[mx], xy[mx], t)
    _, f2 = v(yx[my], yy[my], t)
    return scale * np.concatenate([f1, f2])


def sample_cells(grid: PerforatedGrid, v: VectorExpr, t: float = 0.0) -> np.ndarray:
    x, y = grid.cell_centers()
    a, b = v(x[grid.fluid], y[grid.fluid], t)
    return np.stack([a, b])


def reaction(d: np.ndarray) -> np.ndarray:
    return ((d * d).sum(axis=0) - 1.0) * d


def director_force(ops: StaggeredOps, d: np.ndarray) -> np.ndarray:
    """``-(grad d)^T Lap d`` averaged onto the velocity unknowns."""
    L = ops.cell_laplacian
    fx = np.zeros(ops.np)
    fy = np.zeros(ops.np)
    for k in range(2):
        lap = L @ d[k]
        gx, gy = cell_gradient(ops, d[k])
        fx -= gx * lap
        fy -= gy * lap
    return cells_to_faces(ops, fx, fy)


def stokes_rhs(grid: PerforatedGrid, d: np.ndarray, f_eps: np.ndarray, h_eps: np.ndarray,
               ops: Optional[StaggeredOps] = None) -> np.ndarray:
    """Momentum right side ``-(grad d)^T Lap d + F_eps - Lap H_eps`` on the velocity unknowns.

    ``f_eps`` and ``h_eps`` are face vectors on the velocity unknowns, so
    ``H_eps`` vanishes on every obstacle and wall face.
    """
    ops = ops or StaggeredOps(grid)
    return director_force(ops, d) + f_eps + ops.velocity_laplacian @ h_eps


class StokesSolver:
    """Saddle solves on one grid with a cached inner solver and warm-started pressure."""

    def __init__(self, grid: PerforatedGrid, cfg: SolveConfig = SolveConfig(),
                 direct: bool = True, ops: Optional[StaggeredOps] = None):
        self.grid = grid
        self.ops = ops or StaggeredOps(grid)
        self.cfg = cfg
        self.inner = spd_factor(self.ops.velocity_laplacian) if direct else None
        self.p_last: Optional[np.ndarray] = None
        self.stats: dict = {}

    def solve(self, rhs: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        self.stats = {}
        u, p = stokes_saddle_solve(self.ops.velocity_laplacian, self.ops.divergence, rhs,
                                   self.cfg, inner=self.inner, p0=self.p_last,
                                   h=self.grid.h, stats=self.stats)
        self.p_last = p
        return u, p


def stokes_solve_perforated(grid: PerforatedGrid, rhs: np.ndarray,
                            cfg: SolveConfig = SolveConfig(),
                            solver: Optional[StokesSolver] = None):
    solver = solver or StokesSolver(grid, cfg)
    return solver.solve(rhs)


def upwind_advection(ops: StaggeredOps, u: np.ndarray, v: np.ndarray) -> np.ndarray:
    """First-order upwind ``u . grad v`` at fluid cells; missing neighbours copy the cell."""
    g = ops.grid
    ucx, ucy = ops.velocity_to_cells(u)
    ii, jj = np.nonzero(g.fluid)
    out = np.zeros_like(v)
    for axis, uc in ((0, ucx[ii, jj]), (1, ucy[ii, jj])):
        fw, _ = _shift(ops.p_idx, ops.p_idx, axis, 1, g.periodic)
        bw, _ = _shift(ops.p_idx, ops.p_idx, axis, -1, g.periodic)
        f, b = fw[ii, jj], bw[ii, jj]
        vf = np.where(f >= 0, v[np.maximum(f, 0)], v)
        vb = np.where(b >= 0, v[np.maximum(b, 0)], v)
        out += np.where(uc > 0, uc * (v - vb), uc * (vf - v)) / g.h
    return out


def velocity_sup(ops: StaggeredOps, u: np.ndarray) -> float:
    return float(np.abs(u).max()) if u.size else 0.0


def auto_dt(h: float, u_sup: float) -> float:
    return min(0.5 * h / max(1.0, u_sup), 0.1, 0.25)


def implicit_diffusion_solver(ops: StaggeredOps, dt: float, cfg: SolveConfig = DIRECTOR_SOLVER,
                              direct: bool = True) -> Callable:
    """Solver for ``(I - dt Lap) x = b`` called as ``solve(b, x0)``."""
    M = (sp.identity(ops.np, format="csr") - dt * ops.cell_laplacian).tocsr()
    if direct:
        lu = spd_factor(M)
        return lambda b, x0=None: lu(b)
    return lambda b, x0=None: cg_solve(M, b, cfg, x0=x0)


def director_step(grid: PerforatedGrid, state: SimState, dt: float, u: np.ndarray,
                  ops: Optional[StaggeredOps] = None, solve: Optional[Callable] = None,
                  cfg: SolveConfig = DIRECTOR_SOLVER) -> np.ndarray:
    """One IMEX step: transport, then reaction, then implicit diffusion.

    Transport and reaction are applied in sequence so each stays a
    contraction of the unit ball for admissible ``dt``; the implicit heat
    step is an averaging operator and keeps ``|d| <= 1``.
    """
    ops = ops or StaggeredOps(grid)
    solve = solve or implicit_diffusion_solver(ops, dt, cfg, direct=False)
    d = state.d
    star = np.stack([d[k] - dt * upwind_advection(ops, u, d[k]) for k in range(2)])
    star = star - dt * reaction(star)
    return np.stack([solve(star[k], d[k]) for k in range(2)])


# ---- pressure ----------------------------------------------------------------

def extend_pressure(grid: PerforatedGrid, p: np.ndarray) -> PressureExtensionField:
    """Fill each obstacle with its unit cell's fluid mean of ``p``, then remove the Omega mean."""
    P = np.zeros(grid.fluid.shape)
    P[grid.fluid] = p
    fluid4 = grid.unit_cell_view(grid.fluid)
    P4 = grid.unit_cell_view(P)
    means = P4.sum(axis=(1, 3)) / fluid4.sum(axis=(1, 3))
    fill = np.broadcast_to(means[:, None, :, None], P4.shape)
    P4 = np.where(fluid4, P4, fill)
    P = P4.reshape(grid.fluid.shape)
    return PressureExtensionField(values=P - P.mean())


def grad_energy_density(grid: PerforatedGrid, d: np.ndarray,
                        ops: Optional[StaggeredOps] = None) -> np.ndarray:
    """``|grad d|^2 / 2`` at fluid cells from the centred cell gradient."""
    ops = ops or StaggeredOps(grid)
    total = np.zeros(ops.np)
    for k in range(2):
        gx, gy = cell_gradient(ops, d[k])
        total += gx * gx + gy * gy
    return 0.5 * total


def pressure_forms(grid: PerforatedGrid, p: np.ndarray, d: np.ndarray,
                   inverse: bool = False, ops: Optional[StaggeredOps] = None) -> np.ndarray:
    """Map ``p`` to ``p - |grad d|^2/2 + mean``; ``inverse=True`` maps back."""
    e = grad_energy_density(grid, d, ops)
    shift = e - e.mean()
    return p + shift if inverse else p - shift


# ---- energy ------------------------------------------------------------------

def director_energy(ops: StaggeredOps, d: np.ndarray) -> float:
    """Face-based ``int |grad d|^2/2 + (|d|^2 - 1)^2/4`` over the fluid region."""
    h2 = ops.grid.h ** 2
    grad = sum(-0.5 * h2 * float(d[k] @ (ops.cell_laplacian @ d[k])) for k in range(2))
    pot = 0.25 * h2 * float((((d * d).sum(axis=0) - 1.0) ** 2).sum())
    return grad + pot


def energy_ledger_update(ledger: EnergyLedger, state: SimState, dt: float,
                         f_eps: np.ndarray, h_eps: np.ndarray,
                         ops: StaggeredOps) -> EnergyLedger:
    """Accumulate one step; ``state.u`` drove the step and ``state.d`` is the new director."""
    h2 = ops.grid.h ** 2
    A = ops.velocity_laplacian
    Au = A @ state.u
    grad_u2 = h2 * float(state.u @ Au)
    d = state.d
    resid = np.stack([ops.cell_laplacian @ d[k] for k in range(2)]) - reaction(d)
    ledger.dissipation_accum += dt * (grad_u2 + h2 * float((resid * resid).sum()))
    ledger.work_accum += dt * h2 * (float(f_eps @ state.u) + float(h_eps @ Au))
    ledger.e_current = director_energy(ops, d)
    ledger.slack = (ledger.e_initial + ledger.work_accum
                    - ledger.e_current - ledger.dissipation_accum)
    ledger.min_slack = min(ledger.min_slack, ledger.slack)
    return ledger


# ---- driver --------------------------------------------------------------------

def _forcing(cfg: SimConfig, ops: StaggeredOps, t: float):
    eps = ops.grid.eps
    sf = 1.0 / eps if cfg.scale_forcing else 1.0
    sh = eps if cfg.scale_forcing else 1.0
    return sample_faces(ops, cfg.forcing_f, t, sf), sample_faces(ops, cfg.forcing_h, t, sh)


def max_abs(d: np.ndarray) -> float:
    return float(np.sqrt((d * d).sum(axis=0)).max()) if d.size else 0.0


def run_simulation(cfg: SimConfig, grid: Optional[PerforatedGrid] = None) -> SimResult:
    grid = grid or build_perforated_grid(cfg.grid)
    ops = StaggeredOps(grid)
    d = sample_cells(grid, cfg.d_init)
    if max_abs(d) > 1.0 + 1e-12:
        raise InitialDataError(f"initial director exceeds unit length ({max_abs(d):.6g})")
    stokes = StokesSolver(grid, cfg.solver, cfg.direct, ops)
    steady = not (cfg.forcing_f.time_dependent or cfg.forcing_h.time_dependent)

    def flow(t, d, forcing=None):
        f_eps, h_eps = forcing if forcing is not None else _forcing(cfg, ops, t)
        u, p = stokes.solve(stokes_rhs(grid, d, f_eps, h_eps, ops))
        return u, p, f_eps, h_eps

    t = 0.0
    u, p, f_eps, h_eps = flow(t, d)
    forcing = (f_eps, h_eps) if steady else None
    dt = cfg.dt if cfg.dt > 0 else auto_dt(grid.h, velocity_sup(ops, u))
    dt = cfg.t_end / max(1, math.ceil(cfg.t_end / dt - 1e-9))
    solve = implicit_diffusion_solver(ops, dt, cfg.director_solver, cfg.direct)

    e0 = director_energy(ops, d)
    ledger = EnergyLedger(e_initial=e0, e_current=e0, dt=dt)
    ledger.max_abs_d = max_abs(d)
    ledger.record(0.0, ledger.max_abs_d, grid.h * float(np.linalg.norm(u)))
    pending = sorted(cfg.snapshots())
    snapshots, extensions = [], []

    def observe(t, u, p, d, dt):
        ledger.max_divergence = max(ledger.max_divergence,
                                    float(np.abs(ops.divergence @ u).max(initial=0.0)))
        # nearest step: take every pending time within half a step
        while pending and pending[0] <= t + 0.5 * dt + 1e-12:
            pending.pop(0)
            if not snapshots or snapshots[-1].t != t:
                snapshots.append(SimState(t=t, u=u.copy(), p=p.copy(), d=d.copy()))
                extensions.append(extend_pressure(grid, p))

    while True:
        observe(t, u, p, d, dt)
        if t >= cfg.t_end:
            break
        if cfg.dt == 0 and dt > auto_dt(grid.h, velocity_sup(ops, u)) * (1 + 1e-12):
            # velocity outgrew the transport bound: shrink the step for the rest of the run
            bound = auto_dt(grid.h, velocity_sup(ops, u))
            dt = (cfg.t_end - t) / math.ceil((cfg.t_end - t) / bound - 1e-9)
            solve = implicit_diffusion_solver(ops, dt, cfg.director_solver, cfg.direct)
            ledger.dt = dt
        d_new = director_step(grid, SimState(t=t, u=u, p=p, d=d), dt, u, ops, solve)
        m = max_abs(d_new)
        ledger.max_abs_d = max(ledger.max_abs_d, m)
        if m > 1.0 + 1e-6:
            raise MaxPrincipleViolation(f"|d| reached {m:.9g} at t={t + dt:.6g}")
        energy_ledger_update(ledger, SimState(t=t + dt, u=u, p=p, d=d_new), dt, f_eps, h_eps, ops)
        d = d_new
        ledger.steps += 1
        t = t + dt
        if t > cfg.t_end - 0.5 * dt:
            t = cfg.t_end
        u, p, f_eps, h_eps = flow(t, d, forcing)
        ledger.record(t, m, grid.h * float(np.linalg.norm(u)))
    return SimResult(snapshots, ledger, extensions)
