"""Unit-cell correctors and the effective tensors A (diffusivity) and B (permeability).

Both cell problems live on the periodic fluid part of one unit cell:

* scalar correctors ``chi_i``: harmonic, mean-free, with the flux of
  ``chi_i + y_i`` through the obstacle boundary equal to zero;
* Stokes correctors ``(omega^i, pi^i)``: ``-Lap omega + grad pi = e^i``,
  ``div omega = 0``, no slip on the obstacle.

``A_ij`` averages ``grad psi_i . grad psi_j`` with ``psi_i = y_i + chi_i``;
``B_ij`` averages ``grad omega^i : grad omega^j``.  The mean form
``K_ij = <e^j . omega^i>`` equals ``B`` up to the discrete divergence residual.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any, Optional

import numpy as np

from .geometry import ObstacleShape, PerforatedGrid, analytic_theta, build_unit_cell_grid
from .linalg import SolveConfig, cg_solve, spd_factor, stokes_saddle_solve
from .staggered import StaggeredOps

DEFAULT_CELL_SOLVER = SolveConfig(rel_tol=1e-10)


class CellProblemError(RuntimeError):
    pass


class DegenerateCell(CellProblemError):
    pass


class IncompatibleRHS(CellProblemError):
    pass


class InvariantViolation(CellProblemError):
    pass


@dataclass
class CellSolution:
    grid: PerforatedGrid
    chi: Optional[tuple[np.ndarray, np.ndarray]] = None
    omega: Optional[tuple[np.ndarray, np.ndarray]] = None
    pi: Optional[tuple[np.ndarray, np.ndarray]] = None


@dataclass
class EffectiveTensors:
    theta: float
    a: np.ndarray
    b: Optional[np.ndarray]
    b_alt: Optional[np.ndarray]
    omega_mean: Optional[np.ndarray]
    n: int
    shape: ObstacleShape
    theta_analytic: float = 1.0
    diagnostics: dict[str, float] = field(default_factory=dict)

    def to_dict(self) -> dict[str, Any]:
        def mat(x):
            return None if x is None else [[float(v) for v in row] for row in x]
        return {"theta": self.theta, "theta_analytic": self.theta_analytic,
                "A": mat(self.a), "B": mat(self.b), "B_alt": mat(self.b_alt),
                "omega_mean": mat(self.omega_mean), "n": self.n,
                "shape": self.shape.to_dict(), "diagnostics": dict(self.diagnostics)}

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> EffectiveTensors:
        def arr(x):
            return None if x is None else np.array(x, dtype=float)
        return cls(theta=d["theta"], a=arr(d["A"]), b=arr(d.get("B")),
                   b_alt=arr(d.get("B_alt")), omega_mean=arr(d.get("omega_mean")),
                   n=int(d["n"]), shape=ObstacleShape.from_dict(d["shape"]),
                   theta_analytic=d.get("theta_analytic", d["theta"]),
                   diagnostics=dict(d.get("diagnostics", {})))


def scalar_cell_rhs(ops: StaggeredOps) -> tuple[np.ndarray, np.ndarray]:
    h = ops.grid.h
    nx, ny = ops.solid_face_normals()
    return -nx / h, -ny / h


def solve_scalar_cell(grid: PerforatedGrid,
                      cfg: SolveConfig = DEFAULT_CELL_SOLVER) -> tuple[np.ndarray, np.ndarray]:
    """Periodic correctors chi_1, chi_2 on the fluid cells (fluid-mean zero)."""
    ops = StaggeredOps(grid)
    K = (-ops.cell_laplacian).tocsr()
    out = []
    for b in scalar_cell_rhs(ops):
        if abs(b.sum()) > 1e-12 * (np.abs(b).sum() + 1.0):
            raise IncompatibleRHS(f"scalar cell right side has mean {b.mean():.3e}")
        if not b.any():
            out.append(np.zeros(ops.np))
            continue
        chi = cg_solve(K, b, cfg.with_(nullspace="constants"))
        out.append(chi - chi.mean())
    return out[0], out[1]


def psi_face_gradients(grid: PerforatedGrid, chi: tuple[np.ndarray, np.ndarray]):
    """Normal difference quotients of psi_i = y_i + chi_i on FLUID_FLUID faces.

    Returns ``{axis: (dpsi_1, dpsi_2)}`` with one entry per face normal to
    ``axis``.
    """
    ops = StaggeredOps(grid)
    h = grid.h
    out = {}
    for axis, (a, b, _, _) in enumerate(ops.fluid_face_pairs()):
        grads = []
        for i in range(2):
            linear = 1.0 if i == axis else 0.0
            grads.append(linear + (chi[i][b] - chi[i][a]) / h)
        out[axis] = tuple(grads)
    return out


def assemble_a(grid: PerforatedGrid, chi: tuple[np.ndarray, np.ndarray],
               diagnostics: Optional[dict] = None) -> np.ndarray:
    grads = psi_face_gradients(grid, chi)
    a = np.zeros((2, 2))
    for i in range(2):
        for j in range(2):
            a[i, j] = sum(float(grads[k][i] @ grads[k][j]) for k in (0, 1))
    a /= grid.n * grid.n
    if diagnostics is not None:
        diagnostics["a_asymmetry"] = _asymmetry(a)
    return 0.5 * (a + a.T)


def _asymmetry(t: np.ndarray) -> float:
    scale = np.abs(t).max()
    return float(abs(t[0, 1] - t[1, 0]) / scale) if scale > 0 else 0.0


def solve_stokes_cell(grid: PerforatedGrid, cfg: SolveConfig = DEFAULT_CELL_SOLVER):
    """Periodic Stokes correctors ``omega^i`` (velocity unknowns) and mean-free ``pi^i``."""
    if grid.shape.is_none:
        raise DegenerateCell("the Stokes cell problem needs an obstacle")
    ops = StaggeredOps(grid)
    A = ops.velocity_laplacian
    inner = spd_factor(A)
    omegas, pis = [], []
    for i in range(2):
        f = np.zeros(ops.nu)
        if i == 0:
            f[:ops.nux] = 1.0
        else:
            f[ops.nux:] = 1.0
        u, p = stokes_saddle_solve(A, ops.divergence, f, cfg, inner=inner, h=grid.h)
        omegas.append(u)
        pis.append(p)
    return (omegas[0], omegas[1]), (pis[0], pis[1])


def assemble_b(grid: PerforatedGrid, omega: tuple[np.ndarray, np.ndarray],
               diagnostics: Optional[dict] = None):
    """Return ``(b, b_alt, omega_mean)``; ``b_alt`` is built from ``omega_mean``."""
    ops = StaggeredOps(grid)
    A = ops.velocity_laplacian
    cell_area = 1.0 / (grid.n * grid.n)
    b = np.array([[cell_area * float(omega[i] @ (A @ omega[j])) for j in range(2)]
                  for i in range(2)])
    omega_mean = np.array([[cell_area * float(omega[i][:ops.nux].sum()),
                            cell_area * float(omega[i][ops.nux:].sum())] for i in range(2)])
    b_alt = omega_mean.copy()
    if diagnostics is not None:
        diagnostics["b_asymmetry"] = _asymmetry(b)
        diagnostics["b_alt_asymmetry"] = _asymmetry(b_alt)
    return 0.5 * (b + b.T), b_alt, omega_mean


def compute_effective_tensors(shape: ObstacleShape, n: int,
                              cfg: SolveConfig = DEFAULT_CELL_SOLVER) -> EffectiveTensors:
    grid = build_unit_cell_grid(n, shape)
    diag: dict[str, float] = {}
    chi = solve_scalar_cell(grid, cfg)
    a = assemble_a(grid, chi, diag)
    if shape.is_none:
        return EffectiveTensors(theta=grid.theta_discrete, a=a, b=None, b_alt=None,
                                omega_mean=None, n=n, shape=shape,
                                theta_analytic=analytic_theta(shape), diagnostics=diag)
    omega, _ = solve_stokes_cell(grid, cfg)
    b, b_alt, omega_mean = assemble_b(grid, omega, diag)
    diag["b_vs_b_alt"] = float(np.abs(b - b_alt).max() / np.abs(b).max())
    t = EffectiveTensors(theta=grid.theta_discrete, a=a, b=b, b_alt=b_alt,
                         omega_mean=omega_mean, n=n, shape=shape,
                         theta_analytic=analytic_theta(shape), diagnostics=diag)
    check_invariants(t)
    return t


def check_invariants(t: EffectiveTensors) -> None:
    for name, m in (("A", t.a), ("B", t.b)):
        if m is None:
            continue
        if abs(m[0, 1] - m[1, 0]) > 1e-10:
            raise InvariantViolation(f"{name} not symmetric")
        if np.linalg.eigvalsh(m).min() <= 0.0:
            raise InvariantViolation(f"{name} not positive definite")
    if t.b is not None:
        if not np.array_equal(t.omega_mean, t.b_alt):
            raise InvariantViolation("omega_mean rows differ from B_alt rows")
        if np.abs(t.b - t.b_alt).max() > 1e-5 * np.abs(t.b).max():
            raise InvariantViolation("B and B_alt disagree beyond 1e-5 relative")


def richardson(values: list[float]) -> tuple[float, float]:
    """Extrapolate the last of three values on grids h, h/2, h/4.

    Returns ``(limit, observed_order)``.
    """
    v0, v1, v2 = values[-3:]
    d1, d2 = v1 - v0, v2 - v1
    if d2 == 0.0:
        return v2, math.inf
    order = math.log2(abs(d1 / d2))
    return v2 + d2 / (2.0 ** order - 1.0), order
