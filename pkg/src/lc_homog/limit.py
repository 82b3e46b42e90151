"""Homogenised limit problems on the full square.

Darcy law ``u + B grad P = G``, ``div u = 0``, ``u . nu = 0`` and the
effective director flow ``d_t - div((1/theta) A grad d) = -(|d|^2 - 1) d``
with zero conormal flux.

Both use one symmetric anisotropic stencil.  Diagonal coefficients act on
face difference quotients; the off-diagonal coefficient acts at interior
grid vertices, where each gradient component is the mean of the two
incident face quotients.  At a wall vertex the normal quotient is not
available, so it is eliminated through the flux condition.  This turns
the wall-adjacent face coefficient into ``b11 - b12^2 / (2 b22)`` (and its
transpose) plus a data term, and makes constant ``G`` reproduce exactly.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import scipy.sparse as sp

from .cell_problems import EffectiveTensors
from .expr import VectorExpr
from .linalg import SolveConfig, cg_solve, spd_factor
from .perforated import MaxPrincipleViolation, auto_dt

DARCY_SOLVER = SolveConfig(rel_tol=1e-10)


class NotSPD(ValueError):
    pass


@dataclass
class DarcySolution:
    u: tuple[np.ndarray, np.ndarray]
    p_limit: np.ndarray
    g_used: tuple[np.ndarray, np.ndarray]
    residuals: dict[str, float] = field(default_factory=dict)


@dataclass
class LimitDirectorState:
    t: float
    d: np.ndarray  # (2, N, N)


def check_spd(b: np.ndarray) -> np.ndarray:
    b = np.asarray(b, dtype=float)
    if b.shape != (2, 2) or not np.allclose(b, b.T, rtol=0, atol=1e-12 * np.abs(b).max()):
        raise NotSPD("tensor must be a symmetric 2x2 matrix")
    try:
        np.linalg.cholesky(b)
    except np.linalg.LinAlgError as exc:
        raise NotSPD("tensor is not positive definite") from exc
    return 0.5 * (b + b.T)


def face_centres(N: int):
    h = 1.0 / N
    c = (np.arange(N) + 0.5) * h
    e = np.arange(N + 1) * h
    return np.meshgrid(e, c, indexing="ij"), np.meshgrid(c, e, indexing="ij")


class AnisotropicStencil:
    """Operators for a constant SPD tensor on an ``N x N`` cell grid."""

    def __init__(self, N: int, b: np.ndarray):
        self.N = N
        self.h = 1.0 / N
        self.b = check_spd(b)
        b11, b12, b22 = self.b[0, 0], self.b[0, 1], self.b[1, 1]
        n2 = N * N
        cell = np.arange(n2).reshape(N, N)
        inv_h = 1.0 / self.h
        # difference quotients on interior faces: x-faces i = 1..N-1, y-faces j = 1..N-1
        nf = (N - 1) * N
        r = np.arange(nf)
        self.dx = sp.csr_matrix((np.r_[np.full(nf, inv_h), np.full(nf, -inv_h)],
                                 (np.r_[r, r], np.r_[cell[1:].ravel(), cell[:-1].ravel()])),
                                shape=(nf, n2))
        self.dy = sp.csr_matrix((np.r_[np.full(nf, inv_h), np.full(nf, -inv_h)],
                                 (np.r_[r, r], np.r_[cell[:, 1:].ravel(), cell[:, :-1].ravel()])),
                                shape=(nf, n2))
        # interior vertices (i, j), i, j = 1..N-1; averaging maps from faces
        nv = (N - 1) ** 2
        vid = np.arange(nv).reshape(N - 1, N - 1)
        xf = np.arange(nf).reshape(N - 1, N)    # [i-1, j] for x-face i
        yf = np.arange(nf).reshape(N, N - 1)    # [i, j-1] for y-face j
        self.vx = sp.csr_matrix((np.full(2 * nv, 0.5),
                                 (np.r_[vid.ravel(), vid.ravel()],
                                  np.r_[xf[:, :-1].ravel(), xf[:, 1:].ravel()])),
                                shape=(nv, nf))
        self.vy = sp.csr_matrix((np.full(2 * nv, 0.5),
                                 (np.r_[vid.ravel(), vid.ravel()],
                                  np.r_[yf[:-1, :].ravel(), yf[1:, :].ravel()])),
                                shape=(nv, nf))
        # wall-adjacent faces lose part of their diagonal coefficient
        wx = np.zeros((N - 1, N))
        wx[:, 0] += 1
        wx[:, -1] += 1
        wy = np.zeros((N, N - 1))
        wy[0, :] += 1
        wy[-1, :] += 1
        self.wall_x = wx.ravel()
        self.wall_y = wy.ravel()
        self.coef_x = b11 - 0.5 * self.wall_x * b12 * b12 / b22
        self.coef_y = b22 - 0.5 * self.wall_y * b12 * b12 / b11
        self.cross_xy = (self.vx.T @ self.vy).tocsr()  # x-faces <- y-faces
        M = (self.dx.T @ sp.diags(self.coef_x) @ self.dx
             + self.dy.T @ sp.diags(self.coef_y) @ self.dy
             + b12 * (self.dx.T @ self.cross_xy @ self.dy
                      + self.dy.T @ self.cross_xy.T @ self.dx))
        M = sp.csr_matrix(M)
        M.sum_duplicates()
        M.eliminate_zeros()
        M.sort_indices()
        self.matrix = M  # symmetric positive semidefinite, kernel = constants

    def fluxes(self, P: np.ndarray, gx_wall: Optional[np.ndarray] = None,
               gy_wall: Optional[np.ndarray] = None) -> tuple[np.ndarray, np.ndarray]:
        """Discrete ``B grad P`` on interior faces, plus wall data terms if given."""
        b12 = self.b[0, 1]
        p = P.ravel()
        dxp, dyp = self.dx @ p, self.dy @ p
        fx = self.coef_x * dxp + b12 * (self.cross_xy @ dyp)
        fy = self.coef_y * dyp + b12 * (self.cross_xy.T @ dxp)
        if gx_wall is not None:
            fx = fx + gx_wall
            fy = fy + gy_wall
        return fx, fy

    def wall_data(self, gx: np.ndarray, gy: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Data terms from the flux condition at wall vertices.

        ``gx``, ``gy`` are full face arrays of shapes ``(N+1, N)`` and
        ``(N, N+1)``.  An x-face touching the bottom wall picks up
        ``b12 / (2 b22)`` times the normal data at that wall vertex, which is
        the mean of the two neighbouring boundary y-face values.
        """
        N = self.N
        b11, b12, b22 = self.b[0, 0], self.b[0, 1], self.b[1, 1]
        cx = np.zeros((N - 1, N))
        cy = np.zeros((N, N - 1))
        if b12 != 0.0:
            bottom = 0.5 * (gy[:-1, 0] + gy[1:, 0])   # vertices i = 1..N-1 on y = 0
            top = 0.5 * (gy[:-1, N] + gy[1:, N])
            cx[:, 0] += 0.5 * b12 / b22 * bottom
            cx[:, -1] += 0.5 * b12 / b22 * top
            left = 0.5 * (gx[0, :-1] + gx[0, 1:])      # vertices j = 1..N-1 on x = 0
            right = 0.5 * (gx[N, :-1] + gx[N, 1:])
            cy[0, :] += 0.5 * b12 / b11 * left
            cy[-1, :] += 0.5 * b12 / b11 * right
        return cx.ravel(), cy.ravel()


def build_g(tensors: EffectiveTensors, f: VectorExpr, h: VectorExpr, t: float, N: int):
    """``G_i = omega_mean[i] . F + H_i`` at x-faces (i = 1) and y-faces (i = 2)."""
    if tensors.omega_mean is None:
        raise ValueError("tensors carry no permeability data")
    m = tensors.omega_mean
    (xx, xy), (yx, yy) = face_centres(N)
    f1, f2 = f(xx, xy, t)
    h1, _ = h(xx, xy, t)
    gx = m[0, 0] * f1 + m[0, 1] * f2 + h1
    f1, f2 = f(yx, yy, t)
    _, h2 = h(yx, yy, t)
    gy = m[1, 0] * f1 + m[1, 1] * f2 + h2
    return gx, gy


def darcy_solve(b: np.ndarray, g: tuple[np.ndarray, np.ndarray], N: int,
                cfg: SolveConfig = DARCY_SOLVER,
                stencil: Optional[AnisotropicStencil] = None) -> DarcySolution:
    """Pressure form of the Darcy law; ``u = g - B grad P`` on interior faces, 0 on walls."""
    st = stencil or AnisotropicStencil(N, b)
    gx, gy = (np.asarray(v, dtype=float) for v in g)
    if gx.shape != (N + 1, N) or gy.shape != (N, N + 1):
        raise ValueError("g must be given on x-faces (N+1, N) and y-faces (N, N+1)")
    cx, cy = st.wall_data(gx, gy)
    gxi, gyi = gx[1:N].ravel(), gy[:, 1:N].ravel()
    rhs = st.dx.T @ (gxi - cx) + st.dy.T @ (gyi - cy)
    gnorm = float(np.sqrt((gx * gx).sum() + (gy * gy).sum()))
    rnorm = float(np.linalg.norm(rhs))
    # discrete Gauss identity: the assembled right side sums to zero
    compat = abs(float(rhs.sum())) * st.h ** 2
    stats: dict = {}
    if rnorm > 0.0:
        tol = cfg.rel_tol * min(1.0, gnorm / rnorm)
        p = cg_solve(st.matrix, rhs, cfg.with_(rel_tol=max(tol, 1e-15), nullspace="constants"),
                     stats=stats)
    else:
        p = np.zeros(N * N)
    p -= p.mean()
    fx, fy = st.fluxes(p, cx, cy)
    ux = np.zeros((N + 1, N))
    uy = np.zeros((N, N + 1))
    ux[1:N] = (gxi - fx).reshape(N - 1, N)
    uy[:, 1:N] = (gyi - fy).reshape(N, N - 1)
    div = (ux[1:] - ux[:-1] + uy[:, 1:] - uy[:, :-1]) / st.h
    res = dict(divergence_max=float(np.abs(div).max()), compatibility=compat,
               g_norm=gnorm, iterations=float(stats.get("iterations", 0)))
    return DarcySolution(u=(ux, uy), p_limit=p.reshape(N, N), g_used=(gx, gy), residuals=res)


# ---- effective director flow ------------------------------------------------

def lyapunov(st: AnisotropicStencil, d: np.ndarray) -> float:
    """``1/2 int K grad d : grad d + int (|d|^2 - 1)^2 / 4`` with ``K`` the stencil tensor."""
    h2 = st.h ** 2
    flat = d.reshape(2, -1)
    grad = 0.5 * h2 * sum(float(flat[k] @ (st.matrix @ flat[k])) for k in range(2))
    pot = 0.25 * h2 * float((((flat * flat).sum(axis=0) - 1.0) ** 2).sum())
    return grad + pot


def run_effective_director(a: np.ndarray, theta: float, d_in: VectorExpr, t_end: float,
                           dt: float, N: int, cfg: SolveConfig = SolveConfig(rel_tol=1e-12),
                           snapshot_times=None, direct: bool = True,
                           diagnostics: Optional[dict] = None) -> list[LimitDirectorState]:
    """IMEX stepping of the limit director: reaction explicit, anisotropic diffusion implicit.

    ``dt = 0`` selects the automatic step ``min(h/2, 0.1, 0.25)``.
    """
    if not 0.0 < theta <= 1.0:
        raise ValueError("theta must lie in (0, 1]")
    st = AnisotropicStencil(N, np.asarray(a, dtype=float) / theta)
    h = 1.0 / N
    c = (np.arange(N) + 0.5) * h
    x, y = np.meshgrid(c, c, indexing="ij")
    d = np.stack(d_in(x, y, 0.0)).reshape(2, -1)
    if float(np.sqrt((d * d).sum(axis=0)).max()) > 1.0 + 1e-12:
        raise ValueError("initial director exceeds unit length")
    if dt <= 0.0:
        dt = auto_dt(h, 0.0)
    steps = max(1, math.ceil(t_end / dt - 1e-9))
    dt = t_end / steps
    M = (sp.identity(N * N, format="csr") + dt * st.matrix).tocsr()
    if direct:
        lu = spd_factor(M)
        solve = lambda b, x0: lu(b)  # noqa: E731
    else:
        solve = lambda b, x0: cg_solve(M, b, cfg, x0=x0)  # noqa: E731
    pending = sorted(snapshot_times if snapshot_times is not None
                     else np.linspace(0.0, t_end, 11))
    out: list[LimitDirectorState] = []
    energies = [lyapunov(st, d)]
    max_d = float(np.sqrt((d * d).sum(axis=0)).max())
    t = 0.0
    for k in range(steps + 1):
        while pending and pending[0] <= t + 0.5 * dt + 1e-12:
            pending.pop(0)
            if not out or out[-1].t != t:
                out.append(LimitDirectorState(t=t, d=d.reshape(2, N, N).copy()))
        if k == steps:
            break
        star = d - dt * ((d * d).sum(axis=0) - 1.0) * d
        d = np.stack([solve(star[i], d[i]) for i in range(2)])
        m = float(np.sqrt((d * d).sum(axis=0)).max())
        max_d = max(max_d, m)
        if m > 1.0 + 1e-6:
            raise MaxPrincipleViolation(f"|d| reached {m:.9g}")
        energies.append(lyapunov(st, d))
        t = t_end if k == steps - 1 else t + dt
    if diagnostics is not None:
        diagnostics.update(dt=dt, steps=steps, energies=energies, max_abs_d=max_d)
    return out


def bilinear_sample(field: np.ndarray, x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Bilinear interpolation of a cell-centred ``(N, N)`` array, clamped at the walls."""
    N = field.shape[0]
    s = np.clip(np.asarray(x) * N - 0.5, 0.0, N - 1.0)
    r = np.clip(np.asarray(y) * N - 0.5, 0.0, N - 1.0)
    i0 = np.minimum(np.floor(s).astype(int), N - 2)
    j0 = np.minimum(np.floor(r).astype(int), N - 2)
    ws, wr = s - i0, r - j0
    return ((1 - ws) * (1 - wr) * field[i0, j0] + ws * (1 - wr) * field[i0 + 1, j0]
            + (1 - ws) * wr * field[i0, j0 + 1] + ws * wr * field[i0 + 1, j0 + 1])
