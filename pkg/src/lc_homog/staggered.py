"""Discrete operators on a :class:`PerforatedGrid`.

Velocity unknowns are the FLUID_FLUID faces (x-faces first, then y-faces);
every other face carries zero velocity.  In the negative velocity Laplacian
a missing neighbour face contributes

* nothing (value 0 at distance h) if it is FLUID_SOLID or a normal wall
  face, since the obstacle edge passes through it;
* a reflected ghost (one extra diagonal unit) if it is SOLID_SOLID or lies
  beyond a wall, since the no-slip edge is then h/2 away.

Pressure and director unknowns are the fluid cells in C order.
"""
from __future__ import annotations

from functools import cached_property

import numpy as np
import scipy.sparse as sp

from .geometry import FLUID_FLUID, FLUID_SOLID, SOLID_SOLID, PerforatedGrid
from .linalg import csr


def _shift(idx: np.ndarray, cls: np.ndarray, axis: int, step: int, periodic: bool):
    """Neighbour index/class arrays along ``axis``; out-of-range gives (-1, -1)."""
    if periodic:
        return np.roll(idx, -step, axis=axis), np.roll(cls, -step, axis=axis)
    nidx = np.full_like(idx, -1)
    ncls = np.full_like(cls, -1)
    src = [slice(None)] * idx.ndim
    dst = [slice(None)] * idx.ndim
    if step > 0:
        src[axis], dst[axis] = slice(step, None), slice(None, -step)
    else:
        src[axis], dst[axis] = slice(None, step), slice(-step, None)
    nidx[tuple(dst)] = idx[tuple(src)]
    ncls[tuple(dst)] = cls[tuple(src)]
    return nidx, ncls


class StaggeredOps:
    """Index maps and sparse operators for one grid (built lazily, cached)."""

    def __init__(self, grid: PerforatedGrid):
        self.grid = grid
        g = grid
        self.ux_idx = np.full(g.xface.shape, -1, dtype=np.int64)
        mx = g.xface == FLUID_FLUID
        self.nux = int(mx.sum())
        self.ux_idx[mx] = np.arange(self.nux)
        self.uy_idx = np.full(g.yface.shape, -1, dtype=np.int64)
        my = g.yface == FLUID_FLUID
        self.nuy = int(my.sum())
        self.uy_idx[my] = np.arange(self.nux, self.nux + self.nuy)
        self.nu = self.nux + self.nuy
        self.p_idx = np.full(g.fluid.shape, -1, dtype=np.int64)
        self.np = g.n_fluid
        self.p_idx[g.fluid] = np.arange(self.np)

    # ---- velocity Laplacian -------------------------------------------------
    def _face_block(self, idx, cls, normal_axis):
        periodic = self.grid.periodic
        mask = idx >= 0
        me = idx[mask]
        rows, cols, vals = [me], [me], [np.full(me.size, 4.0)]
        for axis in (0, 1):
            for step in (-1, 1):
                nidx, ncls = _shift(idx, cls, axis, step, periodic)
                nb = nidx[mask]
                has = nb >= 0
                rows.append(me[has])
                cols.append(nb[has])
                vals.append(np.full(int(has.sum()), -1.0))
                if axis != normal_axis:
                    ghost = (ncls[mask] == SOLID_SOLID) | (ncls[mask] == -1)
                    rows.append(me[ghost])
                    cols.append(me[ghost])
                    vals.append(np.ones(int(ghost.sum())))
        return rows, cols, vals

    @cached_property
    def velocity_laplacian(self) -> sp.csr_matrix:
        """SPD matrix ``A = -Delta_h`` on the velocity unknowns."""
        g = self.grid
        rx, cx, vx = self._face_block(self.ux_idx, g.xface, 0)
        ry, cy, vy = self._face_block(self.uy_idx, g.yface, 1)
        inv_h2 = 1.0 / g.h ** 2
        return csr(np.concatenate(rx + ry), np.concatenate(cx + cy),
                   np.concatenate(vx + vy) * inv_h2, (self.nu, self.nu))

    @cached_property
    def divergence(self) -> sp.csr_matrix:
        """Cell divergence ``D`` from velocity unknowns to fluid cells."""
        g = self.grid
        inv_h = 1.0 / g.h
        ii, jj = np.nonzero(g.fluid)
        row = self.p_idx[ii, jj]
        right = self.ux_idx[(ii + 1) % self.ux_idx.shape[0], jj]
        left = self.ux_idx[ii, jj]
        top = self.uy_idx[ii, (jj + 1) % self.uy_idx.shape[1]]
        bottom = self.uy_idx[ii, jj]
        rows, cols, vals = [], [], []
        for col, sign in ((right, 1.0), (left, -1.0), (top, 1.0), (bottom, -1.0)):
            ok = col >= 0
            rows.append(row[ok])
            cols.append(col[ok])
            vals.append(np.full(int(ok.sum()), sign * inv_h))
        return csr(np.concatenate(rows), np.concatenate(cols), np.concatenate(vals),
                   (self.np, self.nu))

    @cached_property
    def gradient(self) -> sp.csr_matrix:
        """Pressure gradient at velocity unknowns, ``G = -D^T``."""
        return (-self.divergence.T).tocsr()

    # ---- cell-centred operators ---------------------------------------------
    @cached_property
    def cell_laplacian(self) -> sp.csr_matrix:
        """Masked 5-point Laplacian with zero flux through non-fluid faces."""
        g = self.grid
        rows, cols, vals = [], [], []
        ii, jj = np.nonzero(g.fluid)
        me = self.p_idx[ii, jj]
        count = np.zeros(me.size)
        for axis in (0, 1):
            for step in (-1, 1):
                nidx, _ = _shift(self.p_idx, self.p_idx, axis, step, g.periodic)
                nb = nidx[ii, jj]
                ok = nb >= 0
                rows.append(me[ok])
                cols.append(nb[ok])
                vals.append(np.ones(int(ok.sum())))
                count += ok
        rows.append(me)
        cols.append(me)
        vals.append(-count)
        return csr(np.concatenate(rows), np.concatenate(cols),
                   np.concatenate(vals) / g.h ** 2, (self.np, self.np))

    def solid_face_normals(self) -> tuple[np.ndarray, np.ndarray]:
        """Per fluid cell, the summed outward normals of its FLUID_SOLID faces."""
        g = self.grid
        ii, jj = np.nonzero(g.fluid)
        nxs = np.zeros(ii.size)
        nys = np.zeros(ii.size)
        nxs += g.xface[(ii + 1) % g.xface.shape[0], jj] == FLUID_SOLID
        nxs -= g.xface[ii, jj] == FLUID_SOLID
        nys += g.yface[ii, (jj + 1) % g.yface.shape[1]] == FLUID_SOLID
        nys -= g.yface[ii, jj] == FLUID_SOLID
        return nxs, nys

    def fluid_face_pairs(self):
        """Cell-index pairs ``(a, b, axis)`` across FLUID_FLUID faces, b after a."""
        g = self.grid
        out = []
        for axis, cls in ((0, g.xface), (1, g.yface)):
            fi, fj = np.nonzero(cls == FLUID_FLUID)
            if axis == 0:
                a = self.p_idx[(fi - 1) % g.N, fj]
                b = self.p_idx[fi % g.N, fj]
            else:
                a = self.p_idx[fi, (fj - 1) % g.N]
                b = self.p_idx[fi, fj % g.N]
            out.append((a, b, fi, fj))
        return out

    # ---- packing ------------------------------------------------------------
    def cells_to_array(self, v: np.ndarray, fill: float = 0.0) -> np.ndarray:
        out = np.full(self.grid.fluid.shape, fill, dtype=float)
        out[self.grid.fluid] = v
        return out

    def array_to_cells(self, a: np.ndarray) -> np.ndarray:
        return np.asarray(a, dtype=float)[self.grid.fluid]

    def velocity_to_faces(self, u: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        g = self.grid
        ux = np.zeros(g.xface.shape)
        uy = np.zeros(g.yface.shape)
        ux[self.ux_idx >= 0] = u[:self.nux]
        uy[self.uy_idx >= 0] = u[self.nux:]
        return ux, uy

    def faces_to_velocity(self, ux: np.ndarray, uy: np.ndarray) -> np.ndarray:
        return np.concatenate([np.asarray(ux)[self.ux_idx >= 0],
                               np.asarray(uy)[self.uy_idx >= 0]])

    def velocity_to_cells(self, u: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Average face velocities to cell centres, ``(N, N)`` arrays."""
        ux, uy = self.velocity_to_faces(u)
        return faces_to_cell_centres(ux, uy, self.grid.periodic)


def faces_to_cell_centres(ux: np.ndarray, uy: np.ndarray, periodic: bool):
    if periodic:
        return (0.5 * (ux + np.roll(ux, -1, axis=0)),
                0.5 * (uy + np.roll(uy, -1, axis=1)))
    return 0.5 * (ux[:-1] + ux[1:]), 0.5 * (uy[:, :-1] + uy[:, 1:])
