"""Perforated and periodic staggered (MAC) grids on the unit square.

The domain [0, 1]^2 is tiled by ``m x m`` unit cells of side ``eps = 1/m``.
Each unit cell is resolved by ``n x n`` pressure cells and carries one copy
of the obstacle, scaled by ``eps``.  Pressure lives at cell centres, the
first velocity component on x-faces (normal to x) and the second on y-faces.

Array conventions
-----------------
Cell arrays have shape ``(N, N)`` with ``N = m * n`` and are indexed
``[i, j]`` where ``i`` runs along x and ``j`` along y.  For a walled grid
x-face arrays have shape ``(N + 1, N)``: face ``[i, j]`` separates cells
``(i - 1, j)`` and ``(i, j)``, and faces ``i = 0`` and ``i = N`` lie on the
physical boundary.  For a periodic grid x-face arrays have shape ``(N, N)``
and face ``[i, j]`` separates ``(i - 1 mod N, j)`` and ``(i, j)``.  y-faces
follow the same rule with the axes swapped.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any

import numpy as np
from scipy import ndimage
from scipy.special import gamma

FLUID_FLUID = 0
FLUID_SOLID = 1
SOLID_SOLID = 2
PHYSICAL_BOUNDARY = 3

# Obstacles must keep a gap to the unit-cell boundary.
CONTAINMENT = 0.45


class GeometryError(ValueError):
    pass


class InvalidShape(GeometryError):
    pass


class DisconnectedFluid(GeometryError):
    pass


@dataclass(frozen=True)
class ObstacleShape:
    """Obstacle in cell-local coordinates ``y in [-1/2, 1/2]^2``.

    ``kind`` is ``"none"``, ``"disk"`` (uses ``radius``) or
    ``"superellipse"`` (uses ``rx``, ``ry`` and exponent ``p``).
    """

    kind: str = "none"
    radius: float = 0.0
    rx: float = 0.0
    ry: float = 0.0
    p: float = 2.0

    def __post_init__(self) -> None:
        if self.kind == "none":
            return
        if self.kind == "disk":
            if not 0.0 < self.radius <= CONTAINMENT:
                raise InvalidShape(
                    f"disk radius {self.radius} outside (0, {CONTAINMENT}]")
        elif self.kind == "superellipse":
            for name in ("rx", "ry"):
                v = getattr(self, name)
                if not 0.0 < v <= CONTAINMENT:
                    raise InvalidShape(
                        f"superellipse {name}={v} outside (0, {CONTAINMENT}]")
            if not 2.0 <= self.p <= 20.0:
                raise InvalidShape(f"superellipse exponent {self.p} outside [2, 20]")
        else:
            raise InvalidShape(f"unknown shape kind {self.kind!r}")

    @classmethod
    def disk(cls, radius: float) -> ObstacleShape:
        return cls(kind="disk", radius=radius)

    @classmethod
    def superellipse(cls, rx: float, ry: float, p: float) -> ObstacleShape:
        return cls(kind="superellipse", rx=rx, ry=ry, p=p)

    @property
    def is_none(self) -> bool:
        return self.kind == "none"

    def contains(self, y1: np.ndarray, y2: np.ndarray) -> np.ndarray:
        """Strict membership test for points in cell-local coordinates."""
        y1 = np.asarray(y1, dtype=float)
        y2 = np.asarray(y2, dtype=float)
        if self.kind == "none":
            return np.zeros(np.broadcast(y1, y2).shape, dtype=bool)
        if self.kind == "disk":
            return y1 * y1 + y2 * y2 < self.radius * self.radius
        return (np.abs(y1 / self.rx) ** self.p
                + np.abs(y2 / self.ry) ** self.p) < 1.0

    def rotated(self) -> ObstacleShape:
        """The same obstacle turned by 90 degrees."""
        if self.kind == "superellipse":
            return ObstacleShape.superellipse(self.ry, self.rx, self.p)
        return self

    def to_dict(self) -> dict[str, Any]:
        if self.kind == "none":
            return {"shape": "none"}
        if self.kind == "disk":
            return {"shape": "disk", "radius": self.radius}
        return {"shape": "superellipse", "rx": self.rx, "ry": self.ry, "p": self.p}

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> ObstacleShape:
        kind = d.get("shape", "none")
        if kind == "none":
            return cls()
        if kind == "disk":
            return cls.disk(float(d["radius"]))
        if kind == "superellipse":
            return cls.superellipse(float(d["rx"]), float(d["ry"]), float(d.get("p", 2.0)))
        raise InvalidShape(f"unknown shape kind {kind!r}")


def analytic_theta(shape: ObstacleShape) -> float:
    """Fluid volume fraction 1 - |T| of the continuous unit cell."""
    if shape.kind == "none":
        return 1.0
    if shape.kind == "disk":
        return 1.0 - math.pi * shape.radius ** 2
    # |x/a|^p + |y/b|^p < 1 has area 4ab Gamma(1+1/p)^2 / Gamma(1+2/p)
    p = shape.p
    area = 4.0 * shape.rx * shape.ry * gamma(1.0 + 1.0 / p) ** 2 / gamma(1.0 + 2.0 / p)
    return 1.0 - float(area)


@dataclass(frozen=True)
class GridSpec:
    m: int
    n: int
    shape: ObstacleShape = field(default_factory=ObstacleShape)
    periodic: bool = False

    def __post_init__(self) -> None:
        if self.m < 1 or (self.m < 2 and not self.periodic):
            raise GeometryError(f"m={self.m} too small")
        if self.n < 8 or self.n % 2:
            raise GeometryError(f"n={self.n} must be even and >= 8")

    @property
    def eps(self) -> float:
        return 1.0 / self.m


def _classify(left: np.ndarray, right: np.ndarray) -> np.ndarray:
    nsolid = (~left).astype(np.int8) + (~right).astype(np.int8)
    out = np.full(left.shape, FLUID_FLUID, dtype=np.int8)
    out[nsolid == 1] = FLUID_SOLID
    out[nsolid == 2] = SOLID_SOLID
    return out


def unit_cell_mask(n: int, shape: ObstacleShape) -> np.ndarray:
    """Fluid flags of one ``n x n`` unit cell, ``True`` where fluid."""
    y = -0.5 + (np.arange(n) + 0.5) / n
    y1, y2 = np.meshgrid(y, y, indexing="ij")
    return ~shape.contains(y1, y2)


@dataclass(frozen=True, eq=False)
class PerforatedGrid:
    spec: GridSpec
    fluid: np.ndarray
    xface: np.ndarray
    yface: np.ndarray
    theta_discrete: float

    @property
    def m(self) -> int:
        return self.spec.m

    @property
    def n(self) -> int:
        return self.spec.n

    @property
    def N(self) -> int:
        return self.spec.m * self.spec.n

    @property
    def h(self) -> float:
        return 1.0 / self.N

    @property
    def eps(self) -> float:
        return self.spec.eps

    @property
    def periodic(self) -> bool:
        return self.spec.periodic

    @property
    def shape(self) -> ObstacleShape:
        return self.spec.shape

    @property
    def domain_tag(self) -> str:
        if self.periodic:
            return "unit_cell_periodic" if self.m == 1 else "periodic"
        return "full" if self.shape.is_none else "perforated"

    @property
    def n_fluid(self) -> int:
        return int(self.fluid.sum())

    def cell_centers(self) -> tuple[np.ndarray, np.ndarray]:
        c = (np.arange(self.N) + 0.5) * self.h
        return np.meshgrid(c, c, indexing="ij")

    def xface_centers(self) -> tuple[np.ndarray, np.ndarray]:
        nx = self.xface.shape[0]
        return np.meshgrid(np.arange(nx) * self.h, (np.arange(self.N) + 0.5) * self.h,
                           indexing="ij")

    def yface_centers(self) -> tuple[np.ndarray, np.ndarray]:
        ny = self.yface.shape[1]
        return np.meshgrid((np.arange(self.N) + 0.5) * self.h, np.arange(ny) * self.h,
                           indexing="ij")

    def unit_cell_view(self, a: np.ndarray) -> np.ndarray:
        """Reshape a cell array to ``(m, n, m, n)``: ``[k1, o1, k2, o2]``."""
        m, n = self.m, self.n
        return a.reshape(m, n, m, n)


def build_perforated_grid(spec: GridSpec) -> PerforatedGrid:
    """Tile ``m x m`` copies of the masked unit cell over [0, 1]^2."""
    cell = unit_cell_mask(spec.n, spec.shape)
    if cell.any():
        _, ncomp = ndimage.label(cell)
        if ncomp != 1:
            raise DisconnectedFluid(f"unit-cell fluid region has {ncomp} components")
    else:
        raise DisconnectedFluid("unit cell has no fluid")
    fluid = np.tile(cell, (spec.m, spec.m))
    fluid.setflags(write=False)
    N = spec.m * spec.n
    if spec.periodic:
        xface = _classify(np.roll(fluid, 1, axis=0), fluid)
        yface = _classify(np.roll(fluid, 1, axis=1), fluid)
    else:
        xface = np.full((N + 1, N), PHYSICAL_BOUNDARY, dtype=np.int8)
        xface[1:N] = _classify(fluid[:-1], fluid[1:])
        yface = np.full((N, N + 1), PHYSICAL_BOUNDARY, dtype=np.int8)
        yface[:, 1:N] = _classify(fluid[:, :-1], fluid[:, 1:])
    xface.setflags(write=False)
    yface.setflags(write=False)
    theta = float(cell.sum()) / cell.size
    return PerforatedGrid(spec=spec, fluid=fluid, xface=xface, yface=yface,
                          theta_discrete=theta)


def build_unit_cell_grid(n: int, shape: ObstacleShape) -> PerforatedGrid:
    """Single periodic unit cell Y = [-1/2, 1/2]^2 resolved by ``n x n`` cells."""
    return build_perforated_grid(GridSpec(m=1, n=n, shape=shape, periodic=True))
