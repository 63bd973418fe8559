"""Fixed laser-centred plane grids and bilinear extraction from solver fields."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import RegularGridInterpolator

PLANES = ("xy", "xz")


@dataclass(frozen=True)
class PlaneGrid:
    """Uniform grid on a plane section; coordinates in micrometres.

    ``coords0`` runs along the scan direction relative to the laser centre;
    ``coords1`` is absolute y (``xy`` plane, at the top surface) or absolute
    z (``xz`` plane, at y = 0).
    """

    plane: str
    start0: float
    step0: float
    n0: int
    start1: float
    step1: float
    n1: int

    def __post_init__(self):
        if self.plane not in PLANES:
            raise ValueError(f"unknown plane {self.plane!r}")

    @property
    def coords0(self) -> np.ndarray:
        return self.start0 + self.step0 * np.arange(self.n0)

    @property
    def coords1(self) -> np.ndarray:
        return self.start1 + self.step1 * np.arange(self.n1)

    @property
    def shape(self) -> tuple[int, int]:
        return (self.n0, self.n1)

    def refined(self, factor: int = 2) -> "PlaneGrid":
        """Same extents, spacing divided by ``factor``; every ``factor``-th node is shared."""
        if factor < 1 or int(factor) != factor:
            raise ValueError("refinement factor must be a positive integer")
        return PlaneGrid(self.plane, self.start0, self.step0 / factor,
                         (self.n0 - 1) * factor + 1, self.start1,
                         self.step1 / factor, (self.n1 - 1) * factor + 1)

    def to_dict(self) -> dict:
        return {"plane": self.plane, "start0": self.start0, "step0": self.step0,
                "n0": self.n0, "start1": self.start1, "step1": self.step1,
                "n1": self.n1}

    @classmethod
    def from_dict(cls, d: dict) -> "PlaneGrid":
        return cls(d["plane"], float(d["start0"]), float(d["step0"]), int(d["n0"]),
                   float(d["start1"]), float(d["step1"]), int(d["n1"]))


# 101 x 51 points, x in [-1375, 1375], y in [-220, 220]
CHI_XY = PlaneGrid("xy", -1375.0, 27.5, 101, -220.0, 8.8, 51)
# 101 x 26 points, x in [-1375, 1375], z in [750, 1000]
CHI_XZ = PlaneGrid("xz", -1375.0, 27.5, 101, 750.0, 10.0, 26)


def default_grid(plane: str) -> PlaneGrid:
    return CHI_XY if plane == "xy" else CHI_XZ


@dataclass
class PlaneSection:
    grid: PlaneGrid
    values: np.ndarray  # kelvin, shape grid.shape
    clamped: bool = False
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != self.grid.shape:
            raise ValueError(f"section shape {self.values.shape} != grid {self.grid.shape}")

    @property
    def plane(self) -> str:
        return self.grid.plane


def _interp_plane(axis0, axis1, plane_values, q0, q1):
    lo0, hi0 = axis0[0], axis0[-1]
    lo1, hi1 = axis1[0], axis1[-1]
    c0 = np.clip(q0, lo0, hi0)
    c1 = np.clip(q1, lo1, hi1)
    clamped = bool(np.any(c0 != q0) or np.any(c1 != q1))
    interp = RegularGridInterpolator((axis0, axis1), plane_values, method="linear")
    g0, g1 = np.meshgrid(c0, c1, indexing="ij")
    pts = np.stack([g0.ravel(), g1.ravel()], axis=-1)
    return interp(pts).reshape(g0.shape), clamped


def extract_sections(field, laser=None, grids=(CHI_XY, CHI_XZ)):
    """Sample the top-surface and centre-plane sections around the laser.

    Nodes outside the solver domain take the nearest boundary value and set
    ``clamped`` on the returned section.
    """
    laser = laser if laser is not None else field.laser
    dom = field.domain
    x, y, z = dom.axes()
    iy0 = dom.index_of_y0()
    out = []
    for grid in grids:
        q0 = laser.x + grid.coords0
        if grid.plane == "xy":
            vals, clamped = _interp_plane(x, y, field.T[:, :, -1], q0, grid.coords1)
        else:
            vals, clamped = _interp_plane(x, z, field.T[:, iy0, :], q0, grid.coords1)
        out.append(PlaneSection(grid, vals, clamped, {"laser_x": laser.x}))
    return tuple(out)
