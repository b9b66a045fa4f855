"""Voxelized test phantoms.

Phantoms live on normalized coordinates ``[-1, 1]^3``; voxel ``idx`` (1-based)
of an axis with ``n`` voxels sits at ``u = -1 + (2 idx - 1) / n``. Values are
dimensionless shape weights stored as ``(nx, ny, nz)`` arrays; ``flat()``
gives the x-fastest order used by the voxel grid.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass

import numpy as np

from .errors import ValidationError


@dataclass(frozen=True)
class EllipsoidSpec:
    """Additive ellipsoid: intensity, semi-axes (a, b, c), center, rotation about z (rad)."""

    intensity: float
    semi_axes: tuple
    center: tuple = (0.0, 0.0, 0.0)
    phi: float = 0.0

    def __post_init__(self):
        if len(self.semi_axes) != 3 or any(not s > 0 for s in self.semi_axes):
            raise ValidationError(f"semi-axes must be three positive numbers, got {self.semi_axes}")


@dataclass(frozen=True, eq=False)
class Phantom:
    values: np.ndarray  # (nx, ny, nz)
    name: str = ""

    @property
    def res(self):
        return tuple(self.values.shape)

    def flat(self) -> np.ndarray:
        """Values in voxel-grid order (x fastest)."""
        return self.values.ravel(order="F")


def _check_res(res):
    res = tuple(int(n) for n in res)
    if len(res) != 3 or any(n < 1 for n in res):
        raise ValidationError(f"resolution entries must be >= 1, got {list(res)}")
    return res


def normalized_axes(res):
    return [-1.0 + (2.0 * np.arange(1, n + 1) - 1.0) / n for n in res]


def ellipsoid_mask(spec: EllipsoidSpec, res) -> np.ndarray:
    """Boolean ``(nx, ny, nz)`` mask of voxel centers inside ``spec`` (boundary counts as inside)."""
    ux, uy, uz = normalized_axes(res)
    X, Y, Z = np.meshgrid(ux, uy, uz, indexing="ij")
    cphi, sphi = math.cos(spec.phi), math.sin(spec.phi)
    x0, y0, z0 = spec.center
    dx, dy, dz = X - x0, Y - y0, Z - z0
    # body-frame coordinates: rotate by -phi
    xr = cphi * dx + sphi * dy
    yr = -sphi * dx + cphi * dy
    a, b, c = spec.semi_axes
    q = (xr / a) ** 2 + (yr / b) ** 2 + (dz / c) ** 2
    return q <= 1.0


def ellipsoid_phantom(specs, res, name: str = "ellipsoids") -> Phantom:
    """Sum of ``intensity * indicator`` over ``specs``; an empty list gives zeros."""
    res = _check_res(res)
    values = np.zeros(res)
    for spec in specs:
        values[ellipsoid_mask(spec, res)] += spec.intensity
    return Phantom(values, name)


# Kak-Slaney 3D geometry (a, b, c, x0, y0, z0, phi in degrees) with the
# high-contrast intensities of the modified head phantom.
SHEPP_LOGAN_3D = (
    (1.00, 0.6900, 0.920, 0.900, 0.000, 0.000, 0.000, 0.0),
    (-0.80, 0.6624, 0.874, 0.880, 0.000, 0.000, 0.000, 0.0),
    (-0.20, 0.4100, 0.160, 0.210, -0.220, 0.000, -0.250, 108.0),
    (-0.20, 0.3100, 0.110, 0.220, 0.220, 0.000, -0.250, 72.0),
    (0.20, 0.2100, 0.250, 0.500, 0.000, 0.350, -0.250, 0.0),
    (0.20, 0.0460, 0.046, 0.046, 0.000, 0.100, -0.250, 0.0),
    (0.10, 0.0460, 0.023, 0.020, -0.080, -0.650, -0.250, 0.0),
    (0.10, 0.0460, 0.023, 0.020, 0.060, -0.650, -0.250, 90.0),
    (0.20, 0.0560, 0.040, 0.100, 0.060, -0.105, 0.625, 90.0),
    (-0.20, 0.0560, 0.056, 0.100, 0.000, 0.100, 0.625, 0.0),
)


def shepp_logan_specs():
    return [
        EllipsoidSpec(A, (a, b, c), (x0, y0, z0), math.radians(phi))
        for A, a, b, c, x0, y0, z0, phi in SHEPP_LOGAN_3D
    ]


TUMOR_SPECS = (
    EllipsoidSpec(0.2, (0.8, 0.8, 0.8)),
    EllipsoidSpec(1.0, (0.2, 0.15, 0.3), (0.35, 0.25, 0.0), math.radians(30.0)),
)

# 5 x 7 block letters, top row first
LETTERS = {
    "F": ("11111", "10000", "10000", "11110", "10000", "10000", "10000"),
    "P": ("11110", "10001", "10001", "11110", "10000", "10000", "10000"),
}
# letter box in normalized x-y coordinates
LETTER_BOX = ((-0.6, 0.6), (-0.84, 0.84))


def letter_phantom(letter: str, res) -> np.ndarray:
    """Block letter rasterized in the x-y plane, extruded over the middle third of z."""
    res = _check_res(res)
    rows = LETTERS[letter]
    ux, uy, _ = normalized_axes(res)
    (x0, x1), (y0, y1) = LETTER_BOX
    ncol, nrow = len(rows[0]), len(rows)
    plane = np.zeros(res[:2])
    for i, x in enumerate(ux):
        col = math.floor((x - x0) / (x1 - x0) * ncol)
        if not 0 <= col < ncol:
            continue
        for j, y in enumerate(uy):
            row = math.floor((y1 - y) / (y1 - y0) * nrow)
            if 0 <= row < nrow and rows[row][col] == "1":
                plane[i, j] = 1.0
    nz = res[2]
    third = nz // 3
    values = np.zeros(res)
    values[:, :, third : nz - third] = plane[:, :, None]
    return values


def dot_positions(n: int, fraction: float):
    """Indices of a centered dot lattice with spacing ``round(fraction * n)`` (at least 1)."""
    step = max(1, math.floor(fraction * n + 0.5))
    count = (n - 1) // step + 1
    start = (n - 1 - step * (count - 1)) // 2
    return [start + k * step for k in range(count)]


def fwhm_dots(fraction: float, res) -> np.ndarray:
    """Isolated unit voxels on a lattice spaced ``fraction`` of the grid extent per axis."""
    res = _check_res(res)
    if not 0 < fraction <= 1:
        raise ValidationError(f"dot spacing fraction must be in (0, 1], got {fraction}")
    values = np.zeros(res)
    ix, iy, iz = (dot_positions(n, fraction) for n in res)
    values[np.ix_(ix, iy, iz)] = 1.0
    return values


PHANTOM_NAMES = ("shepplogan3d", "tumor", "F_2", "P_1", "fwhmdots_<f>")

_DOTS = re.compile(r"^fwhmdots_(\d+(?:\.\d*)?|\.\d+)$")


def create_phantom(name: str, res) -> Phantom:
    """Named preset phantom at resolution ``res``.

    Known names: ``shepplogan3d``, ``tumor``, ``F_2``, ``P_1`` and
    ``fwhmdots_<f>`` with ``f`` the dot spacing as a fraction of the grid.
    """
    res = _check_res(res)
    if name == "shepplogan3d":
        return ellipsoid_phantom(shepp_logan_specs(), res, name)
    if name == "tumor":
        return ellipsoid_phantom(TUMOR_SPECS, res, name)
    if name in ("F_2", "P_1"):
        return Phantom(letter_phantom(name[0], res), name)
    m = _DOTS.match(name)
    if m:
        return Phantom(fwhm_dots(float(m.group(1)), res), name)
    raise ValidationError(f"unknown phantom {name!r} (known: {', '.join(PHANTOM_NAMES)})")
