"""Excitation fields of the coils on the voxel grid, at unit current.

3D coils with a segment polyline use the closed-form field of straight
segments; 2D setups and coils without segments use a unit-moment point
dipole oriented along the coil normal.
"""

from __future__ import annotations

import logging
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .errors import GeometryError, MRXWarning, ValidationError
from .kernel import dipole_kernels, kernel_matvec
from .model import Coil, Config, PhysicsParams, Roi, Setup, get_roi

log = logging.getLogger(__name__)

LINE_EPS = 1e-12


@dataclass(frozen=True, eq=False)
class VoxelGrid:
    """Voxel centers of the ROI, x index fastest, then y, then z."""

    centers: np.ndarray  # (nx*ny*nz, 3)
    voxel_size: tuple
    res: tuple
    roi: Roi

    @property
    def num_voxels(self) -> int:
        return self.centers.shape[0]

    @property
    def cell_weight(self) -> float:
        """Midpoint quadrature weight: product of the nonzero voxel edge lengths."""
        w = 1.0
        for h in self.voxel_size:
            if h != 0.0:
                w *= h
        return w

    def to_volume(self, values) -> np.ndarray:
        """Reshape a flat per-voxel array to ``(nx, ny, nz, ...)``."""
        values = np.asarray(values)
        return values.reshape(tuple(self.res) + values.shape[1:], order="F")


def create_voxel_grid(roi: Roi, res) -> VoxelGrid:
    """Cell-midpoint grid of ``roi`` at resolution ``res = (nx, ny, nz)``."""
    res = tuple(int(n) for n in res)
    if len(res) != 3 or any(n < 1 for n in res):
        raise ValidationError(f"resolution entries must be >= 1, got {list(res)}")
    axes = []
    size = []
    for (lo, hi), n in zip(roi.axes(), res):
        h = (hi - lo) / n
        size.append(h)
        axes.append(lo + (np.arange(1, n + 1) - 0.5) * h)
    # indexing="ij" + Fortran ravel gives x fastest
    X, Y, Z = np.meshgrid(*axes, indexing="ij")
    centers = np.column_stack([X.ravel(order="F"), Y.ravel(order="F"), Z.ravel(order="F")])
    centers.setflags(write=False)
    return VoxelGrid(centers, tuple(size), res, roi)


def grid_roi(grid: VoxelGrid) -> Roi:
    return get_roi(grid.centers, grid.voxel_size)


def _as_points(w):
    w = np.asarray(w, dtype=float)
    return w.reshape(-1, 3), w.ndim == 1


def _cross(u, v):
    return np.stack(
        [
            u[..., 1] * v[..., 2] - u[..., 2] * v[..., 1],
            u[..., 2] * v[..., 0] - u[..., 0] * v[..., 2],
            u[..., 0] * v[..., 1] - u[..., 1] * v[..., 0],
        ],
        axis=-1,
    )


def segment_field(a, b, w, theta: float = 1e-7) -> np.ndarray:
    """Field of a straight current segment from ``a`` to ``b`` at point(s) ``w``.

    Uses the compact closed form for a finite straight conductor. Points on
    the supporting line of the segment (within ``1e-12 * |b - a|``) receive a
    zero contribution.

    Parameters
    ----------
    a, b : array_like, shape (3,)
        Segment start and end points.
    w : array_like, shape (3,) or (N, 3)
        Observation points.
    theta : float
        Biot-Savart prefactor, T*m/A.

    Returns
    -------
    ndarray, shape (3,) or (N, 3)
        Field in tesla per ampere.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    seg = b - a
    L2 = float(seg @ seg)
    if L2 == 0.0:
        raise GeometryError(f"degenerate segment, a = b = {tuple(a)}")
    pts, single = _as_points(w)
    ra = a - pts
    rb = b - pts
    na = np.sqrt(ra[:, 0] * ra[:, 0] + ra[:, 1] * ra[:, 1] + ra[:, 2] * ra[:, 2])
    nb = np.sqrt(rb[:, 0] * rb[:, 0] + rb[:, 1] * rb[:, 1] + rb[:, 2] * rb[:, 2])
    cr = _cross(ra, rb)
    dot = ra[:, 0] * rb[:, 0] + ra[:, 1] * rb[:, 1] + ra[:, 2] * rb[:, 2]
    cr2 = cr[:, 0] * cr[:, 0] + cr[:, 1] * cr[:, 1] + cr[:, 2] * cr[:, 2]
    # |ra x rb| = distance-to-line * |b - a|
    on_line = np.sqrt(cr2) <= LINE_EPS * L2
    # points at or next to the line blow up here; they are zeroed below
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        nab = na * nb
        # nab + dot cancels for w beside the segment; there use the identity
        # nab + dot = |ra x rb|^2 / (nab - dot)
        denom = np.where(dot >= 0, nab + dot, cr2 / (nab - dot))
        scale = theta * ((na + nb) / nab) / denom
        out = scale[:, None] * cr
    if np.any(on_line):
        log.debug("segment_field: %d point(s) on segment line, zeroed", int(on_line.sum()))
        out[on_line] = 0.0
    return out[0] if single else out


def coil_field(coil: Coil, w, theta: float = 1e-7) -> np.ndarray:
    """Sum of :func:`segment_field` over the coil polyline, in listed order."""
    if not coil.has_segments or len(coil.segments) < 2:
        raise GeometryError("coil has no segment polyline")
    pts, single = _as_points(w)
    P = np.asarray(coil.segments, dtype=float)
    total = np.zeros_like(pts)
    for k in range(len(P) - 1):
        total += segment_field(P[k], P[k + 1], pts, theta)
    return total[0] if single else total


def dipole_coil_field(coil: Coil, w, theta: float = 1e-7) -> np.ndarray:
    """Field of a unit-moment point dipole at the coil position along the coil normal."""
    pts, single = _as_points(w)
    r = pts - np.asarray(coil.position, dtype=float)
    if np.any(np.all(r == 0.0, axis=1)):
        raise GeometryError(f"observation point coincides with dipole coil at {coil.position}")
    out = theta * kernel_matvec(dipole_kernels(r), np.asarray(coil.normal, dtype=float))
    return out[0] if single else out


@dataclass(frozen=True, eq=False)
class ExcitationFieldSet:
    """Unit-current fields, ``fields[k]`` belongs to ``active_coils[k]``."""

    fields: np.ndarray  # (num_active_coils, num_voxels, 3), T/A
    grid: VoxelGrid
    active_coils: tuple

    def field_of(self, coil_number: int) -> np.ndarray:
        return self.fields[self.active_coils.index(coil_number)]


def uses_dipole_model(setup: Setup, coil: Coil) -> bool:
    return setup.dim == 2 or not coil.has_segments


def single_coil_field(setup: Setup, coil: Coil, points, theta: float) -> np.ndarray:
    if uses_dipole_model(setup, coil):
        return dipole_coil_field(coil, points, theta)
    return coil_field(coil, points, theta)


def _warn_model_choice(setup: Setup, coil_numbers):
    if setup.dim == 2:
        ignored = [i for i in coil_numbers if setup.coils[i - 1].has_segments]
        if ignored:
            warnings.warn(
                f"2D setup: segments of coils {ignored} are ignored, coils are modeled as dipoles",
                MRXWarning,
                stacklevel=3,
            )
    else:
        missing = [i for i in coil_numbers if not setup.coils[i - 1].has_segments]
        if missing:
            warnings.warn(
                f"3D setup: coils {missing} have no segments, using the dipole model",
                MRXWarning,
                stacklevel=3,
            )


def create_excitation_fields(
    setup: Setup,
    config: Config,
    grid: VoxelGrid,
    physics: PhysicsParams = PhysicsParams(),
    threads: int = 1,
) -> ExcitationFieldSet:
    """Field of every active coil at every voxel center, at unit current.

    Coils are evaluated independently (optionally on ``threads`` workers);
    each result depends only on its own coil, so output bits do not depend on
    the active set or on the thread count.
    """
    coils = tuple(config.active_coils)
    _warn_model_choice(setup, coils)
    out = np.empty((len(coils), grid.num_voxels, 3))

    def work(k):
        out[k] = single_coil_field(setup, setup.coils[coils[k] - 1], grid.centers, physics.theta)

    _run(work, range(len(coils)), threads)
    out.setflags(write=False)
    return ExcitationFieldSet(out, grid, coils)


def _run(fn, items, threads: int):
    items = list(items)
    if threads is None or threads <= 1 or len(items) <= 1:
        for it in items:
            fn(it)
        return
    with ThreadPoolExecutor(max_workers=threads) as ex:
        for _ in ex.map(fn, items):
            pass
