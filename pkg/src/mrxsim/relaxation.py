"""Sensor response and system matrix assembly.

A raw system matrix holds one ``sensors x voxels`` block per active coil at
unit current. Current patterns combine those blocks linearly into the final
operator, whose rows are ordered sensor-major within each pattern.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass

import numpy as np

from .errors import GeometryError, ValidationError
from .fields import VoxelGrid, _run, create_excitation_fields, create_voxel_grid
from .kernel import dipole_kernels, kernel_matvec
from .model import Config, PhysicsParams, Sensor, Setup, require_valid


def dipole_kernel(r) -> np.ndarray:
    """``3 r r^T / |r|^5 - I / |r|^3`` for a single nonzero 3-vector ``r``."""
    r = np.asarray(r, dtype=float)
    if r.shape != (3,):
        raise ValidationError(f"r must be a 3-vector, got shape {r.shape}")
    if not np.any(r):
        raise GeometryError("dipole kernel is singular at r = 0")
    return dipole_kernels(r)[0]


def _responses(K, normal, b_coil, kappa):
    # kappa * n . (K b); same operation order for scalar and batched callers
    Kb = kernel_matvec(K, b_coil)
    n = np.asarray(normal, dtype=float)
    s = n[0] * Kb[..., 0] + n[1] * Kb[..., 1] + n[2] * Kb[..., 2]
    return kappa * s


def sensor_response(sensor: Sensor, w, b_coil, kernel_prefactor: float = 1.0 / 3.0) -> float:
    """Signal of ``sensor`` from particles at ``w`` magnetized by the field ``b_coil``."""
    r = np.asarray(sensor.position, dtype=float) - np.asarray(w, dtype=float)
    if not np.any(r):
        raise GeometryError(f"sensor at {sensor.position} coincides with the voxel center")
    K = dipole_kernels(r)
    return float(_responses(K, sensor.normal, np.asarray(b_coil, dtype=float)[None, :], kernel_prefactor)[0])


def layout_fingerprint(setup: Setup, res, physics: PhysicsParams) -> str:
    """32 hex chars identifying the geometry, resolution and physics of a raw export.

    Active subsets and current patterns are deliberately excluded so blocks
    exported once can be recombined for any subset.
    """
    doc = {
        "setup": setup.to_dict(),
        "res": [int(n) for n in res],
        "theta": float(physics.theta),
        "kernel_prefactor": float(physics.kernel_prefactor),
    }
    text = json.dumps(doc, sort_keys=True, separators=(",", ":"), allow_nan=True)
    return hashlib.sha256(text.encode()).hexdigest()[:32]


@dataclass(frozen=True, eq=False)
class SystemMatrixRaw:
    """Per-coil unit-current blocks, ``blocks[k]`` for ``active_coils[k]``."""

    blocks: np.ndarray  # (coils, sensors, voxels)
    grid: VoxelGrid
    active_coils: tuple
    active_sensors: tuple
    fingerprint: str

    @property
    def shape(self):
        return self.blocks.shape

    def block(self, coil_number: int) -> np.ndarray:
        return self.blocks[self.active_coils.index(coil_number)]

    def select(self, coils=None, sensors=None) -> "SystemMatrixRaw":
        """Sub-matrix for a subset of coil/sensor numbers (kept in ascending order)."""
        coils = self.active_coils if coils is None else tuple(sorted(coils))
        sensors = self.active_sensors if sensors is None else tuple(sorted(sensors))
        try:
            ci = [self.active_coils.index(c) for c in coils]
        except ValueError as exc:
            raise ValidationError(f"coil not present in raw matrix: {exc}") from None
        try:
            si = [self.active_sensors.index(s) for s in sensors]
        except ValueError as exc:
            raise ValidationError(f"sensor not present in raw matrix: {exc}") from None
        blocks = self.blocks[np.ix_(ci, si, np.arange(self.blocks.shape[2]))]
        return SystemMatrixRaw(blocks, self.grid, coils, sensors, self.fingerprint)


@dataclass(frozen=True, eq=False)
class SystemMatrix:
    """Pattern-combined operator, shape ``(patterns * sensors, voxels)``."""

    matrix: np.ndarray
    grid: VoxelGrid
    active_coils: tuple
    active_sensors: tuple
    current_pattern: np.ndarray
    fingerprint: str

    @property
    def shape(self):
        return self.matrix.shape

    @property
    def num_patterns(self) -> int:
        return self.current_pattern.shape[0]


def assemble_raw(setup: Setup, config: Config, grid: VoxelGrid, physics: PhysicsParams, threads: int = 1):
    """Raw blocks for ``config``'s active coils and sensors on ``grid``.

    Each block entry is ``kappa * n_s . K(x_s - w_v) B_c(w_v) * weight``. The
    computation is elementwise per (coil, sensor, voxel), so any entry is
    bit-identical regardless of which other coils/sensors are active and of
    the worker count.
    """
    fields = create_excitation_fields(setup, config, grid, physics, threads=threads)
    sensors = [setup.sensors[i - 1] for i in config.active_sensors]
    weight = grid.cell_weight
    blocks = np.empty((len(config.active_coils), len(sensors), grid.num_voxels))
    B = fields.fields

    def work(s):
        sensor = sensors[s]
        r = np.asarray(sensor.position, dtype=float) - grid.centers
        if np.any(np.all(r == 0.0, axis=1)):
            raise GeometryError(
                f"sensor {config.active_sensors[s]} at {sensor.position} coincides with a voxel center"
            )
        K = dipole_kernels(r)
        blocks[:, s, :] = _responses(K, sensor.normal, B, physics.kernel_prefactor) * weight

    _run(work, range(len(sensors)), threads)
    blocks.setflags(write=False)
    return blocks


def system_matrix_raw(
    setup: Setup,
    config: Config,
    physics: PhysicsParams = PhysicsParams(),
    threads: int = 1,
) -> SystemMatrixRaw:
    """Voxel grid, excitation fields and per-coil sensor blocks at unit current."""
    require_valid(setup, config)
    grid = create_voxel_grid(setup.roi, config.res)
    blocks = assemble_raw(setup, config, grid, physics, threads=threads)
    return SystemMatrixRaw(
        blocks,
        grid,
        tuple(config.active_coils),
        tuple(config.active_sensors),
        layout_fingerprint(setup, config.res, physics),
    )


def apply_current_pattern(raw: SystemMatrixRaw, pattern) -> SystemMatrix:
    """Combine raw blocks linearly: row block ``p`` is ``sum_c pattern[p, c] * block[c]``.

    Coils are summed in ascending order.
    """
    P = np.array(pattern, dtype=float)
    if P.ndim == 1:
        P = P.reshape(1, -1)
    n_c, n_s, n_v = raw.blocks.shape
    if P.ndim != 2 or P.shape[1] != n_c:
        raise ValidationError(f"pattern has {P.shape[-1]} columns but raw matrix has {n_c} coil blocks")
    A = np.empty((P.shape[0] * n_s, n_v))
    for p in range(P.shape[0]):
        acc = P[p, 0] * raw.blocks[0]
        for c in range(1, n_c):
            acc = acc + P[p, c] * raw.blocks[c]
        A[p * n_s : (p + 1) * n_s] = acc
    A.setflags(write=False)
    P.setflags(write=False)
    return SystemMatrix(A, raw.grid, raw.active_coils, raw.active_sensors, P, raw.fingerprint)


def create_system_matrix(
    setup: Setup,
    config: Config,
    physics: PhysicsParams = PhysicsParams(),
    threads: int = 1,
) -> SystemMatrix:
    """``apply_current_pattern(system_matrix_raw(...), config.current_pattern)``."""
    raw = system_matrix_raw(setup, config, physics, threads=threads)
    return apply_current_pattern(raw, config.current_pattern)


def forward_apply(A, c) -> np.ndarray:
    """Measurement vector ``A @ c`` for a concentration vector ``c`` (one value per voxel)."""
    M = A.matrix if isinstance(A, SystemMatrix) else np.asarray(A, dtype=float)
    c = np.asarray(c, dtype=float).ravel()
    if c.shape[0] != M.shape[1]:
        raise ValidationError(f"concentration has {c.shape[0]} entries, matrix has {M.shape[1]} voxels")
    if not np.all(np.isfinite(c)):
        raise ValidationError("concentration contains non-finite values")
    return M @ c
