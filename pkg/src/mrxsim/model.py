"""Setup/config domain types, geometry helpers and validation.

Coordinates are SI meters, currents amperes. Coil and sensor numbers are
1-based wherever they appear (config active lists, reports, files).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

import numpy as np

from .errors import ValidationError

Vec3 = tuple  # (x, y, z) of floats

NORMAL_TOL = 1e-9


def _vec3(v) -> tuple:
    x, y, z = (float(c) for c in v)
    return (x, y, z)


def _unit(v, what="normal") -> np.ndarray:
    v = np.asarray(v, dtype=float)
    n = float(np.linalg.norm(v))
    if not np.isfinite(n) or n == 0.0:
        raise ValidationError(f"{what} must be a nonzero finite vector, got {tuple(v)}")
    return v / n


@dataclass(frozen=True)
class Roi:
    """Axis-aligned region of interest, one closed ``(lo, hi)`` interval per axis."""

    x: tuple = (0.0, 0.0)
    y: tuple = (0.0, 0.0)
    z: tuple = (0.0, 0.0)

    def __post_init__(self):
        for name in "xyz":
            lo, hi = getattr(self, name)
            object.__setattr__(self, name, (float(lo), float(hi)))

    def axes(self):
        return (self.x, self.y, self.z)

    def is_degenerate(self, axis: int) -> bool:
        lo, hi = self.axes()[axis]
        return lo == hi


@dataclass(frozen=True)
class Coil:
    """Excitation coil. ``segments`` is a polyline; ``None`` means a point dipole."""

    position: tuple
    normal: tuple = (0.0, 0.0, 1.0)
    segments: Optional[tuple] = None

    def __post_init__(self):
        object.__setattr__(self, "position", _vec3(self.position))
        object.__setattr__(self, "normal", _vec3(self.normal))
        if self.segments is not None:
            object.__setattr__(self, "segments", tuple(_vec3(p) for p in self.segments))

    @property
    def has_segments(self) -> bool:
        return self.segments is not None and len(self.segments) > 0


@dataclass(frozen=True)
class Sensor:
    """Oriented point magnetometer."""

    position: tuple
    normal: tuple = (0.0, 0.0, 1.0)
    sensor_id: int = 0
    channel_id: int = 0
    group_id: int = 0

    def __post_init__(self):
        object.__setattr__(self, "position", _vec3(self.position))
        object.__setattr__(self, "normal", _vec3(self.normal))
        for name in ("sensor_id", "channel_id", "group_id"):
            object.__setattr__(self, name, int(getattr(self, name)))


@dataclass(frozen=True)
class Setup:
    """Experiment geometry: dimension, ROI, coils and sensors."""

    dim: int
    roi: Roi
    coils: tuple
    sensors: tuple

    def __post_init__(self):
        object.__setattr__(self, "coils", tuple(self.coils))
        object.__setattr__(self, "sensors", tuple(self.sensors))

    def to_dict(self) -> dict:
        """Plain nested dict (lists and floats), the canonical serialized form."""
        return {
            "dim": int(self.dim),
            "roi": {k: list(v) for k, v in zip("xyz", self.roi.axes())},
            "coils": [
                {
                    "position": list(c.position),
                    "normal": list(c.normal),
                    **({"segments": [list(p) for p in c.segments]} if c.segments is not None else {}),
                }
                for c in self.coils
            ],
            "sensors": [
                {
                    "position": list(s.position),
                    "normal": list(s.normal),
                    "sensor_id": s.sensor_id,
                    "channel_id": s.channel_id,
                    "group_id": s.group_id,
                }
                for s in self.sensors
            ],
        }


@dataclass(frozen=True, eq=False)
class Config:
    """Simulation parameters.

    Parameters
    ----------
    res : (nx, ny, nz)
        Voxel resolution of the ROI.
    current_pattern : array, shape (num_patterns, len(active_coils))
        One row per pattern, amperes per active coil.
    active_coils, active_sensors : sequence of int
        1-based coil/sensor numbers into the setup lists.
    """

    res: tuple
    current_pattern: np.ndarray
    active_coils: tuple
    active_sensors: tuple

    def __post_init__(self):
        object.__setattr__(self, "res", tuple(int(n) for n in self.res))
        pattern = np.array(self.current_pattern, dtype=float)
        if pattern.ndim == 1:
            pattern = pattern.reshape(1, -1)
        pattern.setflags(write=False)
        object.__setattr__(self, "current_pattern", pattern)
        object.__setattr__(self, "active_coils", tuple(int(i) for i in self.active_coils))
        object.__setattr__(self, "active_sensors", tuple(int(i) for i in self.active_sensors))

    def __eq__(self, other):
        if not isinstance(other, Config):
            return NotImplemented
        return (
            self.res == other.res
            and self.active_coils == other.active_coils
            and self.active_sensors == other.active_sensors
            and self.current_pattern.shape == other.current_pattern.shape
            and np.array_equal(self.current_pattern, other.current_pattern)
        )

    __hash__ = None

    @property
    def num_patterns(self) -> int:
        return self.current_pattern.shape[0]

    def to_dict(self) -> dict:
        return {
            "res": list(self.res),
            "active_coils": list(self.active_coils),
            "active_sensors": list(self.active_sensors),
            "current_pattern": [[float(v) for v in row] for row in self.current_pattern],
        }


@dataclass(frozen=True)
class PhysicsParams:
    """Scalar physics constants.

    ``theta`` is the Biot-Savart prefactor (mu0/4pi by default, T*m/A) and
    ``kernel_prefactor`` the factor applied to the sensor kernel, 1/3 by
    default from the static magnetization model.
    """

    theta: float = 1e-7
    kernel_prefactor: float = 1.0 / 3.0

    def __post_init__(self):
        if not (math.isfinite(self.theta) and self.theta > 0):
            raise ValidationError(f"theta must be positive, got {self.theta}")
        if not math.isfinite(self.kernel_prefactor):
            raise ValidationError("kernel_prefactor must be finite")


@dataclass
class ValidationReport:
    """Outcome of a validation pass. Empty ``violations`` means pass."""

    violations: list = field(default_factory=list)
    warnings: list = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations

    def __bool__(self):
        return self.ok

    def __str__(self):
        if self.ok:
            return "OK"
        return "; ".join(self.violations)

    def raise_if_failed(self, what="input"):
        if not self.ok:
            raise ValidationError(f"invalid {what}: {self}", self.violations)


# -- construction helpers ---------------------------------------------------


def create_entity_array(p_start, p_end, normal, n_points: int):
    """Equidistant entity positions from ``p_start`` to ``p_end`` (both included).

    Returns a list of ``(position, normal)`` tuples; the normal is normalized.
    """
    p0 = np.asarray(p_start, dtype=float)
    p1 = np.asarray(p_end, dtype=float)
    if n_points < 2:
        raise ValidationError(f"n_points must be >= 2, got {n_points}")
    if np.array_equal(p0, p1):
        raise ValidationError("p_start and p_end coincide")
    n = _vec3(_unit(normal))
    out = []
    for i in range(n_points):
        if i == n_points - 1:
            pos = p1
        else:
            pos = p0 + (i / (n_points - 1)) * (p1 - p0)
        out.append((_vec3(pos), n))
    return out


def create_coil_loop(radius: float, n_segments: int):
    """Closed regular polygon template of ``n_segments`` segments in the z=0 plane.

    The first point is (radius, 0, 0) and the loop runs counterclockwise seen
    from +z; the first point is repeated at the end.
    """
    if not radius > 0:
        raise ValidationError(f"radius must be positive, got {radius}")
    if n_segments < 3:
        raise ValidationError(f"n_segments must be >= 3, got {n_segments}")
    pts = []
    for k in range(n_segments):
        phi = 2.0 * math.pi * k / n_segments
        pts.append((radius * math.cos(phi), radius * math.sin(phi), 0.0))
    pts.append(pts[0])
    return pts


def rotation_from_z(normal) -> np.ndarray:
    """Minimal rotation matrix taking (0, 0, 1) onto the normalized ``normal``.

    Antiparallel normals use a rotation by pi about the x-axis.
    """
    n = _unit(normal)
    c = n[2]
    if c == 1.0:
        return np.eye(3)
    if c <= -1.0 + 1e-15:
        return np.diag([1.0, -1.0, -1.0])
    # Rodrigues with v = z x n, |v| = sin(angle)
    v = np.array([-n[1], n[0], 0.0])
    vx = np.array([[0.0, -v[2], v[1]], [v[2], 0.0, -v[0]], [-v[1], v[0], 0.0]])
    # 1 + c cancels near -z; use the equal s^2 / (1 - c) there
    s2 = v[0] * v[0] + v[1] * v[1]
    scale = 1.0 / (1.0 + c) if c >= 0.0 else (1.0 - c) / s2
    return np.eye(3) + vx + (vx @ vx) * scale


def relocate_structure(points, position, normal):
    """Rotate a z-oriented template onto ``normal`` and translate it to ``position``."""
    R = rotation_from_z(normal)
    pts = np.asarray(points, dtype=float).reshape(-1, 3)
    pos = np.asarray(position, dtype=float)
    if np.array_equal(R, np.eye(3)):
        moved = pts + pos
    else:
        moved = pts @ R.T + pos
    return [_vec3(p) for p in moved]


def parse_coils(coils: Sequence[Coil], template) -> list:
    """Attach ``template`` (relocated per coil) as the segment polyline of every coil."""
    template = list(template)
    if not template:
        raise ValidationError("coil template is empty")
    return [
        Coil(c.position, c.normal, tuple(relocate_structure(template, c.position, c.normal)))
        for c in coils
    ]


def get_roi(voxel_centers, voxel_size) -> Roi:
    """Bounding box of a voxel set: per axis ``[min - size/2, max + size/2]``."""
    centers = np.asarray(voxel_centers, dtype=float).reshape(-1, 3)
    if centers.shape[0] == 0:
        raise ValidationError("no voxel centers given")
    size = np.asarray(voxel_size, dtype=float)
    if np.any(size < 0):
        raise ValidationError("voxel size must be nonnegative")
    lo = centers.min(axis=0) - size / 2
    hi = centers.max(axis=0) + size / 2
    return Roi(*((float(lo[i]), float(hi[i])) for i in range(3)))


CURRENT_PRESETS = ("sequential", "uniform", "pairwise")


def create_current_pattern(preset: str, n_coils: int, amplitude: float = 1.0) -> np.ndarray:
    """Current pattern matrix (patterns x coils) for a named preset.

    ``sequential`` drives one coil per pattern, ``uniform`` all coils at once,
    ``pairwise`` neighboring coils with opposite polarity.
    """
    if n_coils < 1:
        raise ValidationError("n_coils must be >= 1")
    if amplitude == 0:
        raise ValidationError("amplitude must be nonzero")
    amplitude = float(amplitude)
    if preset == "sequential":
        return np.eye(n_coils) * amplitude
    if preset == "uniform":
        return np.full((1, n_coils), amplitude)
    if preset == "pairwise":
        if n_coils < 2:
            raise ValidationError("pairwise pattern needs at least 2 coils")
        P = np.zeros((n_coils - 1, n_coils))
        for i in range(n_coils - 1):
            P[i, i] = amplitude
            P[i, i + 1] = -amplitude
        return P
    raise ValidationError(f"unknown current pattern preset {preset!r} (known: {', '.join(CURRENT_PRESETS)})")


# -- validation -------------------------------------------------------------


def _finite(v) -> bool:
    try:
        return all(math.isfinite(float(c)) for c in v)
    except (TypeError, ValueError):
        return False


def _is_unit(v) -> bool:
    return _finite(v) and abs(math.sqrt(sum(float(c) ** 2 for c in v)) - 1.0) <= NORMAL_TOL


def validate_setup(setup: Setup) -> ValidationReport:
    """Check a setup for missing fields and inconsistencies. Never raises."""
    rep = ValidationReport()
    bad = rep.violations
    for name in ("dim", "roi", "coils", "sensors"):
        if getattr(setup, name, None) is None:
            bad.append(f"missing field {name}")
    if bad:
        return rep

    if setup.dim not in (2, 3):
        bad.append(f"dim must be 2 or 3, got {setup.dim}")
    for axis, (lo, hi) in zip("xyz", setup.roi.axes()):
        if not _finite((lo, hi)):
            bad.append(f"non-finite roi.{axis}")
        elif lo > hi:
            bad.append(f"roi.{axis} has lo > hi")
    if len(setup.coils) == 0:
        bad.append("empty coil list")
    if len(setup.sensors) == 0:
        bad.append("empty sensor list")

    for k, c in enumerate(setup.coils, start=1):
        if not _finite(c.position):
            bad.append(f"non-finite position, coil {k}")
        if not _is_unit(c.normal):
            bad.append(f"non-unit normal, coil {k}")
        if c.segments is not None:
            if len(c.segments) < 2:
                bad.append(f"fewer than 2 segment points, coil {k}")
            if not all(_finite(p) for p in c.segments):
                bad.append(f"non-finite segment point, coil {k}")
            for a, b in zip(c.segments, c.segments[1:]):
                if a == b:
                    bad.append(f"repeated consecutive segment point, coil {k}")
                    break

    seen = set()
    for k, s in enumerate(setup.sensors, start=1):
        if not _finite(s.position):
            bad.append(f"non-finite position, sensor {k}")
        if not _is_unit(s.normal):
            bad.append(f"non-unit normal, sensor {k}")
        if s.sensor_id in seen:
            bad.append(f"duplicate sensor id {s.sensor_id}, sensor {k}")
        seen.add(s.sensor_id)

    if setup.dim == 2:
        zs = {c.position[2] for c in setup.coils} | {s.position[2] for s in setup.sensors}
        lo, hi = setup.roi.z
        if len(zs) > 1 or lo != hi or (zs and zs.pop() != lo):
            bad.append("2D z-coherence: coils, sensors and roi.z must share one z value")
    return rep


def validate_config(config: Config) -> ValidationReport:
    """Check a config for internal consistency. Never raises."""
    rep = ValidationReport()
    bad = rep.violations
    for name in ("res", "current_pattern", "active_coils", "active_sensors"):
        if getattr(config, name, None) is None:
            bad.append(f"missing field {name}")
    if bad:
        return rep

    if len(config.res) != 3:
        bad.append(f"res must have 3 entries, got {len(config.res)}")
    if any(n < 1 for n in config.res):
        bad.append(f"nonpositive resolution {list(config.res)}")

    P = config.current_pattern
    if P.ndim != 2 or P.size == 0:
        bad.append("empty current pattern")
    else:
        if not np.all(np.isfinite(P)):
            bad.append("non-finite current pattern entries")
        if P.shape[1] != len(config.active_coils):
            bad.append(
                f"pattern/coil mismatch: {P.shape[1]} pattern columns, {len(config.active_coils)} active coils"
            )

    for name in ("active_coils", "active_sensors"):
        idx = list(getattr(config, name))
        if not idx:
            bad.append(f"{name} is empty")
        if len(set(idx)) != len(idx):
            bad.append(f"duplicate entries in {name}")
        elif idx != sorted(idx):
            bad.append(f"{name} not strictly increasing")
        if any(i < 1 for i in idx):
            bad.append(f"{name} entries must be >= 1")
    return rep


def check_compatibility(setup: Setup, config: Config) -> ValidationReport:
    """Check that ``config`` can be applied to ``setup``. Never raises."""
    rep = ValidationReport()
    bad = rep.violations
    n_c, n_s = len(setup.coils), len(setup.sensors)
    for i in config.active_coils:
        if not 1 <= i <= n_c:
            bad.append(f"coil index out of range: {i} (setup has {n_c} coils)")
    for i in config.active_sensors:
        if not 1 <= i <= n_s:
            bad.append(f"sensor index out of range: {i} (setup has {n_s} sensors)")
    if setup.dim == 2:
        if len(config.res) == 3 and config.res[2] != 1:
            bad.append(f"2D requires nz=1, got res {list(config.res)}")
        with_segments = [i for i in config.active_coils if 1 <= i <= n_c and setup.coils[i - 1].has_segments]
        if with_segments:
            rep.warnings.append(
                f"2D setup: segments of coils {with_segments} are ignored, coils are modeled as dipoles"
            )
    return rep


def require_valid(setup: Setup, config: Config) -> list:
    """Run all three validators and raise :class:`ValidationError` on any violation.

    Returns the collected warnings.
    """
    violations = []
    warnings = []
    for what, rep in (
        ("setup", validate_setup(setup)),
        ("config", validate_config(config)),
    ):
        violations += [f"{what}: {v}" for v in rep.violations]
    if not violations:
        rep = check_compatibility(setup, config)
        violations += [f"compatibility: {v}" for v in rep.violations]
        warnings += rep.warnings
    if violations:
        raise ValidationError("; ".join(violations), violations)
    return warnings


def active_items(items: Iterable, numbers: Sequence[int]) -> list:
    items = list(items)
    return [items[i - 1] for i in numbers]
