"""File formats.

Native setup/config files
    ``.mrxsetup`` / ``.mrxcfg``: versioned YAML documents, see
    :func:`save_setup` for the schema. Every file ends with an ``end`` key so
    truncation is detected.

Raw blocks
    One binary file per coil, ``MRXRAW1`` magic, a fixed header and row-major
    little-endian float64 data, plus ``manifest.json``. See :func:`write_block`.

Text datasets
    ``sensors.dat``, ``coilGrid.dat``, ``coilTemplate.dat``, ``voxelGrid.dat``,
    ``dataset.<k>.currents.dat`` and ``dataset.<k>.relax.dat``:
    whitespace-separated columns, ``#`` comments, 12 significant digits.
"""

from __future__ import annotations

import json
import math
import os
import re
import struct
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import NamedTuple, Optional

import numpy as np
import yaml

from .errors import FormatError, MRXWarning, ValidationError
from .fields import create_voxel_grid
from .model import Coil, Config, PhysicsParams, Roi, Sensor, Setup, get_roi, parse_coils
from .phantom import Phantom
from .relaxation import SystemMatrix, SystemMatrixRaw, create_system_matrix, forward_apply

SCHEMA_VERSION = 1
RAW_FORMAT_VERSION = 1
SETUP_EXT = ".mrxsetup"
CONFIG_EXT = ".mrxcfg"
FEMTO = 1e15

# ---------------------------------------------------------------------------
# .mrxsetup / .mrxcfg
# ---------------------------------------------------------------------------


def _dump_yaml(doc, path):
    text = yaml.safe_dump(doc, sort_keys=False, default_flow_style=None, width=1000)
    Path(path).write_text(text, encoding="utf-8")


def _load_yaml(path, kind):
    path = Path(path)
    text = path.read_text(encoding="utf-8")
    try:
        doc = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        line = mark.line + 1 if mark is not None else None
        problem = getattr(exc, "problem", None) or str(exc)
        raise FormatError(f"malformed {kind} file: {problem}", path, line) from None
    if not isinstance(doc, dict):
        raise FormatError(f"malformed {kind} file: expected a mapping at top level", path)
    if doc.get("format") != kind:
        raise FormatError(f"not a {kind} file (format = {doc.get('format')!r})", path)
    version = doc.get("version")
    if version != SCHEMA_VERSION:
        raise FormatError(f"schema version mismatch: file has {version!r}, expected {SCHEMA_VERSION}", path)
    return doc


def _require_sections(doc, sections, path, kind):
    for name in sections:
        if name not in doc:
            hint = " (file truncated?)" if name == "end" else ""
            raise FormatError(f"missing section '{name}' in {kind} file{hint}", path)
    if doc["end"] != kind:
        raise FormatError(f"bad end marker {doc['end']!r}", path)
    extra = [k for k in doc if k not in sections and k not in ("format", "version")]
    if extra:
        warnings.warn(f"{path}: ignoring unknown fields {extra}", MRXWarning, stacklevel=3)


def _vec(value, where, path, n=3):
    if not isinstance(value, (list, tuple)) or len(value) != n:
        raise FormatError(f"field {where}: expected a list of {n} numbers, got {value!r}", path)
    try:
        return tuple(float(v) for v in value)
    except (TypeError, ValueError):
        raise FormatError(f"field {where}: non-numeric entry in {value!r}", path) from None


def _int(value, where, path):
    if isinstance(value, bool) or not isinstance(value, int):
        raise FormatError(f"field {where}: expected an integer, got {value!r}", path)
    return value


def _normal(v, where, path):
    n = math.sqrt(sum(c * c for c in v))
    if n == 0 or not math.isfinite(n):
        raise FormatError(f"field {where}: zero or non-finite normal", path)
    if abs(n - 1.0) > 1e-9:
        warnings.warn(f"{path}: {where} has length {n:g}, normalized", MRXWarning, stacklevel=4)
        return tuple(c / n for c in v)
    return v


def _check_keys(entry, known, where, path):
    if not isinstance(entry, dict):
        raise FormatError(f"field {where}: expected a mapping", path)
    extra = [k for k in entry if k not in known]
    if extra:
        warnings.warn(f"{path}: ignoring unknown fields {extra} in {where}", MRXWarning, stacklevel=4)


def save_setup(setup: Setup, path) -> Path:
    """Write ``setup`` as a ``.mrxsetup`` YAML document.

    Schema (version 1)::

        format: mrxsetup
        version: 1
        dim: 2 | 3
        roi: {x: [lo, hi], y: [lo, hi], z: [lo, hi]}
        coils:    [{position: [x,y,z], normal: [x,y,z], segments: [[x,y,z], ...]?}, ...]
        sensors:  [{position, normal, sensor_id, channel_id, group_id}, ...]
        end: mrxsetup
    """
    path = Path(path)
    doc = {"format": "mrxsetup", "version": SCHEMA_VERSION}
    doc.update(setup.to_dict())
    doc["end"] = "mrxsetup"
    _dump_yaml(doc, path)
    return path


def load_setup(path) -> Setup:
    """Read a ``.mrxsetup`` file. Non-unit normals are normalized with a warning."""
    path = Path(path)
    doc = _load_yaml(path, "mrxsetup")
    _require_sections(doc, ("dim", "roi", "coils", "sensors", "end"), path, "mrxsetup")
    dim = _int(doc["dim"], "dim", path)
    roi_doc = doc["roi"]
    _check_keys(roi_doc, "xyz", "roi", path)
    for axis in "xyz":
        if axis not in roi_doc:
            raise FormatError(f"field roi.{axis} missing", path)
    roi = Roi(*(_vec(roi_doc[a], f"roi.{a}", path, 2) for a in "xyz"))
    if not isinstance(doc["coils"], list) or not isinstance(doc["sensors"], list):
        raise FormatError("coils and sensors must be lists", path)

    coils = []
    for k, c in enumerate(doc["coils"], start=1):
        where = f"coils[{k}]"
        _check_keys(c, ("position", "normal", "segments"), where, path)
        if "position" not in c or "normal" not in c:
            raise FormatError(f"field {where}: position and normal are required", path)
        pos = _vec(c["position"], f"{where}.position", path)
        nrm = _normal(_vec(c["normal"], f"{where}.normal", path), f"{where}.normal", path)
        segs = None
        if c.get("segments") is not None:
            if not isinstance(c["segments"], list):
                raise FormatError(f"field {where}.segments: expected a list of points", path)
            segs = tuple(_vec(p, f"{where}.segments[{j}]", path) for j, p in enumerate(c["segments"], start=1))
        coils.append(Coil(pos, nrm, segs))

    sensors = []
    for k, s in enumerate(doc["sensors"], start=1):
        where = f"sensors[{k}]"
        _check_keys(s, ("position", "normal", "sensor_id", "channel_id", "group_id"), where, path)
        for key in ("position", "normal", "sensor_id"):
            if key not in s:
                raise FormatError(f"field {where}.{key} missing", path)
        sensors.append(
            Sensor(
                _vec(s["position"], f"{where}.position", path),
                _normal(_vec(s["normal"], f"{where}.normal", path), f"{where}.normal", path),
                _int(s["sensor_id"], f"{where}.sensor_id", path),
                _int(s.get("channel_id", 0), f"{where}.channel_id", path),
                _int(s.get("group_id", 0), f"{where}.group_id", path),
            )
        )
    return Setup(dim, roi, tuple(coils), tuple(sensors))


def save_config(config: Config, path) -> Path:
    """Write ``config`` as a ``.mrxcfg`` YAML document.

    Schema (version 1)::

        format: mrxcfg
        version: 1
        res: [nx, ny, nz]
        active_coils: [1-based coil numbers]
        active_sensors: [1-based sensor numbers]
        current_pattern: [[A, ...], ...]   # one row per pattern
        end: mrxcfg
    """
    path = Path(path)
    doc = {"format": "mrxcfg", "version": SCHEMA_VERSION}
    doc.update(config.to_dict())
    doc["end"] = "mrxcfg"
    _dump_yaml(doc, path)
    return path


def load_config(path) -> Config:
    path = Path(path)
    doc = _load_yaml(path, "mrxcfg")
    _require_sections(doc, ("res", "active_coils", "active_sensors", "current_pattern", "end"), path, "mrxcfg")
    res = doc["res"]
    if not isinstance(res, list) or len(res) != 3:
        raise FormatError(f"field res: expected [nx, ny, nz], got {res!r}", path)
    res = tuple(_int(n, "res", path) for n in res)
    lists = {}
    for key in ("active_coils", "active_sensors"):
        if not isinstance(doc[key], list):
            raise FormatError(f"field {key}: expected a list", path)
        lists[key] = tuple(_int(i, key, path) for i in doc[key])
    rows = doc["current_pattern"]
    if not isinstance(rows, list) or not all(isinstance(r, list) for r in rows):
        raise FormatError("field current_pattern: expected a list of rows", path)
    widths = {len(r) for r in rows}
    if len(widths) > 1:
        raise FormatError(f"field current_pattern: ragged rows (widths {sorted(widths)})", path)
    try:
        pattern = np.array([[float(v) for v in r] for r in rows], dtype=float)
    except (TypeError, ValueError):
        raise FormatError("field current_pattern: non-numeric entry", path) from None
    if pattern.size == 0:
        pattern = pattern.reshape(len(rows), 0)
    return Config(res, pattern, lists["active_coils"], lists["active_sensors"])


# ---------------------------------------------------------------------------
# binary blocks
# ---------------------------------------------------------------------------

BLOCK_MAGIC = b"MRXRAW1"
_HEADER = struct.Struct("<7siII32s")  # magic, coil id, rows, cols, fingerprint


def write_block(path, coil_id: int, data, fingerprint: str):
    """Write one matrix block.

    Layout: ``b"MRXRAW1"``, int32 coil id (0 for a combined matrix), uint32
    rows, uint32 cols, 32 ASCII hex chars of fingerprint, then rows*cols
    little-endian float64 values in row-major order.
    """
    data = np.ascontiguousarray(data, dtype="<f8")
    rows, cols = data.shape
    header = _HEADER.pack(BLOCK_MAGIC, int(coil_id), rows, cols, fingerprint.encode("ascii"))
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(data.tobytes(order="C"))


def read_block(path):
    """Return ``(coil_id, matrix, fingerprint)`` from a block file."""
    path = Path(path)
    raw = path.read_bytes()
    if len(raw) < _HEADER.size:
        raise FormatError("block file too short for header", path)
    magic, coil_id, rows, cols, fp = _HEADER.unpack_from(raw)
    if magic != BLOCK_MAGIC:
        raise FormatError(f"bad magic {magic!r}", path)
    expected = _HEADER.size + 8 * rows * cols
    if len(raw) != expected:
        raise FormatError(f"block size mismatch: {len(raw)} bytes, expected {expected}", path)
    data = np.frombuffer(raw, dtype="<f8", offset=_HEADER.size).reshape(rows, cols).astype(float)
    return coil_id, data, fp.decode("ascii")


def _write_json(path, doc):
    Path(path).write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def _grid_doc(grid):
    return {"res": list(grid.res), "roi": {a: list(v) for a, v in zip("xyz", grid.roi.axes())}}


def _grid_from_doc(doc):
    roi = Roi(*(tuple(doc["roi"][a]) for a in "xyz"))
    return create_voxel_grid(roi, doc["res"])


def _prepare_dir(directory, names, force):
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    if not force:
        existing = [n for n in names if (directory / n).exists()]
        if existing:
            raise FileExistsError(f"{directory}: refusing to overwrite {existing[0]} (use force)")
    return directory


def block_filename(coil_id: int) -> str:
    return f"coil_{coil_id:04d}.bin"


def export_raw(raw: SystemMatrixRaw, directory, force: bool = False) -> dict:
    """Write every coil block of ``raw`` to its own file plus ``manifest.json``.

    Returns the manifest dict.
    """
    files = {str(c): block_filename(c) for c in raw.active_coils}
    directory = _prepare_dir(directory, list(files.values()) + ["manifest.json"], force)
    for k, c in enumerate(raw.active_coils):
        write_block(directory / files[str(c)], c, raw.blocks[k], raw.fingerprint)
    manifest = {
        "format": "mrxraw",
        "version": RAW_FORMAT_VERSION,
        "fingerprint": raw.fingerprint,
        "coils": list(raw.active_coils),
        "sensors": list(raw.active_sensors),
        "grid": _grid_doc(raw.grid),
        "files": files,
    }
    _write_json(directory / "manifest.json", manifest)
    return manifest


def read_manifest(directory) -> dict:
    path = Path(directory) / "manifest.json"
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise FormatError(f"malformed manifest: {exc.msg}", path, exc.lineno) from None
    if doc.get("version") != RAW_FORMAT_VERSION:
        raise FormatError(f"manifest version mismatch: {doc.get('version')!r}", path)
    return doc


def import_raw(directory, active_coils=None, active_sensors=None, fingerprint: Optional[str] = None) -> SystemMatrixRaw:
    """Load selected coil blocks and sensor rows from an :func:`export_raw` directory.

    ``None`` selects everything that was exported. With ``fingerprint`` given,
    a manifest exported for a different setup/resolution/physics is rejected.
    """
    directory = Path(directory)
    man = read_manifest(directory)
    if man.get("format") != "mrxraw":
        raise FormatError("manifest is not a raw export", directory / "manifest.json")
    if fingerprint is not None and fingerprint != man["fingerprint"]:
        raise ValidationError(
            f"fingerprint mismatch: raw export {man['fingerprint']} was made for a different "
            f"setup/resolution/physics than requested ({fingerprint})"
        )
    exported_sensors = list(man["sensors"])
    coils = man["coils"] if active_coils is None else sorted(int(c) for c in active_coils)
    sensors = exported_sensors if active_sensors is None else sorted(int(s) for s in active_sensors)
    missing = [s for s in sensors if s not in exported_sensors]
    if missing:
        raise ValidationError(f"sensor index out of range of export: {missing}")
    rows = [exported_sensors.index(s) for s in sensors]
    grid = _grid_from_doc(man["grid"])

    blocks = np.empty((len(coils), len(sensors), grid.num_voxels))
    for k, c in enumerate(coils):
        name = man["files"].get(str(c))
        if name is None:
            raise ValidationError(f"coil {c} was not exported (available: {man['coils']})")
        path = directory / name
        if not path.exists():
            raise FileNotFoundError(f"missing coil block file {path}")
        coil_id, data, fp = read_block(path)
        if coil_id != c or fp != man["fingerprint"]:
            raise FormatError("block header does not match manifest", path)
        if data.shape != (len(exported_sensors), grid.num_voxels):
            raise FormatError(f"block shape {data.shape} does not match manifest", path)
        blocks[k] = data[rows]
    blocks.setflags(write=False)
    return SystemMatrixRaw(blocks, grid, tuple(coils), tuple(sensors), man["fingerprint"])


MATRIX_FILE = "matrix.bin"


def save_system_matrix(A: SystemMatrix, directory, force: bool = False) -> dict:
    """Write a combined matrix as one block (coil id 0) plus ``manifest.json``."""
    directory = _prepare_dir(directory, [MATRIX_FILE, "manifest.json"], force)
    write_block(directory / MATRIX_FILE, 0, A.matrix, A.fingerprint)
    manifest = {
        "format": "mrxmatrix",
        "version": RAW_FORMAT_VERSION,
        "fingerprint": A.fingerprint,
        "coils": list(A.active_coils),
        "sensors": list(A.active_sensors),
        "grid": _grid_doc(A.grid),
        "shape": list(A.shape),
        "current_pattern": [[float(v) for v in row] for row in A.current_pattern],
        "files": {"matrix": MATRIX_FILE},
    }
    _write_json(directory / "manifest.json", manifest)
    return manifest


def load_system_matrix(directory) -> SystemMatrix:
    directory = Path(directory)
    man = read_manifest(directory)
    if man.get("format") != "mrxmatrix":
        raise FormatError("manifest is not a system matrix", directory / "manifest.json")
    _, data, fp = read_block(directory / man["files"]["matrix"])
    return SystemMatrix(
        data,
        _grid_from_doc(man["grid"]),
        tuple(man["coils"]),
        tuple(man["sensors"]),
        np.array(man["current_pattern"], dtype=float),
        fp,
    )


# ---------------------------------------------------------------------------
# text dataset tables
# ---------------------------------------------------------------------------


class Measurement(NamedTuple):
    delta_b: float  # femtotesla
    sensor_id: int
    channel_id: int
    group_id: int
    coil_no: int


@dataclass
class Dataset:
    """A measured (or simulated) text dataset.

    ``measurements`` follows the relax table: one group per coil number, each
    group listing the same sensors in the same order.
    """

    setup: Setup
    currents: np.ndarray
    measurements: list
    defective_sensors: list = field(default_factory=list)
    voxel_centers: Optional[np.ndarray] = None
    coil_template: Optional[np.ndarray] = None

    @property
    def coil_numbers(self) -> list:
        return sorted({m.coil_no for m in self.measurements})

    @property
    def sensor_ids(self) -> list:
        first = self.measurements[0].coil_no if self.measurements else None
        return [m.sensor_id for m in self.measurements if m.coil_no == first]

    def delta_b(self) -> np.ndarray:
        """Readings as a ``(coil groups, sensors)`` array in femtotesla."""
        n_s = len(self.sensor_ids)
        return np.array([m.delta_b for m in self.measurements], dtype=float).reshape(-1, n_s)

    def current_pattern(self) -> np.ndarray:
        """Sequential pattern implied by the currents file: one coil per pattern."""
        return np.diag(self.currents)


def _fmt(v) -> str:
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return f"{float(v):.12g}"


def write_table(path, rows, columns, note=None):
    lines = []
    if note:
        lines.append(f"# {note}")
    lines.append("# " + " ".join(columns))
    for row in rows:
        lines.append(" ".join(_fmt(v) for v in row))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8", newline="\n")


def read_table(path, ncols: int):
    """Numeric rows of a whitespace table as ``(line_number, [floats])`` pairs."""
    path = Path(path)
    rows = []
    with open(path, "r", encoding="ascii", errors="replace") as fh:
        for lineno, line in enumerate(fh, start=1):
            text = line.split("#", 1)[0].strip()
            if not text:
                continue
            words = text.split()
            if len(words) != ncols:
                raise FormatError(f"expected {ncols} columns, found {len(words)}", path, lineno)
            try:
                rows.append((lineno, [float(w) for w in words]))
            except ValueError:
                raise FormatError(f"non-numeric value in {text!r}", path, lineno) from None
    return rows


def _as_int(value, path, lineno):
    if value != int(value):
        raise FormatError(f"expected an integer, got {value}", path, lineno)
    return int(value)


SENSOR_COLUMNS = ("x[m]", "y[m]", "z[m]", "nx", "ny", "nz", "SensorID", "ChannelID", "GroupID")
XYZ_COLUMNS = ("x[m]", "y[m]", "z[m]")
RELAX_COLUMNS = ("dB[fT]", "SensorID", "ChannelID", "GroupID", "CoilNo")
GEOMETRY_FILES = ("sensors.dat", "coilGrid.dat", "coilTemplate.dat", "voxelGrid.dat")


def dataset_files(dataset="01"):
    return f"dataset.{dataset}.currents.dat", f"dataset.{dataset}.relax.dat"


def coil_template_of(setup: Setup):
    """Shared template of the setup's coils, or ``None`` if all coils are dipoles.

    Raises :class:`ValidationError` when coils cannot be written as one
    translated template (mixed models, tilted normals, differing shapes).
    """
    coils = setup.coils
    if not any(c.has_segments for c in coils):
        return None
    if not all(c.has_segments for c in coils):
        raise ValidationError("mixed dipole and segment coils cannot be written as text tables")
    ref = np.asarray(coils[0].segments) - np.asarray(coils[0].position)
    for k, c in enumerate(coils, start=1):
        if c.normal != (0.0, 0.0, 1.0):
            raise ValidationError(f"coil {k}: text tables only store +z oriented coils")
        seg = np.asarray(c.segments) - np.asarray(c.position)
        if seg.shape != ref.shape or not np.allclose(seg, ref, rtol=0, atol=1e-12):
            raise ValidationError(f"coil {k}: segments are not a translate of the common template")
    return ref


def write_geometry_tables(setup: Setup, voxel_centers, directory, template=None):
    """Write ``sensors.dat``, ``coilGrid.dat``, ``coilTemplate.dat`` and ``voxelGrid.dat``."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    if template is None:
        template = coil_template_of(setup)
    write_table(
        directory / "sensors.dat",
        [(*s.position, *s.normal, s.sensor_id, s.channel_id, s.group_id) for s in setup.sensors],
        SENSOR_COLUMNS,
    )
    write_table(directory / "coilGrid.dat", [c.position for c in setup.coils], XYZ_COLUMNS)
    write_table(
        directory / "coilTemplate.dat",
        [] if template is None else [tuple(p) for p in np.asarray(template, dtype=float)],
        XYZ_COLUMNS,
        note="coil template points; empty means point-dipole coils",
    )
    write_table(directory / "voxelGrid.dat", [tuple(p) for p in np.asarray(voxel_centers, dtype=float)], XYZ_COLUMNS)


def write_measurement_tables(currents, measurements, directory, dataset="01"):
    """Write ``dataset.<k>.currents.dat`` and ``dataset.<k>.relax.dat``."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    cur_name, relax_name = dataset_files(dataset)
    write_table(directory / cur_name, [(float(i),) for i in np.ravel(currents)], ("current[A]",))
    write_table(
        directory / relax_name,
        [(float(m.delta_b), int(m.sensor_id), int(m.channel_id), int(m.group_id), int(m.coil_no)) for m in measurements],
        RELAX_COLUMNS,
    )


def write_dataset_tables(setup, currents, measurements, directory, voxel_centers, template=None, dataset="01"):
    """Write all six dataset files into ``directory``."""
    write_geometry_tables(setup, voxel_centers, directory, template)
    write_measurement_tables(currents, measurements, directory, dataset)


def _infer_spacing(values):
    u = np.unique(values)
    if u.size < 2:
        return 0.0
    return float(np.min(np.diff(u)))


def read_dataset_tables(directory, dataset="01", dim=None) -> Dataset:
    """Parse the six text tables of ``directory`` into a :class:`Dataset`.

    Coils are built from ``coilGrid.dat`` and the shared ``coilTemplate.dat``
    (an empty template yields dipole coils with +z normals); the ROI is the
    bounding box of ``voxelGrid.dat`` with the voxel pitch inferred from the
    center spacing. ``dim`` defaults to 2 only for a flat single-layer setup.
    """
    directory = Path(directory)
    cur_name, relax_name = dataset_files(dataset)

    sensors = []
    ids = set()
    path = directory / "sensors.dat"
    for lineno, row in read_table(path, 9):
        nrm = row[3:6]
        n = math.sqrt(sum(c * c for c in nrm))
        if n == 0:
            raise FormatError("zero sensor normal", path, lineno)
        if abs(n - 1) > 1e-9:
            warnings.warn(f"{path}:{lineno}: sensor normal has length {n:g}, normalized", MRXWarning, stacklevel=2)
            nrm = [c / n for c in nrm]
        sid = _as_int(row[6], path, lineno)
        if sid in ids:
            raise FormatError(f"duplicate SensorID {sid}", path, lineno)
        ids.add(sid)
        sensors.append(Sensor(row[0:3], nrm, sid, _as_int(row[7], path, lineno), _as_int(row[8], path, lineno)))

    positions = [row for _, row in read_table(directory / "coilGrid.dat", 3)]
    template = np.array([row for _, row in read_table(directory / "coilTemplate.dat", 3)], dtype=float).reshape(-1, 3)
    coils = [Coil(p) for p in positions]
    if len(template):
        if len(template) < 2:
            raise FormatError("coil template needs at least 2 points", directory / "coilTemplate.dat")
        coils = parse_coils(coils, template)

    centers = np.array([row for _, row in read_table(directory / "voxelGrid.dat", 3)], dtype=float).reshape(-1, 3)
    if len(centers) == 0:
        raise FormatError("no voxels", directory / "voxelGrid.dat")
    size = [_infer_spacing(centers[:, i]) for i in range(3)]
    roi = get_roi(centers, size)

    path = directory / cur_name
    currents = np.array([row[0] for _, row in read_table(path, 1)], dtype=float)
    if len(currents) != len(coils):
        raise FormatError(f"{len(currents)} currents for {len(coils)} coils in coilGrid.dat", path)

    path = directory / relax_name
    rows = read_table(path, 5)
    measurements = []
    for lineno, row in rows:
        m = Measurement(
            row[0],
            _as_int(row[1], path, lineno),
            _as_int(row[2], path, lineno),
            _as_int(row[3], path, lineno),
            _as_int(row[4], path, lineno),
        )
        if m.sensor_id not in ids:
            raise FormatError(f"SensorID {m.sensor_id} absent from sensors.dat", path, lineno)
        if not 1 <= m.coil_no <= len(coils):
            raise FormatError(f"CoilNo {m.coil_no} out of range 1..{len(coils)}", path, lineno)
        measurements.append(m)
    n_s = len({m.sensor_id for m in measurements})
    if n_s == 0:
        raise FormatError("no measurements", path)
    if len(measurements) % n_s:
        raise FormatError(f"row count not divisible: {len(measurements)} rows for {n_s} sensors", path)
    order = [m.sensor_id for m in measurements[:n_s]]
    prev = 0
    for g in range(len(measurements) // n_s):
        group = measurements[g * n_s : (g + 1) * n_s]
        lineno = rows[g * n_s][0]
        coil_nos = {m.coil_no for m in group}
        if len(coil_nos) != 1:
            raise FormatError(f"measurement group starting here mixes CoilNo {sorted(coil_nos)}", path, lineno)
        if [m.sensor_id for m in group] != order:
            raise FormatError("sensor order differs from the first coil group", path, lineno)
        if group[0].coil_no <= prev:
            raise FormatError("coil groups must be in ascending CoilNo order", path, lineno)
        prev = group[0].coil_no

    if dim is None:
        zs = {c.position[2] for c in coils} | {s.position[2] for s in sensors}
        flat = roi.z[0] == roi.z[1] and zs == {roi.z[0]}
        dim = 2 if flat and not len(template) else 3
    setup = Setup(dim, roi, tuple(coils), tuple(sensors))
    return Dataset(setup, currents, measurements, [], centers, template if len(template) else None)


def load_dataset(directory, defective_sensor_ids=(), dataset="01") -> Dataset:
    """Read a dataset and drop defective sensors plus sensors absent from the relax table."""
    ds = read_dataset_tables(directory, dataset)
    defective = set(int(i) for i in defective_sensor_ids)
    measured = {m.sensor_id for m in ds.measurements}
    orphans = [s.sensor_id for s in ds.setup.sensors if s.sensor_id not in measured and s.sensor_id not in defective]
    if orphans:
        warnings.warn(f"sensors {orphans} have no measurements and are dropped", MRXWarning, stacklevel=2)
    drop = defective | set(orphans)
    sensors = tuple(s for s in ds.setup.sensors if s.sensor_id not in drop)
    measurements = [m for m in ds.measurements if m.sensor_id not in drop]
    setup = Setup(ds.setup.dim, ds.setup.roi, ds.setup.coils, sensors)
    present = sorted(defective & {s.sensor_id for s in ds.setup.sensors})
    return Dataset(setup, ds.currents, measurements, present, ds.voxel_centers, ds.coil_template)


# ---------------------------------------------------------------------------
# measurement simulation
# ---------------------------------------------------------------------------


def concentration(phantom, grid_weight: float, chi: float, mass_mg: float) -> np.ndarray:
    """Susceptibility-weighted mass density per voxel.

    ``c_v = chi * mass[kg] * p_v / (sum(p) * weight)``, so the integral of
    ``c`` over the ROI equals ``chi * mass``.
    """
    p = phantom.flat() if isinstance(phantom, Phantom) else np.asarray(phantom, dtype=float).ravel(order="F")
    if not chi > 0:
        raise ValidationError(f"chi must be positive, got {chi}")
    if not mass_mg > 0:
        raise ValidationError(f"particle mass must be positive, got {mass_mg}")
    total = p.sum()
    if not total > 0:
        raise ValidationError("phantom must have a positive sum")
    return (chi * (mass_mg * 1e-6)) * p / (total * grid_weight)


def simulate_measurement(
    setup: Setup,
    config: Config,
    physics: PhysicsParams,
    phantom,
    chi: float,
    mass_mg: float,
    system_matrix: Optional[SystemMatrix] = None,
    threads: int = 1,
) -> np.ndarray:
    """Simulated readings in femtotesla, ordered like the relax table.

    ``phantom`` is a :class:`Phantom` or an ``(nx, ny, nz)`` array matching
    ``config.res``. Pass ``system_matrix`` to reuse an assembled operator.
    """
    values = phantom.values if isinstance(phantom, Phantom) else np.asarray(phantom, dtype=float)
    if tuple(values.shape) != tuple(config.res):
        raise ValidationError(f"phantom shape {values.shape} does not match resolution {list(config.res)}")
    A = system_matrix if system_matrix is not None else create_system_matrix(setup, config, physics, threads)
    c = concentration(values, A.grid.cell_weight, chi, mass_mg)
    return forward_apply(A, c) * FEMTO


def measurement_records(setup: Setup, config: Config, delta_b_ft) -> list:
    """Relax-table records for a simulated measurement; CoilNo is the 1-based pattern number."""
    sensors = [setup.sensors[i - 1] for i in config.active_sensors]
    y = np.asarray(delta_b_ft, dtype=float)
    n_s = len(sensors)
    if y.shape[0] != config.num_patterns * n_s:
        raise ValidationError(f"{y.shape[0]} readings for {config.num_patterns} patterns x {n_s} sensors")
    return [
        Measurement(float(y[p * n_s + k]), s.sensor_id, s.channel_id, s.group_id, p + 1)
        for p in range(config.num_patterns)
        for k, s in enumerate(sensors)
    ]


def sequential_currents(config: Config) -> np.ndarray:
    """Per-coil currents of a sequential (square diagonal) pattern."""
    P = config.current_pattern
    if P.shape[0] != P.shape[1] or np.any(P[~np.eye(P.shape[0], dtype=bool)] != 0):
        raise ValidationError("text datasets only support sequential patterns (one coil per pattern)")
    return np.diag(P).copy()


def subset_setup(setup: Setup, config: Config) -> Setup:
    """Setup restricted to the config's active coils and sensors."""
    return Setup(
        setup.dim,
        setup.roi,
        tuple(setup.coils[i - 1] for i in config.active_coils),
        tuple(setup.sensors[i - 1] for i in config.active_sensors),
    )


def write_simulated_dataset(setup, config, physics, phantom, chi, mass_mg, directory, dataset="01", threads=1):
    """Simulate a measurement and write it, with geometry tables, as a text dataset."""
    currents = sequential_currents(config)
    y = simulate_measurement(setup, config, physics, phantom, chi, mass_mg, threads=threads)
    grid = create_voxel_grid(setup.roi, config.res)
    write_geometry_tables(subset_setup(setup, config), grid.centers, directory)
    write_measurement_tables(currents, measurement_records(setup, config, y), directory, dataset)
    return y


def setup_dir(name: str, base=None) -> Path:
    """``<base>/<name>``; ``base`` defaults to ``$MRXSIM_SETUPS`` or ``./setups``."""
    base = base or os.environ.get("MRXSIM_SETUPS") or "setups"
    return Path(base) / name


def res_dirname(res) -> str:
    return ".".join(str(int(n)) for n in res)


DATASET_RE = re.compile(r"^dataset\.(.+)\.relax\.dat$")


def list_datasets(directory) -> list:
    """Dataset keys ``k`` with both ``dataset.<k>.currents.dat`` and ``.relax.dat`` present."""
    directory = Path(directory)
    keys = []
    for p in sorted(directory.iterdir()):
        m = DATASET_RE.match(p.name)
        if m and (directory / f"dataset.{m.group(1)}.currents.dat").exists():
            keys.append(m.group(1))
    return keys


def write_phantom(phantom: Phantom, stem, force: bool = False):
    """Write ``<stem>.dat`` (1-based ix iy iz value) and ``<stem>.bin`` (flat little-endian float64).

    Both list voxels in grid order, x fastest.
    """
    stem = Path(stem)
    dat, binf = stem.with_name(stem.name + ".dat"), stem.with_name(stem.name + ".bin")
    stem.parent.mkdir(parents=True, exist_ok=True)
    if not force:
        for p in (dat, binf):
            if p.exists():
                raise FileExistsError(f"refusing to overwrite {p} (use force)")
    nx, ny, nz = phantom.res
    flat = phantom.flat()
    rows = (
        (i + 1, j + 1, k + 1, float(flat[i + nx * (j + ny * k)]))
        for k in range(nz)
        for j in range(ny)
        for i in range(nx)
    )
    write_table(dat, rows, ("ix", "iy", "iz", "value"), note=f"phantom {phantom.name} res {nx} {ny} {nz}")
    binf.write_bytes(np.ascontiguousarray(flat, dtype="<f8").tobytes())
    return [dat, binf]


def read_phantom_bin(path, res) -> Phantom:
    """Read a flat float64 phantom written by :func:`write_phantom`."""
    path = Path(path)
    res = tuple(int(n) for n in res)
    data = np.frombuffer(path.read_bytes(), dtype="<f8")
    if data.size != res[0] * res[1] * res[2]:
        raise FormatError(f"{data.size} values do not fit resolution {list(res)}", path)
    return Phantom(data.reshape(res, order="F").astype(float), path.stem)
