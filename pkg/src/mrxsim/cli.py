"""``mrxsim`` command line interface.

Exit codes: 0 success, 1 domain/validation error, 2 I/O or file-format error.
Progress goes to stderr; stdout carries a one-line summary per command.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import io as mrxio
from .errors import FormatError, MRXError
from .fields import create_excitation_fields, create_voxel_grid
from .model import (
    PhysicsParams,
    check_compatibility,
    require_valid,
    validate_config,
    validate_setup,
)
from .phantom import Phantom, create_phantom
from .relaxation import (
    apply_current_pattern,
    create_system_matrix,
    layout_fingerprint,
    system_matrix_raw,
)
from .setups import PRESETS, default_config, preset_setup

log = logging.getLogger("mrxsim")

EXIT_OK, EXIT_DOMAIN, EXIT_IO = 0, 1, 2


def _summary(**fields):
    print(json.dumps(fields, sort_keys=True))


def resolve_setup_path(arg) -> Path:
    """Path as given, else ``$MRXSIM_SETUPS/<name>/<name>.mrxsetup`` (or ``default.mrxsetup``)."""
    p = Path(arg)
    if p.exists():
        return p
    base = os.environ.get("MRXSIM_SETUPS")
    if base:
        for candidate in (Path(base) / arg / f"{arg}.mrxsetup", Path(base) / arg / "default.mrxsetup"):
            if candidate.exists():
                return candidate
    raise FileNotFoundError(f"setup file not found: {arg}")


def _physics(args) -> PhysicsParams:
    return PhysicsParams(theta=args.theta, kernel_prefactor=args.kappa)


def _load_pair(args):
    if not args.setup or not args.config:
        raise MRXError("--setup and --config are required")
    setup = mrxio.load_setup(resolve_setup_path(args.setup))
    config = mrxio.load_config(args.config)
    for w in require_valid(setup, config):
        log.warning("%s", w)
    return setup, config


def cmd_validate(args):
    lines = []
    ok = True
    setup = config = None
    if args.setup:
        setup = mrxio.load_setup(resolve_setup_path(args.setup))
        rep = validate_setup(setup)
        ok &= rep.ok
        lines.append("setup OK" if rep.ok else f"setup INVALID: {rep}")
    if args.config:
        config = mrxio.load_config(args.config)
        rep = validate_config(config)
        ok &= rep.ok
        lines.append("config OK" if rep.ok else f"config INVALID: {rep}")
    if setup is not None and config is not None and ok:
        rep = check_compatibility(setup, config)
        for w in rep.warnings:
            log.warning("%s", w)
        ok &= rep.ok
        lines.append("compatible" if rep.ok else f"incompatible: {rep}")
    if not lines:
        raise MRXError("nothing to validate: give --setup and/or --config")
    text = ", ".join(lines)
    if not ok:
        print(text, file=sys.stderr)
        return EXIT_DOMAIN
    print(text)
    return EXIT_OK


def cmd_simulate(args):
    setup, config = _load_pair(args)
    t0 = time.perf_counter()
    A = create_system_matrix(setup, config, _physics(args), threads=args.threads)
    elapsed = time.perf_counter() - t0
    log.info("assembled %s matrix in %.3f s", A.shape, elapsed)
    mrxio.save_system_matrix(A, args.out, force=args.force)
    _summary(command="simulate", out=str(args.out), rows=A.shape[0], cols=A.shape[1], seconds=round(elapsed, 3))
    return EXIT_OK


def _full_config(setup, config):
    # every coil and sensor of the setup, unit sequential pattern
    return default_config(setup, config.res)


def cmd_export_raw(args):
    setup, config = _load_pair(args)
    full = _full_config(setup, config)
    t0 = time.perf_counter()
    raw = system_matrix_raw(setup, full, _physics(args), threads=args.threads)
    man = mrxio.export_raw(raw, args.out, force=args.force)
    _summary(
        command="export-raw",
        out=str(args.out),
        coils=len(man["coils"]),
        sensors=len(man["sensors"]),
        voxels=raw.grid.num_voxels,
        fingerprint=raw.fingerprint,
        seconds=round(time.perf_counter() - t0, 3),
    )
    return EXIT_OK


def cmd_import_raw(args):
    setup, config = _load_pair(args)
    fp = layout_fingerprint(setup, config.res, _physics(args))
    raw = mrxio.import_raw(args.raw, config.active_coils, config.active_sensors, fingerprint=fp)
    A = apply_current_pattern(raw, config.current_pattern)
    mrxio.save_system_matrix(A, args.out, force=args.force)
    _summary(command="import-raw", out=str(args.out), rows=A.shape[0], cols=A.shape[1])
    return EXIT_OK


def cmd_phantom(args):
    ph = create_phantom(args.name, args.res)
    stem = Path(args.out)
    written = mrxio.write_phantom(ph, stem, force=args.force)
    _summary(
        command="phantom",
        name=args.name,
        res=list(ph.res),
        nonzero=int(np.count_nonzero(ph.values)),
        files=[str(p) for p in written],
    )
    return EXIT_OK


def _load_phantom(arg, res) -> Phantom:
    p = Path(arg)
    if p.is_file():
        return mrxio.read_phantom_bin(p, res)
    return create_phantom(arg, res)


def cmd_measure(args):
    setup, config = _load_pair(args)
    phantom = _load_phantom(args.phantom, config.res)
    out = Path(args.out)
    names = mrxio.dataset_files(args.dataset)
    if not args.force:
        existing = [n for n in names if (out / n).exists()]
        if existing:
            raise FileExistsError(f"{out}: refusing to overwrite {existing[0]} (use --force)")
    y = mrxio.write_simulated_dataset(
        setup, config, _physics(args), phantom, args.chi, args.mass, out, args.dataset, threads=args.threads
    )
    _summary(command="measure", out=str(out), rows=int(y.shape[0]), phantom=phantom.name or str(args.phantom))
    return EXIT_OK


def cmd_export_fields(args):
    setup, config = _load_pair(args)
    grid = create_voxel_grid(setup.roi, config.res)
    fields = create_excitation_fields(setup, config, grid, _physics(args), threads=args.threads)
    out = Path(args.out)
    names = [f"coil_{c:04d}.dat" for c in fields.active_coils]
    out.mkdir(parents=True, exist_ok=True)
    if not args.force:
        existing = [n for n in names if (out / n).exists()]
        if existing:
            raise FileExistsError(f"{out}: refusing to overwrite {existing[0]} (use --force)")
    for name, c, B in zip(names, fields.active_coils, fields.fields):
        mrxio.write_table(
            out / name,
            np.hstack([grid.centers, B]),
            ("x[m]", "y[m]", "z[m]", "Bx[T/A]", "By[T/A]", "Bz[T/A]"),
            note=f"excitation field of coil {c} at unit current",
        )
    _summary(command="export-fields", out=str(out), coils=len(names), voxels=grid.num_voxels)
    return EXIT_OK


def cmd_scaffold(args):
    root = mrxio.setup_dir(args.name, args.base)
    if root.exists() and any(root.iterdir()) and not args.force:
        raise FileExistsError(f"{root} exists and is not empty (use --force)")
    setup = None
    res = None
    if args.preset:
        setup = preset_setup(args.preset)
        res = PRESETS[args.preset][1]
    elif args.setup:
        setup = mrxio.load_setup(resolve_setup_path(args.setup))
    if args.res:
        res = tuple(args.res)
    for sub in ("configs", "raw", "scripts"):
        (root / sub).mkdir(parents=True, exist_ok=True)
    created = []
    if setup is not None:
        created.append(mrxio.save_setup(setup, root / f"{args.name}.mrxsetup"))
        if res is not None:
            cfg_dir = root / "configs" / mrxio.res_dirname(res) / args.config_name
            (cfg_dir / "results").mkdir(parents=True, exist_ok=True)
            created.append(mrxio.save_config(default_config(setup, res), cfg_dir / "default.mrxcfg"))
    (root / "README.txt").write_text(
        f"Setup '{args.name}'.\n\n"
        f"{args.name}.mrxsetup              setup file\n"
        "configs/<nx.ny.nz>/<config>/     one folder per resolution and config\n"
        "    default.mrxcfg               config file\n"
        "    results/                     results for this setup/config/resolution\n"
        "raw/                             raw block exports (mrxsim export-raw)\n"
        "scripts/                         scripts that create this setup and its configs\n",
        encoding="utf-8",
    )
    _summary(command="scaffold", root=str(root), files=[str(p) for p in created])
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--setup", help="setup file (.mrxsetup) or setup name under $MRXSIM_SETUPS")
    common.add_argument("--config", help="config file (.mrxcfg)")
    common.add_argument("--out", help="output path")
    common.add_argument("--theta", type=float, default=1e-7, help="Biot-Savart prefactor [T*m/A] (default 1e-7)")
    common.add_argument(
        "--kappa", type=float, default=1.0 / 3.0, help="sensor kernel prefactor (default 0.3333333333333333)"
    )
    common.add_argument("--threads", type=int, default=1, help="max worker threads (output is identical)")
    common.add_argument("--force", action="store_true", help="overwrite existing output files")
    common.add_argument("-v", "--verbose", action="store_true", help="debug logging")

    p = argparse.ArgumentParser(prog="mrxsim", description="Magnetorelaxometry imaging forward simulation")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("scaffold", parents=[common], help="create a setup folder tree")
    s.add_argument("name")
    s.add_argument("--base", help="setups base folder (default $MRXSIM_SETUPS or ./setups)")
    s.add_argument("--preset", choices=sorted(PRESETS), help="write a built-in setup and config")
    s.add_argument("--res", type=int, nargs=3, metavar=("NX", "NY", "NZ"))
    s.add_argument("--config-name", default="singleSequential")
    s.set_defaults(func=cmd_scaffold)

    s = sub.add_parser("validate", parents=[common], help="validate a setup and/or config")
    s.set_defaults(func=cmd_validate)

    s = sub.add_parser("simulate", parents=[common], help="assemble the system matrix")
    s.set_defaults(func=cmd_simulate, needs_out=True)

    s = sub.add_parser("export-raw", parents=[common], help="export per-coil raw blocks of all coils/sensors")
    s.set_defaults(func=cmd_export_raw, needs_out=True)

    s = sub.add_parser("import-raw", parents=[common], help="combine exported raw blocks into a system matrix")
    s.add_argument("--raw", required=True, help="directory written by export-raw")
    s.set_defaults(func=cmd_import_raw, needs_out=True)

    s = sub.add_parser("phantom", parents=[common], help="write a named phantom (.dat and .bin)")
    s.add_argument("name")
    s.add_argument("--res", type=int, nargs=3, required=True, metavar=("NX", "NY", "NZ"))
    s.set_defaults(func=cmd_phantom, needs_out=True)

    s = sub.add_parser("measure", parents=[common], help="simulate a measurement into a text dataset")
    s.add_argument("--phantom", required=True, help="phantom name or flat .bin file")
    s.add_argument("--chi", type=float, required=True, help="magnetic susceptibility")
    s.add_argument("--mass", type=float, required=True, help="particle mass [mg]")
    s.add_argument("--dataset", default="01", help="dataset key k in dataset.<k>.*.dat")
    s.set_defaults(func=cmd_measure, needs_out=True)

    s = sub.add_parser("export-fields", parents=[common], help="write excitation fields as text tables")
    s.set_defaults(func=cmd_export_fields, needs_out=True)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    handler = logging.StreamHandler(sys.stderr)
    handler.setFormatter(logging.Formatter("%(asctime)s %(levelname)s %(message)s"))
    log.handlers[:] = [handler]
    log.setLevel(logging.DEBUG if args.verbose else logging.INFO)
    log.propagate = False
    if getattr(args, "needs_out", False) and not args.out:
        parser.error("--out is required")
    try:
        return args.func(args)
    except (OSError, FormatError) as exc:
        print(f"mrxsim: error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (MRXError, ValueError) as exc:
        print(f"mrxsim: error: {exc}", file=sys.stderr)
        violations = getattr(exc, "violations", None)
        for v in violations or ():
            print(f"  - {v}", file=sys.stderr)
        return EXIT_DOMAIN


if __name__ == "__main__":
    raise SystemExit(main())
