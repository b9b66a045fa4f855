"""Built-in example setups and their default configs.

``default2D``
    9 dipole coils below and 9 sensors left of a 10 cm x 10 cm plane, res [10, 10, 1].
``default3D``
    5 x 5 dipole coils under and 5 x 5 sensors over a 10 x 10 x 5 cm box, res [10, 10, 5].
``realistic3D``
    4 x 4 circular segment coils and 5 x 5 sensors around a 12 x 12 x 6 cm box, res [12, 12, 6].
"""

from __future__ import annotations

from .errors import ValidationError
from .model import (
    Coil,
    Config,
    Roi,
    Sensor,
    Setup,
    create_coil_loop,
    create_current_pattern,
    create_entity_array,
    parse_coils,
)


def _grid_positions(xs, ys, z):
    return [(x, y, z) for y in ys for x in xs]


def default2d() -> Setup:
    coils = [Coil(p, n) for p, n in create_entity_array((0.01, -0.02, 0.0), (0.09, -0.02, 0.0), (0, 1, 0), 9)]
    sensors = [
        Sensor(p, n, sensor_id=k, channel_id=k, group_id=1)
        for k, (p, n) in enumerate(create_entity_array((-0.02, 0.01, 0.0), (-0.02, 0.09, 0.0), (1, 0, 0), 9), start=1)
    ]
    return Setup(2, Roi((0.0, 0.1), (0.0, 0.1), (0.0, 0.0)), coils, sensors)


def default3d() -> Setup:
    xs = [0.01, 0.03, 0.05, 0.07, 0.09]
    coils = [Coil(p, (0, 0, 1)) for p in _grid_positions(xs, xs, -0.02)]
    sensors = [
        Sensor(p, (0, 0, 1), sensor_id=k, channel_id=k, group_id=1 + (k - 1) // 5)
        for k, p in enumerate(_grid_positions(xs, xs, 0.07), start=1)
    ]
    return Setup(3, Roi((0.0, 0.1), (0.0, 0.1), (0.0, 0.05)), coils, sensors)


def realistic3d(loop_radius: float = 0.0125, loop_segments: int = 24) -> Setup:
    cs = [0.015, 0.045, 0.075, 0.105]
    template = create_coil_loop(loop_radius, loop_segments)
    coils = parse_coils([Coil(p, (0, 0, 1)) for p in _grid_positions(cs, cs, -0.03)], template)
    ss = [0.012, 0.036, 0.06, 0.084, 0.108]
    sensors = [
        Sensor(p, (0, 0, 1), sensor_id=100 + k, channel_id=k, group_id=1 + (k - 1) // 5)
        for k, p in enumerate(_grid_positions(ss, ss, 0.09), start=1)
    ]
    return Setup(3, Roi((0.0, 0.12), (0.0, 0.12), (0.0, 0.06)), coils, sensors)


PRESETS = {
    "default2D": (default2d, (10, 10, 1)),
    "default3D": (default3d, (10, 10, 5)),
    "realistic3D": (realistic3d, (12, 12, 6)),
}


def preset_setup(name: str) -> Setup:
    try:
        return PRESETS[name][0]()
    except KeyError:
        raise ValidationError(f"unknown setup preset {name!r} (known: {', '.join(PRESETS)})") from None


def default_config(setup: Setup, res, preset: str = "sequential", amplitude: float = 1.0) -> Config:
    """All coils and sensors active with a named current pattern."""
    n_c = len(setup.coils)
    return Config(
        res,
        create_current_pattern(preset, n_c, amplitude),
        range(1, n_c + 1),
        range(1, len(setup.sensors) + 1),
    )


def preset_config(name: str, preset: str = "sequential", amplitude: float = 1.0) -> Config:
    return default_config(preset_setup(name), PRESETS[name][1], preset, amplitude)
