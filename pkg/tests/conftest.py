import warnings

import numpy as np
import pytest

from mrxsim import Coil, Config, PhysicsParams, Roi, Sensor, Setup
from mrxsim.setups import default2d, default3d, preset_config, realistic3d

ACCEPTANCE_RESULTS = []


@pytest.fixture
def record_acceptance():
    """Record one acceptance criterion outcome; printed in the terminal summary."""

    def record(label, passed, detail=""):
        ACCEPTANCE_RESULTS.append((label, bool(passed), detail))
        return passed

    return record


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for label, passed, detail in ACCEPTANCE_RESULTS:
        terminalreporter.write_line(f"{'PASS' if passed else 'FAIL'}  {label}  {detail}")


@pytest.fixture
def rng():
    return np.random.default_rng(20240917)


@pytest.fixture
def physics():
    return PhysicsParams()


@pytest.fixture
def setup2d():
    return default2d()


@pytest.fixture
def config2d():
    return preset_config("default2D")


@pytest.fixture
def setup3d():
    return default3d()


@pytest.fixture
def config3d():
    return preset_config("default3D")


@pytest.fixture
def setup_real():
    return realistic3d()


@pytest.fixture
def config_real():
    return preset_config("realistic3D")


@pytest.fixture
def tiny_setup():
    """One +z dipole coil below, one +z sensor above a single-voxel ROI."""
    return Setup(
        3,
        Roi((0.0, 0.02), (0.0, 0.02), (0.0, 0.02)),
        [Coil((0.01, 0.01, -0.03), (0, 0, 1))],
        [Sensor((0.01, 0.01, 0.05), (0, 0, 1), sensor_id=1)],
    )


@pytest.fixture
def tiny_config():
    return Config((1, 1, 1), [[1.0]], [1], [1])


@pytest.fixture
def quiet():
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        yield
