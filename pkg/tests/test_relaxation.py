import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mrxsim import (
    Coil,
    Config,
    GeometryError,
    PhysicsParams,
    Roi,
    Sensor,
    Setup,
    SystemMatrixRaw,
    ValidationError,
    apply_current_pattern,
    create_excitation_fields,
    create_system_matrix,
    create_voxel_grid,
    dipole_coil_field,
    dipole_kernel,
    forward_apply,
    sensor_response,
    system_matrix_raw,
)
from mrxsim.relaxation import layout_fingerprint
from oracles import dipole_kernel_elementwise

vec = st.tuples(*[st.floats(-10, 10, allow_nan=False)] * 3).filter(lambda v: np.linalg.norm(v) > 1e-3)


# -- dipole kernel --------------------------------------------------------------


def test_kernel_axial():
    np.testing.assert_array_equal(dipole_kernel((0, 0, 1)), np.diag([-1.0, -1.0, 2.0]))
    np.testing.assert_array_equal(dipole_kernel((0, 0, 2)), np.diag([-1.0, -1.0, 2.0]) / 8)


def test_kernel_diagonal_direction():
    K = dipole_kernel((1, 1, 0))
    assert abs(np.trace(K)) < 1e-15
    np.testing.assert_array_equal(K, K.T)
    np.testing.assert_allclose(K, dipole_kernel_elementwise((1, 1, 0)), rtol=1e-14, atol=1e-16)


def test_kernel_singular():
    with pytest.raises(GeometryError):
        dipole_kernel((0, 0, 0))


@given(vec)
def test_kernel_matches_elementwise_oracle(r):
    K = dipole_kernel(r)
    ref = dipole_kernel_elementwise(r)
    np.testing.assert_allclose(K, ref, rtol=1e-12, atol=1e-12 * np.abs(ref).max())
    np.testing.assert_array_equal(K, K.T)
    np.testing.assert_array_equal(K, dipole_kernel(-np.array(r)))


# -- sensor response ----------------------------------------------------------------


def test_sensor_response_examples():
    s = Sensor((0, 0, 1), (0, 0, 1))
    assert sensor_response(s, (0, 0, 0), (0, 0, 1), 1.0) == 2.0
    assert sensor_response(s, (0, 0, 0), (0, 0, 0), 1.0) == 0.0
    assert sensor_response(s, (0, 0, 0), (0, 0, 3), 1.0 / 3.0) == 2.0


def test_sensor_response_coincident():
    with pytest.raises(GeometryError):
        sensor_response(Sensor((1, 1, 1)), (1, 1, 1), (0, 0, 1))


@given(vec, vec, vec)
@settings(max_examples=100)
def test_sensor_response_reciprocity(x, w, b):
    if np.linalg.norm(np.subtract(x, w)) < 1e-3:
        return
    n = tuple(np.array(b) / np.linalg.norm(b))
    there = sensor_response(Sensor(x, n), w, b)
    back = sensor_response(Sensor(w, n), x, b)
    assert there == back


# -- raw assembly ---------------------------------------------------------------------


def test_raw_single_voxel_composition(tiny_setup, tiny_config, physics):
    raw = system_matrix_raw(tiny_setup, tiny_config, physics)
    assert raw.blocks.shape == (1, 1, 1)
    w = (0.01, 0.01, 0.01)
    b = dipole_coil_field(tiny_setup.coils[0], w, physics.theta)
    expected = sensor_response(tiny_setup.sensors[0], w, b, physics.kernel_prefactor) * 0.02**3
    assert raw.blocks[0, 0, 0] == expected


def test_raw_default2d_shape(setup2d, config2d):
    raw = system_matrix_raw(setup2d, config2d)
    assert raw.blocks.shape == (9, 9, 100)
    assert raw.active_coils == tuple(range(1, 10))
    assert np.all(np.isfinite(raw.blocks))


def test_raw_independent_of_currents(setup2d, config2d):
    doubled = Config(config2d.res, 2 * config2d.current_pattern, config2d.active_coils, config2d.active_sensors)
    assert system_matrix_raw(setup2d, config2d).blocks.tobytes() == system_matrix_raw(setup2d, doubled).blocks.tobytes()


def test_raw_rejects_invalid(setup2d):
    with pytest.raises(ValidationError):
        system_matrix_raw(setup2d, Config((10, 10, 2), np.eye(9), range(1, 10), range(1, 10)))


def test_sensor_on_voxel_center(tiny_setup, tiny_config):
    s = Setup(3, tiny_setup.roi, tiny_setup.coils, [Sensor((0.01, 0.01, 0.01))])
    with pytest.raises(GeometryError):
        system_matrix_raw(s, tiny_config)


def test_raw_subsets_are_bit_identical(setup3d):
    full = Config((4, 4, 2), np.eye(25), range(1, 26), range(1, 26))
    part = Config((4, 4, 2), np.eye(3), [2, 7, 19], [4, 5, 25])
    a = system_matrix_raw(setup3d, full)
    b = system_matrix_raw(setup3d, part)
    assert a.fingerprint == b.fingerprint
    assert b.blocks.tobytes() == a.select([2, 7, 19], [4, 5, 25]).blocks.tobytes()


def test_raw_deterministic_across_threads(setup_real, config_real):
    a = system_matrix_raw(setup_real, config_real, threads=1)
    b = system_matrix_raw(setup_real, config_real, threads=3)
    c = system_matrix_raw(setup_real, config_real, threads=1)
    assert a.blocks.tobytes() == b.blocks.tobytes() == c.blocks.tobytes()


def test_select_unknown():
    raw = SystemMatrixRaw(np.zeros((2, 2, 3)), None, (1, 2), (1, 2), "x" * 32)
    with pytest.raises(ValidationError):
        raw.select([3])
    with pytest.raises(ValidationError):
        raw.select(None, [9])


def test_fingerprint_sensitivity(setup2d):
    base = layout_fingerprint(setup2d, (10, 10, 1), PhysicsParams())
    assert len(base) == 32
    assert base == layout_fingerprint(setup2d, [10, 10, 1], PhysicsParams())
    assert base != layout_fingerprint(setup2d, (10, 5, 1), PhysicsParams())
    assert base != layout_fingerprint(setup2d, (10, 10, 1), PhysicsParams(theta=2e-7))
    assert base != layout_fingerprint(setup2d, (10, 10, 1), PhysicsParams(kernel_prefactor=1.0))


# -- current patterns ---------------------------------------------------------------


def _raw(rng, n_c=3, n_s=5, n_v=20):
    return SystemMatrixRaw(rng.normal(size=(n_c, n_s, n_v)), None, tuple(range(1, n_c + 1)), tuple(range(1, n_s + 1)), "0" * 32)


def test_identity_pattern_stacks_blocks(rng):
    raw = _raw(rng)
    A = apply_current_pattern(raw, np.eye(3))
    np.testing.assert_array_equal(A.matrix, raw.blocks.reshape(15, 20))
    assert A.num_patterns == 3


def test_scaled_single_coil_pattern(rng):
    raw = _raw(rng)
    np.testing.assert_array_equal(apply_current_pattern(raw, [[2, 0, 0]]).matrix, 2 * raw.blocks[0])


def test_pairwise_sum_is_exact(rng):
    raw = _raw(rng, n_c=2)
    np.testing.assert_allclose(apply_current_pattern(raw, [[1, 1]]).matrix, raw.blocks[0] + raw.blocks[1], rtol=0, atol=1e-15)


def test_pattern_width_mismatch(rng):
    with pytest.raises(ValidationError):
        apply_current_pattern(_raw(rng), np.eye(2))


def test_pattern_linearity(rng):
    raw = _raw(rng)
    P, Q = rng.normal(size=(4, 3)), rng.normal(size=(4, 3))
    a, b = 1.7, -0.3
    lhs = apply_current_pattern(raw, a * P + b * Q).matrix
    rhs = a * apply_current_pattern(raw, P).matrix + b * apply_current_pattern(raw, Q).matrix
    assert np.max(np.abs(lhs - rhs)) <= 1e-12 * np.max(np.abs(rhs))


# -- system matrix ----------------------------------------------------------------------


def test_sequential_matrix_is_scaled_raw(setup2d):
    cfg = Config((10, 10, 1), 0.5 * np.eye(9), range(1, 10), range(1, 10))
    raw = system_matrix_raw(setup2d, cfg)
    A = create_system_matrix(setup2d, cfg)
    np.testing.assert_array_equal(A.matrix, 0.5 * raw.blocks.reshape(81, 100))


def test_default2d_matrix(setup2d, config2d):
    A = create_system_matrix(setup2d, config2d)
    assert A.shape == (81, 100)
    manual = apply_current_pattern(system_matrix_raw(setup2d, config2d), config2d.current_pattern)
    assert A.matrix.tobytes() == manual.matrix.tobytes()


def test_row_order_sensor_major_within_pattern(setup2d, config2d):
    A = create_system_matrix(setup2d, config2d)
    raw = system_matrix_raw(setup2d, config2d)
    # row p * n_s + s belongs to pattern p, sensor s
    np.testing.assert_array_equal(A.matrix[2 * 9 + 4], raw.blocks[2, 4])


def test_reciprocal_cube_decay():
    roi = Roi((-0.005, 0.005), (-0.005, 0.005), (-0.005, 0.005))
    coil = [Coil((0, 0, -0.05), (0, 0, 1))]
    cfg = Config((1, 1, 1), [[1.0]], [1], [1])
    entries = []
    for d in (0.04, 0.08):
        s = Setup(3, roi, coil, [Sensor((0, 0, d), (0, 0, 1))])
        entries.append(create_system_matrix(s, cfg).matrix[0, 0])
    assert entries[0] / entries[1] == pytest.approx(8.0, rel=1e-9)


def test_matrix_matches_field_composition(setup_real, config_real, physics):
    A = create_system_matrix(setup_real, config_real, physics)
    grid = create_voxel_grid(setup_real.roi, config_real.res)
    fields = create_excitation_fields(setup_real, config_real, grid, physics)
    s, v, c = 7, 200, 5
    ref = sensor_response(setup_real.sensors[s], grid.centers[v], fields.fields[c, v], physics.kernel_prefactor)
    n_s = len(config_real.active_sensors)
    assert A.matrix[c * n_s + s, v] == pytest.approx(ref * grid.cell_weight, rel=1e-14)


# -- forward apply ------------------------------------------------------------------------


def test_forward_apply(setup2d, config2d, rng):
    A = create_system_matrix(setup2d, config2d)
    np.testing.assert_array_equal(forward_apply(A, np.zeros(100)), np.zeros(81))
    e = np.zeros(100)
    e[37] = 1.0
    np.testing.assert_array_equal(forward_apply(A, e), A.matrix[:, 37])
    c1, c2 = rng.random(100), rng.random(100)
    y = forward_apply(A, c1 + c2)
    ref = forward_apply(A, c1) + forward_apply(A, c2)
    assert np.max(np.abs(y - ref)) <= 1e-12 * np.max(np.abs(ref))


def test_forward_apply_errors(setup2d, config2d):
    A = create_system_matrix(setup2d, config2d)
    with pytest.raises(ValidationError):
        forward_apply(A, np.ones(99))
    with pytest.raises(ValidationError):
        forward_apply(A, np.full(100, np.nan))
