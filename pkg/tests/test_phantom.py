import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mrxsim import EllipsoidSpec, ValidationError, create_phantom, ellipsoid_phantom
from mrxsim.phantom import SHEPP_LOGAN_3D, shepp_logan_specs
from oracles import ellipsoid_membership


def _oracle(specs, res):
    out = np.zeros(res)
    for s in specs:
        out += ellipsoid_membership((s.intensity, s.semi_axes, s.center, s.phi), res)
    return out


def test_unit_ball():
    p = ellipsoid_phantom([EllipsoidSpec(1.0, (1, 1, 1))], (10, 10, 10))
    assert p.values.shape == (10, 10, 10)
    u = -1 + (2 * np.arange(1, 11) - 1) / 10
    X, Y, Z = np.meshgrid(u, u, u, indexing="ij")
    np.testing.assert_array_equal(p.values, (X**2 + Y**2 + Z**2 <= 1).astype(float))
    for corner in [(0, 0, 0), (9, 9, 9), (0, 9, 0), (9, 0, 9)]:
        assert p.values[corner] == 0.0


def test_overlap_is_additive():
    big = EllipsoidSpec(1.0, (0.8, 0.8, 0.8))
    small = EllipsoidSpec(-0.5, (0.3, 0.3, 0.3))
    p = ellipsoid_phantom([big, small], (12, 12, 12))
    assert p.values[6, 6, 6] == 0.5
    assert set(np.unique(p.values)) <= {0.0, 0.5, 1.0}


def test_empty_specs():
    np.testing.assert_array_equal(ellipsoid_phantom([], (3, 4, 5)).values, np.zeros((3, 4, 5)))


def test_rotation_swaps_axes():
    res = (14, 14, 6)
    rotated = ellipsoid_phantom([EllipsoidSpec(1.0, (0.8, 0.3, 0.5), phi=math.pi / 2)], res)
    swapped = ellipsoid_phantom([EllipsoidSpec(1.0, (0.3, 0.8, 0.5))], res)
    np.testing.assert_array_equal(rotated.values, swapped.values)
    np.testing.assert_array_equal(rotated.values, _oracle([EllipsoidSpec(1.0, (0.3, 0.8, 0.5))], res))


def test_bad_semi_axes():
    with pytest.raises(ValidationError):
        EllipsoidSpec(1.0, (1, 0, 1))


ellipsoids = st.builds(
    EllipsoidSpec,
    st.floats(-2, 2).filter(lambda v: v != 0),
    st.tuples(*[st.floats(0.05, 1.2)] * 3),
    st.tuples(*[st.floats(-0.7, 0.7)] * 3),
    st.floats(-math.pi, math.pi),
)
grids = st.tuples(*[st.integers(1, 16)] * 3)
# multiples of 1/8 add without rounding, so sums are order-independent
dyadic_ellipsoids = st.builds(
    EllipsoidSpec,
    st.integers(-16, 16).filter(bool).map(lambda k: k / 8),
    st.tuples(*[st.floats(0.05, 1.2)] * 3),
    st.tuples(*[st.floats(-0.7, 0.7)] * 3),
    st.floats(-math.pi, math.pi),
)


@given(st.lists(ellipsoids, min_size=1, max_size=3), grids)
@settings(max_examples=40, deadline=None)
def test_membership_matches_quadratic_form(specs, res):
    np.testing.assert_array_equal(ellipsoid_phantom(specs, res).values, _oracle(specs, res))


@given(st.lists(dyadic_ellipsoids, max_size=3), st.lists(dyadic_ellipsoids, max_size=3), grids)
@settings(max_examples=40, deadline=None)
def test_phantom_union_is_sum(s1, s2, res):
    whole = ellipsoid_phantom(s1 + s2, res).values
    np.testing.assert_array_equal(whole, ellipsoid_phantom(s1, res).values + ellipsoid_phantom(s2, res).values)


def test_mirror_symmetry():
    specs = [
        EllipsoidSpec(1.0, (0.7, 0.5, 0.6)),
        EllipsoidSpec(0.5, (0.2, 0.3, 0.2), (0.4, 0.1, 0.0)),
        EllipsoidSpec(0.5, (0.2, 0.3, 0.2), (-0.4, 0.1, 0.0)),
    ]
    p = ellipsoid_phantom(specs, (16, 10, 6)).values
    np.testing.assert_array_equal(p, p[::-1])


# -- presets ------------------------------------------------------------------------


def test_fwhmdots_quarter():
    p = create_phantom("fwhmdots_0.25", (8, 8, 1))
    nz = np.argwhere(p.values)
    assert len(nz) == 16
    assert set(np.unique(p.values)) == {0.0, 1.0}
    for axis in (0, 1):
        idx = sorted(set(nz[:, axis]))
        assert np.all(np.diff(idx) == 2)


@pytest.mark.parametrize(
    "name,res",
    [("fwhmdots_0.25", (8, 8, 8)), ("fwhmdots_0.25", (8, 8, 1)), ("fwhmdots_0.2", (10, 15, 10)), ("fwhmdots_0.5", (4, 4, 4))],
)
def test_fwhmdots_isolated(name, res):
    # isolation holds when the spacing is at least 2 voxels on every axis with n > 1
    v = create_phantom(name, res).values
    assert set(np.unique(v)) <= {0.0, 1.0}
    padded = np.pad(v, 1)
    for i, j, k in np.argwhere(v):
        block = padded[i : i + 3, j : j + 3, k : k + 3]
        assert block.sum() == 1.0


def test_shepp_logan_support():
    p = create_phantom("shepplogan3d", (50, 50, 15))
    assert p.values.shape == (50, 50, 15)
    outer = ellipsoid_phantom([shepp_logan_specs()[0]], (50, 50, 15)).values
    assert np.all(p.values[outer == 0] == 0)
    assert p.values.max() == pytest.approx(1.0)
    assert p.values.min() >= -0.02 - 1e-12
    assert len(SHEPP_LOGAN_3D) == 10


def test_tumor_and_letters():
    t = create_phantom("tumor", (20, 20, 10)).values
    assert t.max() == pytest.approx(1.2)
    assert np.isclose(t, 0.2).sum() > np.isclose(t, 1.2).sum() > 0
    for name in ("F_2", "P_1"):
        v = create_phantom(name, (20, 28, 9)).values
        assert set(np.unique(v)) == {0.0, 1.0}
        # extruded over the middle third of the z layers only
        assert not v[:, :, :3].any() and not v[:, :, 6:].any()
        np.testing.assert_array_equal(v[:, :, 3], v[:, :, 5])
    f = create_phantom("F_2", (20, 28, 9)).values
    p = create_phantom("P_1", (20, 28, 9)).values
    assert not np.array_equal(f, p)


def test_flat_order_is_x_fastest():
    p = create_phantom("tumor", (4, 3, 2))
    flat = p.flat()
    assert flat[1] == p.values[1, 0, 0] and flat[4] == p.values[0, 1, 0] and flat[12] == p.values[0, 0, 1]


@pytest.mark.parametrize("name", ["nosuch", "fwhmdots_", "fwhmdots_0"])
def test_unknown_phantom(name):
    with pytest.raises(ValidationError, match="phantom|fraction"):
        create_phantom(name, (10, 10, 1))


def test_unknown_phantom_message():
    with pytest.raises(ValidationError, match="unknown phantom"):
        create_phantom("nosuch", (10, 10, 1))
