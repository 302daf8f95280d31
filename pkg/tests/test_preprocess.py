import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from samson.cube import ABSORPTION_NM, CANONICAL_NM, FLUORESCENCE_NM, ImageCube
from samson.errors import DimensionMismatch, MissingCalibration
from samson.preprocess import CalibrationSet, correct_cube, flat_field_correct


def make_cal(rng, h=8, w=8, zero_dark=False):
    dark = {nm: (np.zeros((h, w)) if zero_dark else rng.uniform(0, 5, (h, w))).astype(np.float32)
            for nm in CANONICAL_NM}
    flat = {nm: (dark[nm] + rng.uniform(50, 200, (h, w))).astype(np.float32) for nm in ABSORPTION_NM}
    return CalibrationSet(dark, flat)


def test_raw_equal_flat_gives_one(rng):
    flat = rng.uniform(10, 100, (6, 6)).astype(np.float32)
    out = flat_field_correct(flat, np.zeros_like(flat), flat)
    assert np.all(out == 1.0)


def test_raw_equal_dark_gives_zero(rng):
    dark = rng.uniform(0, 5, (6, 6))
    flat = dark + 50
    assert not flat_field_correct(dark, dark, flat).any()


def test_recovers_transmittance(rng):
    s = rng.random((64, 64))
    dark = rng.uniform(0, 10, (64, 64))
    light = rng.uniform(100, 1000, (64, 64))
    flat = light + dark
    raw = light * s + dark
    out = flat_field_correct(raw.astype(np.float32), dark.astype(np.float32), flat.astype(np.float32))
    assert np.max(np.abs(out - s)) < 1e-5


def test_guard_and_clamp():
    raw = np.array([[1.0, 5.0]])
    dark = np.array([[2.0, 1.0]])
    flat = np.array([[3.0, 1.0]])  # second pixel: dead flat
    out = flat_field_correct(raw, dark, flat, epsilon=1e-6)
    assert out[0, 0] == 0.0
    assert np.isfinite(out).all() and out[0, 1] > 0


def test_dimension_mismatch():
    with pytest.raises(DimensionMismatch):
        flat_field_correct(np.zeros((2, 2)), np.zeros((2, 3)), np.zeros((2, 2)))


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**32 - 1), st.floats(0.01, 100.0))
def test_scale_consistency(seed, k):
    rng = np.random.default_rng(seed)
    dark = rng.uniform(0, 1, (5, 5))
    num = rng.uniform(0, 10, (5, 5))
    den = rng.uniform(1, 10, (5, 5))
    a = flat_field_correct(dark + num, dark, dark + den)
    b = flat_field_correct(dark + k * num, dark, dark + k * den)
    np.testing.assert_allclose(a, b, rtol=1e-5)
    assert (a >= 0).all() and np.isfinite(a).all()


def test_correct_cube_flat_planes_become_one(rng):
    cal = make_cal(rng, zero_dark=True)
    planes = [rng.uniform(0, 3, (8, 8)) if nm in FLUORESCENCE_NM else cal.flat[nm]
              for nm in CANONICAL_NM]
    raw = ImageCube.from_planes(planes)
    out = correct_cube(raw, cal)
    assert np.all(out.data[2:] == 1.0)
    assert np.array_equal(out.data[:2], raw.data[:2])


def test_correct_cube_dark_gives_zero(rng):
    cal = make_cal(rng)
    raw = ImageCube.from_planes([cal.dark[nm] for nm in CANONICAL_NM])
    assert not correct_cube(raw, cal).data.any()


def test_correct_cube_matches_per_plane_oracle(rng):
    cal = make_cal(rng)
    raw = ImageCube.from_planes([rng.uniform(0, 300, (8, 8)) for _ in CANONICAL_NM])
    out = correct_cube(raw, cal)
    assert out.bands == raw.bands and out.data.shape == raw.data.shape
    for i, nm in enumerate(CANONICAL_NM):
        if nm in ABSORPTION_NM:
            expect = flat_field_correct(raw.data[i], cal.dark[nm], cal.flat[nm], cal.epsilon)
        else:
            expect = np.maximum(raw.data[i].astype(np.float64) - cal.dark[nm], 0).astype(np.float32)
        assert np.array_equal(out.data[i], expect)
    assert (out.data >= 0).all()


def test_missing_calibration(rng):
    cal = make_cal(rng)
    flat = dict(cal.flat)
    del flat[595]
    with pytest.raises(MissingCalibration):
        CalibrationSet(cal.dark, flat)
    dark = dict(cal.dark)
    del dark[385]
    with pytest.raises(MissingCalibration):
        CalibrationSet(dark, cal.flat)


def test_calibration_shape_mismatch(rng):
    cal = make_cal(rng)
    raw = ImageCube.from_planes([np.zeros((4, 4))] * 9)
    with pytest.raises(DimensionMismatch):
        correct_cube(raw, cal)
