import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fanrebin.errors import InvalidArgument, InvalidGeometry
from fanrebin.geometry import (FanGeometry, ImageGrid, ParallelGeometry, WedgeSelection,
                               full_sampling_angles, gamma_of_pixel, rebin_coordinates,
                               subsampled_angles, wedge_angles)

# Frozen oracle values (math.atan / sid * u / hypot(u, sdd), evaluated independently).
ATAN_QUARTER = 0.24497866312686414
S_AT_U300 = 218.28206253269968
THETA_90_EDGE = 1.7805803504308104
GAMMA_MAX_512 = 0.21018258666216955
STEP_15_512 = 0.030026083808881363


def test_gamma_of_pixel_examples():
    fan = FanGeometry()
    assert gamma_of_pixel(0.0, fan) == 0.0
    assert gamma_of_pixel(1200.0, fan) == pytest.approx(math.pi / 4, abs=1e-15)
    assert gamma_of_pixel(300.0, fan) == pytest.approx(ATAN_QUARTER, rel=1e-14)


@given(st.floats(-5000, 5000, allow_nan=False))
def test_gamma_is_odd(u):
    fan = FanGeometry()
    assert gamma_of_pixel(-u, fan) == -gamma_of_pixel(u, fan)


def test_rebin_coordinates_examples():
    fan = FanGeometry(beta_rad=0.3)
    theta, s = rebin_coordinates(0.0, fan)
    assert (theta, s) == (0.3, 0.0)
    theta, s = rebin_coordinates(1200.0, fan)
    assert theta == pytest.approx(0.3 + math.pi / 4)
    assert s == pytest.approx(900 * math.sqrt(2) / 2)
    theta, s = rebin_coordinates(300.0, fan)
    assert theta == pytest.approx(0.3 + ATAN_QUARTER, rel=1e-14)
    assert s == pytest.approx(S_AT_U300, rel=1e-13)


@settings(max_examples=40)
@given(st.integers(2, 1024), st.floats(0.1, 3.0), st.floats(-math.pi, math.pi))
def test_rebin_s_is_bounded(n_px, spacing, beta):
    fan = FanGeometry(1200.0, 900.0, n_px, spacing, beta)
    _, s = rebin_coordinates(fan.detector_coordinates(), fan)
    assert np.all(np.abs(s) <= fan.sid_mm * math.sin(fan.gamma_max) + 1e-9)


def test_full_sampling_examples():
    fan = FanGeometry()
    w = full_sampling_angles(fan)
    assert w.n_projections == 512
    np.testing.assert_array_equal(np.array(w.angles_rad), -np.array(w.angles_rad)[::-1])
    w90 = full_sampling_angles(fan.at(math.pi / 2))
    assert w90.angles_rad[-1] == pytest.approx(THETA_90_EDGE, rel=1e-14)


@settings(max_examples=40)
@given(st.integers(2, 600), st.floats(0.01, 5.0), st.floats(-4.0, 4.0))
def test_full_sampling_strictly_increasing(n_px, spacing, beta):
    w = full_sampling_angles(FanGeometry(1200.0, 900.0, n_px, spacing, beta))
    assert np.all(np.diff(w.angles_rad) > 0)


def test_subsampled_examples():
    fan = FanGeometry()
    w = subsampled_angles(fan, 3)
    assert w.angles_rad == (-fan.gamma_max, 0.0, fan.gamma_max)
    beta = math.radians(25)
    w = subsampled_angles(fan.at(beta), 5)
    assert len(w.angles_rad) == 5 and w.angles_rad[2] == beta
    assert fan.gamma_max == pytest.approx(GAMMA_MAX_512, rel=1e-14)
    w = subsampled_angles(fan, 15)
    np.testing.assert_allclose(np.diff(w.angles_rad), STEP_15_512, rtol=1e-9)


@pytest.mark.parametrize("n", [-1, 0, 1])
def test_subsampled_rejects_small_n(n):
    with pytest.raises(InvalidArgument):
        subsampled_angles(FanGeometry(), n)


@settings(max_examples=30)
@given(st.integers(2, 64), st.floats(-3.0, 3.0))
def test_wedge_contains_all_angles(n, beta):
    fan = FanGeometry(beta_rad=beta)
    for w in (subsampled_angles(fan, n), full_sampling_angles(fan)):
        a = np.array(w.angles_rad)
        assert np.all(a >= beta - fan.gamma_max - 1e-12)
        assert np.all(a <= beta + fan.gamma_max + 1e-12)


def test_subsampled_and_full_share_centre_and_span():
    # pixel centres stop half a pixel short of the wedge edge, so only the
    # centre (odd n) and containment of the full list are common ground
    fan = FanGeometry(detector_px=64, beta_rad=0.4)
    sub = np.array(subsampled_angles(fan, fan.detector_px + 1).angles_rad)
    full = np.array(full_sampling_angles(fan).angles_rad)
    assert sub[len(sub) // 2] == fan.beta_rad
    assert sub[0] <= full[0] and full[-1] <= sub[-1]
    edge = fan.beta_rad + math.atan((fan.half_width_mm - 0.5) / fan.sdd_mm)
    assert full[-1] == pytest.approx(edge, rel=1e-14)


def test_wedge_angles_dispatch():
    fan = FanGeometry(detector_px=32)
    assert wedge_angles(fan).n_projections == 32
    assert wedge_angles(fan, 7).n_projections == 7


def test_image_grid_world_coordinates():
    grid = ImageGrid(4, 3, 2.0)
    assert grid.world_coordinates(0, 0) == (-3.0, -2.0)
    assert grid.world_coordinates(3, 2) == (3.0, 2.0)
    xs, ys = grid.axes()
    np.testing.assert_array_equal(xs, [-3, -1, 1, 3])
    np.testing.assert_array_equal(ys, [-2, 0, 2])


@pytest.mark.parametrize("args", [(0, 4, 1.0), (4, 0, 1.0), (4, 4, 0.0), (4, 4, -1.0)])
def test_image_grid_invariants(args):
    with pytest.raises(InvalidGeometry):
        ImageGrid(*args)


def test_parallel_geometry_invariants():
    with pytest.raises(InvalidGeometry):
        ParallelGeometry(8, 1.0, (0.0, 0.0))
    with pytest.raises(InvalidGeometry):
        ParallelGeometry(0, 1.0, (0.0,))
    g = ParallelGeometry(8, 1.0, [0.1, 0.2])
    np.testing.assert_array_equal(g.detector_coordinates(), np.arange(8) - 3.5)


def test_fan_geometry_invariants():
    with pytest.raises(InvalidGeometry):
        FanGeometry(900.0, 900.0)
    with pytest.raises(InvalidGeometry):
        FanGeometry(1200.0, 0.0)
    fan = FanGeometry(detector_px=512)
    assert fan.gamma_max == math.atan(256.0 / 1200.0)


def test_wedge_selection_rejects_outside_angle():
    with pytest.raises(InvalidGeometry):
        WedgeSelection(0.0, (0.0, 0.3), 0.2)
