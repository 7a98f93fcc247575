import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fanrebin.errors import InvalidArgument, InvalidGeometry
from fanrebin.geometry import FanGeometry, ImageGrid, ParallelGeometry
from fanrebin.phantoms import EllipseSpec, rasterize_ellipses, shepp_logan
from fanrebin.projectors import (FanProjection, ParallelSinogram, backproject_fan_stack,
                                 backproject_parallel_stack, fan_backproject, fan_forward,
                                 fan_rays, parallel_backproject, parallel_forward, parallel_rays,
                                 project_fan_stack, project_parallel_stack)

SMALL = ImageGrid.square(16)
SMALL_PAR = ParallelGeometry(24, 1.0, tuple(np.linspace(0, np.pi, 8, endpoint=False)))
SMALL_FAN = FanGeometry(1200.0, 900.0, 24, 1.0, 0.4)


def _blob(grid, cx, cy, sigma):
    xs, ys = grid.axes()
    return np.exp(-((xs[None, :] - cx) ** 2 + (ys[:, None] - cy) ** 2) / (2 * sigma ** 2))


def _dense(forward, grid):
    """Explicit system matrix, one unit image per column."""
    n = grid.width_px * grid.height_px
    basis = np.eye(n).reshape(n, grid.height_px, grid.width_px)
    return forward(basis).reshape(n, -1).T


def _bilinear(img, grid, x, y):
    # independent bilinear sampler; zero outside the pixel-centre lattice
    h = grid.spacing_mm
    fx = x / h + (grid.width_px - 1) / 2.0
    fy = y / h + (grid.height_px - 1) / 2.0
    i0 = np.floor(fx).astype(int)
    j0 = np.floor(fy).astype(int)
    a, b = fx - i0, fy - j0
    out = np.zeros_like(x)
    for di, wi in ((0, 1 - a), (1, a)):
        for dj, wj in ((0, 1 - b), (1, b)):
            ii, jj = i0 + di, j0 + dj
            ok = (ii >= 0) & (ii < grid.width_px) & (jj >= 0) & (jj < grid.height_px)
            out[ok] += (wi * wj)[ok] * img[jj[ok], ii[ok]]
    return out


def _supersampled(img, grid, rays, factor=10):
    step = grid.spacing_mm / factor
    reach = grid.half_diagonal_mm + 2 * grid.spacing_mm
    out = np.empty(rays.fx.shape)
    for k in range(rays.fx.size):
        t = np.arange(max(rays.t_lo[k], -reach), min(rays.t_hi[k], reach), step)
        out[k] = _bilinear(img, grid, rays.fx[k] + t * rays.dx[k], rays.fy[k] + t * rays.dy[k]).sum() * step
    return out


def _rel_rms(a, b):
    return float(np.sqrt(np.mean((a - b) ** 2)) / np.sqrt(np.mean(b ** 2)))


# ---------------------------------------------------------------------------
# forward projectors

def test_zero_inputs():
    z = np.zeros(SMALL.shape)
    assert not parallel_forward(z, SMALL_PAR, SMALL).data.any()
    assert not fan_forward(z, SMALL_FAN, SMALL).data.any()
    assert not parallel_backproject(ParallelSinogram(np.zeros((8, 24)), SMALL_PAR), SMALL).any()
    assert not fan_backproject(FanProjection(np.zeros(24), SMALL_FAN), SMALL).any()


def test_disk_chords():
    grid = ImageGrid.square(128)
    disk = rasterize_ellipses([EllipseSpec((0, 0), (50, 50), 0, 1)], grid)
    geom = ParallelGeometry(129, 1.0, (0.0, 0.37, 1.1))
    p = parallel_forward(disk, geom, grid).data
    np.testing.assert_allclose(p[:, 64], 100.0, atol=2.0)
    for beta in (0.0, 0.8):
        f = fan_forward(disk, FanGeometry(1200, 900, 129, 1.0, beta), grid).data
        assert f[64] == pytest.approx(100.0, abs=2.0)


@pytest.mark.parametrize("theta", [0.0, 0.3, math.pi / 4, 1.2])
def test_parallel_forward_matches_supersampled_oracle(theta):
    grid = ImageGrid.square(128)
    img = shepp_logan(grid)
    geom = ParallelGeometry(192, 1.0, (theta,))
    p = parallel_forward(img, geom, grid).data[0]
    assert _rel_rms(p, _supersampled(img, grid, parallel_rays(geom))) < 0.01


@pytest.mark.parametrize("beta", [0.0, 0.5, 1.3])
def test_fan_forward_matches_supersampled_oracle(beta):
    grid = ImageGrid.square(128)
    img = shepp_logan(grid)
    fan = FanGeometry(1200, 900, 256, 1.0, beta)
    f = fan_forward(img, fan, grid).data
    assert _rel_rms(f, _supersampled(img, grid, fan_rays(fan))) < 0.01


def test_fan_source_inside_object():
    grid = ImageGrid.square(128, 10.0)
    with pytest.raises(InvalidGeometry):
        fan_forward(np.zeros(grid.shape), FanGeometry(1200, 900, 64), grid)


def test_rays_missing_the_image():
    grid = ImageGrid.square(16)
    geom = ParallelGeometry(64, 1.0, (0.2,))
    p = parallel_forward(np.ones(grid.shape), geom, grid).data[0]
    assert not p[:10].any() and not p[-10:].any()


def test_rotation_consistency():
    grid = ImageGrid.square(64)
    img = _blob(grid, 0.0, 0.0, 6.0)
    geom = ParallelGeometry(96, 1.0, tuple(np.linspace(0, np.pi, 17, endpoint=False)))
    p = parallel_forward(img, geom, grid).data
    for row in p[1:]:
        assert _rel_rms(row, p[0]) < 0.005


@pytest.mark.parametrize("theta", [0.0, 0.4, 1.0, 2.2])
def test_fourier_slice(theta):
    grid = ImageGrid.square(64)
    img = _blob(grid, 3.0, -2.0, 5.0)
    geom = ParallelGeometry(96, 1.0, (theta,))
    p = parallel_forward(img, geom, grid).data[0]
    s = geom.detector_coordinates()
    k = np.fft.fftfreq(96, d=1.0)
    spectrum_1d = np.exp(-2j * np.pi * np.outer(k, s)) @ p
    xs, ys = grid.axes()
    X, Y = np.meshgrid(xs, ys)
    radial = np.array([np.sum(img * np.exp(-2j * np.pi * (w * math.cos(theta) * X + w * math.sin(theta) * Y)))
                       for w in k])
    assert np.linalg.norm(spectrum_1d - radial) / np.linalg.norm(radial) < 0.02


# ---------------------------------------------------------------------------
# back-projectors and adjoints

def _adjoint_pairs(grid, par, fan):
    return {
        "parallel": (lambda x: project_parallel_stack(x, grid, par),
                     lambda y, m: backproject_parallel_stack(y, grid, par, matched=m),
                     (par.n_angles, par.detector_px)),
        "fan": (lambda x: project_fan_stack(x, grid, fan),
                lambda y, m: backproject_fan_stack(y, grid, fan, matched=m),
                (fan.detector_px,)),
    }


@pytest.mark.parametrize("kind", ["parallel", "fan"])
def test_matched_backprojector_is_dense_transpose(kind):
    fw, bp, shape = _adjoint_pairs(SMALL, SMALL_PAR, SMALL_FAN)[kind]
    A = _dense(fw, SMALL)
    rng = np.random.default_rng(7)
    y = rng.standard_normal((5,) + shape)
    bt = bp(y, True).reshape(5, -1)
    expected = y.reshape(5, -1) @ A
    assert np.abs(bt - expected).max() <= 1e-12 * np.abs(expected).max()


@pytest.mark.parametrize("kind", ["parallel", "fan"])
def test_matched_adjoint_identity_random_trials(kind):
    fw, bp, shape = _adjoint_pairs(SMALL, SMALL_PAR, SMALL_FAN)[kind]
    rng = np.random.default_rng(11)
    worst = 0.0
    for _ in range(100):
        x = rng.standard_normal((1,) + SMALL.shape)
        y = rng.standard_normal((1,) + shape)
        lhs = float(np.sum(fw(x) * y))
        rhs = float(np.sum(x * bp(y, True)))
        worst = max(worst, abs(lhs - rhs) / max(abs(lhs), abs(rhs)))
    assert worst < 1e-10


@pytest.mark.parametrize("kind,bound", [("parallel", 1e-3), ("fan", 0.05)])
def test_unmatched_adjoint_defect_is_small_on_smooth_data(kind, bound):
    fw, bp, _ = _adjoint_pairs(SMALL, SMALL_PAR, SMALL_FAN)[kind]
    x = _blob(SMALL, 1.0, -2.0, 3.0)[None]
    y = fw(_blob(SMALL, -2.0, 1.0, 4.0)[None])
    lhs = float(np.sum(fw(x) * y))
    rhs = float(np.sum(x * bp(y, False)))
    assert abs(lhs - rhs) / abs(lhs) < bound


def test_unmatched_is_not_the_transpose():
    fw, bp, shape = _adjoint_pairs(SMALL, SMALL_PAR, SMALL_FAN)["fan"]
    y = np.random.default_rng(0).standard_normal((1,) + shape)
    assert not np.allclose(bp(y, False), bp(y, True))


def test_parallel_backproject_single_angle_constant():
    grid = ImageGrid.square(32)
    geom = ParallelGeometry(64, 1.0, (0.3,))
    img = parallel_backproject(ParallelSinogram(np.full((1, 64), 2.5), geom), grid)
    np.testing.assert_allclose(img, 2.5, rtol=1e-12)


def test_fan_backproject_central_delta_support():
    grid = ImageGrid.square(32)
    fan = FanGeometry(1200, 900, 65, 1.0, 0.0)
    delta = np.zeros(65)
    delta[32] = 1.0
    img = fan_backproject(FanProjection(delta, fan), grid)
    xs, _ = grid.axes()
    # central ray at beta = 0 runs along the y axis (x = 0)
    cols = np.nonzero(img.any(axis=0))[0]
    assert img.any()
    assert np.all(np.abs(xs[cols]) <= 1.5)


small_images = st.integers(0, 2 ** 32 - 1)


@settings(max_examples=10, deadline=None)
@given(small_images, st.floats(-3, 3))
def test_all_operators_linear(seed, alpha):
    rng = np.random.default_rng(seed)
    x, z = rng.standard_normal((2, 1) + SMALL.shape)
    for kind, (fw, bp, shape) in _adjoint_pairs(SMALL, SMALL_PAR, SMALL_FAN).items():
        lhs = fw(alpha * x + z)
        rhs = alpha * fw(x) + fw(z)
        assert np.abs(lhs - rhs).max() <= 1e-6 * max(np.abs(rhs).max(), 1e-12) + 1e-12
        y, w = rng.standard_normal((2, 1) + shape)
        for m in (False, True):
            lhs = bp(alpha * y + w, m)
            rhs = alpha * bp(y, m) + bp(w, m)
            assert np.abs(lhs - rhs).max() <= 1e-6 * max(np.abs(rhs).max(), 1e-12) + 1e-12


def test_stack_matches_single_image_calls():
    rng = np.random.default_rng(3)
    imgs = rng.standard_normal((3,) + SMALL.shape)
    stack = project_parallel_stack(imgs, SMALL, SMALL_PAR)
    for b in range(3):
        np.testing.assert_array_equal(stack[b], parallel_forward(imgs[b], SMALL_PAR, SMALL).data)


def test_container_validation():
    with pytest.raises(InvalidArgument):
        ParallelSinogram(np.zeros((7, 24)), SMALL_PAR)
    with pytest.raises(InvalidArgument):
        ParallelSinogram(np.full((8, 24), np.inf), SMALL_PAR)
    with pytest.raises(InvalidArgument):
        FanProjection(np.zeros(23), SMALL_FAN)
