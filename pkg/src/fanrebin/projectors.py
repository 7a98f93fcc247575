"""Ray-driven projectors and pixel-driven back-projectors.

Forward projection samples each ray at integer multiples of the image spacing
measured from the ray's closest point to the isocenter and interpolates the
image bilinearly (zero outside the grid). Because parallel and fan rays share
that rule, a fan ray and the parallel ray on the same line give identical
line integrals.

Back-projection is pixel-driven with linear detector interpolation, which is
*not* the transpose of the forward projector. ``matched=True`` switches to the
exact transpose of the ray-driven operator instead.

The ``*_stack`` functions work on a leading batch axis and are what the
network uses; the single-image functions wrap them.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _kernels
from .errors import InvalidArgument, InvalidGeometry
from .geometry import FanGeometry, ImageGrid, ParallelGeometry, gamma_of_pixel


@dataclass
class ParallelSinogram:
    data: np.ndarray
    geometry: ParallelGeometry

    def __post_init__(self):
        self.data = np.asarray(self.data, dtype=np.float64)
        expected = (self.geometry.n_angles, self.geometry.detector_px)
        if self.data.shape != expected:
            raise InvalidArgument(f"sinogram shape {self.data.shape} != {expected}")
        if not np.all(np.isfinite(self.data)):
            raise InvalidArgument("sinogram contains non-finite values")


@dataclass
class FanProjection:
    data: np.ndarray
    geometry: FanGeometry

    def __post_init__(self):
        self.data = np.asarray(self.data, dtype=np.float64)
        if self.data.shape != (self.geometry.detector_px,):
            raise InvalidArgument(
                f"fan projection length {self.data.shape} != ({self.geometry.detector_px},)")
        if not np.all(np.isfinite(self.data)):
            raise InvalidArgument("fan projection contains non-finite values")


@dataclass
class _Rays:
    fx: np.ndarray
    fy: np.ndarray
    dx: np.ndarray
    dy: np.ndarray
    t_lo: np.ndarray
    t_hi: np.ndarray


def _lines(theta, s):
    theta = np.asarray(theta, dtype=np.float64)
    s = np.asarray(s, dtype=np.float64)
    c, sn = np.cos(theta), np.sin(theta)
    return s * c, s * sn, -sn, c


def parallel_rays(geom):
    theta = np.repeat(np.asarray(geom.angles_rad), geom.detector_px)
    s = np.tile(geom.detector_coordinates(), geom.n_angles)
    fx, fy, dx, dy = _lines(theta, s)
    inf = np.full(theta.shape, np.inf)
    return _Rays(fx, fy, dx, dy, -inf, inf)


def fan_rays(fan):
    gamma = gamma_of_pixel(fan.detector_coordinates(), fan)
    fx, fy, dx, dy = _lines(fan.beta_rad + gamma, fan.sid_mm * np.sin(gamma))
    cos_g = np.cos(gamma)
    # source at t = sid cos(gamma), detector pixel at t = sid cos(gamma) - sdd / cos(gamma)
    t_src = fan.sid_mm * cos_g
    return _Rays(fx, fy, dx, dy, t_src - fan.sdd_mm / cos_g, t_src)


def _sample_range(rays, grid):
    """Integer sample indices whose bilinear footprint can touch the grid."""
    h = grid.spacing_mm
    box = (0.5 * (grid.width_px + 1) * h, 0.5 * (grid.height_px + 1) * h)
    lo = rays.t_lo.copy()
    hi = rays.t_hi.copy()
    for f, d, half in ((rays.fx, rays.dx, box[0]), (rays.fy, rays.dy, box[1])):
        moving = np.abs(d) > 1e-15
        with np.errstate(divide="ignore", invalid="ignore"):
            a = (-half - f) / d
            b = (half - f) / d
        enter = np.where(moving, np.minimum(a, b), np.where(np.abs(f) < half, -np.inf, np.inf))
        leave = np.where(moving, np.maximum(a, b), np.where(np.abs(f) < half, np.inf, -np.inf))
        lo = np.maximum(lo, enter)
        hi = np.minimum(hi, leave)
    miss = ~(hi > lo)
    lo = np.where(miss, 0.0, lo)
    hi = np.where(miss, -h, hi)
    kmin = np.ceil(lo / h).astype(np.int64)
    kmax = np.floor(hi / h).astype(np.int64)
    kmax = np.where(miss, kmin - 1, kmax)
    return kmin, kmax


def _ray_args(rays, grid):
    kmin, kmax = _sample_range(rays, grid)
    return (rays.fx, rays.fy, rays.dx, rays.dy, kmin, kmax,
            float(grid.spacing_mm), float(grid.spacing_mm))


def _to_hwb(images, grid):
    images = np.asarray(images, dtype=np.float64)
    if images.ndim != 3 or images.shape[1:] != grid.shape:
        raise InvalidArgument(f"image stack shape {images.shape} does not match grid {grid.shape}")
    return np.ascontiguousarray(images.transpose(1, 2, 0))


def _check_fan(fan, grid):
    if not fan.sid_mm > grid.half_diagonal_mm:
        raise InvalidGeometry(
            f"source at {fan.sid_mm} mm lies inside the image support "
            f"(half-diagonal {grid.half_diagonal_mm:.3f} mm)")


def project_parallel_stack(images, grid, geom):
    """``[B, H, W]`` images -> ``[B, n_angles, detector_px]`` sinograms."""
    img = _to_hwb(images, grid)
    out = np.zeros((geom.n_angles * geom.detector_px, img.shape[2]))
    _kernels.ray_integrate(img, *_ray_args(parallel_rays(geom), grid), out)
    return out.T.reshape(img.shape[2], geom.n_angles, geom.detector_px)


def backproject_parallel_stack(sinos, grid, geom, matched=False):
    sinos = np.asarray(sinos, dtype=np.float64)
    if sinos.ndim != 3 or sinos.shape[1:] != (geom.n_angles, geom.detector_px):
        raise InvalidArgument(f"sinogram stack shape {sinos.shape} does not match geometry")
    B = sinos.shape[0]
    out = np.zeros(grid.shape + (B,))
    if matched:
        vals = np.ascontiguousarray(sinos.reshape(B, -1).T)
        _kernels.ray_scatter(vals, *_ray_args(parallel_rays(geom), grid), out)
    else:
        theta = np.asarray(geom.angles_rad)
        weight = grid.spacing_mm ** 2 / geom.detector_spacing_mm
        _kernels.backproject_parallel(
            np.ascontiguousarray(sinos.transpose(1, 2, 0)), np.cos(theta), np.sin(theta),
            float(geom.detector_spacing_mm), float(grid.spacing_mm), weight, out)
    return out.transpose(2, 0, 1).copy()


def project_fan_stack(images, grid, fan):
    """``[B, H, W]`` images -> ``[B, detector_px]`` fan projections."""
    _check_fan(fan, grid)
    img = _to_hwb(images, grid)
    out = np.zeros((fan.detector_px, img.shape[2]))
    _kernels.ray_integrate(img, *_ray_args(fan_rays(fan), grid), out)
    return out.T.copy()


def backproject_fan_stack(projs, grid, fan, matched=False):
    _check_fan(fan, grid)
    projs = np.asarray(projs, dtype=np.float64)
    if projs.ndim != 2 or projs.shape[1] != fan.detector_px:
        raise InvalidArgument(f"fan projection stack shape {projs.shape} does not match geometry")
    out = np.zeros(grid.shape + (projs.shape[0],))
    vals = np.ascontiguousarray(projs.T)
    if matched:
        _kernels.ray_scatter(vals, *_ray_args(fan_rays(fan), grid), out)
    else:
        weight = grid.spacing_mm ** 2 / fan.detector_spacing_mm
        _kernels.backproject_fan(vals, float(fan.beta_rad), float(fan.sid_mm), float(fan.sdd_mm),
                                 float(fan.detector_spacing_mm), float(grid.spacing_mm), weight, out)
    return out.transpose(2, 0, 1).copy()


def _grid_for(image, grid):
    if grid is None:
        h, w = np.shape(image)
        return ImageGrid(w, h, 1.0)
    return grid


def parallel_forward(x, geom, grid=None):
    """Line integrals of image ``x`` along every ray of ``geom``.

    ``grid`` defaults to a 1 mm grid matching the image shape.
    """
    grid = _grid_for(x, grid)
    data = project_parallel_stack(np.asarray(x)[None], grid, geom)[0]
    return ParallelSinogram(data, geom)


def parallel_backproject(p, grid, matched=False):
    return backproject_parallel_stack(p.data[None], grid, p.geometry, matched=matched)[0]


def fan_forward(x, geom, grid=None):
    grid = _grid_for(x, grid)
    return FanProjection(project_fan_stack(np.asarray(x)[None], grid, geom)[0], geom)


def fan_backproject(p, grid, matched=False):
    return backproject_fan_stack(p.data[None], grid, p.geometry, matched=matched)[0]
