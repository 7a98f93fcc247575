"""Row-wise DFT of sinograms and the diagonal frequency filter.

Frequencies are kept in standard DFT order (DC first). The forward transform
is unnormalised and the inverse carries the ``1/N``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .errors import InvalidArgument

PROJECTION_INDEPENDENT = "projection_independent"
PROJECTION_DEPENDENT = "projection_dependent"
FILTER_MODES = (PROJECTION_INDEPENDENT, PROJECTION_DEPENDENT)


@dataclass
class SpectralFilter:
    """Real frequency weights; one row, or one row per parallel projection."""

    mode: str
    weights: np.ndarray

    def __post_init__(self):
        if self.mode not in FILTER_MODES:
            raise InvalidArgument(f"unknown filter mode {self.mode!r}")
        self.weights = np.array(self.weights, dtype=np.float64, ndmin=2)
        if self.weights.ndim != 2:
            raise InvalidArgument("filter weights must be a matrix")
        if self.mode == PROJECTION_INDEPENDENT and self.weights.shape[0] != 1:
            raise InvalidArgument("a projection-independent filter has exactly one row")
        if not np.all(np.isfinite(self.weights)):
            raise InvalidArgument("filter weights must be finite")

    @property
    def detector_px(self):
        return self.weights.shape[1]

    @property
    def n_rows(self):
        return self.weights.shape[0]

    def copy(self):
        return replace(self, weights=self.weights.copy())

    def rows_for(self, n_angles):
        """Weights broadcast against an ``[n_angles, detector_px]`` spectrum."""
        if self.mode == PROJECTION_DEPENDENT and self.n_rows != n_angles:
            raise InvalidArgument(
                f"projection-dependent filter has {self.n_rows} rows for {n_angles} projections")
        return self.weights


@dataclass
class SpectralSinogram:
    data: np.ndarray
    geometry: object = None


def dft_rows(p):
    """Unnormalised DFT along the detector axis of a sinogram (or raw array)."""
    data = getattr(p, "data", p)
    data = np.asarray(data, dtype=np.float64)
    if data.shape[-1] < 2:
        raise InvalidArgument("rows need at least two samples")
    return SpectralSinogram(np.fft.fft(data, axis=-1), getattr(p, "geometry", None))


def idft_rows(s):
    data = getattr(s, "data", s)
    return np.fft.ifft(data, axis=-1)


def apply_filter(s, k):
    data = np.asarray(getattr(s, "data", s))
    if data.shape[-1] != k.detector_px:
        raise InvalidArgument(
            f"filter has {k.detector_px} frequencies, spectrum has {data.shape[-1]}")
    n_angles = data.shape[-2] if data.ndim >= 2 else 1
    out = data * k.rows_for(n_angles) if data.ndim >= 2 else data * k.weights[0]
    return SpectralSinogram(out, getattr(s, "geometry", None))


def ramlak_kernel(n):
    """Discrete Ram-Lak kernel on a circular grid of length ``n`` (unit spacing)."""
    idx = np.arange(n)
    m = np.minimum(idx, n - idx)
    h = np.zeros(n)
    h[0] = 0.25
    odd = m % 2 == 1
    h[odd] = -1.0 / (math.pi ** 2 * m[odd].astype(np.float64) ** 2)
    return h


def ramlak_init(detector_px, mode=PROJECTION_INDEPENDENT, n_rows=1):
    if detector_px < 2:
        raise InvalidArgument("Ram-Lak filter needs at least two detector pixels")
    row = np.fft.fft(ramlak_kernel(detector_px)).real
    rows = 1 if mode == PROJECTION_INDEPENDENT else int(n_rows)
    return SpectralFilter(mode, np.tile(row, (rows, 1)))


def gaussian_kernel(sigma_bins):
    radius = int(math.ceil(4.0 * sigma_bins))
    offsets = np.arange(-radius, radius + 1, dtype=np.float64)
    g = np.exp(-0.5 * (offsets / sigma_bins) ** 2)
    return g / g.sum()


def gaussian_smooth(k, sigma_bins):
    """Circularly convolve each filter row with a normalised Gaussian (±4 sigma)."""
    if sigma_bins < 0:
        raise InvalidArgument("smoothing sigma must be non-negative")
    if sigma_bins == 0:
        return k.copy()
    g = gaussian_kernel(sigma_bins)
    radius = len(g) // 2
    w = k.weights
    out = np.zeros_like(w)
    for offset, coeff in zip(range(-radius, radius + 1), g):
        out += coeff * np.roll(w, offset, axis=1)
    return replace(k, weights=out)
