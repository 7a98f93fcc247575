"""The rebinning network and its hand-written reverse pass.

Layer chain for one fan angle ``beta``::

    p_p -> F -> (x K) -> F^-1 -> Re -> parallel BP -> fan FP -> (x S) -> p_hat

Only ``K`` and ``S`` are trainable. In the reverse pass the adjoint of each
projection layer is its partner operator (parallel FP for the parallel BP
layer, fan BP for the fan FP layer), so with the default unmatched operators
the filter gradient is approximate. ``RebinModel.matched`` swaps in exact
transposes, which makes the gradient exact.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from . import projectors
from .errors import InvalidArgument, InvalidState
from .geometry import FanGeometry, ImageGrid, ParallelGeometry, wedge_angles
from .projectors import FanProjection, ParallelSinogram
from .spectral import PROJECTION_DEPENDENT, SpectralFilter, ramlak_init


@dataclass
class RebinModel:
    filter: SpectralFilter
    scale: float
    fan: FanGeometry
    grid: ImageGrid
    n_projections: int | None = None
    parallel_px: int | None = None
    parallel_spacing_mm: float | None = None
    matched: bool = False

    def __post_init__(self):
        if self.parallel_px is None:
            self.parallel_px = self.fan.detector_px
        if self.parallel_spacing_mm is None:
            self.parallel_spacing_mm = self.fan.detector_spacing_mm
        if self.filter.detector_px != self.parallel_px:
            raise InvalidArgument("filter length must equal the parallel detector size")
        if self.filter.mode == PROJECTION_DEPENDENT and self.filter.n_rows != self.wedge_size:
            raise InvalidArgument(
                f"projection-dependent filter needs {self.wedge_size} rows, has {self.filter.n_rows}")
        if not np.isfinite(self.scale):
            raise InvalidArgument("scale must be finite")

    @classmethod
    def initial(cls, fan, grid, mode, n_projections=None, matched=False, **kwargs):
        """Ram-Lak filter and unit scale."""
        rows = fan.detector_px if n_projections is None else n_projections
        px = kwargs.get("parallel_px") or fan.detector_px
        return cls(ramlak_init(px, mode, rows), 1.0, fan, grid, n_projections,
                   matched=matched, **kwargs)

    @property
    def wedge_size(self):
        return self.fan.detector_px if self.n_projections is None else self.n_projections

    def wedge(self, beta):
        return wedge_angles(self.fan.at(beta), self.n_projections)

    def parallel_geometry(self, beta):
        return ParallelGeometry(self.parallel_px, self.parallel_spacing_mm,
                                self.wedge(beta).angles_rad)

    def with_(self, **changes):
        return replace(self, **changes)


@dataclass
class TrainingSample:
    p_p: ParallelSinogram
    p_f: FanProjection
    beta: float
    phantom_name: str = ""


@dataclass
class ForwardCache:
    """Intermediates of a batched forward pass, reused by the reverse pass."""

    beta: float
    geometry: ParallelGeometry
    fan: FanGeometry
    spectrum: np.ndarray
    pre_scale: np.ndarray
    output: np.ndarray = field(repr=False)


def _check_stack(model, pp, geometry):
    if pp.ndim != 3 or pp.shape[2] != model.filter.detector_px:
        raise InvalidArgument(f"sinogram stack shape {pp.shape} does not match the filter")
    if pp.shape[1] != geometry.n_angles:
        raise InvalidArgument("sinogram rows do not match the wedge angles")
    model.filter.rows_for(pp.shape[1])


def forward_stack(model, pp, beta, geometry=None):
    """Batched forward pass for ``[B, n_angles, N]`` wedge sinograms at one ``beta``."""
    geometry = geometry or model.parallel_geometry(beta)
    pp = np.asarray(pp, dtype=np.float64)
    _check_stack(model, pp, geometry)
    fan = model.fan.at(beta)
    spectrum = np.fft.fft(pp, axis=-1)
    filtered = np.fft.ifft(spectrum * model.filter.rows_for(pp.shape[1]), axis=-1).real
    recon = projectors.backproject_parallel_stack(filtered, model.grid, geometry,
                                                  matched=model.matched)
    pre_scale = projectors.project_fan_stack(recon, model.grid, fan)
    return ForwardCache(beta, geometry, fan, spectrum, pre_scale, model.scale * pre_scale)


def filter_grad_stack(model, cache, residual):
    """Gradient of ``0.5 * sum(residual**2)`` w.r.t. the filter, summed over the batch."""
    image_bar = projectors.backproject_fan_stack(model.scale * residual, model.grid, cache.fan,
                                                 matched=model.matched)
    filtered_bar = projectors.project_parallel_stack(image_bar, model.grid, cache.geometry)
    n = filtered_bar.shape[-1]
    per_row = (np.fft.fft(filtered_bar, axis=-1) * np.conj(cache.spectrum)).real / n
    grad = per_row.sum(axis=0)
    if model.filter.mode == PROJECTION_DEPENDENT:
        return grad
    return grad.sum(axis=0, keepdims=True)


def forward(model, p_p, beta):
    """Approximate fan projection at ``beta`` from wedge projections ``p_p``."""
    cache = forward_stack(model, p_p.data[None], beta, p_p.geometry)
    return FanProjection(cache.output[0], cache.fan)


def loss(p_hat, p_f):
    a = np.asarray(getattr(p_hat, "data", p_hat), dtype=np.float64)
    b = np.asarray(getattr(p_f, "data", p_f), dtype=np.float64)
    if a.shape != b.shape:
        raise InvalidArgument(f"length mismatch: {a.shape} vs {b.shape}")
    return 0.5 * float(np.sum((a - b) ** 2))


def _sample_pass(model, sample):
    cache = forward_stack(model, sample.p_p.data[None], sample.beta, sample.p_p.geometry)
    if sample.p_f.data.shape[0] != cache.output.shape[1]:
        raise InvalidArgument("label length does not match the fan detector")
    return cache, cache.output - sample.p_f.data[None]


def grad_filter(model, sample):
    cache, residual = _sample_pass(model, sample)
    return filter_grad_stack(model, cache, residual)


def grad_scale(model, sample):
    """``d loss / d S`` = inner product of the pre-scale output with the residual."""
    if model.scale == 0:
        raise InvalidState("scale is zero; the pre-scale output cannot be recovered from p_hat / S")
    cache, residual = _sample_pass(model, sample)
    return float(np.sum((cache.output / model.scale) * residual))


def model_header(model):
    return {
        "mode": model.filter.mode,
        "filter_shape": list(model.filter.weights.shape),
        "scale": float(model.scale),
        "n_projections": model.n_projections,
        "geometry": {
            "sdd_mm": model.fan.sdd_mm,
            "sid_mm": model.fan.sid_mm,
            "detector_px": model.fan.detector_px,
            "detector_spacing_mm": model.fan.detector_spacing_mm,
            "image_px": model.grid.width_px,
            "image_spacing_mm": model.grid.spacing_mm,
            "n_projections": model.n_projections,
        },
        "parallel_px": model.parallel_px,
        "parallel_spacing_mm": model.parallel_spacing_mm,
    }


def save_checkpoint(model, stem):
    """JSON header plus the raw filter payload (``<stem>.json`` / ``<stem>.bin``)."""
    from .rawio import write_tensor

    return write_tensor(stem, model.filter.weights, "filter",
                        geometry=model_header(model)["geometry"],
                        extra={"checkpoint": model_header(model)})


def load_checkpoint(stem):
    from .rawio import CorruptFile, read_tensor

    weights, meta = read_tensor(stem)
    header = meta.get("checkpoint")
    if meta["role"] != "filter" or header is None:
        raise CorruptFile(f"{stem}: not a model checkpoint")
    if list(weights.shape) != header["filter_shape"]:
        raise CorruptFile(f"{stem}: filter shape disagrees with the checkpoint header")
    g = header["geometry"]
    fan = FanGeometry(g["sdd_mm"], g["sid_mm"], g["detector_px"], g["detector_spacing_mm"])
    grid = ImageGrid.square(g["image_px"], g["image_spacing_mm"])
    return RebinModel(SpectralFilter(header["mode"], weights), header["scale"], fan, grid,
                      header["n_projections"], header["parallel_px"], header["parallel_spacing_mm"])
