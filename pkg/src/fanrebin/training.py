"""Dataset construction, two-phase training and validation.

Phase 1 fits the global scale with the filter frozen; phase 2 freezes the
scale and runs gradient descent on the filter, smoothing it after every
epoch. Both phases use plain gradient descent with a constant step. The
configured learning rates are fractions of the inverse curvature: exact
(``mean <q, q>``) for the scale and a power-iteration estimate for the
filter, so the same defaults work across geometries.
"""

from __future__ import annotations

import hashlib
import logging
import math
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from . import projectors
from .errors import InvalidArgument, TrainingDiverged
from .geometry import ParallelGeometry, wedge_angles
from .projectors import FanProjection, ParallelSinogram
from .rebin_net import TrainingSample, filter_grad_stack, forward_stack
from .spectral import FILTER_MODES, PROJECTION_DEPENDENT, gaussian_smooth

log = logging.getLogger(__name__)

DEFAULT_TRAJECTORY_DEG = (0.0, 25.0, 45.0, 65.0, 90.0)
SUBSAMPLING_LEVELS = (None, 15, 7, 5, 3)


@dataclass
class TrainConfig:
    """Training hyperparameters.

    ``subsampling_level`` is None for full sampling (one parallel projection
    per fan detector pixel) or the number of wedge projections.
    """

    subsampling_level: int | None = None
    filter_mode: str = PROJECTION_DEPENDENT
    lr_scale: float = 0.5
    lr_filter: float = 0.8
    epochs_scale: int = 200
    epochs_filter: int = 20
    smoothing_sigma_bins: float = 0.5
    seed: int = 0
    trajectory_deg: tuple = DEFAULT_TRAJECTORY_DEG
    batch_size: int | None = None
    scale_tol: float = 1e-6
    scale_window: int = 5
    power_iterations: int = 8

    def __post_init__(self):
        self.trajectory_deg = tuple(float(b) for b in self.trajectory_deg)
        if self.subsampling_level is not None and self.subsampling_level < 2:
            raise InvalidArgument("sub-sampling level must be None or >= 2")
        if self.filter_mode not in FILTER_MODES:
            raise InvalidArgument(f"unknown filter mode {self.filter_mode!r}")
        if not (self.lr_scale > 0 and self.lr_filter > 0):
            raise InvalidArgument("learning rates must be positive")
        if self.epochs_scale < 0 or self.epochs_filter < 0:
            raise InvalidArgument("epoch counts must be non-negative")
        if self.smoothing_sigma_bins < 0:
            raise InvalidArgument("smoothing sigma must be non-negative")
        if self.batch_size is not None and self.batch_size < 1:
            raise InvalidArgument("batch size must be positive")

    @property
    def trajectory_rad(self):
        return tuple(math.radians(b) for b in self.trajectory_deg)

    def to_dict(self):
        d = asdict(self)
        d["trajectory_deg"] = list(self.trajectory_deg)
        return d


@dataclass
class TrainReport:
    losses: list
    phases: list
    final_scale: float
    final_filter: object
    final_loss: float
    scale_step: float
    filter_step: float
    dataset_digest: str
    config: dict
    model: object = field(default=None, repr=False)
    wall_clock_s: float = 0.0

    @property
    def epochs_run(self):
        return len(self.losses)

    def to_dict(self):
        """JSON-ready summary; wall-clock time is left out so reruns compare equal."""
        return {
            "losses": [float(v) for v in self.losses],
            "phases": list(self.phases),
            "final_scale": float(self.final_scale),
            "final_loss": float(self.final_loss),
            "scale_step": float(self.scale_step),
            "filter_step": float(self.filter_step),
            "filter_mode": self.final_filter.mode,
            "filter_shape": list(self.final_filter.weights.shape),
            "dataset_digest": self.dataset_digest,
            "config": self.config,
        }


@dataclass
class _Group:
    """All samples sharing one fan angle, stacked for batched evaluation."""

    beta: float
    geometry: ParallelGeometry
    index: np.ndarray
    pp: np.ndarray
    pf: np.ndarray


def build_dataset(phantoms, config, grid, fan_template, parallel_px=None, parallel_spacing_mm=None):
    """Wedge sinograms and fan labels for every phantom and trajectory angle.

    Samples are ordered phantom-major, trajectory-minor.
    """
    parallel_px = parallel_px or fan_template.detector_px
    parallel_spacing_mm = parallel_spacing_mm or fan_template.detector_spacing_mm
    images = np.stack([p.image for p in phantoms.phantoms])
    names = phantoms.names()
    per_beta = []
    for beta in config.trajectory_rad:
        fan = fan_template.at(beta)
        wedge = wedge_angles(fan, config.subsampling_level)
        geom = ParallelGeometry(parallel_px, parallel_spacing_mm, wedge.angles_rad)
        pp = projectors.project_parallel_stack(images, grid, geom)
        pf = projectors.project_fan_stack(images, grid, fan)
        per_beta.append((beta, fan, geom, pp, pf))
    samples = []
    for k, name in enumerate(names):
        for beta, fan, geom, pp, pf in per_beta:
            samples.append(TrainingSample(ParallelSinogram(pp[k], geom),
                                          FanProjection(pf[k], fan), beta, name))
    return samples


def dataset_digest(samples):
    h = hashlib.sha256()
    for s in samples:
        h.update(s.phantom_name.encode())
        h.update(np.float64(s.beta).tobytes())
        h.update(np.ascontiguousarray(s.p_p.data).tobytes())
        h.update(np.ascontiguousarray(s.p_f.data).tobytes())
    return h.hexdigest()


def _group(samples, subset=None):
    order = range(len(samples)) if subset is None else subset
    groups = {}
    for i in order:
        s = samples[i]
        key = (s.beta, s.p_p.geometry)
        groups.setdefault(key, []).append(i)
    out = []
    for (beta, geom), idx in groups.items():
        out.append(_Group(beta, geom, np.asarray(idx),
                          np.stack([samples[i].p_p.data for i in idx]),
                          np.stack([samples[i].p_f.data for i in idx])))
    return out


def _check_compatible(model, config, samples):
    if model.filter.mode != config.filter_mode:
        raise InvalidArgument("model filter mode differs from the training config")
    if model.n_projections != config.subsampling_level:
        raise InvalidArgument("model sub-sampling differs from the training config")
    if not samples:
        raise InvalidArgument("empty dataset")


def _pre_scale_outputs(model, groups):
    return [forward_stack(model, g.pp, g.beta, g.geometry).pre_scale for g in groups]


def _filter_epoch(model, groups, n_total):
    """Mean loss and mean filter gradient over ``groups`` in a fixed order."""
    total = 0.0
    grad = np.zeros_like(model.filter.weights)
    for g in groups:
        cache = forward_stack(model, g.pp, g.beta, g.geometry)
        residual = cache.output - g.pf
        total += 0.5 * float(np.sum(residual ** 2))
        grad += filter_grad_stack(model, cache, residual)
    return total / n_total, grad / n_total


def estimate_filter_curvature(model, groups, n_total, iterations):
    """Power iteration on the (approximate) Gauss-Newton operator of the filter."""
    v = model.filter.weights.copy()
    lam = 0.0
    for _ in range(max(1, iterations)):
        norm = np.linalg.norm(v)
        if norm == 0:
            return 0.0
        v = v / norm
        probe = model.with_(filter=model.filter.__class__(model.filter.mode, v))
        hv = np.zeros_like(v)
        for g in groups:
            cache = forward_stack(probe, g.pp, g.beta, g.geometry)
            hv += filter_grad_stack(probe, cache, cache.output)
        hv /= n_total
        lam = float(np.sum(hv * v))
        v = hv
    return abs(lam)


def _diverged(msg, model, report_kwargs):
    report = TrainReport(model=model, **report_kwargs)
    return TrainingDiverged(msg, model=model, report=report)


def train_two_phase(model, data, config, on_epoch=None):
    """Fit the scale (filter frozen), then the filter (scale frozen).

    ``on_epoch(phase, epoch, loss, model, pre_smoothing)`` is called after
    every update; ``pre_smoothing`` is the phase-2 filter before smoothing.
    Returns a :class:`TrainReport` whose ``model`` is the trained model; the
    input model is not modified.
    """
    _check_compatible(model, config, data)
    start = time.perf_counter()
    n_total = len(data)
    groups = _group(data)
    digest = dataset_digest(data)
    losses, phases = [], []
    scale = float(model.scale)
    current = model.with_(filter=model.filter.copy())

    def partial(final_loss=float("nan"), scale_step=0.0, filter_step=0.0):
        return dict(losses=list(losses), phases=list(phases), final_scale=current.scale,
                    final_filter=current.filter, final_loss=final_loss, scale_step=scale_step,
                    filter_step=filter_step, dataset_digest=digest, config=config.to_dict(),
                    wall_clock_s=time.perf_counter() - start)

    # phase 1: the pre-scale output q does not depend on S
    qs = _pre_scale_outputs(current.with_(scale=1.0), groups)
    curvature = sum(float(np.sum(q * q)) for q in qs) / n_total
    scale_step = config.lr_scale / curvature if curvature > 0 else 0.0
    for epoch in range(config.epochs_scale):
        value = 0.0
        grad = 0.0
        for q, g in zip(qs, groups):
            r = scale * q - g.pf
            value += 0.5 * float(np.sum(r * r))
            grad += float(np.sum(q * r))
        value /= n_total
        grad /= n_total
        if not math.isfinite(value):
            raise _diverged("loss became non-finite while fitting the scale", current, partial())
        losses.append(value)
        phases.append("scale")
        new_scale = scale - scale_step * grad
        if not math.isfinite(new_scale):
            raise _diverged("scale became non-finite", current, partial())
        scale = new_scale
        current = current.with_(scale=scale)
        if on_epoch:
            on_epoch("scale", epoch, value, current, None)
        w = config.scale_window
        if len(losses) > w:
            ref = losses[-1 - w]
            change = abs(losses[-1] - ref) / max(abs(ref), np.finfo(float).tiny)
            if change < config.scale_tol:
                break
    log.info("phase 1 finished after %d epochs, S = %.6g", len(losses), scale)

    # phase 2: filter only
    filter_step = 0.0
    if config.epochs_filter > 0:
        curvature = estimate_filter_curvature(current, groups, n_total, config.power_iterations)
        filter_step = config.lr_filter / curvature if curvature > 0 else 0.0
    rng = np.random.default_rng(config.seed)
    for epoch in range(config.epochs_filter):
        if config.batch_size is None:
            batches = [groups]
        else:
            perm = rng.permutation(n_total)
            batches = [_group(data, perm[i:i + config.batch_size])
                       for i in range(0, n_total, config.batch_size)]
        epoch_loss = 0.0
        for batch in batches:
            n_batch = sum(len(g.index) for g in batch)
            value, grad = _filter_epoch(current, batch, n_batch)
            if not (math.isfinite(value) and np.all(np.isfinite(grad))):
                raise _diverged("loss became non-finite while training the filter",
                                current, partial(scale_step=scale_step, filter_step=filter_step))
            epoch_loss += value * n_batch / n_total
            stepped = current.filter.copy()
            stepped.weights -= filter_step * grad
            if not np.all(np.isfinite(stepped.weights)):
                raise _diverged("filter weights became non-finite", current,
                                partial(scale_step=scale_step, filter_step=filter_step))
            current = current.with_(filter=stepped)
        losses.append(epoch_loss)
        phases.append("filter")
        pre_smoothing = current.filter
        current = current.with_(filter=gaussian_smooth(pre_smoothing, config.smoothing_sigma_bins))
        if on_epoch:
            on_epoch("filter", epoch, epoch_loss, current, pre_smoothing)

    final_loss, _ = _final_loss(current, groups, n_total)
    if not math.isfinite(final_loss):
        raise _diverged("final loss is non-finite", current,
                        partial(scale_step=scale_step, filter_step=filter_step))
    report = TrainReport(model=current, **partial(final_loss, scale_step, filter_step))
    return report


def _final_loss(model, groups, n_total):
    total = 0.0
    for g in groups:
        r = forward_stack(model, g.pp, g.beta, g.geometry).output - g.pf
        total += 0.5 * float(np.sum(r * r))
    return total / n_total, None


@dataclass
class ValidationResult:
    beta_deg: float
    reference: np.ndarray
    prediction: np.ndarray
    rel_l2: float
    max_abs: float
    correlation: float

    @property
    def difference(self):
        return self.prediction - self.reference

    def profile_rows(self):
        """Columns: pixel, reference, profile, difference."""
        pixel = np.arange(self.reference.shape[0], dtype=np.float64)
        return np.column_stack([pixel, self.reference, self.prediction, self.difference])

    def metrics(self):
        return {"beta_deg": self.beta_deg, "rel_l2": self.rel_l2,
                "max_abs": self.max_abs, "correlation": self.correlation}


def projection_metrics(prediction, reference):
    diff = prediction - reference
    ref_norm = float(np.linalg.norm(reference))
    rel = float(np.linalg.norm(diff)) / ref_norm if ref_norm > 0 else float(np.linalg.norm(diff))
    if np.std(prediction) > 0 and np.std(reference) > 0:
        corr = float(np.corrcoef(prediction, reference)[0, 1])
    else:
        corr = float("nan")
    return rel, float(np.max(np.abs(diff))), corr


def validate(model, phantom, fan_template=None, trajectory_deg=DEFAULT_TRAJECTORY_DEG):
    """Compare network output against directly projected fan data, per ``beta``."""
    if fan_template is not None and fan_template.at(0.0) != model.fan.at(0.0):
        raise InvalidArgument("validation fan geometry differs from the model's")
    image = np.asarray(phantom, dtype=np.float64)
    results = []
    for beta_deg in trajectory_deg:
        beta = math.radians(beta_deg)
        geom = model.parallel_geometry(beta)
        pp = projectors.project_parallel_stack(image[None], model.grid, geom)
        reference = projectors.project_fan_stack(image[None], model.grid, model.fan.at(beta))[0]
        prediction = forward_stack(model, pp, beta, geom).output[0]
        rel, mx, corr = projection_metrics(prediction, reference)
        results.append(ValidationResult(float(beta_deg), reference, prediction, rel, mx, corr))
    return results
