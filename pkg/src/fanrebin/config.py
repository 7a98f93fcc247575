"""Experiment configuration: JSON schema validation, defaults and digests."""

from __future__ import annotations

import copy
import hashlib
import json
import math
from dataclasses import dataclass
from importlib import resources

import jsonschema

from .geometry import FanGeometry, ImageGrid
from .spectral import PROJECTION_DEPENDENT
from .training import DEFAULT_TRAJECTORY_DEG, TrainConfig

DEFAULTS = {
    "geometry": {
        "sdd_mm": 1200.0,
        "sid_mm": 900.0,
        "detector_px": 512,
        "detector_spacing_mm": 1.0,
        "image_px": 256,
        "image_spacing_mm": 1.0,
        "trajectory_deg": list(DEFAULT_TRAJECTORY_DEG),
        "n_projections": None,
    },
    "training": {
        "lr_scale": 0.5,
        "lr_filter": 0.8,
        "epochs_scale": 200,
        "epochs_filter": 20,
        "smoothing_sigma_bins": 0.5,
        "seed": 0,
        "batch_size": None,
        "scale_tol": 1e-6,
        "scale_window": 5,
        "power_iterations": 8,
    },
    "filter_mode": PROJECTION_DEPENDENT,
    "phantom_seed": 0,
    "output_dir": "run",
}

# 128^2 image / 256-pixel detectors: small enough to train in minutes on one core
DESK_GEOMETRY = {"detector_px": 256, "image_px": 128}


class ConfigError(ValueError):
    pass


def load_schema():
    return json.loads(resources.files("fanrebin").joinpath("config.schema.json").read_text())


def _merge(base, override):
    out = copy.deepcopy(base)
    for key, value in override.items():
        if isinstance(value, dict) and isinstance(out.get(key), dict):
            out[key] = _merge(out[key], value)
        else:
            out[key] = value
    return out


@dataclass
class ExperimentConfig:
    data: dict

    @classmethod
    def from_dict(cls, raw):
        try:
            jsonschema.validate(raw, load_schema())
        except jsonschema.ValidationError as exc:
            where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
            raise ConfigError(f"config error at {where}: {exc.message}") from None
        data = _merge(DEFAULTS, raw)
        geo = data["geometry"]
        if not geo["sdd_mm"] > geo["sid_mm"]:
            raise ConfigError("config error at geometry: sdd_mm must exceed sid_mm")
        return cls(data)

    @classmethod
    def load(cls, path):
        try:
            with open(path) as fh:
                raw = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON ({exc})") from None
        return cls.from_dict(raw)

    def to_dict(self):
        return copy.deepcopy(self.data)

    def digest(self, *sections):
        """SHA-256 of the canonical JSON of the given sections (all when empty)."""
        picked = self.data if not sections else {k: self.data[k] for k in sections}
        blob = json.dumps(picked, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()

    @property
    def geometry(self):
        return self.data["geometry"]

    @property
    def output_dir(self):
        return self.data["output_dir"]

    def grid(self):
        g = self.geometry
        return ImageGrid.square(g["image_px"], g["image_spacing_mm"])

    def fan_template(self):
        g = self.geometry
        return FanGeometry(float(g["sdd_mm"]), float(g["sid_mm"]), int(g["detector_px"]),
                           float(g["detector_spacing_mm"]), 0.0)

    def model_geometry(self):
        """Geometry block stored with checkpoints (everything but the trajectory)."""
        g = dict(self.geometry)
        g.pop("trajectory_deg")
        return g

    def train_config(self):
        t = self.data["training"]
        return TrainConfig(
            subsampling_level=self.geometry["n_projections"],
            filter_mode=self.data["filter_mode"],
            trajectory_deg=tuple(self.geometry["trajectory_deg"]),
            **t,
        )

    @property
    def trajectory_rad(self):
        return tuple(math.radians(b) for b in self.geometry["trajectory_deg"])
