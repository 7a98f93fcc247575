"""Imaging geometry for the parallel and fan-beam systems.

Conventions (all angles in radians, lengths in mm):

* A parallel ray at angle ``theta`` and detector coordinate ``s`` is the line
  ``s * e(theta) + t * d(theta)`` with ``e = (cos, sin)`` and
  ``d = (-sin, cos)``.
* The fan source at angle ``beta`` sits at ``sid * d(beta)``; the flat
  detector is centred at ``(sid - sdd) * d(beta)`` and runs along
  ``e(beta)``. Detector pixel ``u`` sees the fan angle ``atan(u / sdd)`` and
  its ray coincides with the parallel ray ``theta = beta + gamma``,
  ``s = sid * sin(gamma)``.
* Detector pixel centres are symmetric about the central ray.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .errors import InvalidArgument, InvalidGeometry


def detector_coordinates(n_px, spacing_mm):
    """Signed pixel-centre coordinates of a detector centred on the central ray."""
    return (np.arange(n_px, dtype=np.float64) - (n_px - 1) / 2.0) * spacing_mm


@dataclass(frozen=True)
class ImageGrid:
    """Square-pixel image grid centred on the isocenter.

    Images are stored as arrays of shape ``(height_px, width_px)``; element
    ``[j, i]`` lives at world position ``((i - (W-1)/2) h, (j - (H-1)/2) h)``.
    """

    width_px: int
    height_px: int
    spacing_mm: float = 1.0

    def __post_init__(self):
        if self.width_px <= 0 or self.height_px <= 0:
            raise InvalidGeometry("image grid needs a positive pixel count")
        if not self.spacing_mm > 0:
            raise InvalidGeometry("image spacing must be positive")

    @classmethod
    def square(cls, n_px, spacing_mm=1.0):
        return cls(int(n_px), int(n_px), float(spacing_mm))

    @property
    def shape(self):
        return (self.height_px, self.width_px)

    @property
    def half_diagonal_mm(self):
        return 0.5 * self.spacing_mm * math.hypot(self.width_px, self.height_px)

    def axes(self):
        """World x coordinates of columns and y coordinates of rows."""
        return (
            detector_coordinates(self.width_px, self.spacing_mm),
            detector_coordinates(self.height_px, self.spacing_mm),
        )

    def world_coordinates(self, i, j):
        return (
            (i - (self.width_px - 1) / 2.0) * self.spacing_mm,
            (j - (self.height_px - 1) / 2.0) * self.spacing_mm,
        )


@dataclass(frozen=True)
class ParallelGeometry:
    detector_px: int
    detector_spacing_mm: float
    angles_rad: tuple

    def __post_init__(self):
        object.__setattr__(self, "angles_rad", tuple(float(a) for a in self.angles_rad))
        if self.detector_px <= 0:
            raise InvalidGeometry("parallel detector needs a positive pixel count")
        if not self.detector_spacing_mm > 0:
            raise InvalidGeometry("detector spacing must be positive")
        if len(self.angles_rad) == 0:
            raise InvalidGeometry("parallel geometry needs at least one angle")
        if np.any(np.diff(self.angles_rad) <= 0):
            raise InvalidGeometry("parallel angles must be strictly increasing")

    @property
    def n_angles(self):
        return len(self.angles_rad)

    def detector_coordinates(self):
        return detector_coordinates(self.detector_px, self.detector_spacing_mm)


@dataclass(frozen=True)
class FanGeometry:
    """Flat-detector fan-beam geometry for a single source angle ``beta_rad``."""

    sdd_mm: float = 1200.0
    sid_mm: float = 900.0
    detector_px: int = 512
    detector_spacing_mm: float = 1.0
    beta_rad: float = 0.0

    def __post_init__(self):
        if not self.sdd_mm > self.sid_mm > 0:
            raise InvalidGeometry("need sdd > sid > 0")
        if self.detector_px <= 0:
            raise InvalidGeometry("fan detector needs a positive pixel count")
        if not self.detector_spacing_mm > 0:
            raise InvalidGeometry("detector spacing must be positive")

    @property
    def half_width_mm(self):
        return 0.5 * self.detector_px * self.detector_spacing_mm

    @property
    def gamma_max(self):
        return math.atan(self.half_width_mm / self.sdd_mm)

    def at(self, beta_rad):
        return replace(self, beta_rad=float(beta_rad))

    def detector_coordinates(self):
        return detector_coordinates(self.detector_px, self.detector_spacing_mm)


@dataclass(frozen=True)
class WedgeSelection:
    """Parallel angles used to synthesise the fan projection at ``beta_rad``."""

    beta_rad: float
    angles_rad: tuple
    gamma_max: float

    def __post_init__(self):
        object.__setattr__(self, "angles_rad", tuple(float(a) for a in self.angles_rad))
        lo = self.beta_rad - self.gamma_max
        hi = self.beta_rad + self.gamma_max
        tol = 1e-12 * max(1.0, abs(lo), abs(hi))
        if any(a < lo - tol or a > hi + tol for a in self.angles_rad):
            raise InvalidGeometry("wedge angle outside [beta - gamma_max, beta + gamma_max]")

    @property
    def n_projections(self):
        return len(self.angles_rad)


def gamma_of_pixel(u, fan):
    """Fan angle of the ray hitting signed detector coordinate ``u`` (mm)."""
    return np.arctan(np.asarray(u, dtype=np.float64) / fan.sdd_mm)


def full_sampling_angles(fan):
    """One parallel angle per fan detector pixel: ``beta + gamma(u_i)``."""
    angles = fan.beta_rad + gamma_of_pixel(fan.detector_coordinates(), fan)
    return WedgeSelection(fan.beta_rad, tuple(angles), fan.gamma_max)


def subsampled_angles(fan, n):
    """``n`` angles equally spaced over the closed wedge ``beta -/+ gamma_max``."""
    if int(n) != n or n < 2:
        raise InvalidArgument(f"sub-sampling needs at least 2 projections, got {n!r}")
    offsets = np.linspace(-fan.gamma_max, fan.gamma_max, int(n))
    if n % 2 == 1:
        offsets[n // 2] = 0.0
    return WedgeSelection(fan.beta_rad, tuple(fan.beta_rad + offsets), fan.gamma_max)


def wedge_angles(fan, n_projections=None):
    """Full sampling when ``n_projections`` is None, else the uniform sub-sampling."""
    if n_projections is None:
        return full_sampling_angles(fan)
    return subsampled_angles(fan, n_projections)


def rebin_coordinates(u, fan):
    """Map fan detector coordinate ``u`` to the parallel ray ``(theta, s)`` it equals."""
    gamma = gamma_of_pixel(u, fan)
    return fan.beta_rad + gamma, fan.sid_mm * np.sin(gamma)
