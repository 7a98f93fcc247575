"""Geometric rebinning: parallel sinogram -> fan projection by interpolation.

Every fan detector pixel maps to a parallel ray ``(theta, s)``. Its value is
obtained by linear interpolation between the two bracketing projection
angles, then linear interpolation between the two bracketing detector bins.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np

from .errors import CoverageError
from .geometry import rebin_coordinates
from .projectors import FanProjection

log = logging.getLogger(__name__)

ANGLE_TOL = 1e-12


@dataclass
class RebinTable:
    theta: np.ndarray
    s: np.ndarray
    angle_index: np.ndarray
    angle_weight: np.ndarray
    det_index: np.ndarray
    det_weight: np.ndarray
    in_range: np.ndarray


def _brackets(grid_pts, values):
    """Indices ``(i0, i1)`` and weights ``(1-a, a)`` of ``values`` on sorted ``grid_pts``."""
    n = len(grid_pts)
    i0 = np.searchsorted(grid_pts, values, side="right") - 1
    i0 = np.clip(i0, 0, n - 1)
    i1 = np.minimum(i0 + 1, n - 1)
    span = grid_pts[i1] - grid_pts[i0]
    with np.errstate(divide="ignore", invalid="ignore"):
        a = np.where(span > 0, (values - grid_pts[i0]) / span, 0.0)
    a = np.clip(a, 0.0, 1.0)
    return np.stack([i0, i1], axis=1), np.stack([1.0 - a, a], axis=1)


def _missing_ranges(theta, lo, hi):
    missing = []
    below = theta[theta < lo - ANGLE_TOL]
    above = theta[theta > hi + ANGLE_TOL]
    if below.size:
        missing.append((float(below.min()), lo))
    if above.size:
        missing.append((hi, float(above.max())))
    return missing


def build_rebin_table(p_geom, fan):
    u = fan.detector_coordinates()
    theta, s = rebin_coordinates(u, fan)
    angles = np.asarray(p_geom.angles_rad)
    missing = _missing_ranges(theta, angles[0], angles[-1])
    if missing:
        text = ", ".join(f"[{math.degrees(a):.4f}, {math.degrees(b):.4f}] deg" for a, b in missing)
        raise CoverageError(f"parallel angles do not cover {text}", missing)
    # clamp angles within rounding of the ends onto the nearest projection
    angle_index, angle_weight = _brackets(angles, np.clip(theta, angles[0], angles[-1]))

    det = p_geom.detector_coordinates()
    det_index, det_weight = _brackets(det, s)
    tol = 1e-9 * p_geom.detector_spacing_mm
    in_range = (s >= det[0] - tol) & (s <= det[-1] + tol)
    if not np.all(in_range):
        log.warning("%d fan pixels map outside the parallel detector and are set to 0",
                    int(np.sum(~in_range)))
        det_weight = np.where(in_range[:, None], det_weight, 0.0)
    return RebinTable(theta, s, angle_index, angle_weight, det_index, det_weight, in_range)


def geometric_rebin(p_p, fan, table=None):
    """Angle interpolation first, then detector interpolation."""
    table = table or build_rebin_table(p_p.geometry, fan)
    data = p_p.data
    ai, aw = table.angle_index, table.angle_weight
    rows = aw[:, :1] * data[ai[:, 0]] + aw[:, 1:] * data[ai[:, 1]]
    m = np.arange(rows.shape[0])
    di, dw = table.det_index, table.det_weight
    out = dw[:, 0] * rows[m, di[:, 0]] + dw[:, 1] * rows[m, di[:, 1]]
    return FanProjection(out, fan)
