"""Analytic ellipse phantoms: the training suite and the Shepp-Logan phantom."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

# Original Shepp-Logan table in unit coordinates:
# (intensity, semi-axis a, semi-axis b, x0, y0, rotation in degrees)
SHEPP_LOGAN_TABLE = (
    (2.00, 0.6900, 0.9200, 0.00, 0.0000, 0.0),
    (-0.98, 0.6624, 0.8740, 0.00, -0.0184, 0.0),
    (-0.02, 0.1100, 0.3100, 0.22, 0.0000, -18.0),
    (-0.02, 0.1600, 0.4100, -0.22, 0.0000, 18.0),
    (0.01, 0.2100, 0.2500, 0.00, 0.3500, 0.0),
    (0.01, 0.0460, 0.0460, 0.00, 0.1000, 0.0),
    (0.01, 0.0460, 0.0460, 0.00, -0.1000, 0.0),
    (0.01, 0.0460, 0.0230, -0.08, -0.6050, 0.0),
    (0.01, 0.0230, 0.0230, 0.00, -0.6060, 0.0),
    (0.01, 0.0230, 0.0460, 0.06, -0.6050, 0.0),
)

# Training-suite layout as fractions of the grid half-extent.
BODY_SEMI_AXES = (0.85, 0.65)
CIRCLE_RADIUS = 0.85
BAR_SEMI_AXES = (0.04, 0.40)
BAR_SPAN = 0.60

N_NOISE_PHANTOMS = 50


@dataclass(frozen=True)
class EllipseSpec:
    center: tuple = (0.0, 0.0)
    semi_axes: tuple = (1.0, 1.0)
    rotation: float = 0.0
    intensity: float = 1.0

    def __post_init__(self):
        a, b = self.semi_axes
        if a < 0 or b < 0:
            raise ValueError("ellipse semi-axes must be non-negative")

    def as_dict(self):
        return {
            "center": [float(c) for c in self.center],
            "semi_axes": [float(a) for a in self.semi_axes],
            "rotation": float(self.rotation),
            "intensity": float(self.intensity),
        }


@dataclass
class Phantom:
    name: str
    kind: str
    image: np.ndarray
    parameters: dict = field(default_factory=dict)


@dataclass
class PhantomSet:
    phantoms: list
    seed: int

    def __len__(self):
        return len(self.phantoms)

    def names(self):
        return [p.name for p in self.phantoms]

    def manifest(self):
        return {
            "seed": int(self.seed),
            "phantoms": [
                {"name": p.name, "class": p.kind, "parameters": p.parameters}
                for p in self.phantoms
            ],
        }


def _inside(spec, x, y):
    a, b = spec.semi_axes
    if a == 0 or b == 0:
        return np.zeros(np.broadcast(x, y).shape, dtype=bool)
    c, s = math.cos(spec.rotation), math.sin(spec.rotation)
    dx = x - spec.center[0]
    dy = y - spec.center[1]
    xr = dx * c + dy * s
    yr = -dx * s + dy * c
    with np.errstate(over="ignore"):  # subnormal axes: overflow just means outside
        return (xr / a) ** 2 + (yr / b) ** 2 <= 1.0


def ellipse_value(specs, x, y):
    """Evaluate the additive ellipse composition at arbitrary world points."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    out = np.zeros(np.broadcast(x, y).shape)
    for spec in specs:
        out += spec.intensity * _inside(spec, x, y)
    return out


def rasterize_ellipses(specs, grid):
    """Sample the ellipse composition at pixel centres (no anti-aliasing)."""
    xs, ys = grid.axes()
    return ellipse_value(specs, xs[None, :], ys[:, None])


def shepp_logan_specs(grid):
    r = 0.5 * grid.spacing_mm * min(grid.width_px, grid.height_px)
    return [
        EllipseSpec((x0 * r, y0 * r), (a * r, b * r), math.radians(phi), rho)
        for rho, a, b, x0, y0, phi in SHEPP_LOGAN_TABLE
    ]


def shepp_logan(grid):
    return rasterize_ellipses(shepp_logan_specs(grid), grid)


def _bars(n, r):
    xs = [0.0] if n == 1 else np.linspace(-BAR_SPAN * r, BAR_SPAN * r, n)
    a, b = BAR_SEMI_AXES
    return [EllipseSpec((float(x), 0.0), (a * r, b * r), 0.0, 1.0) for x in xs]


def _body(r):
    return EllipseSpec((0.0, 0.0), (BODY_SEMI_AXES[0] * r, BODY_SEMI_AXES[1] * r), 0.0, 1.0)


def _ellipse_phantom(name, kind, specs, grid):
    return Phantom(name, kind, rasterize_ellipses(specs, grid),
                   {"ellipses": [s.as_dict() for s in specs]})


def canonical_training_set(grid, seed=0):
    """The 65-phantom training suite.

    One field-of-view filling ellipse, one circle, ellipse-bar phantoms with
    1..8 bars, bar-only phantoms with 1..5 bars and 50 standard-normal noise
    images drawn from ``numpy.random.default_rng(seed)``.
    """
    r = 0.5 * grid.spacing_mm * min(grid.width_px, grid.height_px)
    phantoms = [
        _ellipse_phantom("ellipse", "ellipse", [_body(r)], grid),
        _ellipse_phantom(
            "circle", "circle",
            [EllipseSpec((0.0, 0.0), (CIRCLE_RADIUS * r, CIRCLE_RADIUS * r), 0.0, 1.0)],
            grid,
        ),
    ]
    for n in range(1, 9):
        phantoms.append(_ellipse_phantom(f"ellipse_bar_{n}", "ellipse_bar",
                                         [_body(r)] + _bars(n, r), grid))
    for n in range(1, 6):
        phantoms.append(_ellipse_phantom(f"bar_{n}", "bar", _bars(n, r), grid))

    rng = np.random.default_rng(seed)
    for k in range(N_NOISE_PHANTOMS):
        image = rng.standard_normal(grid.shape)
        phantoms.append(Phantom(f"noise_{k:02d}", "noise", image,
                                {"distribution": "standard_normal", "index": k,
                                 "generator": "numpy.default_rng", "seed": int(seed)}))
    return PhantomSet(phantoms, int(seed))
