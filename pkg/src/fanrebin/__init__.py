"""Learned parallel-to-fan-beam projection conversion.

A small set of parallel-beam projections inside the fan wedge is filtered in
the Fourier domain, back-projected onto an image grid and forward-projected
in fan-beam geometry. The only trainable parts are the filter and a global
scale. A classical two-step interpolation rebinning is included as baseline.
"""

__version__ = "0.1.0"

from .errors import (
    CoverageError,
    InvalidArgument,
    InvalidGeometry,
    InvalidState,
    TrainingDiverged,
)
from .geometry import (
    FanGeometry,
    ImageGrid,
    ParallelGeometry,
    WedgeSelection,
    full_sampling_angles,
    gamma_of_pixel,
    rebin_coordinates,
    subsampled_angles,
)
