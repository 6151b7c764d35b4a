"""Photon-counting sensor simulation, clipped-Poisson statistics and HDR fusion."""

from .errors import (
    DomainError,
    FloorUnreachableError,
    FormatError,
    SaturatedError,
    UndefinedSNRError,
)
from .hdr import ExposureStack, FusionConfig, HdrEstimate, denoise, estimate_exposure, fuse, tone_map
from .metrics import SnrCurve, combined_snr_curve, psnr, snr_curve
from .sensor import ExposureConfig, PhotonFluxMap, SumImage, capture, replicate_moments
from .stats import (
    ClippedPoissonParams,
    DynamicRangeReport,
    SnrQuery,
    dmean_dtheta,
    dynamic_range,
    invert_mean,
    mean_clipped,
    psi,
    snr_h,
    var_clipped,
)

__version__ = "0.1.0"
