"""Image-quality metric and SNR_H curves over illumination."""

from dataclasses import dataclass

import numpy as np

from .errors import DomainError
from .stats import snr_h_linear


def default_theta_axis(points=200, lo=1e-2, hi=1e6):
    return np.logspace(np.log10(lo), np.log10(hi), points)


# tau scales of the default exposure bracket: 1, 1/4, ..., 1/256
DEFAULT_BRACKET = tuple(4.0 ** -j for j in range(5))


@dataclass(frozen=True)
class SnrCurve:
    """SNR_H in dB sampled on a common theta axis, one row per sensor setting.

    ``values`` has shape ``(len(labels), len(theta))``; NaN marks points where
    SNR_H is undefined.
    """

    theta: np.ndarray
    labels: tuple
    values: np.ndarray

    def __post_init__(self):
        theta = np.asarray(self.theta, dtype=float)
        if theta.ndim != 1 or theta.size == 0:
            raise DomainError("theta axis must be a non-empty 1-D array")
        if np.any(np.diff(theta) <= 0):
            raise DomainError("theta axis must be strictly increasing")
        values = np.atleast_2d(np.asarray(self.values, dtype=float))
        if values.shape != (len(self.labels), theta.size):
            raise DomainError("values must have one row per label")
        object.__setattr__(self, "theta", theta)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "labels", tuple(self.labels))

    def row(self, label):
        return self.values[self.labels.index(label)]


def psnr(reference, test):
    """PSNR of two 8-bit images in dB; ``inf`` when they are identical."""
    ref = np.asarray(reference, dtype=float)
    tst = np.asarray(test, dtype=float)
    if ref.shape != tst.shape:
        raise DomainError(f"image sizes differ: {ref.shape} vs {tst.shape}")
    mse = np.mean((ref - tst) ** 2)
    if mse == 0:
        return float("inf")
    return float(10.0 * np.log10(255.0**2 / mse))


def _to_db(lin):
    with np.errstate(divide="ignore"):
        return 20.0 * np.log10(lin)


def sensor_label(capacity, frames, oversample=1):
    return f"L{capacity}-T{frames}-K{oversample}"


def _linear_row(theta, capacity, frames, oversample=1, scale=1.0):
    # theta counts photons per scene pixel over the whole capture, so sensors
    # with equal total exposure share an axis; T K^2 jot-frames split it
    draws = frames * oversample * oversample
    return np.asarray(snr_h_linear(theta * scale / draws, capacity, draws))


def snr_curve(configs, theta_axis=None):
    """SNR_H rows for several sensors on one illumination axis.

    ``configs`` holds ``(capacity, frames, label)`` or ``(capacity, frames,
    label, oversample)`` tuples; ``label`` may be ``None``.
    """
    configs = list(configs)
    if not configs:
        raise DomainError("at least one sensor config is required")
    theta = default_theta_axis() if theta_axis is None else np.asarray(theta_axis, float)
    if theta.size == 0:
        raise DomainError("theta axis is empty")
    labels, rows = [], []
    for cfg in configs:
        capacity, frames, label = cfg[:3]
        oversample = cfg[3] if len(cfg) > 3 else 1
        labels.append(label or sensor_label(capacity, frames, oversample))
        rows.append(_to_db(_linear_row(theta, capacity, frames, oversample)))
    return SnrCurve(theta, tuple(labels), np.array(rows))


def combined_snr_curve(exposure_set, theta_axis=None, label="combined"):
    """SNR_H of an inverse-variance fusion of several exposures.

    ``exposure_set`` holds ``(capacity, frames, tau_scale)`` or
    ``(capacity, frames, tau_scale, oversample)``; exposure ``i`` sees
    ``theta * tau_scale``. Linear SNRs add in quadrature; exposures whose
    SNR_H is undefined at a point are left out there.
    """
    exposure_set = list(exposure_set)
    if not exposure_set:
        raise DomainError("exposure set is empty")
    theta = default_theta_axis() if theta_axis is None else np.asarray(theta_axis, float)
    if theta.size == 0:
        raise DomainError("theta axis is empty")
    power = np.zeros(theta.shape)
    seen = np.zeros(theta.shape, dtype=bool)
    for exp in exposure_set:
        capacity, frames, scale = exp[:3]
        oversample = exp[3] if len(exp) > 3 else 1
        lin = _linear_row(theta, capacity, frames, oversample, scale)
        ok = ~np.isnan(lin)
        power[ok] += lin[ok] ** 2
        seen |= ok
    with np.errstate(divide="ignore"):
        row = np.where(seen, 10.0 * np.log10(power), np.nan)
    return SnrCurve(theta, (label,), row[None, :])


def bracket(capacity, frames, oversample=1, scales=DEFAULT_BRACKET):
    """Exposure set of one sensor at several tau scales."""
    return [(capacity, frames, s, oversample) for s in scales]


def db_range_within(curve_row, theta, lo, hi):
    """``max - min`` of a curve over ``lo <= theta <= hi``."""
    sel = (theta >= lo) & (theta <= hi) & ~np.isnan(curve_row)
    if not np.any(sel):
        raise DomainError("no curve samples inside the requested span")
    vals = curve_row[sel]
    return float(vals.max() - vals.min())


def floor_span(curve_row, theta, floor_db=0.0):
    """First and last theta where the curve sits at or above ``floor_db``."""
    ok = np.nonzero(~np.isnan(curve_row) & (curve_row >= floor_db))[0]
    if ok.size == 0:
        raise DomainError("curve never reaches the floor")
    return float(theta[ok[0]]), float(theta[ok[-1]])
