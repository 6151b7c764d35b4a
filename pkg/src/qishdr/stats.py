"""Closed-form statistics of a photon counter that clips at capacity ``L``.

A jot exposed to ``theta`` expected photons per frame sees
``X ~ Poisson(theta)`` and reports ``B = min(X, L)``. This module gives the
mean and variance of ``B``, the slope of the mean with respect to ``theta``,
the exposure-referred SNR built from them, the inverse of the mean, and a
dynamic-range figure derived from an SNR floor.

All functions broadcast over ``theta`` (capacity and frame count are
scalars) and are pure.
"""

from dataclasses import dataclass
import math

import numpy as np
from scipy import special

from .errors import DomainError, FloorUnreachableError, SaturatedError, UndefinedSNRError

SIGMA_FLOOR = 1e-300

# log(n!) - log(sqrt(2 pi n) (n/e)^n) for n = 0..15
_STIRLERR_TABLE = np.array([
    0.0,
    0.08106146679532725822,
    0.041340695955409294094,
    0.027677925684998339149,
    0.020790672103765093112,
    0.016644691189821192163,
    0.013876128823070747999,
    0.011896709945891770095,
    0.010411265261972096497,
    0.0092554621827127329177,
    0.0083305634333628712565,
    0.007573675487951840795,
    0.0069428401072095298657,
    0.0064089941880042070684,
    0.0059513701127588477356,
    0.005554733551962801371,
])

# largest number of pmf cells evaluated at once by the variance pass
_CHUNK_CELLS = 2_000_000


def _stirlerr(n):
    n = np.asarray(n, dtype=float)
    out = np.empty_like(n)
    small = n <= 15
    out[small] = _STIRLERR_TABLE[n[small].astype(int)]
    big = n[~small]
    nn = big * big
    s0, s1, s2, s3, s4 = 1 / 12, 1 / 360, 1 / 1260, 1 / 1680, 1 / 1188
    val = np.where(
        big > 500,
        (s0 - s1 / nn) / big,
        np.where(
            big > 80,
            (s0 - (s1 - s2 / nn) / nn) / big,
            np.where(
                big > 35,
                (s0 - (s1 - (s2 - s3 / nn) / nn) / nn) / big,
                (s0 - (s1 - (s2 - (s3 - s4 / nn) / nn) / nn) / nn) / big,
            ),
        ),
    )
    out[~small] = val
    return out


def _bd0(x, lam):
    """Deviance term ``x log(x/lam) + lam - x`` without cancellation."""
    x, lam = np.broadcast_arrays(np.asarray(x, float), np.asarray(lam, float))
    diff = x - lam
    total = x + lam
    near = np.abs(diff) < 0.1 * total
    with np.errstate(divide="ignore", invalid="ignore"):
        v = np.where(near, diff / np.where(total > 0, total, 1.0), 0.0)
        series = diff * v
        ej = 2.0 * x * v
        v2 = v * v
        for j in range(1, 14):
            ej = ej * v2
            series = series + ej / (2 * j + 1)
        direct = x * np.log(x / lam) + lam - x
    return np.where(near, series, direct)


def poisson_pmf(k, theta):
    """Poisson probability mass ``theta**k e**-theta / k!``.

    Uses the saddle-point form ``exp(-stirlerr(k) - bd0(k, theta)) /
    sqrt(2 pi k)``, which keeps full relative precision for large ``k`` and
    ``theta`` where ``exp(k log theta - theta - lgamma(k+1))`` loses about
    ``eps * theta`` to rounding of the exponent.
    """
    k, theta = np.broadcast_arrays(np.asarray(k, float), np.asarray(theta, float))
    out = np.zeros(k.shape)
    zero_k = k == 0
    out[zero_k] = np.exp(-theta[zero_k])
    pos = (k > 0) & (theta > 0)
    if np.any(pos):
        kk = k[pos]
        tt = theta[pos]
        out[pos] = np.exp(-_stirlerr(kk) - _bd0(kk, tt)) / np.sqrt(2 * np.pi * kk)
    if out.ndim == 0:
        return float(out)
    return out


def _check_theta(theta):
    theta = np.asarray(theta, dtype=float)
    if np.any(~np.isfinite(theta)) or np.any(theta < 0):
        raise DomainError("theta must be finite and non-negative")
    return theta


def _check_capacity(capacity):
    if int(capacity) != capacity or capacity < 1:
        raise DomainError(f"capacity must be an integer >= 1, got {capacity!r}")
    return int(capacity)


def _check_frames(frames):
    if int(frames) != frames or frames < 1:
        raise DomainError(f"frames must be an integer >= 1, got {frames!r}")
    return int(frames)


def _scalar_or_array(x):
    return float(x) if np.ndim(x) == 0 else x


def psi(q, s):
    """Poisson CDF at ``q - 1``: ``sum_{k<q} s**k e**-s / k!``.

    ``psi(0, s)`` is the empty sum, 0.
    """
    if int(q) != q or q < 0:
        raise DomainError(f"q must be a non-negative integer, got {q!r}")
    s = _check_theta(s)
    if q == 0:
        return _scalar_or_array(np.zeros(s.shape))
    return _scalar_or_array(special.gammaincc(int(q), s))


def _upper_tail(q, s):
    """``1 - psi(q, s)`` computed directly (accurate when it is small)."""
    if q <= 0:
        return np.ones(np.shape(s))
    return special.gammainc(int(q), s)


def mean_clipped(theta, capacity):
    """Mean of ``min(Poisson(theta), capacity)``."""
    theta = _check_theta(theta)
    L = _check_capacity(capacity)
    mu = theta * special.gammaincc(L - 1, theta) if L > 1 else np.zeros(theta.shape)
    mu = mu + L * _upper_tail(L, theta)
    return _scalar_or_array(np.minimum(mu, np.minimum(theta, L)))


def dmean_dtheta(theta, capacity):
    """Slope of the clipped mean with respect to ``theta``."""
    theta = _check_theta(theta)
    L = _check_capacity(capacity)
    if L == 1:
        return _scalar_or_array(np.exp(-theta))
    slope = (
        special.gammaincc(L - 1, theta)
        - theta * poisson_pmf(L - 2, theta)
        + L * poisson_pmf(L - 1, theta)
    )
    return _scalar_or_array(np.clip(slope, 0.0, 1.0))


def _var_block(theta, L, mu):
    # centred second moment over the cells k < L that carry mass, plus the
    # clipped tail at L; the window is wide enough that omitted cells are
    # below 1e-30 of the peak
    half = np.ceil(12.0 * np.sqrt(theta) + 30.0)
    centre = np.floor(theta)
    lo = np.maximum(0.0, np.minimum(centre - half, (L - 1) - half))
    hi = np.minimum(float(L - 1), centre + half)
    width = int(np.max(hi - lo)) + 1 if theta.size else 0
    width = max(1, min(width, L))
    k = lo[:, None] + np.arange(width)[None, :]
    inside = k <= hi[:, None]
    p = np.where(inside, poisson_pmf(np.minimum(k, L - 1), theta[:, None]), 0.0)
    body = np.sum((k - mu[:, None]) ** 2 * p, axis=1)
    tail = _upper_tail(L, theta)
    return body + (L - mu) ** 2 * tail


def _var_unsaturated(theta, L, mu):
    # centre on theta: sum_{k<L} (k - theta)**2 p(k) = theta p(L-1) (theta - L + 1)
    # + theta psi_{L-1}, and sum_{k<L} (k - theta) p(k) = -theta p(L-1); every
    # term is of order theta, so nothing of order L**2 cancels
    p_top = poisson_pmf(L - 1, theta)
    centred = theta * p_top * (theta - L + 1) + theta * special.gammaincc(L - 1, theta)
    shift = theta - mu
    body = centred - 2.0 * shift * theta * p_top + shift**2 * special.gammaincc(L, theta)
    return body + (L - mu) ** 2 * _upper_tail(L, theta)


def var_clipped(theta, capacity):
    """Variance of ``min(Poisson(theta), capacity)``.

    Equal to ``L**2 - sum_{n<L} (2n+1) psi(n+1) - mu**2``, but that form
    cancels terms of size ``L**2`` and loses about ``eps L**2`` absolute. The
    variance is evaluated about a centre instead: a closed form centred on
    ``theta`` while ``theta <= L``, and a direct pmf sum over the occupied
    cells below ``L`` once the counter is saturating.
    """
    theta = _check_theta(theta)
    L = _check_capacity(capacity)
    flat = np.ravel(theta)
    out = np.zeros(flat.shape)
    if L == 1:
        out = np.exp(-flat) * -np.expm1(-flat)
        return _scalar_or_array(out.reshape(theta.shape))
    mu = np.ravel(mean_clipped(flat, L))
    low = (flat > 0) & (flat <= L)
    out[low] = _var_unsaturated(flat[low], L, mu[low])
    high = np.nonzero(flat > L)[0]
    if high.size:
        half = 12.0 * math.sqrt(float(np.max(flat[high]))) + 31.0
        step = max(1, int(_CHUNK_CELLS // min(L, 2 * half + 1)))
        for start in range(0, high.size, step):
            idx = high[start:start + step]
            out[idx] = _var_block(flat[idx], L, mu[idx])
    out = np.maximum(out, 0.0).reshape(theta.shape)
    return _scalar_or_array(out)


def snr_h_linear(theta, capacity, frames=1):
    """Exposure-referred SNR as a ratio, NaN where it is undefined.

    ``sqrt(T) * theta * dmu/dtheta / sigma``; undefined at ``theta = 0``,
    where ``sigma`` falls below ``SIGMA_FLOOR``, or where the ratio is 0.
    """
    theta = _check_theta(theta)
    L = _check_capacity(capacity)
    T = _check_frames(frames)
    sigma = np.sqrt(np.asarray(var_clipped(theta, L)))
    slope = np.asarray(dmean_dtheta(theta, L))
    ok = (theta > 0) & (sigma >= SIGMA_FLOOR)
    with np.errstate(divide="ignore", invalid="ignore"):
        snr = np.where(ok, math.sqrt(T) * theta * slope / np.where(ok, sigma, 1.0), np.nan)
    snr = np.where(snr > 0, snr, np.nan)
    return _scalar_or_array(snr)


def snr_h(theta, capacity, frames=1):
    """Exposure-referred SNR in dB for a sum of ``frames`` exposures.

    Raises
    ------
    UndefinedSNRError
        If any requested point has no finite SNR (zero flux or a fully
        saturated counter).
    """
    lin = np.asarray(snr_h_linear(theta, capacity, frames))
    if np.any(np.isnan(lin)):
        raise UndefinedSNRError(
            "SNR_H is undefined at zero flux or full saturation "
            f"(capacity={capacity}, frames={frames})"
        )
    return _scalar_or_array(20.0 * np.log10(lin))


def invert_mean(observed_mean, capacity, rtol=1e-13):
    """Return ``theta`` with ``mean_clipped(theta, capacity) == observed_mean``.

    The mean is strictly increasing in ``theta``, so the root is bracketed
    between ``observed_mean`` (the mean never exceeds ``theta``) and a
    ceiling found by doubling. Bisection in ``log theta`` gets close; a few
    Newton steps on the slope finish.
    """
    L = _check_capacity(capacity)
    m = np.asarray(observed_mean, dtype=float)
    if np.any(~np.isfinite(m)) or np.any(m < 0):
        raise DomainError("observed mean must be finite and non-negative")
    if np.any(m >= L):
        raise SaturatedError(f"observed mean reaches capacity {L}")
    flat = np.ravel(m)
    out = np.zeros(flat.shape)
    live = flat > 0
    if np.any(live):
        target = flat[live]
        lo = target.copy()
        hi = np.full(target.shape, 64.0 * L)
        hi = np.maximum(hi, 2.0 * target)
        short = mean_clipped(hi, L) < target
        while np.any(short):
            hi[short] *= 2.0
            if np.any(hi > 1e300):
                raise SaturatedError("observed mean is indistinguishable from capacity")
            short = mean_clipped(hi, L) < target
        # bisection on log theta
        for _ in range(200):
            if np.all(hi <= lo * (1.0 + rtol)):
                break
            mid = np.sqrt(lo * hi)
            below = mean_clipped(mid, L) < target
            lo = np.where(below, mid, lo)
            hi = np.where(below, hi, mid)
        theta = 0.5 * (lo + hi)
        for _ in range(3):
            slope = np.asarray(dmean_dtheta(theta, L))
            resid = np.asarray(mean_clipped(theta, L)) - target
            with np.errstate(divide="ignore", invalid="ignore"):
                step = np.where(slope > 0, resid / slope, 0.0)
            theta = np.clip(theta - step, lo, hi)
        out[live] = theta
    return _scalar_or_array(out.reshape(m.shape))


@dataclass(frozen=True)
class ClippedPoissonParams:
    """Operating point of one jot: ``theta`` photons per frame, capacity ``L``."""

    theta: float
    capacity: int

    def __post_init__(self):
        _check_theta(self.theta)
        _check_capacity(self.capacity)

    @property
    def mean(self):
        return mean_clipped(self.theta, self.capacity)

    @property
    def var(self):
        return var_clipped(self.theta, self.capacity)

    @property
    def slope(self):
        return dmean_dtheta(self.theta, self.capacity)


@dataclass(frozen=True)
class SnrQuery:
    params: ClippedPoissonParams
    frames: int = 1

    def __post_init__(self):
        _check_frames(self.frames)

    def snr_db(self):
        return snr_h(self.params.theta, self.params.capacity, self.frames)


@dataclass(frozen=True)
class DynamicRangeReport:
    theta_min: float
    theta_max: float
    ratio_db: float
    snr_floor_db: float


def _theta_grid(L, per_decade=40):
    top = 1e3 * (L + 10)
    decades = math.log10(top) + 12
    return np.logspace(-12, math.log10(top), int(decades * per_decade) + 1)


def _passes(theta, L, T, floor_db):
    lin = np.asarray(snr_h_linear(theta, L, T))
    with np.errstate(divide="ignore", invalid="ignore"):
        db = 20.0 * np.log10(lin)
    return np.where(np.isnan(db), False, db >= floor_db)


def _refine_edge(fail, ok, L, T, floor_db, iters=60):
    # the floor is crossed between ``fail`` and ``ok`` (either order)
    for _ in range(iters):
        mid = math.sqrt(fail * ok)
        if bool(_passes(mid, L, T, floor_db)):
            ok = mid
        else:
            fail = mid
    return ok


def dynamic_range(capacity, frames, snr_floor_db=0.0):
    """Illumination span over which SNR_H stays at or above ``snr_floor_db``.

    The span is located on a log-spaced ``theta`` grid covering
    ``[1e-12, 1e3 (L + 10)]`` and its ends are refined by bisection.
    """
    L = _check_capacity(capacity)
    T = _check_frames(frames)
    floor_db = float(snr_floor_db)
    if math.isnan(floor_db):
        raise DomainError("snr_floor_db must not be NaN")
    grid = _theta_grid(L)
    hits = np.nonzero(_passes(grid, L, T, floor_db))[0] if floor_db != math.inf else []
    if len(hits) == 0:
        raise FloorUnreachableError(
            f"SNR_H never reaches {floor_db} dB for capacity={L}, frames={T}"
        )
    first, last = hits[0], hits[-1]
    theta_min = grid[first]
    if first > 0:
        theta_min = _refine_edge(grid[first - 1], grid[first], L, T, floor_db)
    theta_max = grid[last]
    if last < grid.size - 1:
        theta_max = _refine_edge(grid[last + 1], grid[last], L, T, floor_db)
    ratio_db = 20.0 * math.log10(theta_max / theta_min)
    return DynamicRangeReport(float(theta_min), float(theta_max), ratio_db, floor_db)
