"""HDR reconstruction from a stack of summed exposures.

Pipeline: optional Gaussian denoising of each sum image, per-exposure
inversion of the clipped mean to a flux estimate, then a fixed-point fusion
whose weights follow each exposure's SNR_H at the current flux estimate.
"""

from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from .errors import DomainError
from .sensor import ExposureConfig, SumImage
from .stats import invert_mean, snr_h_linear

# per-jot theta used when weighing a pixel whose flux estimate is 0
_DARK_THETA = 1e-12


@dataclass(frozen=True)
class FusionConfig:
    """Knobs for :func:`fuse`.

    weighting selects ``"snr2"`` (inverse variance, the default) or
    ``"snr"`` (weights linear in SNR_H).
    """

    max_iters: int = 10
    rel_tol: float = 1e-4
    denoise_sigma: float = 0.0
    saturation_margin: float = 0.995
    weighting: str = "snr2"

    def __post_init__(self):
        if int(self.max_iters) != self.max_iters or self.max_iters < 1:
            raise DomainError("max_iters must be an integer >= 1")
        if not 0 < self.rel_tol < 1:
            raise DomainError("rel_tol must lie in (0, 1)")
        if not self.denoise_sigma >= 0:
            raise DomainError("denoise_sigma must be >= 0")
        if not 0 < self.saturation_margin < 1:
            raise DomainError("saturation_margin must lie in (0, 1)")
        if self.weighting not in ("snr2", "snr"):
            raise DomainError(f"unknown weighting {self.weighting!r}")


@dataclass(frozen=True)
class ExposureStack:
    """Ordered sum images of one scene; each carries its own config."""

    images: tuple

    def __post_init__(self):
        images = tuple(self.images)
        if not images:
            raise DomainError("exposure stack is empty")
        shape = images[0].sum.shape
        for img in images[1:]:
            if img.sum.shape != shape:
                raise DomainError(
                    f"exposures differ in size: {img.sum.shape} vs {shape}"
                )
        object.__setattr__(self, "images", images)

    def __len__(self):
        return len(self.images)

    def __iter__(self):
        return iter(self.images)

    @property
    def shape(self):
        return self.images[0].sum.shape


@dataclass(frozen=True)
class ExposureEstimate:
    """Per-pixel inversion of one exposure.

    theta_hat is photons per jot per frame, flux photons per second at scene
    pixel scale. Saturated pixels are invalid and carry ``theta_hat = nan``.
    """

    theta_hat: np.ndarray
    flux: np.ndarray
    valid: np.ndarray
    saturated: np.ndarray
    config: ExposureConfig = field(repr=False)


@dataclass(frozen=True)
class HdrEstimate:
    flux_hat: np.ndarray
    weight_sum: np.ndarray
    iterations: np.ndarray = field(default=None, repr=False)

    @property
    def height(self):
        return self.flux_hat.shape[0]

    @property
    def width(self):
        return self.flux_hat.shape[1]


def denoise(image, sigma):
    """Gaussian-smooth a sum image (``sigma`` in pixels, cut at 3 sigma).

    Edges reflect. ``sigma = 0`` returns ``image`` itself.
    """
    if sigma < 0:
        raise DomainError("sigma must be >= 0")
    if sigma == 0:
        return image
    smooth = ndimage.gaussian_filter(
        np.asarray(image.sum, dtype=float), sigma, mode="reflect", truncate=3.0
    )
    smooth = np.clip(smooth, 0.0, image.config.full_scale)
    return SumImage(smooth, image.config)


def estimate_exposure(image, saturation_margin=0.995):
    cfg = image.config
    m = image.mean_count
    saturated = m >= saturation_margin * cfg.capacity
    valid = ~saturated
    theta = np.full(m.shape, np.nan)
    theta[valid] = invert_mean(m[valid], cfg.capacity)
    flux = theta * cfg.jots / cfg.tau
    return ExposureEstimate(theta, flux, valid, saturated, cfg)


def saturation_flux(config, saturation_margin=0.995):
    """Smallest flux whose expected mean count crosses the saturation margin."""
    theta = invert_mean(saturation_margin * config.capacity, config.capacity)
    return theta * config.jots / config.tau


def _weights(flux, cfg, power):
    theta = np.maximum(cfg.jot_theta(flux), _DARK_THETA)
    snr = np.asarray(snr_h_linear(theta, cfg.capacity, cfg.draws))
    return np.nan_to_num(snr, nan=0.0) ** power


def fuse(stack, config=None):
    """Fuse a stack of exposures into one flux map.

    Each pixel starts from its most reliable valid exposure (highest SNR_H at
    that exposure's own estimate; ties go to the larger ``T K**2 L``). It is
    then refined by repeatedly averaging the per-exposure estimates with
    weights ``SNR_H**2`` (or ``SNR_H``) evaluated at the current estimate,
    until the relative change drops below ``rel_tol`` or ``max_iters``
    passes are done. Saturated exposures get zero weight; pixels saturated
    in every exposure fall back to the largest saturation flux in the stack.
    """
    if not isinstance(stack, ExposureStack):
        stack = ExposureStack(tuple(stack))
    config = config or FusionConfig()
    power = 2 if config.weighting == "snr2" else 1
    images = [denoise(img, config.denoise_sigma) for img in stack]
    ests = [estimate_exposure(img, config.saturation_margin) for img in images]
    cfgs = [e.config for e in ests]
    flux_i = np.stack([np.where(e.valid, e.flux, 0.0) for e in ests])
    valid_i = np.stack([e.valid for e in ests])
    any_valid = valid_i.any(axis=0)

    # initial pick: highest SNR_H at the exposure's own estimate
    score = np.full(flux_i.shape, -np.inf)
    for i, (e, cfg) in enumerate(zip(ests, cfgs)):
        live = e.valid & (e.theta_hat > 0)
        snr = np.asarray(snr_h_linear(e.theta_hat[live], cfg.capacity, cfg.draws))
        score[i][live] = np.nan_to_num(snr, nan=-np.inf)
        score[i][e.valid & (e.theta_hat == 0)] = -1.0
    headroom = np.array([cfg.full_scale for cfg in cfgs], dtype=float)
    order = np.lexsort((-headroom[:, None, None] * np.ones_like(score), -score), axis=0)
    best = order[0]
    flux = np.take_along_axis(flux_i, best[None], axis=0)[0]

    fallback = max(saturation_flux(cfg, config.saturation_margin) for cfg in cfgs)
    flux = np.where(any_valid, flux, fallback)

    iterations = np.zeros(flux.shape, dtype=np.int64)
    active = any_valid.copy()
    for _ in range(config.max_iters):
        idx = np.nonzero(active)
        if idx[0].size == 0:
            break
        current = flux[idx]
        w = np.stack([
            np.where(valid_i[i][idx], _weights(current, cfg, power), 0.0)
            for i, cfg in enumerate(cfgs)
        ])
        total = w.sum(axis=0)
        has = total > 0
        with np.errstate(divide="ignore", invalid="ignore"):
            norm = np.where(has, w / np.where(has, total, 1.0), 0.0)
        new = np.where(has, (norm * flux_i[(slice(None),) + idx]).sum(axis=0), current)
        iterations[idx] += 1
        change = np.abs(new - current)
        done = change <= config.rel_tol * np.abs(current)
        flux[idx] = new
        still = active[idx] & ~done
        active[idx] = still

    weight_sum = np.zeros(flux.shape)
    live = any_valid & (flux > 0)
    if np.any(live):
        weight_sum[live] = sum(
            np.where(valid_i[i][live], _weights(flux[live], cfg, power), 0.0)
            for i, cfg in enumerate(cfgs)
        )
    return HdrEstimate(flux, weight_sum, iterations)


def tone_map(estimate, c_max, gamma=2.2):
    """Map flux to 8-bit display values: ``round(255 clamp(c/c_max)**(1/gamma))``."""
    if not c_max > 0 or not gamma > 0:
        raise DomainError("c_max and gamma must be positive")
    flux = estimate.flux_hat if isinstance(estimate, HdrEstimate) else np.asarray(estimate, float)
    scaled = np.clip(flux / c_max, 0.0, 1.0) ** (1.0 / gamma)
    return np.floor(255.0 * scaled + 0.5).astype(np.uint8)
