"""Monte-Carlo capture for photon-counting (QIS) and conventional (CIS) sensors.

Each scene pixel is covered by ``K x K`` jots that split the pixel's flux
evenly. In every one of ``T`` frames a jot counts ``Poisson(tau c / K**2)``
photons and clips the count at its capacity ``L``. Only the per-pixel sum of
the clipped counts is kept.

Random streams are keyed by ``(seed, row)``, so a capture is reproducible
from its seed no matter how rows are scheduled.
"""

from dataclasses import dataclass, field

import numpy as np
from scipy import special

from .errors import DomainError
from .stats import poisson_pmf

# capacities up to this size are sampled through category counts
_CATEGORY_MAX_L = 64
# cap on the number of Poisson draws held in memory at once
_DRAW_BLOCK = 4_000_000


@dataclass(frozen=True)
class PhotonFluxMap:
    """Ground-truth scene in photons per second, shape ``(height, width)``."""

    flux: np.ndarray

    def __post_init__(self):
        flux = np.asarray(self.flux, dtype=float)
        if flux.ndim != 2 or min(flux.shape) < 1:
            raise DomainError(f"flux map must be a non-empty 2-D array, got shape {flux.shape}")
        if not np.all(np.isfinite(flux)) or np.any(flux < 0):
            raise DomainError("flux values must be finite and non-negative")
        flux.setflags(write=False)
        object.__setattr__(self, "flux", flux)

    @property
    def height(self):
        return self.flux.shape[0]

    @property
    def width(self):
        return self.flux.shape[1]


@dataclass(frozen=True)
class ExposureConfig:
    """One capture setting.

    tau is the per-frame integration time in seconds, capacity the largest
    count a jot reports, frames the number of frames summed and oversample
    the number of jots along each side of a scene pixel.
    """

    tau: float
    capacity: int
    frames: int = 1
    oversample: int = 1
    seed: int = 0

    def __post_init__(self):
        if not np.isfinite(self.tau) or self.tau <= 0:
            raise DomainError(f"tau must be positive, got {self.tau!r}")
        for name in ("capacity", "frames", "oversample"):
            value = getattr(self, name)
            if int(value) != value or value < 1:
                raise DomainError(f"{name} must be an integer >= 1, got {value!r}")
            object.__setattr__(self, name, int(value))
        if int(self.seed) != self.seed or not 0 <= self.seed < 2**64:
            raise DomainError(f"seed must be a 64-bit unsigned integer, got {self.seed!r}")
        object.__setattr__(self, "seed", int(self.seed))

    @property
    def jots(self):
        return self.oversample * self.oversample

    @property
    def draws(self):
        """Clipped counts summed into one pixel: ``T K**2``."""
        return self.frames * self.jots

    @property
    def full_scale(self):
        """Largest possible pixel sum: ``T K**2 L``."""
        return self.draws * self.capacity

    def jot_theta(self, flux):
        """Expected photons per jot per frame for scene flux ``flux``."""
        return self.tau * np.asarray(flux, dtype=float) / self.jots


@dataclass(frozen=True)
class SumImage:
    """Per-pixel sum of clipped counts over all frames and jots."""

    sum: np.ndarray
    config: ExposureConfig = field(repr=False)

    def __post_init__(self):
        s = np.asarray(self.sum)
        if s.ndim != 2:
            raise DomainError("sum image must be 2-D")
        if np.any(s < 0) or np.any(s > self.config.full_scale):
            raise DomainError("sum values must lie in [0, T K^2 L]")
        s = s.copy()
        s.setflags(write=False)
        object.__setattr__(self, "sum", s)

    @property
    def height(self):
        return self.sum.shape[0]

    @property
    def width(self):
        return self.sum.shape[1]

    @property
    def mean_count(self):
        """Average clipped count per jot per frame."""
        return np.asarray(self.sum, dtype=float) / self.config.draws


def row_generator(seed, row):
    """Independent generator for one image row (or one replication)."""
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=(int(row),))
    return np.random.Generator(np.random.Philox(ss))


def _category_probs(theta, L):
    # P(B = k) for k < L, then P(B = L), per pixel: shape (n, L + 1)
    k = np.arange(L)
    probs = np.empty(theta.shape + (L + 1,))
    probs[:, :L] = poisson_pmf(k[None, :], theta[:, None])
    probs[:, L] = special.gammainc(L, theta)
    return probs


def _sum_by_categories(rng, theta, L, n):
    """Sum of ``n`` iid clipped counts, drawn through category counts.

    The counts of how many draws landed on each value ``0..L`` follow a
    multinomial law; it is sampled as a chain of conditional binomials.
    """
    probs = _category_probs(theta, L)
    remaining = np.full(theta.shape, n, dtype=np.int64)
    mass_left = np.ones(theta.shape)
    total = np.zeros(theta.shape, dtype=np.int64)
    for value in range(L):
        with np.errstate(divide="ignore", invalid="ignore"):
            p = np.where(mass_left > 0, probs[:, value] / mass_left, 0.0)
        p = np.clip(p, 0.0, 1.0)
        hits = rng.binomial(remaining, p)
        total += value * hits
        remaining -= hits
        mass_left = np.maximum(mass_left - probs[:, value], 0.0)
    return total + L * remaining


def _sum_by_draws(rng, theta, L, n):
    total = np.zeros(theta.shape, dtype=np.int64)
    block = max(1, _DRAW_BLOCK // max(1, theta.size))
    done = 0
    while done < n:
        m = min(block, n - done)
        draws = rng.poisson(np.broadcast_to(theta, (m,) + theta.shape))
        total += np.minimum(draws, L).sum(axis=0)
        done += m
    return total


def clipped_sums(rng, theta, capacity, draws):
    """Sum of ``draws`` independent ``min(Poisson(theta), capacity)`` per entry."""
    theta = np.asarray(theta, dtype=float)
    if not np.all(np.isfinite(theta)) or np.any(theta < 0):
        raise DomainError("per-jot theta must be finite and non-negative")
    if capacity <= _CATEGORY_MAX_L and draws > 1:
        return _sum_by_categories(rng, theta, capacity, draws)
    return _sum_by_draws(rng, theta, capacity, draws)


def capture(scene, config):
    """Simulate one exposure of ``scene`` and return its :class:`SumImage`."""
    flux = scene.flux if isinstance(scene, PhotonFluxMap) else PhotonFluxMap(scene).flux
    with np.errstate(over="ignore"):
        theta = config.jot_theta(flux)
    if not np.all(np.isfinite(theta)):
        raise DomainError("tau * flux / K^2 overflows")
    out = np.zeros(flux.shape, dtype=np.int64)
    for row in range(flux.shape[0]):
        rng = row_generator(config.seed, row)
        out[row] = clipped_sums(rng, theta[row], config.capacity, config.draws)
    return SumImage(out, config)


def replicate_moments(config, theta, n_trials):
    """Sample mean and variance of ``n_trials`` single-jot, single-frame counts.

    ``theta`` is the per-jot expectation; only ``capacity`` and ``seed`` are
    read from ``config``.
    """
    if n_trials < 1000:
        raise DomainError("n_trials must be at least 1000")
    rng = row_generator(config.seed, 0)
    draws = np.minimum(rng.poisson(float(theta), size=int(n_trials)), config.capacity)
    return float(draws.mean()), float(draws.var())
