import mpmath as mp
import numpy as np
import pytest

THETA_GRID = [0.01, 0.1, 1, 3.7, 10, 100, 3900, 4100]
CAPACITY_GRID = [1, 2, 3, 4, 7, 16, 4000]


def clipped_moments_oracle(theta, capacity, dps=50):
    """Mean and variance of min(Poisson(theta), L) by direct pmf summation.

    Runs in mpmath at ``dps`` digits; the tail above L enters as
    ``1 - sum_{k<L} p(k)``, exact at this precision.
    """
    with mp.workdps(dps):
        th = mp.mpf(theta)
        if th == 0:
            return 0.0, 0.0
        p = mp.e ** (-th)
        m1 = m2 = cdf = mp.mpf(0)
        for k in range(capacity):
            m1 += k * p
            m2 += k * k * p
            cdf += p
            p = p * th / (k + 1)
        tail = 1 - cdf
        m1 += capacity * tail
        m2 += capacity * capacity * tail
        return m1, m2 - m1 * m1


def mean_oracle(theta, capacity, dps=50):
    return clipped_moments_oracle(theta, capacity, dps)[0]


def slope_oracle(theta, capacity, rel_step=1e-6, dps=120):
    """Central finite difference of the high-precision clipped mean."""
    with mp.workdps(dps):
        th = mp.mpf(theta)
        h = mp.mpf(rel_step) * max(th, 1)
        if th == 0:
            return float((mean_oracle(h, capacity, dps) - 0) / h)
        up = mean_oracle(th + h, capacity, dps)
        down = mean_oracle(th - h, capacity, dps)
        return float((up - down) / (2 * h))


@pytest.fixture(scope="session")
def moment_table():
    """Oracle mean/variance on the full (theta, L) grid, computed once."""
    return {
        (th, L): tuple(float(v) for v in clipped_moments_oracle(th, L))
        for th in THETA_GRID
        for L in CAPACITY_GRID
    }


def camera_scene(c_max=6e6):
    """256 x 256 cameraman, 2 x 2 box-averaged from scikit-image's copy."""
    from skimage import data

    img = data.camera().astype(float).reshape(256, 2, 256, 2).mean(axis=(1, 3))
    img = np.floor(img + 0.5)
    return img / img.max() * c_max


def ramp_scene(lo=1e3, hi=6e6, n=64):
    return np.linspace(lo, hi, n * n).reshape(n, n)
