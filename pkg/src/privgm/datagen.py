"""Synthetic benchmark generators and their ground-truth radius constants."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import betainc

from .core import Dataset, SeededGenerator


@dataclass(frozen=True)
class GaussianClusterSpec:
    R: float
    n: int
    d: int
    sigma: float
    frac_in: float

    def __post_init__(self):
        if self.R <= 0 or self.sigma <= 0:
            raise ValueError("R and sigma must be positive")
        if self.n < 1 or self.d < 1:
            raise ValueError("n and d must be positive")
        # frac_in = 0 (outliers only) is accepted for testing the outlier law
        if not 0.0 <= self.frac_in <= 1.0:
            raise ValueError("frac_in must lie in [0, 1]")

    @property
    def n_in(self) -> int:
        return min(self.n, int(math.floor(self.frac_in * self.n + 0.5)))

    @property
    def r_true(self) -> float:
        return self.sigma * math.sqrt(self.d)


@dataclass(frozen=True)
class HeavyTailedSpec:
    nu: float
    n: int
    d: int

    def __post_init__(self):
        if self.nu <= 0:
            raise ValueError("nu must be positive")
        if self.n < 1 or self.d < 1:
            raise ValueError("n and d must be positive")

    def r_true(self, gamma: float = 0.75) -> float:
        return math.sqrt(self.d * f_quantile(self.d, self.nu, gamma))


def _unit_vectors(rng, count, d):
    v = rng.standard_normal((count, d))
    norms = np.linalg.norm(v, axis=1, keepdims=True)
    # a zero draw has probability zero; guard anyway
    norms[norms == 0] = 1.0
    return v / norms


def uniform_ball(rng, count: int, d: int, radius: float) -> np.ndarray:
    radii = radius * rng.random(count) ** (1.0 / d)
    return _unit_vectors(rng, count, d) * radii[:, None]


def gaussian_cluster(spec: GaussianClusterSpec, gen: SeededGenerator) -> Dataset:
    """Gaussian inliers around a center on the sphere of radius R/2 plus uniform-ball outliers."""
    rng = gen.rng
    mu = _unit_vectors(rng, 1, spec.d)[0] * (spec.R / 2.0)
    n_in = spec.n_in
    inliers = mu + spec.sigma * rng.standard_normal((n_in, spec.d))
    outliers = uniform_ball(rng, spec.n - n_in, spec.d, spec.R)
    points = np.vstack([inliers, outliers])
    points = points[rng.permutation(spec.n)]
    return Dataset(points, spec.R, {"center": mu, "n_in": n_in, "r_true": spec.r_true})


def heavy_tailed(spec: HeavyTailedSpec, gen: SeededGenerator) -> Dataset:
    """Zero-mean multivariate Student t with identity scale."""
    rng = gen.rng
    z = rng.standard_normal((spec.n, spec.d))
    w = rng.chisquare(spec.nu, spec.n)
    points = z * np.sqrt(spec.nu / w)[:, None]
    radius = 2.0 * float(np.linalg.norm(points, axis=1).max())
    return Dataset(points, radius, {"center": np.zeros(spec.d)})


def f_cdf(x: float, d: float, nu: float) -> float:
    if x <= 0:
        return 0.0
    return float(betainc(d / 2.0, nu / 2.0, d * x / (d * x + nu)))


def f_quantile(d: int, nu: float, gamma: float, tol: float = 1e-9) -> float:
    """The ``gamma``-quantile of the F(d, nu) distribution, by bisection on its CDF."""
    if not 0.0 < gamma < 1.0:
        raise ValueError(f"gamma must lie in (0, 1), got {gamma}")
    lo, hi = 0.0, 1.0
    while f_cdf(hi, d, nu) < gamma:
        hi *= 2.0
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if f_cdf(mid, d, nu) < gamma:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)
