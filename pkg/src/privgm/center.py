"""Private centerpoint from a noisy weighted average of well-connected points."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ._kernels import count_subsample_hits, stream_subsample_hits
from .core import Dataset, PrivacyParams, SeededGenerator
from .mechanisms import sample_bounded_laplace, sample_gaussian_vector

MIN_POINTS = 20
GATE_FRACTION = 0.55


@dataclass
class CenterEstimate:
    x_hat: np.ndarray
    gated: bool
    Z: float


@dataclass(frozen=True)
class CenterCalibration:
    k: int
    noise_scale: float
    margin: float
    sigma_over_r: float

    def sigma(self, r_hat: float) -> float:
        return self.sigma_over_r * r_hat


def calibrate(n: int, params: PrivacyParams, constants_scale: float = 1.0) -> CenterCalibration:
    """Subsample size, gate noise and margin, and Gaussian scale per unit radius.

    ``constants_scale`` multiplies all of them; any value other than 1 gives
    up the privacy and utility guarantees and exists for ablations only.
    """
    eps, delta = params.epsilon, params.delta
    if eps <= 0:
        raise ValueError("epsilon must be positive")
    k = math.ceil(constants_scale * 600.0 * math.log(18.0 * n / delta))
    noise_scale = constants_scale * 24.0 / eps
    margin = noise_scale * math.log(24.0 / delta)
    sigma_over_r = constants_scale * 1600.0 / (n * eps) * math.sqrt(math.log(12.0 / delta))
    return CenterCalibration(max(k, 1), noise_scale, margin, sigma_over_r)


def interpolated_weights(hits: np.ndarray, k: int) -> np.ndarray:
    """``clip((f - k/2) / (k/4), 0, 1)`` applied to subsampled neighbour counts."""
    return np.clip((hits - 0.5 * k) / (0.25 * k), 0.0, 1.0)


def weights_from_indices(points: np.ndarray, idx: np.ndarray, r_hat: float) -> np.ndarray:
    """Weights computed from explicit subsample indices, for coupled comparisons."""
    return interpolated_weights(count_subsample_hits(points, idx, 2.0 * r_hat), idx.shape[1])


def fast_center(
    dataset: Dataset,
    r_hat: float,
    params: PrivacyParams,
    gen: SeededGenerator,
    constants_scale: float = 1.0,
) -> CenterEstimate:
    """Noisy weighted average of points with many neighbours within ``2 r_hat``.

    Returns the zero vector with ``gated=True`` when the noisy total weight is
    too small. Streams: ``gen.spawn(0)`` subsamples, ``gen.spawn(1)`` gate
    noise, ``gen.spawn(2)`` output noise.
    """
    n = dataset.n
    if n < MIN_POINTS:
        raise ValueError(f"need at least {MIN_POINTS} points, got {n}")
    if r_hat <= 0:
        raise ValueError("r_hat must be positive")
    cal = calibrate(n, params, constants_scale)
    hits = stream_subsample_hits(dataset.points, 2.0 * r_hat, cal.k, gen.spawn(0).seed)
    p = interpolated_weights(hits, cal.k)
    Z = float(p.sum())
    xi = sample_bounded_laplace(cal.noise_scale, cal.margin, gen.spawn(1))
    noisy = Z + xi - cal.margin
    assert noisy <= Z + 1e-9 * max(1.0, Z), "bounded noise exceeded its margin"
    if noisy <= GATE_FRACTION * n:
        return CenterEstimate(np.zeros(dataset.d), True, Z)
    mean = p @ dataset.points / Z
    noise = sample_gaussian_vector(cal.sigma(r_hat), dataset.d, gen.spawn(2))
    return CenterEstimate(mean + noise, False, Z)
