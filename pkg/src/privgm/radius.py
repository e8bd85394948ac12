"""Private quantile-radius estimation over a doubling grid of candidate radii."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from ._kernels import count_neighbors, count_subsample_hits, stream_subsample_hits
from .core import Dataset, PrivacyParams, SeededGenerator
from .mechanisms import above_threshold

FAST_THRESHOLD_FRACTION = 0.775
FAST_SENSITIVITY = 3.0
EXACT_SENSITIVITY = 2.0
EXACT_THRESHOLD_FRACTION = 0.75


@dataclass
class RadiusEstimate:
    r_hat: float
    halted_at: int
    r: float
    R: float
    distance_evaluations: int = 0

    @property
    def fell_back(self) -> bool:
        return self.halted_at > self.grid_size

    @property
    def grid_size(self) -> int:
        return grid_size(self.r, self.R)


def grid_size(r: float, R: float) -> int:
    """Number of doubling steps ``ceil(log2(R / r))``, at least one."""
    return max(1, math.ceil(math.log2(R / r) - 1e-12))


def subsample_size(T: int, delta: float) -> int:
    return math.ceil(3.0 * math.log(4.0 * T / delta))


def _check_inputs(dataset: Dataset, r: float, R: float, params: PrivacyParams):
    if not 0 < r <= R:
        raise ValueError(f"need 0 < r <= R, got r={r}, R={R}")
    if params.epsilon <= 0:
        raise ValueError("epsilon must be positive")
    if dataset.n < 1:
        raise ValueError("dataset is empty")


def subsampled_query(points: np.ndarray, idx: np.ndarray, radius: float) -> float:
    """Average over rows of ``(n/k) * hits``, i.e. total hits divided by ``k``."""
    return float(count_subsample_hits(points, idx, radius).sum()) / idx.shape[1]


def fast_radius(dataset: Dataset, r: float, R: float, params: PrivacyParams, gen: SeededGenerator) -> RadiusEstimate:
    """Estimate a constant-factor quantile radius from ``k`` sampled neighbours per point.

    Step ``t`` tests radius ``r * 2**(t-1)`` and uses child stream ``gen.spawn(t)``
    for its subsample; the sparse-vector noise comes from ``gen.spawn(0)``.
    """
    _check_inputs(dataset, r, R, params)
    n = dataset.n
    T = grid_size(r, R)
    k = subsample_size(T, params.delta)
    needed = 2400.0 * math.log(4.0 * T / params.delta) / params.epsilon
    if n < needed:
        warnings.warn(
            f"n = {n} is below {needed:.0f}; the radius guarantee is not certified",
            RuntimeWarning,
            stacklevel=2,
        )
    counter = [0]

    def queries():
        for t in range(1, T + 1):
            hits = stream_subsample_hits(dataset.points, r * 2.0 ** (t - 1), k, gen.spawn(t).seed)
            counter[0] += n * k
            yield float(hits.sum()) / k

    report = above_threshold(queries(), FAST_SENSITIVITY, FAST_THRESHOLD_FRACTION * n, params.epsilon, gen.spawn(0))
    return _finish(report.halt_index, T, r, R, counter[0])


def exact_radius_baseline(
    dataset: Dataset,
    r: float,
    R: float,
    params: PrivacyParams,
    gen: SeededGenerator,
    threshold_fraction: float = EXACT_THRESHOLD_FRACTION,
) -> RadiusEstimate:
    """Same doubling search with exact all-pairs neighbour counts (sensitivity 2)."""
    _check_inputs(dataset, r, R, params)
    n = dataset.n
    T = grid_size(r, R)
    counter = [0]

    def queries():
        for t in range(1, T + 1):
            counts = count_neighbors(dataset.points, r * 2.0 ** (t - 1))
            counter[0] += n * n
            yield float(counts.sum()) / n

    report = above_threshold(queries(), EXACT_SENSITIVITY, threshold_fraction * n, params.epsilon, gen.spawn(0))
    return _finish(report.halt_index, T, r, R, counter[0])


def _finish(halt, T, r, R, evaluations):
    r_hat = r * 2.0 ** (halt - 1) if halt <= T else R
    return RadiusEstimate(r_hat, halt, r, R, evaluations)
