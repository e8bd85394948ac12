"""Non-private geometric-median solver, the normalized error metric and the robustness predicate."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import Dataset, _as_vector, objective


@dataclass
class OracleSolution:
    x_star: np.ndarray
    objective_value: float
    iterations: int
    converged: bool


def _min_subgradient_norm(points: np.ndarray, x: np.ndarray) -> float:
    """Norm of the smallest element of the subdifferential of the average distance at ``x``.

    Coincident points contribute a unit ball each, so they can cancel up to
    ``coincident / n`` of the remaining gradient.
    """
    diff = x - points
    norms = np.sqrt(np.einsum("ij,ij->i", diff, diff))
    away = norms > 0
    n = points.shape[0]
    g = (diff[away] / norms[away, None]).sum(axis=0) / n
    return max(0.0, float(np.linalg.norm(g)) - (n - int(away.sum())) / n)


def _smoothed(points, x, mu):
    diff = x - points
    return float(np.sqrt(np.einsum("ij,ij->i", diff, diff) + mu * mu).mean())


def geometric_median(dataset: Dataset, tolerance: float = 1e-6, max_iterations: int = 100_000) -> OracleSolution:
    """Minimize the average Euclidean distance with smoothed Weiszfeld iterations.

    Stops once the minimum-norm subgradient is at most ``tolerance / 3``. Since
    ``||x - x*|| <= f(x) + f(x*)``, that certificate gives
    ``f(x) <= (1 + tolerance) f(x*)``. Iterates are snapped to the closest data
    point whenever the certificate holds there, which covers medians sitting on
    a data point where plain Weiszfeld only converges sublinearly.

    Args:
        dataset: points to summarize.
        tolerance: relative suboptimality target.
        max_iterations: iteration cap; ``converged`` is False if it is hit.
    """
    if tolerance <= 0:
        raise ValueError("tolerance must be positive")
    points = dataset.points
    n = dataset.n
    if n == 1:
        x = points[0].copy()
        return OracleSolution(x, 0.0, 0, True)

    scale = dataset.nominal_radius or float(np.abs(points).max()) or 1.0
    mu = 1e-9 * scale
    target = tolerance / 3.0

    x = np.median(points, axis=0)
    current = _smoothed(points, x, mu)
    converged = False
    it = 0
    for it in range(1, max_iterations + 1):
        if _min_subgradient_norm(points, x) <= target:
            converged = True
            break
        diff = x - points
        dist = np.sqrt(np.einsum("ij,ij->i", diff, diff))
        nearest = int(np.argmin(dist))
        if dist[nearest] > 0 and dist[nearest] < 1e-3 * scale:
            if _min_subgradient_norm(points, points[nearest]) <= target:
                x = points[nearest].copy()
                converged = True
                break
        w = 1.0 / np.sqrt(dist * dist + mu * mu)
        candidate = (w[:, None] * points).sum(axis=0) / w.sum()
        value = _smoothed(points, candidate, mu)
        # Weiszfeld never increases the smoothed objective in exact arithmetic; only
        # fall back when the increase is larger than rounding noise
        if value > current * (1 + 1e-12):
            # halving-step subgradient fallback
            g = (diff / np.sqrt(dist * dist + mu * mu)[:, None]).mean(axis=0)
            step = current
            while step > 1e-18 * scale:
                candidate = x - step * g
                value = _smoothed(points, candidate, mu)
                if value <= current:
                    break
                step *= 0.5
            else:
                break
        x, current = candidate, value
    return OracleSolution(x, objective(dataset, x), it, converged)


def normalized_excess(dataset: Dataset, x, baseline: OracleSolution, scale: float) -> float:
    """``(f(x) - f(x*)) / scale``."""
    if scale <= 0:
        raise ValueError("scale must be positive")
    return (objective(dataset, x) - baseline.objective_value) / scale


def check_median_robustness(dataset: Dataset, x, excluded=(), x_star=None) -> bool:
    """Check ``||x* - x|| <= (2n - 2|S|)/(n - 2|S|) * max_{i not in S} ||x_i - x||``.

    ``x_star`` defaults to a tight-tolerance oracle solution.
    """
    excluded = sorted(set(int(i) for i in excluded))
    n = dataset.n
    s = len(excluded)
    if 2 * s >= n:
        raise ValueError(f"|S| = {s} must be smaller than n/2 = {n / 2}")
    x = _as_vector(x, dataset.d)
    if x_star is None:
        x_star = geometric_median(dataset, tolerance=1e-10).x_star
    keep = np.ones(n, dtype=bool)
    keep[excluded] = False
    spread = float(np.linalg.norm(dataset.points[keep] - x, axis=1).max())
    lhs = float(np.linalg.norm(np.asarray(x_star) - x))
    bound = (2 * n - 2 * s) / (n - 2 * s) * spread
    # allow for the oracle's own error
    return lhs <= bound * (1 + 1e-9) + 1e-9
