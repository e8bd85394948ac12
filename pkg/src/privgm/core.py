"""Domain types, the geometric-median objective, quantile radii and ball projection."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Union

import numpy as np

_MASK64 = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15


def _splitmix64(x: int) -> int:
    x = (x + _GOLDEN) & _MASK64
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & _MASK64
    return x ^ (x >> 31)


class SeededGenerator:
    """Deterministic random stream built from a 64-bit seed.

    Children are derived from the parent *seed* and an index only, never from
    the parent's consumed state, so ``gen.spawn(3)`` is the same stream no
    matter how many draws ``gen`` has already made. The child seed is
    ``splitmix64(seed ^ splitmix64(index))``.
    """

    def __init__(self, seed: int):
        self.seed = int(seed) & _MASK64
        self._rng = None

    @property
    def rng(self) -> np.random.Generator:
        """PCG64 stream for this seed, created on first use."""
        if self._rng is None:
            self._rng = np.random.Generator(np.random.PCG64(self.seed))
        return self._rng

    def spawn(self, index: int) -> "SeededGenerator":
        if index < 0:
            raise ValueError("child index must be nonnegative")
        return SeededGenerator(_splitmix64(self.seed ^ _splitmix64(int(index))))

    def __repr__(self) -> str:
        return f"SeededGenerator(seed={self.seed})"


@dataclass(frozen=True)
class PrivacyParams:
    epsilon: float
    delta: float

    def __post_init__(self):
        if not 0.0 <= self.epsilon <= 1.0:
            raise ValueError(f"epsilon must lie in [0, 1], got {self.epsilon}")
        if not 0.0 < self.delta < 1.0:
            raise ValueError(f"delta must lie in (0, 1), got {self.delta}")

    def split(self, fraction: float = 0.5) -> "PrivacyParams":
        return PrivacyParams(self.epsilon * fraction, self.delta * fraction)


@dataclass(frozen=True)
class CdpBudget:
    rho: float

    def __post_init__(self):
        if not self.rho > 0:
            raise ValueError(f"rho must be positive, got {self.rho}")


@dataclass
class Dataset:
    """An ``(n, d)`` point array plus the advisory enclosing radius ``R``.

    ``nominal_radius`` is only used to size radius search grids; generated
    points may sit slightly outside it.
    """

    points: np.ndarray
    nominal_radius: float = 0.0
    metadata: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=np.float64)
        if pts.ndim == 1:
            pts = pts[:, None]
        if pts.ndim != 2 or pts.shape[0] < 1 or pts.shape[1] < 1:
            raise ValueError(f"points must be a nonempty (n, d) array, got shape {pts.shape}")
        if not np.all(np.isfinite(pts)):
            raise ValueError("points must be finite")
        if self.nominal_radius < 0:
            raise ValueError("nominal_radius must be nonnegative")
        self.points = np.ascontiguousarray(pts)
        self.nominal_radius = float(self.nominal_radius)

    @property
    def n(self) -> int:
        return self.points.shape[0]

    @property
    def d(self) -> int:
        return self.points.shape[1]

    def replace_point(self, index: int, point) -> "Dataset":
        """Neighboring dataset with row ``index`` swapped for ``point``."""
        pts = self.points.copy()
        pts[index] = _as_vector(point, self.d)
        return Dataset(pts, self.nominal_radius)


def _as_vector(x, d: int) -> np.ndarray:
    v = np.asarray(x, dtype=np.float64).reshape(-1)
    if v.shape[0] != d:
        raise ValueError(f"expected a vector of dimension {d}, got {v.shape[0]}")
    return v


def distances(dataset: Dataset, x) -> np.ndarray:
    x = _as_vector(x, dataset.d)
    return np.linalg.norm(dataset.points - x, axis=1)


def objective(dataset: Dataset, x) -> float:
    """Average Euclidean distance from ``x`` to the points."""
    return float(distances(dataset, x).mean())


def quantile_radius(dataset: Dataset, center, tau: float) -> float:
    """Smallest ``r`` such that the ball ``B(center, r)`` holds ``ceil(tau * n)`` points."""
    if not 0.0 <= tau <= 1.0:
        raise ValueError(f"tau must lie in [0, 1], got {tau}")
    count = quantile_count(dataset.n, tau)
    if count == 0:
        return 0.0
    dist = distances(dataset, center)
    return float(np.partition(dist, count - 1)[count - 1])


def quantile_count(n: int, tau: float) -> int:
    # tolerate representation error such as 0.9 * 1000 = 900.0000000000001
    return min(n, max(0, math.ceil(tau * n - 1e-9)))


def project_ball(x, center, radius: float) -> np.ndarray:
    if radius < 0:
        raise ValueError("radius must be nonnegative")
    x = np.asarray(x, dtype=np.float64)
    center = np.asarray(center, dtype=np.float64)
    offset = x - center
    norm = float(np.linalg.norm(offset))
    if norm <= radius:
        return x.copy()
    return center + (radius / norm) * offset


PathLike = Union[str, Path]


def load_dataset(path: PathLike) -> Dataset:
    """Read whitespace-separated coordinates, one point per line.

    An optional ``# n=<n> d=<d> R=<R>`` header supplies the nominal radius and
    is checked against the body.
    """
    header = {}
    rows = []
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            if line.startswith("#"):
                for token in line[1:].split():
                    if "=" in token:
                        key, value = token.split("=", 1)
                        header[key.strip()] = value.strip()
                continue
            rows.append([float(v) for v in line.split()])
    if not rows:
        raise ValueError(f"{path}: no points")
    widths = {len(r) for r in rows}
    if len(widths) != 1:
        raise ValueError(f"{path}: rows have inconsistent dimensions {sorted(widths)}")
    points = np.array(rows, dtype=np.float64)
    if "n" in header and int(header["n"]) != points.shape[0]:
        raise ValueError(f"{path}: header says n={header['n']} but found {points.shape[0]} rows")
    if "d" in header and int(header["d"]) != points.shape[1]:
        raise ValueError(f"{path}: header says d={header['d']} but rows have {points.shape[1]} coordinates")
    radius = float(header.get("R", 0.0))
    if "R" not in header:
        radius = float(np.linalg.norm(points, axis=1).max())
    return Dataset(points, radius)


def save_dataset(dataset: Dataset, path: PathLike) -> None:
    with open(path, "w") as fh:
        fh.write(f"# n={dataset.n} d={dataset.d} R={dataset.nominal_radius!r}\n")
        np.savetxt(fh, dataset.points, fmt="%.17g")
