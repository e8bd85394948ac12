"""Phased private SGD on the average-distance objective, its fixed-order variant and a DPGD baseline."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np

from ._kernels import sgd_phase
from .core import Dataset, SeededGenerator, _as_vector, project_ball
from .mechanisms import sample_gaussian_vector


def subgradient(z, x_i) -> np.ndarray:
    """Unit vector from ``x_i`` towards ``z``; zero when they coincide exactly."""
    diff = np.asarray(z, dtype=np.float64) - np.asarray(x_i, dtype=np.float64)
    if not np.any(diff):
        return np.zeros_like(diff)
    return diff / np.linalg.norm(diff)


@dataclass(frozen=True)
class PhaseSchedule:
    K: int
    T: int
    m: float
    eta: float
    rho: float
    delta: float
    n: int
    fixed_order: bool = False

    def steps(self, k: int) -> int:
        return 1 << (self.K - k)

    def step_size(self, k: int) -> float:
        return self.eta / 4.0**k

    def noise(self, k: int) -> float:
        return (2.0 * self.m + 1.0) * self.eta / (3.0**k * math.sqrt(self.rho))

    def domain_radius(self, k: int, d: int, r_hat: float) -> float:
        """Phase 1 searches ``B(x_bar, r_hat)``; later phases a ball shrinking with the phase noise."""
        if k == 1:
            return r_hat
        return 2.0 * self.noise(k) * math.sqrt(d * math.log(4.0 * self.K / self.delta))

    @property
    def phases(self) -> range:
        return range(1, self.K + 1)


def rounded_steps(n: int, requested_T: int) -> tuple:
    """Smallest ``(K, 2**K - 1)`` with ``2**K - 1 >= max(requested_T, n)``."""
    if requested_T < 1 or n < 1:
        raise ValueError("requested_T and n must be positive")
    target = max(requested_T, n)
    K = max(1, math.ceil(math.log2(target + 1)))
    while (1 << K) - 1 < target:
        K += 1
    return K, (1 << K) - 1


def sampled_access_bound(T: int, n: int, delta: float) -> float:
    return 3.0 * (T / n + math.log(8.0 / delta))


def build_schedule(n: int, requested_T: int, eta: float, rho: float, delta: float, fixed_order: bool = False) -> PhaseSchedule:
    if eta <= 0 or rho <= 0:
        raise ValueError("eta and rho must be positive")
    if not 0 < delta < 1:
        raise ValueError("delta must lie in (0, 1)")
    K, T = rounded_steps(n, requested_T)
    m = float(math.ceil(T / n)) if fixed_order else sampled_access_bound(T, n, delta)
    return PhaseSchedule(K, T, m, eta, rho, delta, n, fixed_order)


def optimal_eta(r_hat: float, n: int, d: int, T: int, rho: float, delta: float) -> float:
    """Minimizer of ``A/eta + B*eta`` from the worst-case utility bound.

    Very conservative in practice; see :func:`practical_eta`.
    """
    K = int(round(math.log2(T + 1)))
    A = r_hat**2 / (16.0 * T)
    B = 19.0 + 1314.0 * T * d * math.log(8.0 * K / delta) ** 4 / (rho * n**2)
    return math.sqrt(A / B)


def practical_eta(r_hat: float, T: int, multiplier: float = 1.0) -> float:
    """``multiplier * r_hat / sqrt(T)``."""
    return multiplier * r_hat / math.sqrt(T)


@dataclass
class SgdResult:
    x_hat: np.ndarray
    per_phase_averages: List[np.ndarray]
    passes: float
    phase_outputs: List[np.ndarray] = field(default_factory=list)
    phase_steps: List[int] = field(default_factory=list)


def _phase_indices(schedule: PhaseSchedule, k: int, gen: SeededGenerator, order: Optional[np.ndarray], offset: int):
    steps = schedule.steps(k)
    if order is None:
        return gen.spawn(k).spawn(0).rng.integers(0, schedule.n, steps)
    return order[(offset + np.arange(steps)) % schedule.n]


def _run(dataset, x_bar, r_hat, schedule, gen, order, debug):
    d = dataset.d
    start = _as_vector(x_bar, d).copy()
    averages, outputs, steps = [], [], []
    offset = 0
    x_hat = start
    for k in schedule.phases:
        idx = _phase_indices(schedule, k, gen, order, offset)
        offset += idx.shape[0]
        radius = schedule.domain_radius(k, d, r_hat)
        avg, _, _ = sgd_phase(dataset.points, idx, x_hat, x_hat, radius, schedule.step_size(k), False)
        x_hat = avg + sample_gaussian_vector(schedule.noise(k), d, gen.spawn(k).spawn(1))
        if debug:
            averages.append(avg)
        outputs.append(x_hat.copy())
        steps.append(offset)
    return SgdResult(x_hat, averages, schedule.T / dataset.n, outputs, steps)


def stable_dpsgd(dataset: Dataset, x_bar, r_hat: float, schedule: PhaseSchedule, gen: SeededGenerator, debug: bool = False) -> SgdResult:
    """Phased projected SGD with uniform index sampling and noised phase averages.

    Phase ``k`` draws indices from ``gen.spawn(k).spawn(0)`` and its output
    noise from ``gen.spawn(k).spawn(1)``. Pre-noise averages are kept only
    when ``debug`` is set.
    """
    if schedule.fixed_order:
        raise ValueError("schedule was built for the fixed-order variant")
    return _run(dataset, x_bar, r_hat, schedule, gen, None, debug)


def fixed_order_dpsgd(dataset: Dataset, x_bar, r_hat: float, schedule: PhaseSchedule, gen: SeededGenerator, debug: bool = False) -> SgdResult:
    """Same phases, but steps walk one shuffle of the dataset cyclically.

    The shuffle comes from ``gen.spawn(0)`` and is shared by all phases, so
    no index is visited more than ``ceil(T / n)`` times.
    """
    if not schedule.fixed_order:
        raise ValueError("schedule was built for the sampled variant")
    order = gen.spawn(0).rng.permutation(dataset.n)
    return _run(dataset, x_bar, r_hat, schedule, gen, order, debug)


def full_gradient(points: np.ndarray, x: np.ndarray) -> np.ndarray:
    diff = x - points
    norms = np.sqrt(np.einsum("ij,ij->i", diff, diff))
    away = norms > 0
    return (diff[away] / norms[away, None]).sum(axis=0) / points.shape[0]


def dpgd_noise(n: int, T: int, rho: float) -> float:
    """Per-step Gaussian scale making ``T`` releases of a ``2/n``-sensitive gradient ``rho``-CDP."""
    return (2.0 / n) * math.sqrt(T / (2.0 * rho))


def constant_dpgd_eta(r_hat: float, d: int, n: int, rho: float) -> float:
    return 2.0 * r_hat * math.sqrt(d / (6.0 * rho * n**2))


def dpgd_baseline(dataset: Dataset, x_bar, r_hat: float, rho: float, T: int, eta: float, gen: SeededGenerator) -> np.ndarray:
    """Noisy projected full-gradient descent on ``B(x_bar, r_hat)``; returns the average iterate."""
    if T < 1:
        raise ValueError("T must be positive")
    center = _as_vector(x_bar, dataset.d)
    sigma = dpgd_noise(dataset.n, T, rho)
    x = center.copy()
    total = np.zeros(dataset.d)
    for t in range(T):
        noise = sample_gaussian_vector(sigma, dataset.d, gen.spawn(t))
        x = project_ball(x - eta * (full_gradient(dataset.points, x) + noise), center, r_hat)
        total += x
    return total / T


@dataclass
class PhaseDivergence:
    phase: int
    count: int
    max_iterate_gap: float
    average_gap: float
    bound: float

    @property
    def ok(self) -> bool:
        return self.max_iterate_gap <= self.bound * (1 + 1e-9) + 1e-12 and self.average_gap <= self.bound * (1 + 1e-9) + 1e-12


def coupled_sensitivity_audit(
    dataset: Dataset,
    differing_index: int,
    replacement,
    schedule: PhaseSchedule,
    gen: SeededGenerator,
    x_bar=None,
    r_hat: float = 1.0,
) -> List[PhaseDivergence]:
    """Run the sampled variant on a dataset and its neighbour with all randomness shared.

    ``differing_index`` is 0-based. Each phase starts both copies from the
    original run's previous output, so the reported gap is that phase's own
    sensitivity; the bound is ``(2c + 1) * eta_k`` with ``c`` the number of
    times the differing index was drawn in the phase.
    """
    if not 0 <= differing_index < dataset.n:
        raise ValueError("differing_index out of range")
    other = dataset.replace_point(differing_index, replacement)
    d = dataset.d
    x_hat = dataset.points.mean(axis=0) if x_bar is None else _as_vector(x_bar, d)
    report = []
    for k in schedule.phases:
        idx = _phase_indices(schedule, k, gen, None, 0)
        radius = schedule.domain_radius(k, d, r_hat)
        eta_k = schedule.step_size(k)
        avg, z_end, traj = sgd_phase(dataset.points, idx, x_hat, x_hat, radius, eta_k, True)
        avg2, z_end2, traj2 = sgd_phase(other.points, idx, x_hat, x_hat, radius, eta_k, True)
        gaps = np.linalg.norm(traj - traj2, axis=1)
        gap = max(float(gaps.max()), float(np.linalg.norm(z_end - z_end2)))
        c = int(np.count_nonzero(idx == differing_index))
        report.append(PhaseDivergence(k, c, gap, float(np.linalg.norm(avg - avg2)), (2 * c + 1) * eta_k))
        x_hat = avg + sample_gaussian_vector(schedule.noise(k), d, gen.spawn(k).spawn(1))
    return report


def step_contraction_gap(u, v, a, b, eta):
    """Return ``(after, bound)`` for ``after = ||(a - eta) u - (b - eta) v||`` and ``bound = max(||a u - b v||, 3 eta)``.

    Accepts batches: ``u, v`` of shape ``(N, d)`` and ``a, b, eta`` of shape ``(N,)``.
    """
    u, v = np.atleast_2d(u), np.atleast_2d(v)
    a, b, eta = (np.atleast_1d(np.asarray(t, dtype=np.float64)) for t in (a, b, eta))
    after = np.linalg.norm((a - eta)[:, None] * u - (b - eta)[:, None] * v, axis=1)
    before = np.linalg.norm(a[:, None] * u - b[:, None] * v, axis=1)
    return after, np.maximum(before, 3.0 * eta)


def step_contraction_violations(count: int, d: int, gen: SeededGenerator, batch: int = 100_000) -> int:
    """Number of random tuples breaking the one-step contraction inequality.

    Magnitudes ``a, b`` and ``eta`` are drawn log-uniformly over six decades so
    both the ``a, b >> eta`` and ``a, b <= eta`` regimes are exercised.
    """
    rng = gen.rng
    bad = 0
    done = 0
    while done < count:
        size = min(batch, count - done)
        u = rng.standard_normal((size, d))
        v = rng.standard_normal((size, d))
        u /= np.linalg.norm(u, axis=1, keepdims=True)
        v /= np.linalg.norm(v, axis=1, keepdims=True)
        a, b, eta = 10.0 ** rng.uniform(-3, 3, (3, size))
        after, bound = step_contraction_gap(u, v, a, b, eta)
        bad += int(np.count_nonzero(after > bound * (1 + 1e-12)))
        done += size
    return bad
