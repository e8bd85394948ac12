"""Noise samplers, the AboveThreshold sparse-vector mechanism and CDP conversion."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, List, Optional

import numpy as np

from .core import CdpBudget, PrivacyParams, SeededGenerator


def sample_laplace(scale: float, gen: SeededGenerator, size=None):
    """Draw from Lap(scale) by inverting the CDF of one uniform per sample."""
    if scale < 0:
        raise ValueError("scale must be nonnegative")
    if scale == 0:
        return 0.0 if size is None else np.zeros(size)
    u = gen.rng.random(size) - 0.5
    # 1 - 2|u| lies in (0, 1] because random() never returns 1.0
    x = -scale * np.sign(u) * np.log1p(-2.0 * np.abs(u))
    return float(x) if size is None else x


def bounded_laplace_with_proposals(scale: float, bound: float, gen: SeededGenerator, size: int):
    """Rejection-sample ``size`` bounded-Laplace draws and report how many proposals it took."""
    if scale <= 0 or bound <= 0:
        return np.zeros(size), size
    out = np.empty(size)
    filled = 0
    proposals = 0
    accept = -math.expm1(-bound / scale)
    while filled < size:
        want = size - filled
        batch = int(want / max(accept, 1e-3) * 1.05) + 16
        draws = sample_laplace(scale, gen, batch)
        ok = np.abs(draws) <= bound
        kept = draws[ok]
        if kept.shape[0] >= want:
            # only charge proposals up to and including the last accepted one used
            last = np.flatnonzero(ok)[want - 1]
            proposals += last + 1
            out[filled:] = kept[:want]
            filled = size
        else:
            proposals += batch
            out[filled:filled + kept.shape[0]] = kept
            filled += kept.shape[0]
    return out, proposals


def sample_bounded_laplace(scale: float, bound: float, gen: SeededGenerator, size=None):
    """Draw from Lap(scale) conditioned on ``|X| <= bound``."""
    if scale < 0 or bound < 0:
        raise ValueError("scale and bound must be nonnegative")
    if scale == 0 or bound == 0:
        return 0.0 if size is None else np.zeros(size)
    if size is None:
        while True:
            x = sample_laplace(scale, gen)
            if abs(x) <= bound:
                return x
    return bounded_laplace_with_proposals(scale, bound, gen, int(np.prod(size)))[0].reshape(size)


def sample_gaussian_vector(sigma: float, d: int, gen: SeededGenerator) -> np.ndarray:
    if sigma < 0:
        raise ValueError("sigma must be nonnegative")
    if sigma == 0:
        return np.zeros(d)
    return sigma * gen.rng.standard_normal(d)


@dataclass
class AboveThresholdReport:
    """Outcome of one sparse-vector run.

    ``halt_index`` is 1-based; ``T + 1`` means no query fired. ``answers``
    holds one flag per consumed query and only the last may be True.
    """

    halt_index: int
    answers: List[bool] = field(default_factory=list)

    @property
    def fired(self) -> bool:
        return bool(self.answers) and self.answers[-1]


def above_threshold(
    queries: Iterable[float],
    sensitivity: float,
    threshold: float,
    epsilon: float,
    gen: SeededGenerator,
) -> AboveThresholdReport:
    """Report the first query whose noisy value clears a noisy threshold.

    ``queries`` is consumed lazily: a generator is advanced only until the
    mechanism halts, so queries past the halting point are never evaluated.
    Threshold noise is Lap(2Δ/ε) and each query gets fresh Lap(4Δ/ε).
    """
    if sensitivity <= 0 or epsilon <= 0:
        raise ValueError("sensitivity and epsilon must be positive")
    noisy_threshold = threshold + sample_laplace(2.0 * sensitivity / epsilon, gen)
    answers = []
    for q in queries:
        nu = sample_laplace(4.0 * sensitivity / epsilon, gen)
        if q + nu >= noisy_threshold:
            answers.append(True)
            return AboveThresholdReport(len(answers), answers)
        answers.append(False)
    return AboveThresholdReport(len(answers) + 1, answers)


def above_threshold_accuracy(sensitivity: float, epsilon: float, T: int, gamma: float) -> float:
    """Accuracy radius 8Δ ln(2T/γ)/ε of AboveThreshold at failure probability γ."""
    return 8.0 * sensitivity * math.log(2.0 * T / gamma) / epsilon


def rho_from_eps_delta(params: PrivacyParams) -> CdpBudget:
    """Largest ρ with 1/ρ >= 4 ln(2/δ)/ε² + 2/ε."""
    eps, delta = params.epsilon, params.delta
    if eps <= 0:
        raise ValueError("epsilon must be positive to convert to a CDP budget")
    return CdpBudget(1.0 / (4.0 * math.log(2.0 / delta) / eps**2 + 2.0 / eps))


def gaussian_cdp(sensitivity: float, sigma: float) -> float:
    """CDP cost Δ²/(2σ²) of one Gaussian release."""
    return sensitivity**2 / (2.0 * sigma**2)


def gaussian_norm_bound(sigma: float, d: int, delta: float, constant: float = 2.0) -> float:
    """High-probability bound ``constant * σ * sqrt(d ln(4/δ))`` on a N(0, σ²I_d) norm."""
    return constant * sigma * math.sqrt(d * math.log(4.0 / delta))


def rho_check(rho: float, params: PrivacyParams) -> Optional[str]:
    """Return None if ρ meets the (ε, δ) sufficient condition, else a message."""
    need = 4.0 * math.log(2.0 / params.delta) / params.epsilon**2 + 2.0 / params.epsilon
    if 1.0 / rho >= need * (1 - 1e-12):
        return None
    return f"1/rho = {1.0 / rho:.6g} < {need:.6g} required for {params}"
