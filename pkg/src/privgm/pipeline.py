"""Three-stage private geometric median: radius, then center, then phased SGD."""

from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass, field
from typing import List, Optional, Tuple

import numpy as np

from .boost import build_schedule, fixed_order_dpsgd, optimal_eta, rounded_steps, stable_dpsgd, SgdResult
from .center import calibrate, fast_center
from .core import Dataset, PrivacyParams, SeededGenerator
from .mechanisms import rho_check, rho_from_eps_delta
from .radius import RadiusEstimate, fast_radius

log = logging.getLogger(__name__)


class BudgetExceeded(RuntimeError):
    pass


@dataclass
class BudgetLedger:
    """Basic-composition accountant that refuses any debit past the grant."""

    grant: PrivacyParams
    entries: List[Tuple[str, float, float]] = field(default_factory=list)

    @property
    def spent(self) -> Tuple[float, float]:
        return (sum(e[1] for e in self.entries), sum(e[2] for e in self.entries))

    def debit(self, stage: str, epsilon: float, delta: float) -> None:
        eps, dlt = self.spent
        slack = 1e-12
        if eps + epsilon > self.grant.epsilon * (1 + slack) or dlt + delta > self.grant.delta * (1 + slack):
            raise BudgetExceeded(
                f"{stage} needs ({epsilon:g}, {delta:g}) but only "
                f"({self.grant.epsilon - eps:g}, {self.grant.delta - dlt:g}) remains"
            )
        self.entries.append((stage, epsilon, delta))


@dataclass
class WarmStart:
    x_bar: np.ndarray
    r_hat: float
    gated: bool

    def __post_init__(self):
        if not self.r_hat > 0:
            raise ValueError("r_hat must be positive")
        if self.gated and np.any(self.x_bar):
            raise ValueError("a gated warm start must sit at the origin")


@dataclass
class PipelineResult:
    x_hat: np.ndarray
    radius: RadiusEstimate
    warm_start: WarmStart
    domain_radius: float
    rho: float
    eta: float
    sgd: SgdResult
    ledger: BudgetLedger


def boosting_rho(params: PrivacyParams) -> float:
    """CDP budget for the boosting stage, which is granted ``(eps/2, delta/2)``.

    Uses ``eps^2 / (32 ln(4/delta))`` and falls back to the largest admissible
    value if that ever fails the conversion condition.
    """
    rho = params.epsilon**2 / (32.0 * math.log(4.0 / params.delta))
    half = params.split(0.5)
    problem = rho_check(rho, half)
    if problem is not None:
        log.warning("boosting rho fails the conversion condition (%s); using the conversion's own rho", problem)
        rho = rho_from_eps_delta(half).rho
    return rho


def warm_start_radius(r_hat: float, n: int, d: int, center_params: PrivacyParams, constants_scale: float = 1.0) -> float:
    """Radius around the center estimate that holds the true median with high probability.

    The weighted average lies within ``3 r_hat`` of the median and the
    Gaussian noise adds at most ``3 sigma sqrt(d ln(4/delta))``.
    """
    sigma = calibrate(n, center_params, constants_scale).sigma(r_hat)
    return 3.0 * r_hat + 3.0 * sigma * math.sqrt(d * math.log(4.0 / center_params.delta))


def run_pipeline(
    dataset: Dataset,
    r: float,
    R: float,
    params: PrivacyParams,
    sgd_T: int,
    gen: SeededGenerator,
    eta: Optional[float] = None,
    fixed_order: bool = False,
) -> PipelineResult:
    """Full pipeline with every intermediate kept for inspection.

    Budget split: radius ``(eps/4, delta/4)``, center ``(eps/4, delta/4)``,
    boosting ``(eps/2, delta/2)``. Streams: ``gen.spawn(0..2)`` per stage.
    ``eta`` defaults to the step minimizing the worst-case utility bound.
    """
    if params.epsilon <= 0:
        raise ValueError("epsilon must be positive")
    ledger = BudgetLedger(params)
    quarter = params.split(0.25)
    half = params.split(0.5)

    ledger.debit("radius", quarter.epsilon, quarter.delta)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        radius = fast_radius(dataset, r, R, quarter, gen.spawn(0))

    ledger.debit("center", quarter.epsilon, quarter.delta)
    center = fast_center(dataset, radius.r_hat, quarter, gen.spawn(1))
    if center.gated:
        warnings.warn("center stage was gated; starting from the origin with the full radius", RuntimeWarning, stacklevel=2)
        domain = R
    else:
        domain = warm_start_radius(radius.r_hat, dataset.n, dataset.d, quarter)
    warm = WarmStart(center.x_hat, radius.r_hat, center.gated)

    rho = boosting_rho(params)
    ledger.debit("boosting", half.epsilon, half.delta)
    _, T = rounded_steps(dataset.n, sgd_T)
    if eta is None:
        eta = optimal_eta(domain, dataset.n, dataset.d, T, rho, half.delta)
    schedule = build_schedule(dataset.n, sgd_T, eta, rho, half.delta, fixed_order=fixed_order)
    runner = fixed_order_dpsgd if fixed_order else stable_dpsgd
    sgd = runner(dataset, warm.x_bar, domain, schedule, gen.spawn(2))
    return PipelineResult(sgd.x_hat, radius, warm, domain, rho, eta, sgd, ledger)


def private_geometric_median(
    dataset: Dataset,
    r: float,
    R: float,
    params: PrivacyParams,
    sgd_T: int,
    gen: SeededGenerator,
    eta: Optional[float] = None,
) -> np.ndarray:
    """Private approximate geometric median under ``(eps, delta)``-DP.

    The caller is responsible for ``r`` not exceeding four times the 0.9
    quantile radius around the median; this cannot be checked privately.
    """
    return run_pipeline(dataset, r, R, params, sgd_T, gen, eta).x_hat
