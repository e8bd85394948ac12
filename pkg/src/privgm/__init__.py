"""Differentially private geometric median estimation."""

from .boost import (
    PhaseSchedule,
    SgdResult,
    build_schedule,
    coupled_sensitivity_audit,
    dpgd_baseline,
    fixed_order_dpsgd,
    optimal_eta,
    practical_eta,
    stable_dpsgd,
    subgradient,
)
from .center import CenterEstimate, fast_center
from .core import (
    CdpBudget,
    Dataset,
    PrivacyParams,
    SeededGenerator,
    load_dataset,
    objective,
    project_ball,
    quantile_radius,
    save_dataset,
)
from .datagen import GaussianClusterSpec, HeavyTailedSpec, f_quantile, gaussian_cluster, heavy_tailed
from .mechanisms import (
    AboveThresholdReport,
    above_threshold,
    rho_from_eps_delta,
    sample_bounded_laplace,
    sample_gaussian_vector,
    sample_laplace,
)
from .oracle import OracleSolution, check_median_robustness, geometric_median, normalized_excess
from .pipeline import WarmStart, private_geometric_median, run_pipeline
from .radius import RadiusEstimate, exact_radius_baseline, fast_radius

__version__ = "0.1.0"
