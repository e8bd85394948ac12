"""Experiment driver: YAML configs, seeded trials, metric rows and summaries."""

from __future__ import annotations

import csv
import math
import time
import warnings
from collections import defaultdict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence

import numpy as np
import yaml

from .boost import (
    build_schedule,
    constant_dpgd_eta,
    dpgd_baseline,
    fixed_order_dpsgd,
    optimal_eta,
    practical_eta,
    rounded_steps,
    stable_dpsgd,
)
from .core import Dataset, PrivacyParams, SeededGenerator, objective, save_dataset
from .datagen import GaussianClusterSpec, HeavyTailedSpec, f_quantile, gaussian_cluster, heavy_tailed
from .oracle import geometric_median
from .pipeline import run_pipeline
from .radius import exact_radius_baseline, fast_radius

KINDS = ("radius-sweep", "boosting-sweep", "scale-sweep", "pipeline-eval")
RADIUS_ALGORITHMS = ("fast_radius", "exact_radius_baseline")
BOOSTING_ALGORITHMS = ("dpgd_baseline", "stable_dpsgd", "fixed_order_dpsgd")
PIPELINE_ALGORITHMS = ("pipeline", "pipeline_fixed_order")
DATASET_KINDS = ("gaussian-cluster", "heavy-tailed")
DATASET_FIELDS = {
    "gaussian-cluster": ("n", "d", "R", "sigma", "frac_in"),
    "heavy-tailed": ("n", "d", "nu"),
}
RUN_FIELDS = ("epsilon", "delta", "rho", "passes", "eta_multiplier", "r", "T")
HEADER = ["experiment", "sweep_param", "sweep_value", "trial", "algorithm", "metric", "value", "seed"]
SUMMARY_HEADER = ["experiment", "sweep_param", "sweep_value", "algorithm", "metric", "mean", "sd", "count"]

# child indices of a trial generator reserved for harness-level draws; the
# algorithms themselves only use small child indices
_R_MIN_STREAM = 1 << 40
_X_BAR_STREAM = (1 << 40) + 1


class ConfigError(ValueError):
    pass


@dataclass
class ExperimentConfig:
    """One experiment: what data, which algorithms, how many trials, what to sweep.

    ``settings`` holds the run parameters (epsilon, delta, rho, passes,
    eta_multiplier, eta_base, r, T, r_min_low, r_min_high); any of those or
    any dataset field can be the sweep parameter.
    """

    kind: str
    dataset: Dict[str, object]
    algorithms: List[str]
    trials: int
    base_seed: int
    sweep_param: str
    sweep_values: List[float]
    settings: Dict[str, object] = field(default_factory=dict)
    output: Optional[str] = None

    def setting(self, name, default=None):
        return self.settings.get(name, default)


_DEFAULT_SETTINGS = {
    "epsilon": 1.0,
    "delta": 1e-5,
    "rho": 0.5,
    "passes": 4.0,
    "eta_multiplier": 1.0,
    "eta_base": "practical",
    "r_min_low": 0.005,
    "r_min_high": 0.02,
    "r": 0.1,
    "T": None,
    "r_hat_factor": 20.0,
    "init_fraction": 0.75,
}


def parse_config(data: dict) -> ExperimentConfig:
    """Validate a config mapping; every failure names the offending field."""
    if not isinstance(data, dict):
        raise ConfigError("config: expected a mapping at top level")
    errors = []

    kind = data.get("experiment")
    if kind not in KINDS:
        errors.append(f"experiment: must be one of {', '.join(KINDS)}, got {kind!r}")

    ds = data.get("dataset")
    if not isinstance(ds, dict):
        errors.append("dataset: missing or not a mapping")
        ds = {}
    else:
        ds = dict(ds)
        if ds.get("kind") not in DATASET_KINDS:
            errors.append(f"dataset.kind: must be one of {', '.join(DATASET_KINDS)}, got {ds.get('kind')!r}")

    algorithms = data.get("algorithms")
    allowed = {
        "radius-sweep": RADIUS_ALGORITHMS,
        "boosting-sweep": BOOSTING_ALGORITHMS,
        "scale-sweep": BOOSTING_ALGORITHMS,
        "pipeline-eval": PIPELINE_ALGORITHMS,
    }.get(kind, ())
    if not isinstance(algorithms, list) or not algorithms:
        errors.append("algorithms: must be a nonempty list")
        algorithms = []
    else:
        for a in algorithms:
            if a not in allowed:
                errors.append(f"algorithms: {a!r} is not valid for {kind} (allowed: {', '.join(allowed)})")

    trials = data.get("trials")
    if not isinstance(trials, int) or isinstance(trials, bool) or trials < 1:
        errors.append(f"trials: must be a positive integer, got {trials!r}")

    seed = data.get("base_seed", 0)
    if not isinstance(seed, int) or isinstance(seed, bool) or not 0 <= seed < 2**64:
        errors.append(f"base_seed: must be an integer in [0, 2^64), got {seed!r}")

    sweep = data.get("sweep")
    param, values = None, []
    if not isinstance(sweep, dict):
        errors.append("sweep: missing or not a mapping with 'param' and 'values'")
    else:
        param = sweep.get("param")
        values = sweep.get("values")
        known = set(DATASET_FIELDS.get(ds.get("kind"), ())) | set(RUN_FIELDS)
        if param not in known:
            errors.append(f"sweep.param: {param!r} is not a dataset field or run setting ({', '.join(sorted(known))})")
        if not isinstance(values, list) or not values:
            errors.append("sweep.values: must be a nonempty list")
            values = []
        elif not all(isinstance(v, (int, float)) and not isinstance(v, bool) for v in values):
            errors.append("sweep.values: every value must be a number")

    settings = dict(_DEFAULT_SETTINGS)
    extra = data.get("settings", {}) or {}
    if not isinstance(extra, dict):
        errors.append("settings: must be a mapping")
        extra = {}
    for key, value in extra.items():
        if key not in settings:
            errors.append(f"settings.{key}: unknown setting")
        settings[key] = value
    if settings["eta_base"] not in ("practical", "optimal"):
        errors.append(f"settings.eta_base: must be 'practical' or 'optimal', got {settings['eta_base']!r}")

    output = data.get("output")
    if output is not None and not isinstance(output, str):
        errors.append("output: must be a path string")

    if errors:
        raise ConfigError("; ".join(errors))
    config = ExperimentConfig(kind, ds, list(algorithms), trials, seed, param, [float(v) for v in values], settings, output)
    # build one dataset spec and privacy pair per sweep value to surface range errors now
    for v in config.sweep_values:
        try:
            _dataset_spec(config, v)
            _privacy(config, v)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"sweep value {v}: {exc}") from exc
    return config


def load_config(path) -> ExperimentConfig:
    with open(path) as fh:
        try:
            data = yaml.safe_load(fh)
        except yaml.YAMLError as exc:
            raise ConfigError(f"{path}: not valid YAML: {exc}") from exc
    return parse_config(data)


@dataclass(frozen=True)
class MetricsRow:
    experiment: str
    sweep_param: str
    sweep_value: float
    trial: int
    algorithm: str
    metric: str
    value: float
    seed: int

    def as_list(self):
        return [self.experiment, self.sweep_param, repr(self.sweep_value), self.trial, self.algorithm, self.metric, repr(float(self.value)), self.seed]


def _value(config: ExperimentConfig, name: str, sweep_value: float):
    if name == config.sweep_param:
        return sweep_value
    if name in config.dataset:
        return config.dataset[name]
    return config.settings.get(name)


def _dataset_spec(config: ExperimentConfig, sweep_value: float):
    kind = config.dataset.get("kind")
    fields = {f: _value(config, f, sweep_value) for f in DATASET_FIELDS[kind]}
    missing = [f for f, v in fields.items() if v is None]
    if missing:
        raise ValueError(f"dataset: missing field(s) {', '.join(missing)}")
    fields["n"] = int(fields["n"])
    fields["d"] = int(fields["d"])
    if kind == "gaussian-cluster":
        return GaussianClusterSpec(**fields)
    return HeavyTailedSpec(**fields)


def _privacy(config: ExperimentConfig, sweep_value: float) -> PrivacyParams:
    return PrivacyParams(float(_value(config, "epsilon", sweep_value)), float(_value(config, "delta", sweep_value)))


def trial_seed(base_seed: int, sweep_index: int, trial_index: int) -> int:
    return SeededGenerator(base_seed).spawn(sweep_index).spawn(trial_index).seed


def make_dataset(spec, gen: SeededGenerator) -> Dataset:
    if isinstance(spec, GaussianClusterSpec):
        return gaussian_cluster(spec, gen)
    return heavy_tailed(spec, gen)


def true_radius(spec, gamma: float = 0.75) -> float:
    if isinstance(spec, GaussianClusterSpec):
        return spec.r_true
    return math.sqrt(spec.d * f_quantile(spec.d, spec.nu, gamma))


def _timed(fn, *args, **kwargs):
    start = time.perf_counter()
    out = fn(*args, **kwargs)
    return out, (time.perf_counter() - start) * 1e3


def run_trial(config: ExperimentConfig, sweep_index: int, trial_index: int, keep_dir: Optional[str] = None) -> List[MetricsRow]:
    """One trial: fresh dataset from the trial seed, then every configured algorithm."""
    value = config.sweep_values[sweep_index]
    seed = trial_seed(config.base_seed, sweep_index, trial_index)
    gen = SeededGenerator(seed)
    spec = _dataset_spec(config, value)
    dataset = make_dataset(spec, gen)
    if keep_dir:
        Path(keep_dir).mkdir(parents=True, exist_ok=True)
        save_dataset(dataset, Path(keep_dir) / f"data_{seed}.txt")

    def row(alg, metric, v):
        return MetricsRow(config.kind, config.sweep_param, value, trial_index, alg, metric, float(v), seed)

    runner = {
        "radius-sweep": _radius_trial,
        "boosting-sweep": _boosting_trial,
        "scale-sweep": _boosting_trial,
        "pipeline-eval": _pipeline_trial,
    }[config.kind]
    return runner(config, value, spec, dataset, gen, row, keep_dir)


def _radius_trial(config, value, spec, dataset, gen, row, keep_dir):
    params = _privacy(config, value)
    lo, hi = float(config.setting("r_min_low")), float(config.setting("r_min_high"))
    r_min = float(gen.spawn(_R_MIN_STREAM).rng.uniform(lo, hi))
    r_true = true_radius(spec)
    rows = []
    for alg in config.algorithms:
        fn = fast_radius if alg == "fast_radius" else exact_radius_baseline
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            est, ms = _timed(fn, dataset, r_min, dataset.nominal_radius, params, gen)
        rows += [row(alg, "ratio_r_hat", est.r_hat / r_true), row(alg, "elapsed_ms", ms), row(alg, "r_min", r_min)]
    return rows


def synthetic_warm_start(center: np.ndarray, r_hat: float, fraction: float, gen: SeededGenerator) -> np.ndarray:
    """Uniform point on the sphere of radius ``fraction * r_hat`` around ``center``."""
    u = gen.rng.standard_normal(center.shape[0])
    return center + fraction * r_hat * u / np.linalg.norm(u)


def boosting_steps(n: int, passes: float):
    """SGD step count (rounded up to ``2^K - 1``) and the DPGD step count with the same passes."""
    _, T = rounded_steps(n, max(1, math.ceil(passes * n)))
    return T, max(1, math.ceil(T / n))


def _boosting_trial(config, value, spec, dataset, gen, row, keep_dir):
    n, d = dataset.n, dataset.d
    rho = float(_value(config, "rho", value))
    delta = float(_value(config, "delta", value))
    passes = float(_value(config, "passes", value))
    mult = float(_value(config, "eta_multiplier", value))
    base = config.setting("eta_base")
    r_hat = float(config.setting("r_hat_factor")) * true_radius(spec)
    center = dataset.metadata["center"]
    x_bar = synthetic_warm_start(center, r_hat, float(config.setting("init_fraction")), gen.spawn(_X_BAR_STREAM))
    if keep_dir:
        np.savetxt(Path(keep_dir) / f"xbar_{gen.seed}.txt", x_bar[None, :], fmt="%.17g")
    oracle = geometric_median(dataset)
    f_star = oracle.objective_value
    T_sgd, T_gd = boosting_steps(n, passes)
    rows = []
    for alg in config.algorithms:
        if alg == "dpgd_baseline":
            eta = mult * (practical_eta(r_hat, T_gd) if base == "practical" else constant_dpgd_eta(r_hat, d, n, rho))
            x_hat, ms = _timed(dpgd_baseline, dataset, x_bar, r_hat, rho, T_gd, eta, gen)
            rows += [row(alg, "excess_normalized", (objective(dataset, x_hat) - f_star) / r_hat),
                     row(alg, "passes", T_gd), row(alg, "elapsed_ms", ms)]
            continue
        fixed = alg == "fixed_order_dpsgd"
        eta = mult * (practical_eta(r_hat, T_sgd) if base == "practical" else optimal_eta(r_hat, n, d, T_sgd, rho, delta))
        schedule = build_schedule(n, T_sgd, eta, rho, delta, fixed_order=fixed)
        fn = fixed_order_dpsgd if fixed else stable_dpsgd
        result, ms = _timed(fn, dataset, x_bar, r_hat, schedule, gen)
        rows += [row(alg, "excess_normalized", (objective(dataset, result.x_hat) - f_star) / r_hat),
                 row(alg, "passes", result.passes), row(alg, "elapsed_ms", ms)]
        for k, (out, used) in enumerate(zip(result.phase_outputs, result.phase_steps), start=1):
            tag = f"{alg}:phase{k}"
            rows += [row(tag, "excess_normalized", (objective(dataset, out) - f_star) / r_hat), row(tag, "passes", used / n)]
    return rows


def _pipeline_trial(config, value, spec, dataset, gen, row, keep_dir):
    params = _privacy(config, value)
    r = float(_value(config, "r", value))
    T = _value(config, "T", value)
    T = int(T) if T is not None else boosting_steps(dataset.n, float(_value(config, "passes", value)))[0]
    f_star = geometric_median(dataset).objective_value
    rows = []
    for alg in config.algorithms:
        result, ms = _timed(run_pipeline, dataset, r, dataset.nominal_radius, params, T, gen,
                            fixed_order=alg == "pipeline_fixed_order")
        f_val = objective(dataset, result.x_hat)
        rows += [
            row(alg, "f_ratio", f_val / f_star),
            row(alg, "excess_normalized", (f_val - f_star) / result.radius.r_hat),
            row(alg, "gated", float(result.warm_start.gated)),
            row(alg, "ratio_r_hat", result.radius.r_hat / true_radius(spec)),
            row(alg, "elapsed_ms", ms),
        ]
    return rows


def _sort_key(r: MetricsRow):
    return (r.sweep_value, r.trial, r.algorithm, r.metric)


def run_experiment(config: ExperimentConfig, jobs: int = 1, keep_dir: Optional[str] = None) -> List[MetricsRow]:
    """Run every (sweep value, trial) pair, in parallel when ``jobs > 1``; rows come back sorted."""
    tasks = [(s, t) for s in range(len(config.sweep_values)) for t in range(config.trials)]
    if jobs > 1:
        from joblib import Parallel, delayed

        chunks = Parallel(n_jobs=jobs)(delayed(run_trial)(config, s, t, keep_dir) for s, t in tasks)
    else:
        chunks = [run_trial(config, s, t, keep_dir) for s, t in tasks]
    return sorted((r for chunk in chunks for r in chunk), key=_sort_key)


def run_radius_experiment(config: ExperimentConfig, jobs: int = 1) -> List[MetricsRow]:
    if config.kind != "radius-sweep":
        raise ConfigError(f"experiment: expected radius-sweep, got {config.kind}")
    return run_experiment(config, jobs)


def run_boosting_experiment(config: ExperimentConfig, jobs: int = 1) -> List[MetricsRow]:
    if config.kind not in ("boosting-sweep", "scale-sweep"):
        raise ConfigError(f"experiment: expected boosting-sweep or scale-sweep, got {config.kind}")
    return run_experiment(config, jobs)


@dataclass(frozen=True)
class SummaryRow:
    experiment: str
    sweep_param: str
    sweep_value: float
    algorithm: str
    metric: str
    mean: float
    sd: float
    count: int


def aggregate(rows: Iterable[MetricsRow]) -> List[SummaryRow]:
    """Mean and population standard deviation per (sweep value, algorithm, metric)."""
    groups = defaultdict(list)
    for r in rows:
        groups[(r.experiment, r.sweep_param, r.sweep_value, r.algorithm, r.metric)].append(r.value)
    if not groups:
        raise ValueError("no rows to aggregate")
    out = []
    for key in sorted(groups, key=lambda k: (k[2], k[3], k[4], k[0], k[1])):
        vals = np.sort(np.array(groups[key]))
        out.append(SummaryRow(*key, float(vals.mean()), float(vals.std()), len(vals)))
    return out


def summary_lookup(summary: Sequence[SummaryRow]) -> Dict[tuple, SummaryRow]:
    return {(s.sweep_value, s.algorithm, s.metric): s for s in summary}


def write_rows(rows: Sequence[MetricsRow], path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(HEADER)
        for r in rows:
            w.writerow(r.as_list())


def write_summary(summary: Sequence[SummaryRow], path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(SUMMARY_HEADER)
        for s in summary:
            w.writerow([s.experiment, s.sweep_param, repr(s.sweep_value), s.algorithm, s.metric, repr(s.mean), repr(s.sd), s.count])


def read_rows(path) -> List[MetricsRow]:
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        return [
            MetricsRow(r["experiment"], r["sweep_param"], float(r["sweep_value"]), int(r["trial"]),
                       r["algorithm"], r["metric"], float(r["value"]), int(r["seed"]))
            for r in reader
        ]
