"""Command-line entry points for each stage, data generation and experiments."""

from __future__ import annotations

import argparse
import csv
import sys
import time
import warnings
from pathlib import Path

import numpy as np

from .boost import build_schedule, dpgd_baseline, fixed_order_dpsgd, practical_eta, rounded_steps, stable_dpsgd
from .center import fast_center
from .core import PrivacyParams, SeededGenerator, load_dataset, objective, save_dataset
from .datagen import GaussianClusterSpec, HeavyTailedSpec, gaussian_cluster, heavy_tailed
from .harness import ConfigError, aggregate, load_config, run_experiment, write_rows, write_summary
from .oracle import geometric_median
from .pipeline import run_pipeline
from .radius import exact_radius_baseline, fast_radius


def _u64(text: str) -> int:
    value = int(text, 0)
    if not 0 <= value < 2**64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return value


def _vector(text: str) -> np.ndarray:
    """A file holding one row of coordinates, or an inline comma/space separated list."""
    path = Path(text)
    if path.is_file():
        return np.loadtxt(path, comments="#", ndmin=2)[0]
    return np.array([float(v) for v in text.replace(",", " ").split()])


def _emit(row):
    csv.writer(sys.stdout).writerow(row)


def _fmt(x: float) -> str:
    return repr(float(x))


def cmd_estimate_radius(args) -> int:
    data = load_dataset(args.input)
    fn = exact_radius_baseline if args.exact else fast_radius
    start = time.perf_counter()
    est = fn(data, args.r, args.R, PrivacyParams(args.eps, args.delta), SeededGenerator(args.seed))
    ms = (time.perf_counter() - start) * 1e3
    _emit([_fmt(est.r_hat), est.halted_at, f"{ms:.3f}"])
    return 0


def cmd_estimate_center(args) -> int:
    data = load_dataset(args.input)
    est = fast_center(data, args.r_hat, PrivacyParams(args.eps, args.delta), SeededGenerator(args.seed))
    _emit([str(est.gated).lower()] + [_fmt(v) for v in est.x_hat])
    return 0


def cmd_dpsgd(args) -> int:
    data = load_dataset(args.input)
    x_bar = _vector(args.x_bar)
    if x_bar.shape[0] != data.d:
        raise ValueError(f"--x-bar has {x_bar.shape[0]} coordinates but the data has d={data.d}")
    gen = SeededGenerator(args.seed)
    start = time.perf_counter()
    if args.variant == "dpgd":
        eta = args.eta if args.eta is not None else practical_eta(args.r_hat, args.T)
        x_hat = dpgd_baseline(data, x_bar, args.r_hat, args.rho, args.T, eta, gen)
        passes = float(args.T)
    else:
        fixed = args.variant == "fixed-order"
        _, T = rounded_steps(data.n, args.T)
        eta = args.eta if args.eta is not None else practical_eta(args.r_hat, T)
        schedule = build_schedule(data.n, args.T, eta, args.rho, args.delta, fixed_order=fixed)
        result = (fixed_order_dpsgd if fixed else stable_dpsgd)(data, x_bar, args.r_hat, schedule, gen)
        x_hat, passes = result.x_hat, result.passes
    ms = (time.perf_counter() - start) * 1e3
    f_star = geometric_median(data).objective_value
    excess = (objective(data, x_hat) - f_star) / args.r_hat
    _emit([args.variant, _fmt(passes), _fmt(excess), f"{ms:.3f}"] + [_fmt(v) for v in x_hat])
    return 0


def cmd_pipeline(args) -> int:
    data = load_dataset(args.input)
    start = time.perf_counter()
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        result = run_pipeline(data, args.r, args.R, PrivacyParams(args.eps, args.delta), args.T, SeededGenerator(args.seed))
    ms = (time.perf_counter() - start) * 1e3
    row = [_fmt(v) for v in result.x_hat]
    row += [_fmt(result.radius.r_hat), str(result.warm_start.gated).lower(), _fmt(objective(data, result.x_hat)), f"{ms:.3f}"]
    _emit(row)
    return 0


def cmd_gen_data(args) -> int:
    gen = SeededGenerator(args.seed)
    if args.kind == "gaussian-cluster":
        missing = [f for f in ("R", "n", "d", "sigma", "frac_in") if getattr(args, f) is None]
        if missing:
            raise ValueError("gaussian-cluster needs " + ", ".join("--" + m.replace("_", "-") for m in missing))
        data = gaussian_cluster(GaussianClusterSpec(args.R, args.n, args.d, args.sigma, args.frac_in), gen)
    else:
        missing = [f for f in ("nu", "n", "d") if getattr(args, f) is None]
        if missing:
            raise ValueError("heavy-tailed needs " + ", ".join("--" + m for m in missing))
        data = heavy_tailed(HeavyTailedSpec(args.nu, args.n, args.d), gen)
    save_dataset(data, args.out)
    return 0


def cmd_experiment(args) -> int:
    try:
        config = load_config(args.config)
    except (ConfigError, OSError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    keep = None
    if args.keep_data:
        keep = str(Path(config.output or "experiment.csv").with_suffix("")) + "_data"
    rows = run_experiment(config, jobs=args.jobs, keep_dir=keep)
    out = Path(config.output or Path(args.config).with_suffix(".csv"))
    write_rows(rows, out)
    if args.summary:
        write_summary(aggregate(rows), out.with_name(out.stem + "_summary.csv"))
    print(out)
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="privgm", description="Private geometric median toolkit.")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("estimate-radius", help="private quantile radius")
    s.add_argument("--input", required=True)
    s.add_argument("--r", type=float, required=True)
    s.add_argument("--R", type=float, required=True)
    s.add_argument("--eps", type=float, required=True)
    s.add_argument("--delta", type=float, required=True)
    s.add_argument("--seed", type=_u64, required=True)
    s.add_argument("--exact", action="store_true", help="use exact pairwise counts")
    s.set_defaults(func=cmd_estimate_radius)

    s = sub.add_parser("estimate-center", help="private centerpoint")
    s.add_argument("--input", required=True)
    s.add_argument("--r-hat", type=float, required=True)
    s.add_argument("--eps", type=float, required=True)
    s.add_argument("--delta", type=float, required=True)
    s.add_argument("--seed", type=_u64, required=True)
    s.set_defaults(func=cmd_estimate_center)

    s = sub.add_parser("dpsgd", help="private boosting from a warm start")
    s.add_argument("--input", required=True)
    s.add_argument("--x-bar", required=True, help="file with one row, or inline a,b,c (use --x-bar=-1,2 for a leading minus)")
    s.add_argument("--r-hat", type=float, required=True)
    s.add_argument("--rho", type=float, required=True)
    s.add_argument("--delta", type=float, required=True)
    s.add_argument("--T", type=int, required=True)
    s.add_argument("--eta", type=float, default=None, help="default r_hat / sqrt(T)")
    s.add_argument("--variant", choices=("stable", "fixed-order", "dpgd"), default="stable")
    s.add_argument("--seed", type=_u64, required=True)
    s.set_defaults(func=cmd_dpsgd)

    s = sub.add_parser("pipeline", help="radius, center and boosting end to end")
    s.add_argument("--input", required=True)
    s.add_argument("--r", type=float, required=True)
    s.add_argument("--R", type=float, required=True)
    s.add_argument("--eps", type=float, required=True)
    s.add_argument("--delta", type=float, required=True)
    s.add_argument("--T", type=int, required=True)
    s.add_argument("--seed", type=_u64, required=True)
    s.set_defaults(func=cmd_pipeline)

    s = sub.add_parser("gen-data", help="write a synthetic dataset")
    s.add_argument("--kind", choices=("gaussian-cluster", "heavy-tailed"), required=True)
    s.add_argument("--R", type=float)
    s.add_argument("--n", type=int)
    s.add_argument("--d", type=int)
    s.add_argument("--sigma", type=float)
    s.add_argument("--frac-in", type=float)
    s.add_argument("--nu", type=float)
    s.add_argument("--seed", type=_u64, required=True)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_gen_data)

    s = sub.add_parser("experiment", help="run a YAML experiment config")
    s.add_argument("--config", required=True)
    s.add_argument("--jobs", type=int, default=1)
    s.add_argument("--summary", action="store_true", help="also write mean/sd per group")
    s.add_argument("--keep-data", action="store_true", help="save each trial's dataset")
    s.set_defaults(func=cmd_experiment)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
