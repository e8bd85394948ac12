import csv
import io
from contextlib import redirect_stdout

import numpy as np
import pytest
import yaml

from privgm.cli import main
from privgm.harness import (
    HEADER,
    ConfigError,
    MetricsRow,
    aggregate,
    load_config,
    parse_config,
    read_rows,
    run_boosting_experiment,
    run_experiment,
    run_radius_experiment,
    summary_lookup,
    trial_seed,
    write_rows,
)


def radius_config(**over):
    cfg = {
        "experiment": "radius-sweep",
        "dataset": {"kind": "gaussian-cluster", "n": 300, "d": 5, "R": 2.0, "sigma": 0.1, "frac_in": 0.9},
        "algorithms": ["fast_radius", "exact_radius_baseline"],
        "trials": 3,
        "base_seed": 11,
        "sweep": {"param": "R", "values": [1.0, 2.0]},
    }
    cfg.update(over)
    return cfg


def boosting_config(**over):
    cfg = {
        "experiment": "boosting-sweep",
        "dataset": {"kind": "gaussian-cluster", "n": 200, "d": 5, "R": 10.0, "sigma": 0.1, "frac_in": 0.9},
        "algorithms": ["dpgd_baseline", "stable_dpsgd", "fixed_order_dpsgd"],
        "trials": 2,
        "base_seed": 5,
        "sweep": {"param": "passes", "values": [1, 2]},
        "settings": {"rho": 0.5},
    }
    cfg.update(over)
    return cfg


def values(rows, drop=("elapsed_ms",)):
    return [(r.sweep_value, r.trial, r.algorithm, r.metric, r.value, r.seed) for r in rows if r.metric not in drop]


@pytest.mark.parametrize(
    "change, field",
    [
        ({"experiment": "bogus"}, "experiment"),
        ({"trials": 0}, "trials"),
        ({"trials": True}, "trials"),
        ({"base_seed": -1}, "base_seed"),
        ({"algorithms": ["stable_dpsgd"]}, "algorithms"),
        ({"algorithms": []}, "algorithms"),
        ({"sweep": {"param": "R", "values": []}}, "sweep.values"),
        ({"sweep": {"param": "colour", "values": [1]}}, "sweep.param"),
        ({"dataset": {"kind": "cube"}}, "dataset.kind"),
        ({"settings": {"banana": 1}}, "settings.banana"),
        ({"sweep": {"param": "R", "values": [-1.0]}}, "sweep value"),
    ],
)
def test_config_errors_name_the_field(change, field):
    with pytest.raises(ConfigError, match=field.replace(".", r"\.")):
        parse_config(radius_config(**change))


def test_kind_specific_runners_check_kind():
    with pytest.raises(ConfigError):
        run_boosting_experiment(parse_config(radius_config()))
    with pytest.raises(ConfigError):
        run_radius_experiment(parse_config(boosting_config()))


def test_radius_rows_are_reproducible_and_complete():
    cfg = parse_config(radius_config())
    a, b = run_experiment(cfg), run_experiment(cfg)
    assert values(a) == values(b)
    assert len(a) == 2 * 3 * 2 * 3
    assert {r.metric for r in a} == {"ratio_r_hat", "elapsed_ms", "r_min"}
    assert all(0.005 <= r.value <= 0.02 for r in a if r.metric == "r_min")


def test_parallel_matches_serial():
    cfg = parse_config(radius_config())
    assert values(run_experiment(cfg, jobs=2)) == values(run_experiment(cfg))


def test_seed_isolation_across_trial_counts():
    small = run_experiment(parse_config(boosting_config(trials=1)))
    large = run_experiment(parse_config(boosting_config(trials=3)))
    assert values(small) == [v for v in values(large) if v[1] == 0]


def test_seed_derivation():
    assert trial_seed(5, 0, 0) != trial_seed(5, 0, 1) != trial_seed(5, 1, 0)
    assert trial_seed(5, 1, 2) == trial_seed(5, 1, 2)


def test_boosting_rows_include_phase_checkpoints():
    rows = run_experiment(parse_config(boosting_config()))
    algs = {r.algorithm for r in rows}
    assert {"dpgd_baseline", "stable_dpsgd", "fixed_order_dpsgd"} <= algs
    phases = sorted(r.value for r in rows if r.algorithm.startswith("stable_dpsgd:phase") and r.metric == "passes"
                    and r.sweep_value == 2.0 and r.trial == 0)
    final = [r.value for r in rows if r.algorithm == "stable_dpsgd" and r.metric == "passes" and r.sweep_value == 2.0][0]
    assert phases[-1] == final and phases == sorted(set(phases))
    dpgd = [r.value for r in rows if r.algorithm == "dpgd_baseline" and r.metric == "passes" and r.sweep_value == 1.0]
    assert all(v == 2.0 for v in dpgd)  # 255 rounded steps over n = 200


def test_pipeline_eval_rows():
    cfg = parse_config({
        "experiment": "pipeline-eval",
        "dataset": {"kind": "gaussian-cluster", "n": 2000, "d": 3, "R": 10.0, "sigma": 0.1, "frac_in": 0.9},
        "algorithms": ["pipeline"],
        "trials": 1,
        "base_seed": 1,
        "sweep": {"param": "epsilon", "values": [1.0]},
        "settings": {"r": 0.01, "passes": 1},
    })
    with pytest.warns(RuntimeWarning):
        rows = run_experiment(cfg)
    metrics = {r.metric: r.value for r in rows}
    assert metrics["f_ratio"] >= 1.0 - 1e-6 and metrics["gated"] in (0.0, 1.0)


def test_aggregate_examples():
    row = lambda v, t=0: MetricsRow("radius-sweep", "R", 1.0, t, "a", "m", v, 0)
    (one,) = aggregate([row(5.0)])
    assert (one.mean, one.sd, one.count) == (5.0, 0.0, 1)
    (two,) = aggregate([row(1.0), row(3.0, 1)])
    assert (two.mean, two.sd) == (2.0, 1.0)
    with pytest.raises(ValueError):
        aggregate([])


def test_aggregate_is_permutation_invariant_and_ordered():
    rng = np.random.default_rng(0)
    rows = [MetricsRow("x", "R", float(s), t, alg, m, float(rng.normal()), 0)
            for s in (2, 1) for t in range(5) for alg in ("b", "a") for m in ("z", "y")]
    base = aggregate(rows)
    for _ in range(5):
        perm = [rows[i] for i in rng.permutation(len(rows))]
        assert aggregate(perm) == base
    keys = [(s.sweep_value, s.algorithm, s.metric) for s in base]
    assert keys == sorted(keys)
    assert summary_lookup(base)[(1.0, "a", "y")].count == 5


def test_csv_roundtrip(tmp_path):
    rows = run_experiment(parse_config(radius_config(trials=1)))
    path = tmp_path / "rows.csv"
    write_rows(rows, path)
    with open(path) as fh:
        assert next(csv.reader(fh)) == HEADER
    assert read_rows(path) == rows


def test_row_seed_replays_trial_through_cli(tmp_path):
    cfg = parse_config(radius_config(algorithms=["fast_radius"], trials=2))
    rows = run_experiment(cfg)
    target = [r for r in rows if r.metric == "ratio_r_hat" and r.trial == 1 and r.sweep_value == 2.0][0]
    r_min = [r.value for r in rows if r.metric == "r_min" and r.trial == 1 and r.sweep_value == 2.0][0]
    data = tmp_path / "d.txt"
    assert main(["gen-data", "--kind", "gaussian-cluster", "--R", "2", "--n", "300", "--d", "5", "--sigma", "0.1",
                 "--frac-in", "0.9", "--seed", str(target.seed), "--out", str(data)]) == 0
    out = io.StringIO()
    with redirect_stdout(out):
        assert main(["estimate-radius", "--input", str(data), "--r", repr(r_min), "--R", "2", "--eps", "1",
                     "--delta", "1e-5", "--seed", str(target.seed)]) == 0
    r_hat = float(out.getvalue().split(",")[0])
    assert r_hat / (0.1 * np.sqrt(5)) == pytest.approx(target.value, rel=1e-12)


def test_experiment_cli(tmp_path):
    cfg = radius_config(trials=1, output=str(tmp_path / "out.csv"))
    path = tmp_path / "c.yaml"
    path.write_text(yaml.safe_dump(cfg))
    with redirect_stdout(io.StringIO()):
        assert main(["experiment", "--config", str(path), "--summary", "--keep-data"]) == 0
    assert (tmp_path / "out.csv").exists() and (tmp_path / "out_summary.csv").exists()
    assert len(list((tmp_path / "out_data").iterdir())) == 2
    assert load_config(path).trials == 1

    bad = tmp_path / "bad.yaml"
    bad.write_text(yaml.safe_dump(radius_config(trials=0)))
    assert main(["experiment", "--config", str(bad)]) != 0
    broken = tmp_path / "broken.yaml"
    broken.write_text("experiment: [unclosed")
    assert main(["experiment", "--config", str(broken)]) != 0
