import math

import numpy as np
import pytest

from privgm._kernels import count_neighbors, draw_indices
from privgm.center import calibrate, fast_center, interpolated_weights, weights_from_indices
from privgm.core import Dataset, PrivacyParams, SeededGenerator, quantile_radius
from privgm.datagen import GaussianClusterSpec, gaussian_cluster
from privgm.oracle import geometric_median

PARAMS = PrivacyParams(1.0, 1e-5)


def test_calibration_constants():
    cal = calibrate(1000, PARAMS)
    assert cal.k == math.ceil(600 * math.log(18 * 1000 / 1e-5))
    assert cal.noise_scale == 24.0
    assert cal.margin == pytest.approx(24 * math.log(24 / 1e-5))
    assert cal.sigma(2.0) == pytest.approx(2.0 * 1600 / 1000 * math.sqrt(math.log(12 / 1e-5)))
    half = calibrate(1000, PARAMS, constants_scale=0.5)
    assert half.margin == pytest.approx(cal.margin / 2) and half.sigma(1.0) == pytest.approx(cal.sigma(1.0) / 2)


def test_interpolated_weights():
    k = 100
    assert np.allclose(interpolated_weights(np.array([0, 50, 60, 75, 100]), k), [0, 0, 0.4, 1, 1])


def test_rejects_small_datasets_and_bad_radius():
    with pytest.raises(ValueError):
        fast_center(Dataset(np.zeros((19, 2))), 1.0, PARAMS, SeededGenerator(0))
    with pytest.raises(ValueError):
        fast_center(Dataset(np.zeros((30, 2))), 0.0, PARAMS, SeededGenerator(0))


def _gate_probability(n):
    cal = calibrate(n, PARAMS)
    b, m = cal.noise_scale, cal.margin
    c = 0.55 * n - n + m  # gate fires when the bounded noise is at most c
    below = 0.5 * math.exp(c / b) - 0.5 * math.exp(-m / b) if c < 0 else 1 - 0.5 * math.exp(-c / b) - 0.5 * math.exp(-m / b)
    return below / (1 - math.exp(-m / b))


def test_identical_points_gate_rate_and_accuracy():
    n, d = 1000, 2
    p = np.array([3.0, -4.0])
    data = Dataset(np.tile(p, (n, 1)))
    cal = calibrate(n, PARAMS)
    trials = 200
    gated, close = 0, 0
    for s in range(trials):
        est = fast_center(data, 0.5, PARAMS, SeededGenerator(s))
        assert est.Z == n
        if est.gated:
            gated += 1
            assert np.array_equal(est.x_hat, np.zeros(d))
            continue
        close += np.linalg.norm(est.x_hat - p) <= 3 * cal.sigma(0.5) * math.sqrt(d * math.log(4 / PARAMS.delta))
    q = _gate_probability(n)
    assert q < 0.01
    assert abs(gated - trials * q) <= 4 * math.sqrt(trials * q * (1 - q)) + 1
    assert close >= 0.99 * (trials - gated)


def test_separated_halves_trigger_gate():
    n = 1000
    r_hat = 1.0
    pts = np.zeros((n, 3))
    pts[n // 2:, 0] = 1e6 * r_hat
    data = Dataset(pts)
    fired = sum(fast_center(data, r_hat, PARAMS, SeededGenerator(s)).gated for s in range(100))
    assert fired >= 95


def test_determinism_and_independent_streams():
    data = gaussian_cluster(GaussianClusterSpec(5.0, 300, 3, 0.1, 0.9), SeededGenerator(0))
    a = fast_center(data, 0.3, PARAMS, SeededGenerator(4))
    b = fast_center(data, 0.3, PARAMS, SeededGenerator(4))
    assert np.array_equal(a.x_hat, b.x_hat) and a.gated == b.gated and a.Z == b.Z


def test_weights_stream_matches_explicit_indices():
    data = gaussian_cluster(GaussianClusterSpec(5.0, 300, 3, 0.1, 0.9), SeededGenerator(0))
    gen = SeededGenerator(4)
    cal = calibrate(data.n, PARAMS)
    idx, _ = draw_indices(data.n, data.n, cal.k, np.uint64(gen.spawn(0).seed))
    p = weights_from_indices(data.points, idx, 0.3)
    assert fast_center(data, 0.3, PARAMS, gen).Z == pytest.approx(p.sum())


def test_weight_sensitivity_under_coupling():
    rng = np.random.default_rng(1)
    violations = 0
    for trial in range(100):
        data = gaussian_cluster(GaussianClusterSpec(3.0, 200, 3, 0.2, 0.8), SeededGenerator(trial))
        i = int(rng.integers(0, data.n))
        other = data.replace_point(i, rng.uniform(-3, 3, 3))
        k = calibrate(data.n, PARAMS).k
        idx, _ = draw_indices(data.n, data.n, k, np.uint64(trial))
        if np.count_nonzero(idx == i) > 2 * k:
            continue
        r_hat = float(rng.uniform(0.05, 2.0))
        gap = np.abs(weights_from_indices(data.points, idx, r_hat) - weights_from_indices(other.points, idx, r_hat)).sum()
        violations += gap > 12
    assert violations == 0


def test_surviving_points_are_contained():
    for s in range(10):
        data = gaussian_cluster(GaussianClusterSpec(3.0, 400, 3, 0.3, 0.7), SeededGenerator(s))
        r_hat = float(np.random.default_rng(s).uniform(0.2, 1.0))
        k = calibrate(data.n, PARAMS).k
        idx, _ = draw_indices(data.n, data.n, k, np.uint64(s))
        p = weights_from_indices(data.points, idx, r_hat)
        true_score = count_neighbors(data.points, 2 * r_hat) / data.n * k
        core = np.flatnonzero(true_score > 0.55 * k)
        keep = np.flatnonzero((p > 0) & (true_score > 0.45 * k))
        if core.size == 0 or keep.size == 0:
            continue
        gaps = np.linalg.norm(data.points[keep][:, None] - data.points[core][None], axis=2)
        assert gaps.max() <= 4 * r_hat


@pytest.mark.slow
def test_accuracy_on_large_cluster():
    spec = GaussianClusterSpec(10.0, 50_000, 10, 0.1, 0.9)
    good = 0
    trials = 20
    for s in range(trials):
        data = gaussian_cluster(spec, SeededGenerator(1000 + s))
        star = geometric_median(data).x_star
        r_hat = quantile_radius(data, star, 0.75)
        est = fast_center(data, r_hat, PARAMS, SeededGenerator(s))
        good += (not est.gated) and np.linalg.norm(est.x_hat - star) <= 4 * r_hat
    assert good >= 19
