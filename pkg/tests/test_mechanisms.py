import math

import numpy as np
import pytest
from scipy import stats

from privgm.core import PrivacyParams, SeededGenerator
from privgm.mechanisms import (
    above_threshold,
    above_threshold_accuracy,
    bounded_laplace_with_proposals,
    gaussian_cdp,
    rho_check,
    rho_from_eps_delta,
    sample_bounded_laplace,
    sample_gaussian_vector,
    sample_laplace,
)


def test_laplace_zero_scale_is_exactly_zero():
    assert sample_laplace(0.0, SeededGenerator(1)) == 0.0
    assert np.all(sample_laplace(0.0, SeededGenerator(1), 4) == 0.0)
    with pytest.raises(ValueError):
        sample_laplace(-1.0, SeededGenerator(1))


def test_laplace_mean_and_tail():
    lam = 2.0
    x = sample_laplace(lam, SeededGenerator(7), 10**6)
    assert abs(x.mean()) <= 5 * lam * math.sqrt(2) / 1e3
    tail = np.mean(np.abs(x) > lam * math.log(100))
    assert abs(tail - 0.01) <= 0.003


def test_laplace_matches_distribution():
    x = sample_laplace(1.5, SeededGenerator(3), 20000)
    assert stats.kstest(x, stats.laplace(scale=1.5).cdf).pvalue > 0.01


def test_laplace_is_deterministic():
    a = sample_laplace(1.0, SeededGenerator(5), 10)
    b = sample_laplace(1.0, SeededGenerator(5), 10)
    assert np.array_equal(a, b)


def test_bounded_laplace_support_and_degenerate_cases():
    x = sample_bounded_laplace(1.0, 0.7, SeededGenerator(2), 10**6)
    assert np.abs(x).max() <= 0.7
    assert sample_bounded_laplace(0.0, 3.0, SeededGenerator(2)) == 0.0
    assert sample_bounded_laplace(2.0, 0.0, SeededGenerator(2)) == 0.0
    one = sample_bounded_laplace(1.0, 0.5, SeededGenerator(4))
    assert abs(one) <= 0.5


def test_bounded_laplace_acceptance_rate():
    delta = 1e-3
    scale = 1.0
    bound = scale * math.log(4 / delta)
    _, proposals = bounded_laplace_with_proposals(scale, bound, SeededGenerator(11), 10**6)
    rate = 10**6 / proposals
    assert abs(rate - (1 - delta / 4)) <= 0.001


def test_bounded_laplace_histogram_matches_truncated_density():
    scale, bound = 1.0, 2.0
    x = sample_bounded_laplace(scale, bound, SeededGenerator(13), 10**6)
    edges = np.linspace(-bound, bound, 41)
    observed, _ = np.histogram(x, edges)
    cdf = np.where(edges < 0, 0.5 * np.exp(edges / scale), 1 - 0.5 * np.exp(-edges / scale))
    probs = np.diff(cdf) / (cdf[-1] - cdf[0])
    assert stats.chisquare(observed, probs * x.size).pvalue > 0.01


def test_gaussian_vector():
    assert np.array_equal(sample_gaussian_vector(0.0, 4, SeededGenerator(1)), np.zeros(4))
    gen = SeededGenerator(8)
    draws = np.concatenate([sample_gaussian_vector(3.0, 1000, gen) for _ in range(1000)])
    assert abs(draws.var() / 9.0 - 1) < 0.02


def test_gaussian_norm_tail_bound():
    sigma, d, delta = 1.0, 20, 0.01
    gen = SeededGenerator(21)
    norms = np.linalg.norm(sigma * gen.rng.standard_normal((10**5, d)), axis=1)
    assert np.mean(norms <= 2 * sigma * math.sqrt(d * math.log(4 / delta))) >= 1 - delta


def test_above_threshold_never_fires_on_low_queries():
    eps, delta_s, tau = 1.0, 1.0, 0.0
    low = tau - 1e6 * 4 * delta_s / eps
    halts = [above_threshold([low] * 3, delta_s, tau, eps, SeededGenerator(s)).halt_index for s in range(1000)]
    assert sum(h == 4 for h in halts) >= 999


def test_above_threshold_fires_immediately_on_high_query():
    high = 1e6 * 4
    halts = [above_threshold([high, 0.0, 0.0], 1.0, 0.0, 1.0, SeededGenerator(s)).halt_index for s in range(1000)]
    assert sum(h == 1 for h in halts) >= 999


def test_above_threshold_report_shape():
    report = above_threshold([0.0, 1e9, 0.0], 1.0, 10.0, 1.0, SeededGenerator(0))
    assert report.halt_index == 2 and report.answers == [False, True] and report.fired
    empty = above_threshold([], 1.0, 0.0, 1.0, SeededGenerator(0))
    assert empty.halt_index == 1 and empty.answers == [] and not empty.fired
    with pytest.raises(ValueError):
        above_threshold([1.0], 0.0, 0.0, 1.0, SeededGenerator(0))


def test_above_threshold_is_lazy():
    seen = []

    def queries():
        for t in range(100):
            seen.append(t)
            yield 1e9 if t == 4 else -1e9

    report = above_threshold(queries(), 1.0, 0.0, 1.0, SeededGenerator(3))
    assert report.halt_index == 5
    assert seen == [0, 1, 2, 3, 4]


def test_above_threshold_accuracy():
    eps, sens, tau, gamma = 1.0, 1.0, 0.0, 0.05
    qs = np.linspace(-60, 60, 25)
    alpha = above_threshold_accuracy(sens, eps, len(qs), gamma)
    good = 0
    for s in range(1000):
        r = above_threshold(qs, sens, tau, eps, SeededGenerator(s))
        before = qs[: r.halt_index - 1]
        ok = np.all(before <= tau + alpha)
        if r.fired:
            ok = ok and qs[r.halt_index - 1] >= tau - alpha
        good += bool(ok)
    assert good >= 940


def test_rho_conversion():
    assert rho_from_eps_delta(PrivacyParams(1.0, 1e-5)).rho == pytest.approx(1 / (4 * math.log(2e5) + 2), rel=1e-12)
    assert rho_from_eps_delta(PrivacyParams(1.0, 1e-5)).rho == pytest.approx(0.019676, abs=1e-6)
    assert rho_from_eps_delta(PrivacyParams(1.0, 2 / math.e)).rho == pytest.approx(1 / 6)
    with pytest.raises(ValueError):
        rho_from_eps_delta(PrivacyParams(0.0, 0.1))


def test_rho_monotone():
    eps = np.linspace(0.05, 1, 20)
    deltas = np.logspace(-10, -0.5, 20)
    for d in deltas:
        r = [rho_from_eps_delta(PrivacyParams(e, d)).rho for e in eps]
        assert np.all(np.diff(r) > 0)
    for e in eps:
        r = [rho_from_eps_delta(PrivacyParams(e, d)).rho for d in deltas]
        assert np.all(np.diff(r) > 0)


def test_rho_check_and_gaussian_cost():
    p = PrivacyParams(0.5, 1e-6)
    rho = rho_from_eps_delta(p).rho
    assert rho_check(rho, p) is None
    assert rho_check(rho * 1.01, p) is not None
    assert gaussian_cdp(2.0, 1.0) == 2.0
