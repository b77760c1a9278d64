"""Priority-state tests: Bayes updates in log-odds form against the
probability-space iteration, detection-time mixing, index arithmetic."""

from __future__ import annotations

import math

import numpy as np
import pytest

from seqscan.belief import (
    BeliefState,
    IndexValue,
    bayes_update,
    expected_detection_time,
    index,
)
from seqscan.models import Poisson, log_density, sample


def test_belief_starts_at_prior():
    b = BeliefState(prior=0.3)
    assert b.posterior == pytest.approx(0.3, abs=1e-15)
    with pytest.raises(ValueError):
        BeliefState(prior=1.5)


def test_unprobed_instant_changes_nothing():
    b = BeliefState(prior=0.5, sum_llr=0.7)
    assert bayes_update(b, -1.0, -2.0, probed=False) == b


def test_uninformative_observation_keeps_half():
    b = bayes_update(BeliefState(prior=0.5), -2.0, -2.0, probed=True)
    assert b.posterior == pytest.approx(0.5, abs=1e-15)


def test_frozen_poisson_posterior():
    f0, f1 = Poisson(10.0), Poisson(15.0)
    b = bayes_update(
        BeliefState(prior=0.5), log_density(f0, 12), log_density(f1, 12), probed=True
    )
    assert b.posterior == pytest.approx(0.4664458315935051, abs=1e-10)


def test_impossible_observation_is_an_error():
    b = BeliefState(prior=0.5)
    with pytest.raises(ValueError):
        bayes_update(b, -math.inf, -math.inf, probed=True)
    with pytest.raises(ValueError):
        bayes_update(b, math.nan, -1.0, probed=True)


def test_one_sided_impossibility_saturates():
    b = bayes_update(BeliefState(prior=0.5), -math.inf, -1.0, probed=True)
    assert b.posterior == 1.0
    b = bayes_update(BeliefState(prior=0.5), -1.0, -math.inf, probed=True)
    assert b.posterior == 0.0


def test_degenerate_priors_are_absorbing():
    for prior in (0.0, 1.0):
        b = BeliefState(prior=prior)
        for inc in ((-1.0, -3.0), (-2.0, -0.5)):
            b = bayes_update(b, *inc, probed=True)
            assert b.posterior == prior


def test_log_odds_form_matches_probability_space_iteration():
    # oracle: direct Bayes rule iterated in probability space
    f0, f1 = Poisson(10.0), Poisson(15.0)
    rng = np.random.default_rng(13)
    for _ in range(30):
        prior = float(rng.uniform(0.05, 0.95))
        b = BeliefState(prior=prior)
        p = prior
        truth = rng.random() < 0.5
        gen = f1 if truth else f0
        for _ in range(int(rng.integers(1, 60))):
            y = sample(gen, rng)
            l0, l1 = log_density(f0, y), log_density(f1, y)
            b = bayes_update(b, l0, l1, probed=True)
            p = p * math.exp(l1) / (p * math.exp(l1) + (1 - p) * math.exp(l0))
            assert b.posterior == pytest.approx(p, abs=1e-10)


def test_posterior_survives_extreme_evidence():
    # a long one-sided run drives the probability form into saturation;
    # the log-odds form must keep a usable ordering
    strong = BeliefState(prior=0.5, sum_llr=80.0)
    stronger = BeliefState(prior=0.5, sum_llr=120.0)
    assert strong.posterior == pytest.approx(1.0, abs=1e-12)
    assert strong.sum_llr < stronger.sum_llr


def test_expected_detection_time_endpoints_and_mean():
    assert expected_detection_time(BeliefState(prior=0.0), 7.306, 12.77) == pytest.approx(7.306)
    assert expected_detection_time(BeliefState(prior=1.0), 7.306, 12.77) == pytest.approx(12.77)
    assert expected_detection_time(BeliefState(prior=0.5), 7.306, 12.77) == pytest.approx(
        10.038, abs=1e-12
    )
    with pytest.raises(ValueError):
        expected_detection_time(BeliefState(prior=0.5), 0.0, 1.0)


def test_index_arithmetic_and_inactivity():
    b = BeliefState(prior=0.5)
    assert index(b, cost=10.0, expected_time=20.0, active=True).value == pytest.approx(0.25)
    assert index(b, cost=10.0, expected_time=20.0, active=False).value == 0.0
    assert index(b, cost=0.0, expected_time=20.0, active=True).value == 0.0
    with pytest.raises(ValueError):
        index(b, cost=-1.0, expected_time=1.0, active=True)
    with pytest.raises(ValueError):
        index(b, cost=1.0, expected_time=0.0, active=True)
    with pytest.raises(ValueError):
        IndexValue(value=0.3, active=False)


def test_cost_scaling_preserves_argmax_exactly():
    # scaling every cost by a power of two is exact in binary floating
    # point, so the argmax must be bit-for-bit identical
    rng = np.random.default_rng(19)
    for _ in range(50):
        beliefs = [BeliefState(prior=float(rng.uniform(0.1, 0.9))) for _ in range(6)]
        costs = [float(rng.uniform(0.5, 30.0)) for _ in range(6)]
        times = [float(rng.uniform(2.0, 40.0)) for _ in range(6)]
        base = [index(b, c, t, True).value for b, c, t in zip(beliefs, costs, times)]
        scaled = [index(b, c * 8.0, t, True).value for b, c, t in zip(beliefs, costs, times)]
        assert int(np.argmax(base)) == int(np.argmax(scaled))
