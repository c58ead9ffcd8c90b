"""
This test file is part of flagforge.

It checks the statistics of repeated measurements and the trust gate of
comparisons.

Usage:
$ py.test tests/test_stats.py

Copyright 2017-2018, flagforge contributors
License: 3-Clause-BSD
"""
import numpy as np
import pytest
from flagforge.errors import ContractError
from flagforge.autotuning.stats import summarize, compare, \
    speedup_over_baseline, count_states, CharacteristicStats


def test_constant_samples():
    stats = summarize([2.5] * 10)
    assert stats.expected == stats.min == stats.max == stats.mean == 2.5
    assert stats.state_count == 1
    assert not stats.noisy
    assert stats.histogram == [(2.5, 10)]


def test_expected_is_the_mode():
    "Center of the most populated bin"
    stats = summarize([1., 1., 1., 1., 2.])
    assert stats.min == 1. and stats.max == 2.
    assert stats.expected == pytest.approx(1. + 1. / 6)
    assert stats.min <= stats.expected <= stats.max


def test_few_samples_fall_back_to_min():
    stats = summarize([3., 2.])
    assert stats.expected == 2.


def test_bimodal_samples():
    "Two frequency states are detected and make comparisons untrustable"
    rng = np.random.default_rng(0)
    samples = np.concatenate([rng.normal(1., 0.01, 20),
                              rng.normal(2., 0.01, 20)])
    stats = summarize(samples)
    assert stats.state_count == 2
    assert not compare(stats, stats).trustable
    assert count_states([5, 0, 0, 5]) == 2
    assert count_states([1, 9, 1]) == 1


def test_noise_threshold():
    assert not summarize([1., 1.012, 1.024]).noisy
    assert summarize([1., 1.03, 1.06]).noisy
    assert not summarize([1., 1.03, 1.06], threshold=0.1).noisy


def test_invalid_samples():
    with pytest.raises(ContractError):
        summarize([])
    with pytest.raises(ContractError):
        summarize([1., 0.])
    with pytest.raises(ContractError):
        summarize([1., float('nan')])


def test_compare_improvements():
    base = summarize([2.] * 5)
    candidate = summarize([1.] * 5)
    comparison = compare(base, candidate)
    assert comparison.improvement_min == 2.
    assert comparison.improvement_expected == 2.
    assert comparison.improvement_mean == 2.
    assert comparison.max_difference == 0.
    assert comparison.trustable
    assert speedup_over_baseline(base, candidate) == 2.


def test_compare_disagreement():
    "min and expected improvements disagree: untrustable"
    base = CharacteristicStats(5, 1., 1.02, 1.01, 1., noisy=False)
    candidate = CharacteristicStats(5, 0.5, 0.52, 0.51, 0.6, noisy=False)
    comparison = compare(base, candidate)
    assert comparison.max_difference > 0.05
    assert not comparison.trustable


def test_stats_round_trip():
    stats = summarize([1., 1.1, 1.2, 1.25])
    assert CharacteristicStats.from_dict(stats.to_dict()) == stats
