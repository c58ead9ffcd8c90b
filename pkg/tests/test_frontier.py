"""
This test file is part of flagforge.

It checks the Pareto filter against measured solutions of an image
corner-detection program and against a brute-force oracle.

Usage:
$ py.test tests/test_frontier.py

Copyright 2017-2018, flagforge contributors
License: 3-Clause-BSD
"""
import numpy as np
import pytest
from flagforge.errors import ContractError
from flagforge.autotuning.frontier import FrontierPoint, dominates, \
    pareto_filter


def test_measured_solutions():
    "(time, size) pairs of six gcc solutions"
    pairs = [(11.7, 60560), (4.3, 36360), (6.2, 32184), (4.2, 32448),
             (3.7, 33376), (3.4, 33804)]
    points = [FrontierPoint('p%d' % i, v) for i, v in enumerate(pairs)]
    frontier = pareto_filter(points)
    assert [p.vector for p in frontier] == \
        [(3.4, 33804), (3.7, 33376), (4.2, 32448), (6.2, 32184)]


def test_dominance():
    assert dominates((1, 1), (1, 2))
    assert not dominates((1, 2), (1, 2))
    assert not dominates((1, 3), (2, 1))


def test_duplicates_are_kept():
    points = [FrontierPoint('a', (1., 2.)), FrontierPoint('b', (1., 2.)),
              FrontierPoint('c', (2., 2.))]
    assert [p.point_uid for p in pareto_filter(points)] == ['a', 'b']


def test_against_brute_force():
    rng = np.random.default_rng(7)
    for _ in range(20):
        vectors = [tuple(v) for v in rng.integers(0, 10, (30, 3))]
        points = [FrontierPoint('%02d' % i, v)
                  for i, v in enumerate(vectors)]
        expected = set(p.point_uid for p in points
                       if not any(dominates(q.vector, p.vector)
                                  for q in points))
        assert set(p.point_uid for p in pareto_filter(points)) == expected


def test_invalid_points():
    assert pareto_filter([]) == []
    with pytest.raises(ContractError):
        pareto_filter([FrontierPoint('a', (1.,)),
                       FrontierPoint('b', (1., 2.))])
