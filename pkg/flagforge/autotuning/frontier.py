"""
This file is part of flagforge.

It defines the Pareto-frontier filter used to keep the solutions that
trade off the monitored objectives (e.g. execution time and code size).

Copyright 2017-2018, flagforge contributors
License: 3-Clause-BSD
"""
from dataclasses import dataclass
import numpy as np
from ..errors import ContractError


@dataclass(frozen=True)
class FrontierPoint:
    """
    A point in objective space (all objectives are minimized)

    Attributes
    ----------
    - point_uid: string
    - vector: tuple of floats
    """
    point_uid: str
    vector: tuple


def dominates(p, q):
    """
    Whether p dominates q: p <= q on every objective, and p < q on at
    least one of them
    """
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    return(bool(np.all(p <= q) and np.any(p < q)))


def pareto_filter(points):
    """
    Return the non-dominated points

    Points with identical vectors do not dominate each other, so that
    duplicates of a frontier vector are all kept.

    Parameters
    ----------
    points: list of FrontierPoint

    Returns
    -------
    A list of FrontierPoint, sorted by first objective (then by the
    following objectives, then by uid)
    """
    if len(points) == 0:
        return([])
    dimensions = set(len(p.vector) for p in points)
    if len(dimensions) != 1 or 0 in dimensions:
        raise ContractError(
            'Frontier points have mixed or empty dimensions: %s'
            % sorted(dimensions))
    vectors = np.array([p.vector for p in points], dtype=float)

    # For each point, check whether any other point dominates it
    keep = np.ones(len(points), dtype=bool)
    for i in range(len(points)):
        not_worse = np.all(vectors <= vectors[i], axis=1)
        better = np.any(vectors < vectors[i], axis=1)
        if np.any(not_worse & better):
            keep[i] = False

    frontier = [p for p, k in zip(points, keep) if k]
    frontier.sort(key=lambda p: (tuple(p.vector), p.point_uid))
    return(frontier)
