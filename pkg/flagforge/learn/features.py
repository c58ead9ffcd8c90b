"""
This file is part of flagforge.

It defines the static program feature vectors used to predict
optimizations:
- ft1 .. ft56: static features of the program (loops, branches, instructions...)
- ft57 .. ft65: additional features (opaque numbers read from files)
- ft66 .. ft121: ft1 .. ft56 normalized by the number of instructions (ft24)

Copyright 2017-2018, flagforge contributors
License: 3-Clause-BSD
"""
import re
import math
from dataclasses import dataclass, field
from ..errors import ContractError

FEATURE_PATTERN = re.compile(r'^ft([1-9]\d*)$')
N_STATIC = 56
N_ADDITIONAL = 9
INSTRUCTION_COUNT = 'ft24'
MAX_FEATURE = N_STATIC + N_ADDITIONAL + N_STATIC


def feature_index(feature_id):
    """
    Return the integer index of a feature id ('ft22' -> 22)
    """
    match = FEATURE_PATTERN.match(feature_id)
    if match is None:
        raise ContractError("Invalid feature id '%s'" % feature_id)
    return(int(match.group(1)))


def sort_features(feature_ids):
    "Sort feature ids numerically (ft2 before ft10)"
    return(sorted(feature_ids, key=feature_index))


def feature_group(start, end):
    """
    Return the list of feature ids ft<start> .. ft<end> (inclusive)
    """
    return(['ft%d' % i for i in range(start, end + 1)])


STATIC_FEATURES = feature_group(1, N_STATIC)
ADDITIONAL_FEATURES = feature_group(N_STATIC + 1, N_STATIC + N_ADDITIONAL)
NORMALIZED_FEATURES = feature_group(N_STATIC + N_ADDITIONAL + 1,
                                    MAX_FEATURE)


@dataclass
class FeatureVector:
    """
    Features of one workload

    Attributes
    ----------
    - workload: string, the workload id
    - values: dict of feature id -> float
    - degenerate: bool
        Set by `normalize_features` when ft24 is 0
    """
    workload: str
    values: dict = field(default_factory=dict)
    degenerate: bool = False

    def __post_init__(self):
        for key, value in self.values.items():
            index = feature_index(key)
            if index > MAX_FEATURE:
                raise ContractError(
                    'Feature %s is outside ft1 .. ft%d' % (key, MAX_FEATURE))
            if not math.isfinite(value):
                raise ContractError('Feature %s of %s is not finite'
                                    % (key, self.workload))

    def to_dict(self):
        return({'workload': self.workload, 'values': dict(self.values),
                'degenerate': self.degenerate})

    @classmethod
    def from_dict(cls, d):
        return(cls(d['workload'], dict((k, float(v)) for k, v in
                                       d.get('values', {}).items()),
                   bool(d.get('degenerate', False))))


def normalize_features(vector):
    """
    Extend a feature vector with the normalized features ft66 .. ft121

    ft(65+i) = ft(i) / ft24 for i in 1..56 (only for the ft(i) present).
    When ft24 is 0, the normalized features are set to 0 and the
    returned vector is flagged as degenerate.

    Parameters
    ----------
    vector: a FeatureVector (must contain ft24)

    Returns
    -------
    A new FeatureVector
    """
    if INSTRUCTION_COUNT not in vector.values:
        raise ContractError('Feature vector of %s has no %s: cannot '
                            'normalize' % (vector.workload, INSTRUCTION_COUNT))
    total = vector.values[INSTRUCTION_COUNT]
    values = dict(vector.values)
    degenerate = (total == 0)
    offset = N_STATIC + N_ADDITIONAL
    for i in range(1, N_STATIC + 1):
        key = 'ft%d' % i
        if key not in vector.values:
            continue
        normalized = 0. if degenerate else vector.values[key] / total
        values['ft%d' % (i + offset)] = normalized
    return(FeatureVector(vector.workload, values, degenerate))
