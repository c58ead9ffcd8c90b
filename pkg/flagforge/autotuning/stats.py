"""
This file is part of flagforge.

It implements the experimental methodology applied to every measured
characteristic: repetition statistics (min, max, mean), expected value
from a histogram, detection of several run-time states, and the trust
gate used when comparing two measurements.

Copyright 2017-2018, flagforge contributors
License: 3-Clause-BSD
"""
import math
from dataclasses import dataclass, field
import numpy as np
from scipy.signal import find_peaks
from ..errors import ContractError

# Relative spread above which a measurement is noisy / untrustable
TRUST_THRESHOLD = 0.05
# Fraction of the highest histogram bin a local maximum must reach
# to count as a separate state
STATE_PROMINENCE = 0.25


@dataclass(frozen=True)
class CharacteristicStats:
    """
    Statistics of the repeated measurements of one characteristic

    Attributes
    ----------
    - n: int, number of samples
    - min, max, mean: floats
    - expected: float
        Center of the most populated histogram bin (equal to min when
        n < 3, where a mode is meaningless)
    - histogram: list of (bin center, count)
    - state_count: int, number of detected run-time states
    - noisy: bool, whether (max - min) / min exceeds the threshold
    """
    n: int
    min: float
    max: float
    mean: float
    expected: float
    histogram: list = field(default_factory=list)
    state_count: int = 1
    noisy: bool = False

    @property
    def spread(self):
        "Half of the (max - min) range"
        return(0.5 * (self.max - self.min))

    def to_dict(self):
        return({'n': self.n, 'min': self.min, 'max': self.max,
                'mean': self.mean, 'expected': self.expected,
                'histogram': [list(b) for b in self.histogram],
                'state_count': self.state_count, 'noisy': self.noisy})

    @classmethod
    def from_dict(cls, d):
        return(cls(n=int(d['n']), min=float(d['min']), max=float(d['max']),
                   mean=float(d['mean']), expected=float(d['expected']),
                   histogram=[(float(c), int(k)) for c, k in
                              d.get('histogram', [])],
                   state_count=int(d.get('state_count', 1)),
                   noisy=bool(d.get('noisy', False))))


@dataclass(frozen=True)
class Comparison:
    """
    Improvement of a candidate measurement over a base measurement

    Attributes
    ----------
    - improvement_min: base.min / candidate.min
    - improvement_expected: base.expected / candidate.expected
    - improvement_mean: base.mean / candidate.mean
    - max_difference: relative disagreement between the min-based and
      the expected-based improvements
    - trustable: bool
    """
    improvement_min: float
    improvement_expected: float
    improvement_mean: float
    max_difference: float
    trustable: bool

    def to_dict(self):
        return({'improvement_min': self.improvement_min,
                'improvement_expected': self.improvement_expected,
                'improvement_mean': self.improvement_mean,
                'max_difference': self.max_difference,
                'trustable': self.trustable})


def count_states(counts):
    """
    Count the local maxima of a histogram whose height reaches
    STATE_PROMINENCE of the highest bin

    Parameters
    ----------
    counts: 1darray of ints

    Returns
    -------
    An int >= 1
    """
    counts = np.asarray(counts, dtype=float)
    # Pad with empty bins, so that maxima on the edges are detected
    padded = np.concatenate(([0.], counts, [0.]))
    peaks, _ = find_peaks(padded, height=STATE_PROMINENCE * counts.max())
    return(max(1, len(peaks)))


def summarize(samples, threshold=TRUST_THRESHOLD):
    """
    Compute the statistics of repeated measurements

    Parameters
    ----------
    samples: list of positive floats

    threshold: float, optional
        Relative spread above which the measurement is flagged noisy

    Returns
    -------
    A CharacteristicStats object
    """
    data = np.asarray(samples, dtype=float)
    if data.size == 0:
        raise ContractError('Cannot summarize an empty list of samples')
    if not np.all(np.isfinite(data)) or np.any(data <= 0):
        raise ContractError('Samples should be positive: got %r'
                            % list(samples))
    n = int(data.size)
    vmin = float(data.min())
    vmax = float(data.max())
    # Clip the mean into [min, max] against rounding on constant samples
    mean = min(max(float(data.mean()), vmin), vmax)

    # Histogram with ceil(sqrt(n)) bins
    if vmax == vmin:
        histogram = [(vmin, n)]
        counts = np.array([n])
        centers = np.array([vmin])
    else:
        n_bins = max(1, int(math.ceil(math.sqrt(n))))
        counts, edges = np.histogram(data, bins=n_bins, range=(vmin, vmax))
        centers = 0.5 * (edges[:-1] + edges[1:])
        histogram = [(float(c), int(k)) for c, k in zip(centers, counts)]

    # Expected value: center of the most populated bin (lowest on ties)
    if n < 3:
        expected = vmin
    else:
        expected = min(max(float(centers[int(np.argmax(counts))]), vmin),
                       vmax)

    return(CharacteristicStats(
        n=n, min=vmin, max=vmax, mean=mean, expected=expected,
        histogram=histogram, state_count=count_states(counts),
        noisy=(vmax - vmin) / vmin > threshold))


def _relative_disagreement(a, b):
    "Relative difference between two positive ratios"
    return(abs(a - b) / min(a, b))


def compare(base, candidate, threshold=TRUST_THRESHOLD):
    """
    Compare a candidate measurement with a base measurement

    The comparison is untrustable when the min-based and expected-based
    improvements disagree by more than `threshold`, when either side is
    noisy, or when either side shows several run-time states.

    Parameters
    ----------
    base, candidate: CharacteristicStats objects

    threshold: float, optional

    Returns
    -------
    A Comparison object
    """
    if candidate.min <= 0 or candidate.expected <= 0 or candidate.mean <= 0:
        raise ContractError('Cannot compare against a zero candidate')
    improvement_min = base.min / candidate.min
    improvement_expected = base.expected / candidate.expected
    improvement_mean = base.mean / candidate.mean
    max_difference = _relative_disagreement(improvement_min,
                                            improvement_expected)
    trustable = (max_difference <= threshold
                 and not base.noisy and not candidate.noisy
                 and base.state_count == 1 and candidate.state_count == 1)
    return(Comparison(improvement_min, improvement_expected,
                      improvement_mean, max_difference, trustable))


def speedup_over_baseline(baseline, variant):
    """
    Ratio of the baseline value to the value of the variant
    (e.g. the -O3 execution time over the time of a solution)

    Parameters
    ----------
    baseline, variant: CharacteristicStats objects

    Returns
    -------
    A float (> 1 when the variant is faster)
    """
    if variant.expected <= 0 or variant.min <= 0:
        raise ContractError('Cannot compute a speedup over a zero variant')
    if baseline.n < 3 or variant.n < 3:
        # The expected value falls back to min with few samples
        return(baseline.min / variant.min)
    return(baseline.expected / variant.expected)
