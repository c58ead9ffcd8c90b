"""
This file is part of flagforge.

It defines the values produced by one execution of the pipeline
(compile + repeated runs): the outcome of each run, the raw
characteristics of the whole execution, and the kinds of failures.

Copyright 2017-2018, flagforge contributors
License: 3-Clause-BSD
"""
import time
from enum import Enum
from dataclasses import dataclass, field
from .stats import summarize, TRUST_THRESHOLD

# Characteristics recorded for every successful execution
CHARACTERISTICS = ('execution_time', 'binary_size', 'object_size',
                   'compile_time')


class MonotonicClock(object):
    """
    Source of strictly increasing time stamps (in seconds)

    Consecutive calls never return the same value, even on platforms
    where the performance counter is coarse.
    """

    def __init__(self):
        self._last = None

    def stamp(self):
        "Return the current stamp"
        now = time.perf_counter_ns()
        if self._last is not None and now <= self._last:
            now = self._last + 1
        self._last = now
        return(now * 1.e-9)


class FailureKind(str, Enum):
    "The ways a pipeline can fail"
    COMPILER_CRASH = 'COMPILER_CRASH'
    COMPILE_ERROR = 'COMPILE_ERROR'
    RUNTIME_CRASH = 'RUNTIME_CRASH'
    WRONG_OUTPUT = 'WRONG_OUTPUT'
    TIMEOUT = 'TIMEOUT'

    @property
    def at_compile_time(self):
        return(self in (FailureKind.COMPILER_CRASH,
                        FailureKind.COMPILE_ERROR))


def failure_from(value):
    "Convert a string (or None) to a FailureKind (or None)"
    if value is None:
        return(None)
    return(FailureKind(value))


@dataclass(frozen=True)
class RunOutcome:
    """
    Outcome of one run of a compiled workload

    Attributes
    ----------
    - wall_time: float (seconds)
    - exit_status: int
    - output_ok: bool, or None when the output was not validated
      (non-zero exit status, or no reference output)
    - failure: FailureKind or None
    - started_at, finished_at: floats, monotonic stamps (seconds)
      (not part of the equality of two outcomes)
    - region_time: float or None
        Time of the instrumented region, when the workload reports it
    """
    wall_time: float
    exit_status: int
    output_ok: bool = None
    failure: FailureKind = None
    started_at: float = field(default=0., compare=False)
    finished_at: float = field(default=0., compare=False)
    region_time: float = None

    @property
    def measured_time(self):
        "The time retained as execution time for this run"
        if self.region_time is not None:
            return(self.region_time)
        return(self.wall_time)

    def to_dict(self):
        return({'wall_time': self.wall_time,
                'exit_status': self.exit_status,
                'output_ok': self.output_ok,
                'failure': self.failure.value if self.failure else None,
                'started_at': self.started_at,
                'finished_at': self.finished_at,
                'region_time': self.region_time})

    @classmethod
    def from_dict(cls, d):
        return(cls(wall_time=float(d['wall_time']),
                   exit_status=int(d['exit_status']),
                   output_ok=d.get('output_ok'),
                   failure=failure_from(d.get('failure')),
                   started_at=float(d.get('started_at', 0.)),
                   finished_at=float(d.get('finished_at', 0.)),
                   region_time=d.get('region_time')))


@dataclass(frozen=True)
class PipelineResult:
    """
    Measured behavior of one compile + repeated runs

    Attributes
    ----------
    - compile_ok: bool
    - compile_time: float (seconds)
    - binary_size, object_size: ints (bytes)
    - binary_md5: string (hex digest), None when the compilation failed
    - runs: list of RunOutcome
    - failure: FailureKind or None (first failure observed)
    - flags: string, the rendered command-line flags
    """
    compile_ok: bool
    compile_time: float = 0.
    binary_size: int = 0
    object_size: int = 0
    binary_md5: str = None
    runs: list = field(default_factory=list)
    failure: FailureKind = None
    flags: str = ''

    def samples(self):
        """
        Return the raw samples of each characteristic

        Returns
        -------
        A dict of characteristic name -> list of floats
        (empty when the pipeline failed)
        """
        if not self.compile_ok or self.failure is not None \
                or len(self.runs) == 0:
            return({})
        return({'execution_time': [r.measured_time for r in self.runs],
                'binary_size': [float(self.binary_size)],
                'object_size': [float(self.object_size)],
                'compile_time': [max(self.compile_time, 1e-9)]})

    def characteristics(self, threshold=TRUST_THRESHOLD):
        """
        Return the statistics of each characteristic

        Returns
        -------
        A dict of characteristic name -> CharacteristicStats
        """
        return(dict((name, summarize(values, threshold))
                    for name, values in self.samples().items()))

    def to_dict(self):
        return({'compile_ok': self.compile_ok,
                'compile_time': self.compile_time,
                'binary_size': self.binary_size,
                'object_size': self.object_size,
                'binary_md5': self.binary_md5,
                'runs': [r.to_dict() for r in self.runs],
                'failure': self.failure.value if self.failure else None,
                'flags': self.flags})

    @classmethod
    def from_dict(cls, d):
        return(cls(compile_ok=bool(d['compile_ok']),
                   compile_time=float(d.get('compile_time', 0.)),
                   binary_size=int(d.get('binary_size', 0)),
                   object_size=int(d.get('object_size', 0)),
                   binary_md5=d.get('binary_md5'),
                   runs=[RunOutcome.from_dict(r) for r in d.get('runs', [])],
                   failure=failure_from(d.get('failure')),
                   flags=d.get('flags', '')))
