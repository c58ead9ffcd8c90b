"""
This file is part of flagforge.

It defines the synthetic backend of the pipeline: a workload described
by a SyntheticSpec is "compiled and run" by evaluating the effects of
the active settings, instead of invoking a compiler.

Copyright 2017-2018, flagforge contributors
License: 3-Clause-BSD
"""
import math
import numpy as np
from ..workloads.registry import FAILURE_KINDS
from ..repository.utilities import md5_hex
from .flagspace import version_in_range
from .results import FailureKind, RunOutcome, PipelineResult

# Exit status reported for a simulated segmentation fault / timeout
CRASH_STATUS = -11
TIMEOUT_STATUS = -9


def _as_number(value):
    "Convert a parameter value to a float, or None when not numeric"
    if isinstance(value, bool):
        return(None)
    try:
        number = float(value)
    except (TypeError, ValueError):
        return(None)
    return(number if math.isfinite(number) else None)


def _condition_holds(when, params, compiler_version):
    """
    Check the optional `when` restriction of an effect

    Parameters
    ----------
    when: dict or None
        {"params": {name: [min, max]}, "compiler": version range}
        (a null bound is open)

    params: dict
        The dataset parameters and environment values of the request

    compiler_version: string
    """
    if not when:
        return(True)
    for name, bounds in when.get('params', {}).items():
        value = _as_number(params.get(name))
        if value is None:
            return(False)
        low, high = bounds
        if low is not None and value < low:
            return(False)
        if high is not None and value > high:
            return(False)
    version_range = when.get('compiler')
    if version_range is not None and \
            not version_in_range(compiler_version, version_range):
        return(False)
    return(True)


def _key_matches(key, assignment, params):
    "Whether the setting selected by an effect key is active"
    name, has_value, expected = key.partition('=')
    if not has_value:
        value = assignment.values.get(name)
        return(value is not None and value != 'off')
    if name == 'base':
        return(assignment.base_level == expected)
    if name in assignment.values:
        return(str(assignment.values[name]) == expected)
    if name in params:
        return(str(params[name]) == expected)
    return(False)


def active_effects(spec, assignment, params=None, compiler_version='1.0'):
    """
    Return the effects of `spec` triggered by an assignment

    Parameters
    ----------
    spec: a SyntheticSpec

    assignment: a FlagAssignment

    params: dict, optional
        Dataset parameters (environment values of the assignment are
        added to them)

    compiler_version: string, optional

    Returns
    -------
    A list of FlagEffect, sorted by key
    """
    merged = dict(params or {})
    merged.update(assignment.env_values)
    effects = []
    for key in sorted(spec.flag_effects):
        effect = spec.flag_effects[key]
        if _key_matches(key, assignment, merged) and \
                _condition_holds(effect.when, merged, compiler_version):
            effects.append(effect)
    return(effects)


def _first_failure(effects, compile_time):
    "Return the first failure (in FAILURE_KINDS order) among `effects`"
    kinds = set(e.failure for e in effects if e.failure is not None)
    for kind in FAILURE_KINDS:
        failure = FailureKind(kind)
        if kind in kinds and failure.at_compile_time == compile_time:
            return(failure)
    return(None)


def synthetic_md5(workload_id, effects):
    """
    Digest of the simulated binary: only the non-neutral effects
    (or those with an explicit salt) change it
    """
    salts = sorted(e.md5_salt if e.md5_salt is not None else e.key
                   for e in effects
                   if e.md5_salt is not None or not e.neutral)
    return(md5_hex('|'.join([workload_id] + salts)))


def evaluate(spec, workload_id, assignment, flags='', params=None,
             compiler_version='1.0', repetitions=1, timeout=60., seed=0,
             compile_only=False, clock=None):
    """
    Evaluate a synthetic workload, as the pipeline would measure it

    With the noise model 'none', the result only depends on the
    arguments (two calls yield equal PipelineResult objects).

    Parameters
    ----------
    spec: a SyntheticSpec

    workload_id: string

    assignment: a FlagAssignment

    flags: string
        The rendered flags (stored in the result)

    params: dict, optional
        Parameters of the dataset

    compiler_version: string, optional
        Version of the (synthetic) compiler, used by effects restricted
        to some compiler versions

    repetitions: int
        Number of simulated runs

    timeout: float
        Runs whose simulated time exceeds it fail with TIMEOUT

    seed: int
        Seed of the noise

    compile_only: bool
        Skip the runs

    clock: a MonotonicClock, optional
        Source of the stamps of the runs

    Returns
    -------
    A PipelineResult
    """
    effects = active_effects(spec, assignment, params, compiler_version)

    # Compilation
    compile_failure = _first_failure(effects, compile_time=True)
    if compile_failure is not None:
        return(PipelineResult(compile_ok=False,
                              compile_time=spec.compile_time,
                              failure=compile_failure, flags=flags))
    size = spec.base_size + sum(e.size_delta for e in effects)
    size = max(1, int(size))
    md5 = synthetic_md5(workload_id, effects)
    if compile_only:
        return(PipelineResult(compile_ok=True, compile_time=spec.compile_time,
                              binary_size=size, object_size=size,
                              binary_md5=md5, flags=flags))

    # Runs
    expected_time = spec.base_time * float(
        np.prod([e.time_multiplier for e in effects]))
    run_failure = _first_failure(effects, compile_time=False)
    rng = np.random.default_rng(seed)
    noise = spec.noise
    runs = []
    for _ in range(repetitions):
        started_at = clock.stamp() if clock is not None else 0.
        t = expected_time
        if noise.kind == 'gaussian':
            t *= 1. + rng.normal(0., noise.sigma)
        elif noise.kind == 'bimodal' and rng.random() < noise.probability:
            t *= 1. + noise.offset
        # Noise never makes a run instantaneous
        t = max(t, 1.e-3 * expected_time)
        finished_at = clock.stamp() if clock is not None else 0.
        if t > timeout:
            outcome = RunOutcome(timeout, TIMEOUT_STATUS, None,
                                 FailureKind.TIMEOUT, started_at, finished_at)
        elif run_failure == FailureKind.RUNTIME_CRASH:
            outcome = RunOutcome(t, CRASH_STATUS, None, run_failure,
                                 started_at, finished_at)
        elif run_failure == FailureKind.WRONG_OUTPUT:
            outcome = RunOutcome(t, 0, False, run_failure,
                                 started_at, finished_at)
        elif run_failure == FailureKind.TIMEOUT:
            outcome = RunOutcome(timeout, TIMEOUT_STATUS, None, run_failure,
                                 started_at, finished_at)
        else:
            outcome = RunOutcome(t, 0, True, None, started_at, finished_at)
        runs.append(outcome)
        if outcome.failure is not None:
            break

    failure = next((r.failure for r in runs if r.failure is not None), None)
    return(PipelineResult(compile_ok=True, compile_time=spec.compile_time,
                          binary_size=size, object_size=size, binary_md5=md5,
                          runs=runs, failure=failure, flags=flags))
