"""
This test file is part of flagforge.

It compiles and runs a bundled workload with the compilers installed on
the machine, autotunes it and replays the recorded points. It is skipped
when no gcc or clang is found.

Usage:
$ py.test tests/test_real_compiler.py

Copyright 2017-2018, flagforge contributors
License: 3-Clause-BSD
"""
import pytest
from flagforge.autotuning.compilers import detect_compilers
from flagforge.autotuning.explorer import Scenario
from flagforge.autotuning.flagspace import FlagAssignment, SamplingPolicy
from flagforge.autotuning.pipeline import PipelineRequest
from flagforge.autotuning.replay import replay
from flagforge.workloads.registry import register_bundled

COMPILERS = detect_compilers()


@pytest.mark.skipif(len(COMPILERS) == 0, reason='no gcc or clang found')
@pytest.mark.parametrize('env', COMPILERS, ids=[e.id for e in COMPILERS])
def test_optimization_pays_off(registry, pipeline, env):
    "-O3 makes the blocked matrix multiplication faster than no flags"
    register_bundled(registry, 'shared-matmul')

    def measure(base_level):
        request = PipelineRequest(
            'shared-matmul', 'matrix-128', None,
            FlagAssignment(base_level, {}), env, repetitions=3,
            timeout=120.)
        result = pipeline.execute(request)
        assert result.compile_ok and result.failure is None
        return(result)

    plain = measure('')
    optimized = measure('-O3')
    assert min(optimized.samples()['execution_time']) < \
        min(plain.samples()['execution_time'])
    # Deterministic build: the same flags give the same binary
    assert measure('-O3').binary_md5 == optimized.binary_md5


@pytest.mark.skipif(len(COMPILERS) == 0, reason='no gcc or clang found')
@pytest.mark.parametrize('env', COMPILERS, ids=[e.id for e in COMPILERS])
def test_autotune_and_replay(registry, explorer, store, env):
    "A short session on the machine, then every recorded point replayed"
    register_bundled(registry, 'shared-matmul')
    scenario = Scenario(iterations=12, repetitions=3, timeout=120.,
                        sampling=SamplingPolicy(include_probability=0.1,
                                                seed=5))
    entry_uid = explorer.autotune(scenario, 'shared-matmul', 'matrix-128',
                                  env, alias='matmul')
    points = store.load_points(entry_uid)
    assert len(points) == 13
    assert len(store.frontier(entry_uid)) >= 1
    for point in points:
        # Wall-clock timings of a loaded machine: a factor of two at most
        report = replay(store, explorer.pipeline, 'matmul', point.point_uid,
                        tolerance=1., env=env)
        assert report.passed, report.to_dict()
        if point.failure is None:
            assert report.differences['binary_size'] == 0.
