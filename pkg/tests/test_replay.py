"""
This test file is part of flagforge.

It checks the replay of recorded points.

Usage:
$ py.test tests/test_replay.py

Copyright 2017-2018, flagforge contributors
License: 3-Clause-BSD
"""
import os
import pytest
from flagforge.errors import EnvironmentProblem
from flagforge.autotuning.explorer import Scenario
from flagforge.autotuning.replay import replay, compatible_env
from flagforge.autotuning.compilers import CompilerEnv
from flagforge.repository.utilities import read_json, write_json_atomic


@pytest.fixture
def entry_uid(explorer, make_synthetic, env):
    make_synthetic('toy', {'unroll': {'time_multiplier': 0.8},
                           'crash': {'failure': 'RUNTIME_CRASH'}})
    return(explorer.autotune(Scenario(iterations=10), 'toy', None, env))


def test_replay_is_exact(store, pipeline, entry_uid):
    for point_uid in store.load_entry(entry_uid).points:
        report = replay(store, pipeline, entry_uid, point_uid)
        assert report.passed
        assert all(d == 0. for d in report.differences.values())
        assert report.md5_match in (True, None)
        assert report.to_dict()['passed']


def test_inflated_point_fails(store, pipeline, entry_uid, repo):
    "A point whose recorded time is 10% off fails a 5% tolerance"
    entry = store.load_entry(entry_uid)
    point_uid = entry.baseline_point
    path = os.path.join(repo, 'experiment', entry_uid, 'points',
                        point_uid + '.json')
    document = read_json(path)
    stats = document['characteristics']['execution_time']
    for key in ('min', 'max', 'mean', 'expected'):
        stats[key] *= 1.1
    write_json_atomic(path, document)

    report = replay(store, pipeline, entry_uid, point_uid, tolerance=0.05)
    assert not report.passed
    assert not report.within_tolerance['execution_time']
    assert report.within_tolerance['binary_size']
    assert report.differences['execution_time'] == \
        pytest.approx(1. - 1. / 1.1)
    assert replay(store, pipeline, entry_uid, point_uid,
                  tolerance=0.1).passed


def test_changed_behavior(store, pipeline, entry_uid, repo):
    "A recorded success which now crashes"
    entry = store.load_entry(entry_uid)
    point = store.load_point(entry_uid, entry.baseline_point)
    path = os.path.join(repo, 'experiment', entry_uid, 'points',
                        point.point_uid + '.json')
    document = read_json(path)
    document['assignment']['values'] = {'crash': 'on'}
    write_json_atomic(path, document)
    report = replay(store, pipeline, entry_uid, point.point_uid)
    assert report.behavior_changed
    assert report.replayed_failure == 'RUNTIME_CRASH'
    assert not report.passed


def test_compatible_env():
    gcc = CompilerEnv('gcc-7.1.0', 'gcc', '7.1.0', '/usr/bin/gcc')
    other = CompilerEnv('gcc-7.1.0', 'gcc', '7.1.0', '/opt/bin/gcc')
    assert compatible_env(gcc, [other]) == other
    with pytest.raises(EnvironmentProblem, match='gcc-6.3.0'):
        compatible_env(gcc, [CompilerEnv('gcc-6.3.0', 'gcc', '6.3.0',
                                         '/usr/bin/gcc-6')])
