"""
This file is part of the flagforge test suite.

It defines the fixtures shared by the tests: a temporary repository with
its registry, store and pipeline, and a factory of synthetic workloads.

Copyright 2017-2018, flagforge contributors
License: 3-Clause-BSD
"""
import pytest
from flagforge.workloads.registry import WorkloadRegistry, WorkloadMeta, \
    SyntheticSpec
from flagforge.repository.experiment_store import ExperimentStore
from flagforge.autotuning.pipeline import Pipeline
from flagforge.autotuning.explorer import Explorer
from flagforge.autotuning.compilers import synthetic_env


@pytest.fixture
def repo(tmp_path):
    "Root of an empty repository"
    return(str(tmp_path / 'repo'))


@pytest.fixture
def registry(repo):
    return(WorkloadRegistry(repo))


@pytest.fixture
def store(repo):
    # Seeded, so that the uids of a test are reproducible
    return(ExperimentStore(repo, uid_seed=1234))


@pytest.fixture
def pipeline(registry):
    return(Pipeline(registry))


@pytest.fixture
def explorer(registry, pipeline, store):
    return(Explorer(registry, pipeline, store))


@pytest.fixture
def env():
    "The synthetic compiler"
    return(synthetic_env())


@pytest.fixture
def make_synthetic(registry):
    """
    Factory registering a synthetic workload

    Usage: make_synthetic('w1', {'unroll': {'time_multiplier': 0.8}})
    """
    def make(workload_id, effects, base_time=1., base_size=10000,
             noise=None, dataset_tags=(), flagspace=None,
             feature_file=None):
        spec = {'flag_effects': effects, 'base_time': base_time,
                'base_size': base_size,
                'noise': noise or {'kind': 'none'}}
        if flagspace is not None:
            spec['flagspace'] = flagspace
        meta = WorkloadMeta(id=workload_id, kind='synthetic',
                            synthetic=SyntheticSpec.from_dict(spec),
                            dataset_tags=list(dataset_tags),
                            feature_file=feature_file)
        registry.register_workload(meta)
        return(workload_id)
    return(make)
