"""
This test file is part of flagforge.

It checks the registration of workloads and datasets, the resolution of
the datasets of a workload and the reading of feature files.

Usage:
$ py.test tests/test_registry.py

Copyright 2017-2018, flagforge contributors
License: 3-Clause-BSD
"""
import json
import pytest
from flagforge.errors import ContractError
from flagforge.workloads.registry import WorkloadMeta, DatasetMeta, \
    SyntheticSpec, FlagEffect, NoiseModel, bundled_workloads, \
    register_bundled, template_fields


def real_meta(**changes):
    meta = {'id': 'susan', 'build_template':
            '{compiler} {flags} -o {binary} susan.c',
            'run_commands': {'corners': '{binary} {dataset} {output}'},
            'dataset_tags': ['image'], 'sources': ['susan.c']}
    meta.update(changes)
    return(WorkloadMeta.from_dict(meta))


def test_register_and_load(registry, tmp_path):
    (tmp_path / 'susan.c').write_text('int main(void) { return 0; }\n')
    registry.register_workload(real_meta(), source_dir=str(tmp_path))
    assert registry.list_workloads() == ['susan']
    meta = registry.load_workload('susan')
    assert meta == real_meta()
    # Sources are copied into the entry
    assert (tmp_path / 'repo' / 'workload' / 'susan' / 'susan.c').exists()


def test_duplicate_and_unknown(registry, tmp_path):
    (tmp_path / 'susan.c').write_text('')
    registry.register_workload(real_meta(), source_dir=str(tmp_path))
    with pytest.raises(ContractError, match='already registered'):
        registry.register_workload(real_meta(), source_dir=str(tmp_path))
    with pytest.raises(ContractError, match='susan'):
        registry.load_workload('susna')


def test_invalid_workloads(registry):
    with pytest.raises(ContractError, match='Unresolvable placeholders'):
        registry.register_workload(real_meta(
            build_template='{compiler} {optimizations} a.c'))
    with pytest.raises(ContractError, match='Unresolvable placeholders'):
        registry.register_workload(real_meta(
            run_commands={'run': '{binary} {input}'}))
    with pytest.raises(ContractError, match='build template'):
        registry.register_workload(real_meta(build_template=None))
    with pytest.raises(ContractError):
        registry.register_workload(real_meta(id='../escape'))
    with pytest.raises(ContractError, match='Missing source'):
        registry.register_workload(real_meta(), source_dir='/nonexistent')
    assert template_fields('{compiler} -o {binary}') == \
        {'compiler', 'binary'}


def test_synthetic_workload(registry):
    spec = SyntheticSpec({'unroll': FlagEffect('unroll', 0.8)})
    meta = WorkloadMeta('toy', kind='synthetic', synthetic=spec)
    registry.register_workload(meta)
    loaded = registry.load_workload('toy')
    assert loaded.synthetic == spec
    with pytest.raises(ContractError):
        registry.register_workload(WorkloadMeta('toy2', kind='synthetic'))
    with pytest.raises(ContractError):
        NoiseModel('lognormal')
    with pytest.raises(ContractError):
        FlagEffect('x', failure='EXPLOSION')


def test_datasets_by_tags(registry, tmp_path):
    (tmp_path / 'susan.c').write_text('')
    (tmp_path / 'a.pgm').write_bytes(b'P5')
    registry.register_workload(real_meta(), source_dir=str(tmp_path))
    registry.register_dataset(DatasetMeta('img-a', ['image', 'pgm'],
                                          [str(tmp_path / 'a.pgm')]),
                              source_dir=str(tmp_path))
    registry.register_dataset(DatasetMeta('img-b', ['image', 'jpeg'],
                                          params={'SIZE': 64}))
    registry.register_dataset(DatasetMeta('audio', ['wav']))
    assert [d.id for d in registry.resolve_datasets('susan')] == \
        ['img-a', 'img-b']
    assert [d.id for d in registry.resolve_datasets('susan', 'jpeg')] == \
        ['img-b']
    resolved = registry.resolve_dataset('img-a')
    assert resolved.files[0].endswith('dataset/img-a/a.pgm')
    with pytest.raises(ContractError, match='already registered'):
        registry.register_dataset(DatasetMeta('audio', ['wav']))


def test_missing_dataset_file(registry):
    registry.register_dataset(DatasetMeta('gone', ['image'],
                                          ['/nonexistent/file.pgm']))
    with pytest.raises(ContractError, match='does not exist'):
        registry.resolve_dataset('gone')


def test_feature_file(registry, tmp_path):
    (tmp_path / 'susan.c').write_text('')
    (tmp_path / 'features.json').write_text(json.dumps(
        {'ft1': 3, 'ft24': 120.5, 'ft60': 2}))
    registry.register_workload(real_meta(feature_file='features.json'),
                               source_dir=str(tmp_path))
    vector = registry.load_feature_vector('susan')
    assert vector.values == {'ft1': 3., 'ft24': 120.5, 'ft60': 2.}


def test_malformed_feature_file(registry, tmp_path):
    (tmp_path / 'susan.c').write_text('')
    (tmp_path / 'features.json').write_text(json.dumps({'ft7': 'many'}))
    registry.register_workload(real_meta(feature_file='features.json'),
                               source_dir=str(tmp_path))
    with pytest.raises(ContractError, match='ft7'):
        registry.load_feature_vector('susan')


def test_bundled_workloads(registry):
    assert 'susan-smooth' in bundled_workloads()
    assert 'shared-matmul' in bundled_workloads()
    register_bundled(registry, 'shared-matmul')
    meta = registry.load_workload('shared-matmul')
    assert meta.tunable_params[0].variable == 'CT_BLOCK_SIZE'
    datasets = registry.resolve_datasets('shared-matmul')
    assert [d.params['CT_MATRIX_DIMENSION'] for d in datasets] == [128, 384]
    assert 'ft24' in registry.load_feature_vector('shared-matmul').values
    with pytest.raises(ContractError, match='bundled'):
        register_bundled(registry, 'nosuch')
