"""
This test file is part of flagforge.

It drives the `flagforge` command line on synthetic workloads: exit
codes, JSON output, a complete autotuning session, and the crowd and
model commands.

Usage:
$ py.test tests/test_cli.py

Copyright 2017-2018, flagforge contributors
License: 3-Clause-BSD
"""
import json
import pytest
from flagforge.cli.main import dispatch
from flagforge.crowd.table import ScenarioKey, SubmitReport, TableStore

TOY = {'id': 'toy', 'kind': 'synthetic',
       'synthetic': {'flag_effects': {'unroll': {'time_multiplier': 0.5,
                                                 'size_delta': 300},
                                      'inline': {'time_multiplier': 0.9},
                                      'crash': {'failure': 'RUNTIME_CRASH'},
                                      'verbose': {}},
                     'base_time': 1., 'base_size': 10000}}

# Explicit space: a CPU-specific flag and a parametric one
TAGGED = {'id': 'tagged', 'kind': 'synthetic', 'synthetic': {
    'flag_effects': {'unroll': {'time_multiplier': 0.8}},
    'flagspace': {'compiler': 'synthetic', 'base_levels': ['', '-O3'],
                  'flags': [
                      {'name': 'unroll', 'kind': 'boolean',
                       'on': '-funroll', 'off': '-fno-unroll'},
                      {'name': 'avx', 'kind': 'boolean', 'on': '-mavx',
                       'off': '-mno-avx', 'tags': ['cpu']},
                      {'name': 'unroll-times', 'kind': 'parametric',
                       'template': '--param unroll-times={value}',
                       'min': 1, 'max': 2}]}}}


@pytest.fixture
def cli(repo, tmp_path, capsys):
    """
    Run a command line against the test repository

    Returns (exit code, standard output)
    """
    meta = tmp_path / 'toy.json'
    meta.write_text(json.dumps(TOY))
    capsys.readouterr()

    def run(*argv):
        code = dispatch(list(argv) + ['--repo', repo])
        return(code, capsys.readouterr().out)

    assert run('workload', 'add', '--meta', str(meta))[0] == 0
    return(run)


def as_json(output):
    return(json.loads(output))


def test_usage_errors(cli):
    assert cli('frobnicate')[0] == 1
    assert cli('run')[0] == 1
    assert cli('export', '--entry', 'nosuch', '--columns', 'flags')[0] == 1


def test_errors_as_json(cli):
    code, out = cli('export', '--entry', 'nosuch', '--json')
    assert code == 1
    assert as_json(out)['exit_code'] == 1


def test_workloads(cli):
    code, out = cli('workload', 'list', '--json')
    assert code == 0
    document = as_json(out)
    assert document['workloads'] == ['toy']
    assert 'shared-matmul' in document['bundled']
    code, out = cli('workload', 'show', 'toy', '--json')
    assert as_json(out)['kind'] == 'synthetic'
    assert cli('workload', 'show', 'nosuch')[0] == 1


def test_run(cli):
    code, out = cli('run', '--workload', 'toy', '--flags', '-O3 -funroll',
                    '--json')
    assert code == 0
    document = as_json(out)
    assert document['result']['flags'] == '-O3 -funroll'
    assert document['characteristics']['execution_time']['min'] == 0.5
    assert document['characteristics']['binary_size']['min'] == 10300
    assert 'entry' not in document

    code, out = cli('run', '--workload', 'toy', '--flags', '-O3 -fcrash')
    assert code == 0
    assert out.strip() == 'failure: RUNTIME_CRASH'
    # Flags outside of the flag space
    assert cli('run', '--workload', 'toy', '--flags', '-fnosuch')[0] == 1


def test_run_records_into_an_alias(cli):
    for flags in ('-O3', '-O3 -finline'):
        code, out = cli('run', '--workload', 'toy', '--flags', flags,
                        '--record', 'manual', '--json')
        assert code == 0
    code, out = cli('entries', '--json')
    [entry] = as_json(out)['entries']
    assert entry['alias'] == 'manual' and entry['points'] == 2


def test_autotuning_session(cli):
    code, out = cli('autotune', '--workload', 'toy', '--iterations', '8',
                    '--probability', '0.5', '--record', 'tmp-toy',
                    '--seed', '3', '--json')
    assert code == 0
    summary = as_json(out)
    assert summary['alias'] == 'tmp-toy'
    assert summary['points'] == 9
    assert len(summary['frontier']) >= 1

    code, out = cli('export', '--entry', 'tmp-toy', '--columns',
                    'flags,failure,frontier')
    assert code == 0
    lines = out.strip().split('\n')
    assert lines[0] == 'flags,failure,frontier'
    assert len(lines) == 10

    code, out = cli('plot-data', '--entry', 'tmp-toy', '--json')
    rows = as_json(out)['rows']
    assert sum(r['frontier'] for r in rows) == len(summary['frontier'])

    point = summary['frontier'][0]
    code, out = cli('replay', '--entry', 'tmp-toy', '--point', point,
                    '--json')
    assert code == 0
    assert as_json(out)['passed']

    code, out = cli('reduce', '--entry', 'tmp-toy', '--point', point,
                    '--mode', 'contribution', '--json')
    assert code == 0
    assert 'rows' in as_json(out)



def test_experiment_commands(cli):
    code, out = cli('autotune', '--workload', 'toy', '--iterations', '4',
                    '--record', 'tmp-toy', '--json')
    assert code == 0
    summary = as_json(out)

    code, out = cli('experiment', 'list', '--json')
    assert code == 0
    [entry] = as_json(out)['entries']
    assert entry['alias'] == 'tmp-toy' and entry['points'] == 5

    code, out = cli('experiment', 'show', '--entry', 'tmp-toy', '--json')
    assert code == 0
    document = as_json(out)
    assert document['workload'] == 'toy'
    assert len(document['point_details']) == 5
    assert document['frontier'] == summary['frontier']
    code, out = cli('experiment', 'show', '--entry', 'tmp-toy')
    lines = out.strip().split('\n')
    assert lines[0].startswith('entry %s (tmp-toy)' % summary['entry'])
    assert len(lines) == 6

    code, out = cli('experiment', 'export', '--entry', 'tmp-toy',
                    '--columns', 'flags')
    assert code == 0
    assert len(out.strip().split('\n')) == 6

    code, out = cli('experiment', 'replay', '--entry', 'tmp-toy', '--point',
                    summary['frontier'][0], '--json')
    assert code == 0
    assert as_json(out)['passed']
    assert cli('experiment', 'show', '--entry', 'nosuch')[0] == 1
    assert cli('experiment', 'frobnicate')[0] == 1


def test_flag_classes(cli, tmp_path):
    "Exhaustive sessions over the flag classes switched on"
    meta = tmp_path / 'tagged.json'
    meta.write_text(json.dumps(TAGGED))
    assert cli('workload', 'add', '--meta', str(meta))[0] == 0

    def points(*options):
        code, out = cli('autotune', '--workload', 'tagged', '--exhaustive',
                        '--json', *options)
        assert code == 0
        code, out = cli('experiment', 'show', '--entry',
                        as_json(out)['entry'], '--json')
        return([p['flags'] for p in as_json(out)['point_details']])

    # baseline, then unroll absent or on
    plain = points()
    assert len(plain) == 3
    assert all(f.startswith('-O3') for f in plain)
    # 2 (unroll) x 2 (avx) x 3 (unroll-times absent, 1 or 2)
    classes = points('--cpu-flags', '--parametric-flags')
    assert len(classes) == 13
    assert any('-mavx' in f for f in classes)
    assert any('--param unroll-times=2' in f for f in classes)
    bases = points('--cpu-flags', '--parametric-flags', '--base-flags')
    assert len(bases) == 25
    assert not all(f.startswith('-O3') for f in bases)


def test_reduce_options(cli):
    code, out = cli('run', '--workload', 'toy', '--flags',
                    '-O3 -funroll -fverbose', '--record', 'manual', '--json')
    assert code == 0
    point = as_json(out)['point']

    def reduce(*options):
        code, out = cli('reduce', '--entry', 'manual', '--point', point,
                        '--json', *options)
        assert code == 0
        return(as_json(out)['flags'])

    # The neutral flag goes, with or without the binary comparison
    assert reduce() == '-O3 -funroll'
    assert reduce('--no-md5-shortcut') == '-O3 -funroll'
    assert reduce('--md5-shortcut', '--keep', 'verbose') == \
        '-O3 -funroll -fverbose'
    inverted = reduce('--invert', '--keep', 'inline')
    assert '-fno-crash' in inverted
    assert '-fno-inline' not in inverted
    assert inverted.startswith('-O3')


def test_fuzz(cli):
    code, out = cli('fuzz', '--workload', 'toy', '--iterations', '20',
                    '--probability', '0.5', '--json')
    assert code == 0
    failures = as_json(out)['failures']
    assert set(failures) <= {'RUNTIME_CRASH'}


def test_missing_compiler(cli):
    "A real workload with a compiler which is not installed"
    assert cli('workload', 'bundle', 'susan-smooth')[0] == 0
    code, out = cli('run', '--workload', 'susan-smooth', '--compiler',
                    'nosuch-0.1', '--json')
    assert code == 2
    assert as_json(out)['exit_code'] == 2


def test_crowd_tables_and_models(cli, tmp_path):
    "Classify stored tables, then predict shared solutions from features"
    key = ScenarioKey('autotune', 'gcc-7.1.0', 'cpu|linux')
    store = TableStore(str(tmp_path / 'tables'))
    o2, unroll = store.seed(key, ['-O2', '-O3 -funroll-loops'])
    store.merge(SubmitReport('p', key, 'w1', reactions={o2: 1.5,
                                                        unroll: 1.1}))
    code, out = cli('crowd', 'classify', '--store', str(tmp_path / 'tables'),
                    '--json')
    assert code == 0
    [table] = as_json(out)['tables']
    assert table['solutions'][0]['solution_uid'] == o2

    items = [('w1', 1., o2), ('w2', 2., o2), ('w3', 10., unroll),
             ('w4', 11., unroll)]
    dataset = tmp_path / 'dataset.json'
    dataset.write_text(json.dumps({'items': [
        {'features': {'workload': w, 'values': {'ft1': x}}, 'label': label}
        for w, x, label in items]}))
    model = str(tmp_path / 'model.json')
    code, out = cli('model', 'train', '--dataset', str(dataset), '--output',
                    model, '--features', 'ft1', '--json')
    assert code == 0
    assert as_json(out)['in_sample_accuracy'] == 1.
    code, out = cli('model', 'cv', '--dataset', str(dataset), '--kind',
                    'nearest_neighbor', '--json')
    assert as_json(out)['cv_accuracy'] == 1.

    vector = tmp_path / 'vector.json'
    vector.write_text(json.dumps({'workload': 'new', 'values': {'ft1': 1.5}}))
    code, out = cli('model', 'predict', '--model', model, '--vector',
                    str(vector), '--crowd-store', str(tmp_path / 'tables'))
    assert code == 0
    assert out.strip() == '-O2'
