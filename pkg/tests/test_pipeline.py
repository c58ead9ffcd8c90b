"""
This test file is part of flagforge.

It checks the program pipeline: the synthetic backend, failures returned
as data, and the real backend driven by a stand-in compiler script.

Usage:
$ py.test tests/test_pipeline.py

Copyright 2017-2018, flagforge contributors
License: 3-Clause-BSD
"""
import os
import stat
import pytest
from flagforge.errors import ContractError
from flagforge.autotuning.flagspace import FlagAssignment
from flagforge.autotuning.pipeline import PipelineRequest, validate_output
from flagforge.autotuning.results import FailureKind, PipelineResult
from flagforge.autotuning.compilers import CompilerEnv
from flagforge.repository.utilities import md5_hex
from flagforge.workloads.registry import WorkloadMeta, DatasetMeta


def request_for(workload, env, values=None, **kwargs):
    assignment = FlagAssignment('', dict(values or {}))
    return(PipelineRequest(workload, None, None, assignment, env, **kwargs))


def test_synthetic_is_deterministic(pipeline, make_synthetic, env):
    make_synthetic('toy', {'unroll': {'time_multiplier': 0.5,
                                      'size_delta': 200}})
    request = request_for('toy', env, {'unroll': 'on'}, repetitions=3)
    first = pipeline.execute(request)
    assert first == pipeline.execute(request)
    assert first.compile_ok and first.failure is None
    assert [r.wall_time for r in first.runs] == [0.5] * 3
    assert first.binary_size == 10200
    assert first.flags == '-funroll'


def test_neutral_flags_keep_the_binary(pipeline, make_synthetic, env):
    "The digest only changes with effective flags"
    make_synthetic('toy', {'unroll': {'time_multiplier': 0.5},
                           'verbose-asm': {}})
    base = pipeline.execute(request_for('toy', env))
    neutral = pipeline.execute(request_for('toy', env,
                                           {'verbose-asm': 'on'}))
    effective = pipeline.execute(request_for('toy', env, {'unroll': 'on'}))
    assert base.binary_md5 == neutral.binary_md5
    assert base.binary_md5 != effective.binary_md5


def test_failures_are_data(pipeline, make_synthetic, env):
    make_synthetic('toy', {'bad-alias': {'failure': 'COMPILE_ERROR'},
                           'bad-vect': {'failure': 'WRONG_OUTPUT'},
                           'slow': {'time_multiplier': 1000.}})
    result = pipeline.execute(request_for('toy', env, {'bad-alias': 'on'}))
    assert not result.compile_ok
    assert result.failure == FailureKind.COMPILE_ERROR
    assert result.samples() == {}

    result = pipeline.execute(request_for('toy', env, {'bad-vect': 'on'},
                                          repetitions=5))
    assert result.failure == FailureKind.WRONG_OUTPUT
    # The runs stop at the first failure
    assert len(result.runs) == 1

    result = pipeline.execute(request_for('toy', env, {'slow': 'on'},
                                          timeout=10.))
    assert result.failure == FailureKind.TIMEOUT


def test_compile_only(pipeline, make_synthetic, env):
    make_synthetic('toy', {'unroll': {'size_delta': -100}})
    result = pipeline.execute(request_for('toy', env, {'unroll': 'on'},
                                          compile_only=True))
    assert result.compile_ok and result.runs == []
    assert result.binary_size == 9900


def test_noise_is_seeded(pipeline, make_synthetic, env):
    make_synthetic('noisy', {}, noise={'kind': 'gaussian', 'sigma': 0.05})
    a = pipeline.execute(request_for('noisy', env, repetitions=10, seed=1))
    b = pipeline.execute(request_for('noisy', env, repetitions=10, seed=1))
    c = pipeline.execute(request_for('noisy', env, repetitions=10, seed=2))
    assert a == b
    assert a != c
    stamps = [r.started_at for r in a.runs]
    assert stamps == sorted(set(stamps))


def test_dataset_conditions(pipeline, registry, make_synthetic, env):
    "Effects restricted to some dataset parameters"
    make_synthetic('toy', {'unroll': {'time_multiplier': 0.5,
                                      'when': {'params': {'N': [512, None]}}}},
                   dataset_tags=['matrix'])
    registry.register_dataset(DatasetMeta('small', ['matrix'],
                                          params={'N': 64}))
    registry.register_dataset(DatasetMeta('large', ['matrix'],
                                          params={'N': 1024}))
    times = {}
    for dataset in ('small', 'large'):
        request = PipelineRequest('toy', dataset, None,
                                  FlagAssignment('', {'unroll': 'on'}), env)
        times[dataset] = pipeline.execute(request).runs[0].wall_time
    assert times == {'small': 1., 'large': 0.5}


def test_invalid_requests(pipeline, make_synthetic, env):
    make_synthetic('toy', {'unroll': {}})
    with pytest.raises(ContractError):
        request_for('toy', env, repetitions=0)
    with pytest.raises(ContractError):
        request_for('toy', env, timeout=0.)
    with pytest.raises(ContractError):
        pipeline.execute(request_for('toy', env, {'inline': 'on'}))
    with pytest.raises(ContractError):
        pipeline.execute(request_for('nosuch', env))


def test_validate_output(tmp_path):
    assert validate_output(b'42\n', 'md5:' + md5_hex(b'42\n'))
    assert validate_output(b'43\n', 'md5:' + md5_hex(b'42\n')) is False
    assert validate_output(b'42\n', None) is None
    (tmp_path / 'ref.txt').write_bytes(b'sum 1.0000000001 ok\n')
    numeric = {'mode': 'numeric', 'rel_tol': 1e-6}
    assert validate_output(b'sum 1.0 ok\n', 'ref.txt', numeric,
                           str(tmp_path))
    assert not validate_output(b'sum 1.1 ok\n', 'ref.txt', numeric,
                               str(tmp_path))
    assert not validate_output(b'sum 1.0 ko\n', 'ref.txt', numeric,
                               str(tmp_path))
    assert not validate_output(b'sum 1.0 ok\n', 'ref.txt', None,
                               str(tmp_path))
    # Missing reference file: skipped
    assert validate_output(b'', 'gone.txt', None, str(tmp_path)) is None


def test_result_round_trip(pipeline, make_synthetic, env):
    make_synthetic('toy', {'unroll': {'time_multiplier': 0.5}})
    result = pipeline.execute(request_for('toy', env, {'unroll': 'on'},
                                          repetitions=2))
    assert PipelineResult.from_dict(result.to_dict()) == result


# Stand-in compiler: writes a shell program to the path following -o
FAKE_COMPILER = """#!/bin/sh
while [ $# -gt 0 ]; do
  case "$1" in
    -o) shift; out="$1" ;;
    -fbroken) echo "error: broken" >&2; exit 1 ;;
  esac
  shift
done
cat > "$out" <<'EOF'
#!/bin/sh
echo 42 > "$1"
echo '{"region_time": 0.25}' > flagforge-result.json
EOF
chmod +x "$out"
"""


@pytest.fixture
def fake_compiler(tmp_path):
    path = tmp_path / 'fakecc'
    path.write_text(FAKE_COMPILER)
    os.chmod(str(path), os.stat(str(path)).st_mode | stat.S_IEXEC)
    return(CompilerEnv('gcc-7.1.0', 'gcc', '7.1.0', str(path)))


@pytest.mark.skipif(not os.path.exists('/bin/sh'), reason='needs /bin/sh')
def test_real_backend(registry, pipeline, fake_compiler):
    registry.register_workload(WorkloadMeta(
        'answer', build_template='{compiler} {flags} -o {binary}',
        run_commands={'run': '{binary} {output}'},
        reference_output={'run': 'md5:' + md5_hex(b'42\n')}))
    request = PipelineRequest('answer', None, None,
                              FlagAssignment('-O3', {}), fake_compiler,
                              repetitions=2)
    result = pipeline.execute(request)
    assert result.compile_ok and result.failure is None
    assert result.flags == '-O3'
    assert [r.output_ok for r in result.runs] == [True, True]
    # The instrumented region is preferred to the wall time
    assert result.samples()['execution_time'] == [0.25, 0.25]
    assert result.binary_size > 0 and result.binary_md5 is not None


@pytest.mark.skipif(not os.path.exists('/bin/sh'), reason='needs /bin/sh')
def test_real_backend_failures(registry, pipeline, fake_compiler):
    registry.register_workload(WorkloadMeta(
        'answer', build_template='{compiler} {flags} -fbroken -o {binary}',
        run_commands={'run': '{binary} {output}'}))
    result = pipeline.execute(PipelineRequest(
        'answer', None, None, FlagAssignment('-O3', {}), fake_compiler))
    assert result.failure == FailureKind.COMPILE_ERROR

    registry.register_workload(WorkloadMeta(
        'wrong', build_template='{compiler} {flags} -o {binary}',
        run_commands={'run': '{binary} {output}'},
        reference_output={'run': 'md5:' + md5_hex(b'41\n')}))
    result = pipeline.execute(PipelineRequest(
        'wrong', None, None, FlagAssignment('-O3', {}), fake_compiler))
    assert result.failure == FailureKind.WRONG_OUTPUT
