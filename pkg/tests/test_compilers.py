"""
This test file is part of flagforge.

It checks the detection and selection of compilers, with stand-in
executables which only answer `--version`.

Usage:
$ py.test tests/test_compilers.py

Copyright 2017-2018, flagforge contributors
License: 3-Clause-BSD
"""
import os
import stat
import pytest
from flagforge.errors import ContractError, EnvironmentProblem
from flagforge.autotuning.compilers import detect_compilers, \
    select_compiler, parse_version_output, detect_platform, platform_class

VERSIONS = {'gcc-7': 'gcc (Debian 7.1.0-1) 7.1.0',
            'gcc-5': 'gcc-5 (Ubuntu 5.4.0-6ubuntu1) 5.4.0 20160609',
            'clang': 'clang version 5.0.1 (tags/RELEASE_501/final)',
            'gcc-broken': 'not probed',
            'cc1': 'not probed'}


@pytest.fixture
def compiler_dir(tmp_path):
    "A directory of executables printing a version banner"
    for name, banner in VERSIONS.items():
        path = tmp_path / name
        path.write_text('#!/bin/sh\necho "%s"\n' % banner)
        os.chmod(str(path), os.stat(str(path)).st_mode | stat.S_IEXEC)
    return(str(tmp_path))


def test_version_banners():
    assert parse_version_output('gcc (GCC) 4.9.2\nCopyright') == \
        ('gcc', '4.9.2')
    assert parse_version_output(
        'Apple clang version 12.0.0 (clang-1200.0.32)') == ('clang', '12.0.0')
    assert parse_version_output('') is None
    assert parse_version_output('no version here') is None


@pytest.mark.skipif(not os.path.exists('/bin/sh'), reason='needs /bin/sh')
def test_detection(compiler_dir):
    envs = detect_compilers([compiler_dir, '/nonexistent'])
    assert [e.id for e in envs] == ['clang-5.0.1', 'gcc-5.4.0', 'gcc-7.1.0']
    assert envs[2].path == os.path.join(compiler_dir, 'gcc-7')
    assert detect_compilers([]) == []


@pytest.mark.skipif(not os.path.exists('/bin/sh'), reason='needs /bin/sh')
def test_selection(compiler_dir):
    envs = detect_compilers([compiler_dir])
    assert select_compiler(envs).id == 'gcc-7.1.0'
    assert select_compiler(envs, family='clang').id == 'clang-5.0.1'
    assert select_compiler(envs, explicit='gcc-5.4.0').id == 'gcc-5.4.0'
    path = os.path.join(compiler_dir, 'clang')
    assert select_compiler(envs, 'explicit', explicit=path).path == path
    assert select_compiler(envs, 'prompt', ask=lambda c: 0).id == \
        'clang-5.0.1'
    with pytest.raises(EnvironmentProblem, match='gcc-7.1.0'):
        select_compiler(envs, explicit='gcc-9')
    with pytest.raises(EnvironmentProblem):
        select_compiler([])
    with pytest.raises(ContractError):
        select_compiler(envs, 'explicit')
    with pytest.raises(ContractError):
        select_compiler(envs, 'oldest')


def test_platform():
    description = detect_platform()
    assert len(description['hostname_hash']) == 16
    assert platform_class(description) == '%s|%s' % (
        description['cpu_model'], description['os'])
