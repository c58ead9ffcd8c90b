"""
This test file is part of flagforge.

It checks the resolution of the global configuration: defaults, the
repository file, the environment and the command-line overrides.

Usage:
$ py.test tests/test_config.py

Copyright 2017-2018, flagforge contributors
License: 3-Clause-BSD
"""
import os
import json
import pytest
from flagforge.errors import ConfigurationError
from flagforge.cli.config import GlobalConfig, load_config, CONFIG_FILE


def test_defaults(tmp_path):
    config = load_config({'repo_root': str(tmp_path)}, environ={})
    assert config.compiler_policy == 'newest'
    assert config.trust_threshold == 0.05
    assert config.seed is None and config.server_url is None
    assert config.repo_root == os.path.abspath(str(tmp_path))


def test_precedence(tmp_path):
    "file < environment < command line"
    (tmp_path / CONFIG_FILE).write_text(json.dumps({
        'trust_threshold': 0.1, 'seed': 1, 'timeout': 30,
        'server_url': 'http://file'}))
    environ = {'FLAGFORGE_REPO': str(tmp_path), 'FLAGFORGE_SEED': '2'}
    config = load_config({}, environ=environ)
    assert config.trust_threshold == 0.1
    assert config.timeout == 30.
    assert config.seed == 2
    assert config.server_url == 'http://file'

    config = load_config({'seed': 3, 'server_url': None}, environ=environ)
    assert config.seed == 3
    assert config.server_url == 'http://file'


def test_invalid_settings(tmp_path):
    root = str(tmp_path)
    with pytest.raises(ConfigurationError, match='compiler policy'):
        load_config({'repo_root': root, 'compiler_policy': 'oldest'},
                    environ={})
    with pytest.raises(ConfigurationError):
        load_config({'repo_root': root, 'compiler_policy': 'explicit'},
                    environ={})
    with pytest.raises(ConfigurationError):
        load_config({'repo_root': root, 'trust_threshold': 1.5}, environ={})
    with pytest.raises(ConfigurationError):
        load_config({'repo_root': root},
                    environ={'FLAGFORGE_SEED': 'seven'})
    (tmp_path / CONFIG_FILE).write_text(json.dumps({'colour': 'blue'}))
    with pytest.raises(ConfigurationError, match='colour'):
        load_config({'repo_root': root}, environ={})
    (tmp_path / CONFIG_FILE).write_text(json.dumps([1, 2]))
    with pytest.raises(ConfigurationError):
        load_config({'repo_root': root}, environ={})


def test_updated_keeps_the_original():
    config = GlobalConfig()
    changed = config.updated({'seed': 5, 'compiler': None})
    assert changed.seed == 5 and config.seed is None
    assert changed.to_dict()['compiler'] is None
