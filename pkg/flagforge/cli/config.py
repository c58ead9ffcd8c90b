"""
This file is part of flagforge.

It defines the global configuration of the command line, resolved from
(later wins): the built-in defaults, the file repo_root/config.json, the
environment variables FLAGFORGE_REPO, FLAGFORGE_SERVER and FLAGFORGE_SEED,
and the command-line options.

Copyright 2017-2018, flagforge contributors
License: 3-Clause-BSD
"""
import os
import dataclasses
from dataclasses import dataclass, field
from ..errors import ConfigurationError, format_choices
from ..autotuning.compilers import COMPILER_POLICIES
from ..autotuning.pipeline import DEFAULT_TIMEOUT
from ..autotuning.stats import TRUST_THRESHOLD
from ..repository.utilities import read_json

CONFIG_FILE = 'config.json'
DEFAULT_REPO = 'flagforge-repo'
ENVIRONMENT = {'FLAGFORGE_REPO': 'repo_root',
               'FLAGFORGE_SERVER': 'server_url',
               'FLAGFORGE_SEED': 'seed'}


@dataclass
class GlobalConfig:
    """
    Settings shared by all the commands

    Attributes
    ----------
    - repo_root: string, the local repository
    - compiler_policy: 'newest', 'prompt' or 'explicit'
    - compiler: string, explicit compiler id (e.g. 'gcc-7')
    - trust_threshold: float in (0, 1)
    - seed: int or None
    - server_url: string or None
    - compiler_paths: list of directories probed for compilers
      (None: the directories of PATH)
    - flagspace_paths: list of directories with flag-space descriptions,
      searched before the shipped ones
    - timeout: float, per compilation and run (seconds)
    - keep_artifacts: bool
    """
    repo_root: str = DEFAULT_REPO
    compiler_policy: str = 'newest'
    compiler: str = None
    trust_threshold: float = TRUST_THRESHOLD
    seed: int = None
    server_url: str = None
    compiler_paths: list = None
    flagspace_paths: list = field(default_factory=list)
    timeout: float = DEFAULT_TIMEOUT
    keep_artifacts: bool = False

    def validate(self):
        "Check the settings and normalize their types"
        if self.compiler_policy not in COMPILER_POLICIES:
            raise ConfigurationError(
                "Invalid compiler policy '%s'.\nThe valid policies are:%s"
                % (self.compiler_policy, format_choices(COMPILER_POLICIES)))
        if self.compiler_policy == 'explicit' and not self.compiler:
            raise ConfigurationError(
                'The explicit compiler policy needs a compiler id')
        try:
            self.trust_threshold = float(self.trust_threshold)
            self.timeout = float(self.timeout)
        except (TypeError, ValueError):
            raise ConfigurationError('trust_threshold and timeout should be '
                                     'numbers')
        if not 0 < self.trust_threshold < 1:
            raise ConfigurationError(
                'The trust threshold should be in (0, 1), got %r'
                % self.trust_threshold)
        if not self.timeout > 0:
            raise ConfigurationError('The timeout should be positive')
        if self.seed is not None:
            try:
                if isinstance(self.seed, (bool, float)):
                    raise ValueError
                self.seed = int(self.seed)
            except (TypeError, ValueError):
                raise ConfigurationError(
                    'The seed should be an integer, got %r' % (self.seed,))
        self.repo_root = os.path.abspath(self.repo_root)
        if os.path.exists(self.repo_root):
            if not os.access(self.repo_root, os.W_OK):
                raise ConfigurationError(
                    'The repository %s is not writable' % self.repo_root)
        else:
            parent = os.path.dirname(self.repo_root)
            if not os.access(parent, os.W_OK):
                raise ConfigurationError(
                    'Cannot create the repository %s' % self.repo_root)
        return(self)

    def updated(self, values):
        "Copy with the non-None entries of `values` applied"
        known = set(f.name for f in dataclasses.fields(self))
        unknown = sorted(set(values) - known)
        if unknown:
            raise ConfigurationError(
                'Unknown configuration keys %s.\nThe valid keys are:%s'
                % (unknown, format_choices(sorted(known))))
        changes = dict((k, v) for k, v in values.items() if v is not None)
        return(dataclasses.replace(self, **changes))

    def to_dict(self):
        return(dataclasses.asdict(self))


def load_config(overrides=None, environ=None):
    """
    Resolve the global configuration

    Parameters
    ----------
    overrides: dict, optional
        Values given on the command line (None entries are ignored)

    environ: dict, optional
        The environment (default: os.environ)

    Returns
    -------
    A validated GlobalConfig
    """
    overrides = dict(overrides or {})
    environ = os.environ if environ is None else environ
    from_env = dict((key, environ[var]) for var, key in ENVIRONMENT.items()
                    if environ.get(var))

    # The repository (where config.json lives) is resolved first
    repo_root = overrides.get('repo_root') or from_env.get('repo_root') \
        or DEFAULT_REPO
    config = GlobalConfig(repo_root=repo_root)
    path = os.path.join(repo_root, CONFIG_FILE)
    if os.path.isfile(path):
        document = read_json(path)
        if not isinstance(document, dict):
            raise ConfigurationError('%s should hold a JSON object' % path)
        document.pop('repo_root', None)
        config = config.updated(document)
    config = config.updated(from_env).updated(overrides)
    return(config.validate())
