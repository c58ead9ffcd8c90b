"""
This file is part of flagforge.

It defines the detection of the compilers installed on the machine
(several versions of the same compiler can co-exist), the selection of
one of them, and the description of the platform.

Copyright 2017-2018, flagforge contributors
License: 3-Clause-BSD
"""
import os
import re
import time
import socket
import logging
import platform
import subprocess
from dataclasses import dataclass
from ..errors import EnvironmentProblem, ContractError, format_choices
from ..repository.utilities import md5_hex
from .flagspace import parse_version

logger = logging.getLogger(__name__)

COMPILER_NAME = re.compile(r'^(gcc|clang)(-\d+(\.\d+)*)?$')
COMPILER_POLICIES = ('newest', 'prompt', 'explicit')
SYNTHETIC_FAMILY = 'synthetic'


@dataclass(frozen=True)
class CompilerEnv:
    """
    One installed compiler (or the synthetic marker)

    Attributes
    ----------
    - id: string, e.g. 'gcc-7.1.0'
    - family: 'gcc', 'clang' or 'synthetic'
    - version: dotted string
    - path: string, the executable (None for the synthetic marker)
    - detected_at: float (epoch seconds)
    """
    id: str
    family: str
    version: str
    path: str = None
    detected_at: float = 0.

    def __post_init__(self):
        parse_version(self.version)

    @property
    def synthetic(self):
        return(self.family == SYNTHETIC_FAMILY)

    def compatible_with(self, other):
        "Whether `other` is the same compiler family and version"
        return(self.family == other.family and self.version == other.version)

    def to_dict(self):
        return({'id': self.id, 'family': self.family,
                'version': self.version, 'path': self.path,
                'detected_at': self.detected_at})

    @classmethod
    def from_dict(cls, d):
        return(cls(id=d['id'], family=d['family'], version=d['version'],
                   path=d.get('path'),
                   detected_at=float(d.get('detected_at', 0.))))


def synthetic_env(version='1.0'):
    "Return the marker of the synthetic backend"
    return(CompilerEnv('synthetic-%s' % version, SYNTHETIC_FAMILY, version))


def parse_version_output(text):
    """
    Extract the family and version from the output of `<compiler> --version`

    Returns
    -------
    A tuple (family, version), or None when the output is not understood
    """
    lines = text.strip().splitlines()
    if len(lines) == 0:
        return(None)
    first = lines[0]
    family = 'clang' if 'clang' in first.lower() else 'gcc'
    match = re.search(r'version\s+(\d+(\.\d+)+)', first)
    if match is None:
        # e.g. 'gcc (Debian 7.1.0-1) 7.1.0'
        numbers = re.findall(r'\b\d+(?:\.\d+)+\b', first)
        if len(numbers) == 0:
            return(None)
        return(family, numbers[-1])
    return(family, match.group(1))


def detect_compilers(paths=None, timeout=10.):
    """
    Probe directories for gcc/clang executables and query their versions

    Parameters
    ----------
    paths: list of strings, optional
        The directories to probe (default: the directories of PATH)

    timeout: float, optional
        Time limit of each version query

    Returns
    -------
    A list of CompilerEnv, one per distinct (executable, version),
    sorted by family and version
    """
    if paths is None:
        paths = os.environ.get('PATH', '').split(os.pathsep)
    found = {}
    for directory in paths:
        if not directory or not os.path.isdir(directory):
            continue
        for name in sorted(os.listdir(directory)):
            if COMPILER_NAME.match(name) is None:
                continue
            path = os.path.join(directory, name)
            if not (os.path.isfile(path) and os.access(path, os.X_OK)):
                continue
            try:
                proc = subprocess.run([path, '--version'],
                                      capture_output=True, text=True,
                                      timeout=timeout)
            except (OSError, subprocess.SubprocessError) as err:
                logger.debug('Cannot query %s: %s', path, err)
                continue
            parsed = parse_version_output(proc.stdout)
            if proc.returncode != 0 or parsed is None:
                logger.debug('Unrecognized version output of %s', path)
                continue
            family, version = parsed
            key = (os.path.realpath(path), version)
            if key in found:
                continue
            env_id = '%s-%s' % (family, version)
            if env_id in set(e.id for e in found.values()):
                env_id += '@' + md5_hex(key[0])[:6]
            found[key] = CompilerEnv(env_id, family, version, path,
                                     time.time())
            logger.debug('Detected %s at %s', env_id, path)
    return(sorted(found.values(),
                  key=lambda e: (e.family, parse_version(e.version), e.id)))


def select_compiler(envs, policy='newest', explicit=None, family=None,
                    ask=None):
    """
    Select one compiler among the detected ones

    Parameters
    ----------
    envs: list of CompilerEnv

    policy: string
        'newest', 'prompt' (calls `ask`) or 'explicit' (uses `explicit`)

    explicit: string, optional
        Id or executable path of the wanted compiler; when given, it
        overrides the policy

    family: string, optional
        Only consider this compiler family

    ask: callable, optional
        Called with the list of candidates, returns the index of the
        selected one (used by the 'prompt' policy)

    Returns
    -------
    A CompilerEnv
    """
    if policy not in COMPILER_POLICIES:
        raise ContractError(
            "Invalid compiler policy '%s'.\nThe valid policies are:%s"
            % (policy, format_choices(COMPILER_POLICIES)))
    candidates = [e for e in envs if family is None or e.family == family]
    if explicit is not None:
        for env in candidates:
            if explicit in (env.id, env.path):
                return(env)
        raise EnvironmentProblem(
            "Compiler '%s' was not detected.\nThe detected compilers are:%s"
            % (explicit, format_choices(e.id for e in candidates)))
    if policy == 'explicit':
        raise ContractError("The 'explicit' policy needs a compiler id")
    if len(candidates) == 0:
        raise EnvironmentProblem(
            'No compiler was found. Install gcc or clang, or add their '
            'directories to compiler_paths.')
    if policy == 'prompt' and ask is not None and len(candidates) > 1:
        return(candidates[ask(candidates)])
    return(max(candidates, key=lambda e: (parse_version(e.version), e.id)))


def _cpu_model():
    "Return the model name of the processor"
    try:
        with open('/proc/cpuinfo') as f:
            for line in f:
                if line.lower().startswith('model name'):
                    return(line.split(':', 1)[1].strip())
    except OSError:
        pass
    return(platform.processor() or platform.machine() or 'unknown')


def detect_platform():
    """
    Describe the machine

    Returns
    -------
    A dict with the keys 'os', 'cpu_model' and 'hostname_hash'
    """
    return({'os': platform.system() or 'unknown',
            'cpu_model': _cpu_model(),
            'hostname_hash': md5_hex(socket.gethostname())[:16]})


def platform_class(description):
    """
    Key under which crowd results of similar machines are aggregated

    Parameters
    ----------
    description: dict, as returned by `detect_platform`
    """
    return('%s|%s' % (description['cpu_model'], description['os']))
