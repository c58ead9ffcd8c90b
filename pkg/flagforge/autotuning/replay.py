"""
This file is part of flagforge.

It defines the replay of a recorded point: the pipeline is executed again
with the stored inputs, and the differences in the outputs are reported.

Copyright 2017-2018, flagforge contributors
License: 3-Clause-BSD
"""
import logging
from dataclasses import dataclass, field
from ..errors import EnvironmentProblem, format_choices
from ..repository.utilities import measurement_lock
from .compilers import detect_compilers
from .pipeline import PipelineRequest, DEFAULT_TIMEOUT
from .stats import TRUST_THRESHOLD

logger = logging.getLogger(__name__)


@dataclass
class ReplayReport:
    """
    Differences between a recorded point and its replay

    Attributes
    ----------
    - entry_uid, point_uid: strings
    - compiler: string, id of the compiler used for the replay
    - differences: dict of characteristic -> relative difference of the
      expected values
    - within_tolerance: dict of characteristic -> bool
    - md5_match: bool or None (informative only)
    - original_failure, replayed_failure: strings or None
    - behavior_changed: bool, whether the failure kind differs
    - tolerance: float
    """
    entry_uid: str
    point_uid: str
    compiler: str
    differences: dict = field(default_factory=dict)
    within_tolerance: dict = field(default_factory=dict)
    md5_match: bool = None
    original_failure: str = None
    replayed_failure: str = None
    behavior_changed: bool = False
    tolerance: float = TRUST_THRESHOLD

    @property
    def passed(self):
        return(not self.behavior_changed and
               all(self.within_tolerance.values()))

    def to_dict(self):
        return({'entry_uid': self.entry_uid, 'point_uid': self.point_uid,
                'compiler': self.compiler,
                'differences': dict(self.differences),
                'within_tolerance': dict(self.within_tolerance),
                'md5_match': self.md5_match,
                'original_failure': self.original_failure,
                'replayed_failure': self.replayed_failure,
                'behavior_changed': self.behavior_changed,
                'tolerance': self.tolerance, 'passed': self.passed})


def compatible_env(recorded, available=None, compiler_paths=None):
    """
    Find a compiler compatible with the one of a recorded entry

    Parameters
    ----------
    recorded: a CompilerEnv

    available: list of CompilerEnv, optional
        Candidates (default: the detected compilers)

    compiler_paths: list of strings, optional
        Directories probed when `available` is None

    Returns
    -------
    A CompilerEnv with the same family and version
    """
    if recorded.synthetic:
        return(recorded)
    if available is None:
        available = detect_compilers(compiler_paths)
    for env in available:
        if env.compatible_with(recorded):
            return(env)
    raise EnvironmentProblem(
        'No compiler compatible with %s %s.\nThe detected compilers are:%s'
        % (recorded.family, recorded.version,
           format_choices(e.id for e in available)))


def replay(store, pipeline, uid_or_alias, point_uid,
           tolerance=TRUST_THRESHOLD, env=None, available=None,
           threshold=TRUST_THRESHOLD):
    """
    Execute a recorded point again and report the differences

    Parameters
    ----------
    store: an ExperimentStore

    pipeline: a Pipeline

    uid_or_alias, point_uid: strings

    tolerance: float, optional
        Relative difference accepted on each characteristic

    env: a CompilerEnv, optional
        Replay with this compiler instead of a compatible one (e.g. to
        check whether a newer compiler fixed a crash)

    available: list of CompilerEnv, optional
        Candidate compilers (default: the detected ones)

    threshold: float, optional
        Trust threshold of the statistics

    Returns
    -------
    A ReplayReport
    """
    entry = store.load_entry(uid_or_alias)
    point = store.load_point(entry.entry_uid, point_uid)
    if env is None:
        env = compatible_env(entry.compiler, available)
    info = point.replay_info
    request = PipelineRequest(
        workload=entry.workload, dataset=info.get('dataset', entry.dataset),
        command_key=info.get('command_key'), assignment=point.assignment,
        env=env, repetitions=int(info.get('repetitions', 1)),
        timeout=float(info.get('timeout', DEFAULT_TIMEOUT)),
        seed=int(info.get('seed', 0)))
    with measurement_lock(store.repo_root):
        result = pipeline.execute(request)

    report = ReplayReport(entry.entry_uid, point.point_uid, env.id,
                          tolerance=tolerance)
    report.original_failure = point.failure.value if point.failure else None
    report.replayed_failure = result.failure.value if result.failure \
        else None
    report.behavior_changed = (report.original_failure !=
                               report.replayed_failure)
    if point.binary_md5 is not None and result.binary_md5 is not None:
        report.md5_match = (point.binary_md5 == result.binary_md5)
        if not report.md5_match:
            logger.info('Binary MD5 differs from the recorded one')

    replayed = result.characteristics(threshold)
    for name, original in point.characteristics.items():
        if name not in replayed:
            continue
        old = original.expected
        new = replayed[name].expected
        difference = abs(new - old) / old
        report.differences[name] = difference
        report.within_tolerance[name] = difference <= tolerance
    if report.behavior_changed:
        logger.warning('Point %s: failure %s became %s', point.point_uid,
                       report.original_failure, report.replayed_failure)
    return(report)
