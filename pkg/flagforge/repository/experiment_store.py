"""
This file is part of flagforge.

It defines the experiment store: a persistent, UID-addressed repository
of tuning sessions (entries) and of their measured points, with export
of the results as tables.

On disk:
    repo_root/experiment/<entry_uid>/meta.json
    repo_root/experiment/<entry_uid>/points/<point_uid>.json

Copyright 2017-2018, flagforge contributors
License: 3-Clause-BSD
"""
import io
import os
import csv
import time
import logging
import dataclasses
from dataclasses import dataclass, field
from ..errors import ContractError, format_choices
from ..autotuning.flagspace import FlagAssignment
from ..autotuning.stats import CharacteristicStats, TRUST_THRESHOLD
from ..autotuning.results import failure_from
from ..autotuning.compilers import CompilerEnv
from ..autotuning.frontier import FrontierPoint, pareto_filter
from .utilities import read_json, write_json_atomic, list_entries, \
    FileLock, UidGenerator, UID_PATTERN

logger = logging.getLogger(__name__)

DEFAULT_OBJECTIVES = ('execution_time', 'binary_size')
TABLE_COLUMNS = ('point', 'label', 'time', 'time_error', 'time_min',
                 'size', 'object_size', 'compile_time', 'md5', 'failure',
                 'trustable', 'flags', 'frontier')
DEFAULT_COLUMNS = ('point', 'time', 'time_error', 'size', 'flags',
                   'frontier')


@dataclass
class ExperimentPoint:
    """
    One measured (or failed) assignment of an experiment

    Attributes
    ----------
    - point_uid: string (16 hex characters)
    - assignment: a FlagAssignment
    - flags: string, the rendered assignment
    - characteristics: dict of name -> CharacteristicStats
      (empty for failed pipelines)
    - binary_md5: string or None
    - raw_samples: dict of name -> list of floats
    - failure: FailureKind or None
    - replay_info: dict with the keys 'command_key', 'dataset', 'seed',
      'repetitions', 'timeout'
    - label: string, optional (e.g. 'baseline')
    - trustable: bool
        False when the platform drifted before this point was measured
    - tags: dict (e.g. {'reduced_from': uid, 'reduction': 'reduce'})
    """
    point_uid: str
    assignment: FlagAssignment
    flags: str
    characteristics: dict = field(default_factory=dict)
    binary_md5: str = None
    raw_samples: dict = field(default_factory=dict)
    failure: object = None
    replay_info: dict = field(default_factory=dict)
    label: str = None
    trustable: bool = True
    tags: dict = field(default_factory=dict)

    def __post_init__(self):
        if (self.failure is None) == (len(self.characteristics) == 0):
            raise ContractError(
                'Point %s: characteristics should be present exactly when '
                'there is no failure' % self.point_uid)

    @classmethod
    def from_result(cls, point_uid, assignment, result, replay_info,
                    threshold=TRUST_THRESHOLD, label=None, tags=None):
        """
        Build a point from a PipelineResult

        Parameters
        ----------
        point_uid: string

        assignment: a FlagAssignment

        result: a PipelineResult

        replay_info: dict

        threshold: float, optional
            Trust threshold of the statistics

        label, tags: optional
        """
        return(cls(point_uid=point_uid, assignment=assignment,
                   flags=result.flags,
                   characteristics=result.characteristics(threshold),
                   binary_md5=result.binary_md5,
                   raw_samples=result.samples(), failure=result.failure,
                   replay_info=dict(replay_info), label=label,
                   tags=dict(tags or {})))

    def expected(self, name):
        "Expected value of a characteristic"
        return(self.characteristics[name].expected)

    def objective_vector(self, objectives):
        """
        Return the vector of expected values of the objectives
        (the expected value falls back to the min for fewer than 3 runs)
        """
        return(tuple(self.expected(name) for name in objectives))

    def to_dict(self):
        return({'point_uid': self.point_uid,
                'assignment': self.assignment.to_dict(),
                'flags': self.flags,
                'characteristics': dict(
                    (k, s.to_dict()) for k, s in self.characteristics.items()),
                'binary_md5': self.binary_md5,
                'raw_samples': dict((k, list(v)) for k, v in
                                    self.raw_samples.items()),
                'failure': self.failure.value if self.failure else None,
                'replay_info': dict(self.replay_info),
                'label': self.label, 'trustable': self.trustable,
                'tags': dict(self.tags)})

    @classmethod
    def from_dict(cls, d):
        return(cls(point_uid=d['point_uid'],
                   assignment=FlagAssignment.from_dict(d['assignment']),
                   flags=d.get('flags', ''),
                   characteristics=dict(
                       (k, CharacteristicStats.from_dict(s))
                       for k, s in d.get('characteristics', {}).items()),
                   binary_md5=d.get('binary_md5'),
                   raw_samples=dict((k, [float(x) for x in v]) for k, v in
                                    d.get('raw_samples', {}).items()),
                   failure=failure_from(d.get('failure')),
                   replay_info=dict(d.get('replay_info', {})),
                   label=d.get('label'),
                   trustable=bool(d.get('trustable', True)),
                   tags=dict(d.get('tags', {}))))


@dataclass
class ExperimentEntry:
    """
    One tuning session

    Attributes
    ----------
    - entry_uid: string (16 hex characters)
    - scenario_id: string
    - workload, dataset: strings
    - compiler: a CompilerEnv
    - platform: dict (os, cpu_model, hostname_hash)
    - created_at: float (epoch seconds)
    - points: list of point uids, in recording order
    - alias: string, optional (e.g. 'tmp-susan-corners-gcc4-300-rnd')
    - flagspace: dict, the flag-space description used
    - objectives: list of characteristic names
    - baseline_point: string, uid of the baseline point
    - baseline_stats: dict of name -> CharacteristicStats
    """
    entry_uid: str
    scenario_id: str
    workload: str
    dataset: str
    compiler: CompilerEnv
    platform: dict = field(default_factory=dict)
    created_at: float = 0.
    points: list = field(default_factory=list)
    alias: str = None
    flagspace: dict = None
    objectives: list = field(default_factory=lambda: list(DEFAULT_OBJECTIVES))
    baseline_point: str = None
    baseline_stats: dict = field(default_factory=dict)

    def to_dict(self):
        return({'entry_uid': self.entry_uid, 'scenario_id': self.scenario_id,
                'workload': self.workload, 'dataset': self.dataset,
                'compiler': self.compiler.to_dict(),
                'platform': dict(self.platform),
                'created_at': self.created_at, 'points': list(self.points),
                'alias': self.alias, 'flagspace': self.flagspace,
                'objectives': list(self.objectives),
                'baseline_point': self.baseline_point,
                'baseline_stats': dict(
                    (k, s.to_dict()) for k, s in self.baseline_stats.items())})

    @classmethod
    def from_dict(cls, d):
        return(cls(entry_uid=d['entry_uid'], scenario_id=d['scenario_id'],
                   workload=d['workload'], dataset=d.get('dataset'),
                   compiler=CompilerEnv.from_dict(d['compiler']),
                   platform=dict(d.get('platform', {})),
                   created_at=float(d.get('created_at', 0.)),
                   points=list(d.get('points', [])), alias=d.get('alias'),
                   flagspace=d.get('flagspace'),
                   objectives=list(d.get('objectives', DEFAULT_OBJECTIVES)),
                   baseline_point=d.get('baseline_point'),
                   baseline_stats=dict(
                       (k, CharacteristicStats.from_dict(s))
                       for k, s in d.get('baseline_stats', {}).items())))


class ExperimentStore(object):
    """
    Persistent store of experiment entries and points

    A single writer per entry is enforced by a lock file in the entry
    directory; readers never take locks.
    """

    def __init__(self, repo_root, uid_seed=None):
        """
        Parameters
        ----------
        repo_root: string
            The root of the repository

        uid_seed: int, optional
            Seed of the uid generator (for reproducible identifiers)
        """
        self.repo_root = os.path.abspath(repo_root)
        self.root = os.path.join(self.repo_root, 'experiment')
        self.uids = UidGenerator(uid_seed)

    def new_uid(self):
        "Return a fresh 16-hex-character identifier"
        return(self.uids.new_uid())

    def entry_dir(self, entry_uid):
        return(os.path.join(self.root, entry_uid))

    def _lock(self, entry_uid):
        return(FileLock(os.path.join(self.entry_dir(entry_uid), '.lock')))

    def _point_path(self, entry_uid, point_uid):
        return(os.path.join(self.entry_dir(entry_uid), 'points',
                            point_uid + '.json'))

    # Entries
    # -------

    def create_entry(self, scenario_id, workload, dataset, compiler,
                     platform=None, flagspace=None, objectives=None,
                     alias=None):
        """
        Create an empty entry

        Parameters
        ----------
        scenario_id, workload, dataset: strings

        compiler: a CompilerEnv

        platform: dict, optional

        flagspace: dict, optional
            The description of the flag space used by the session

        objectives: list of strings, optional

        alias: string, optional
            A human-readable name, unique in the store

        Returns
        -------
        An ExperimentEntry
        """
        if alias is not None:
            if UID_PATTERN.match(alias):
                raise ContractError(
                    "Alias '%s' could be mistaken for a uid" % alias)
            if self.find_alias(alias) is not None:
                raise ContractError(
                    "An entry with alias '%s' already exists" % alias)
        entry_uid = self.new_uid()
        while os.path.exists(self.entry_dir(entry_uid)):
            entry_uid = self.new_uid()
        entry = ExperimentEntry(
            entry_uid=entry_uid, scenario_id=scenario_id, workload=workload,
            dataset=dataset, compiler=compiler, platform=dict(platform or {}),
            created_at=time.time(), alias=alias, flagspace=flagspace,
            objectives=list(objectives or DEFAULT_OBJECTIVES))
        os.makedirs(os.path.join(self.entry_dir(entry_uid), 'points'))
        self.save_entry(entry)
        logger.info('Created experiment entry %s%s', entry_uid,
                    ' (%s)' % alias if alias else '')
        return(entry)

    def save_entry(self, entry):
        "Write the meta information of an entry"
        write_json_atomic(os.path.join(self.entry_dir(entry.entry_uid),
                                       'meta.json'), entry.to_dict())

    def find_alias(self, alias):
        "Return the uid of the entry called `alias`, or None"
        for entry_uid in list_entries(self.root):
            meta = read_json(os.path.join(self.entry_dir(entry_uid),
                                          'meta.json'))
            if meta.get('alias') == alias:
                return(entry_uid)
        return(None)

    def resolve(self, uid_or_alias):
        """
        Return the uid of an entry given by uid or alias
        """
        if os.path.isfile(os.path.join(self.entry_dir(uid_or_alias),
                                       'meta.json')):
            return(uid_or_alias)
        entry_uid = self.find_alias(uid_or_alias)
        if entry_uid is None:
            raise ContractError(
                "Unknown experiment entry '%s'.\nThe entries are:%s"
                % (uid_or_alias, format_choices(
                    e.entry_uid + (' (%s)' % e.alias if e.alias else '')
                    for e in self.list_entries())))
        return(entry_uid)

    def load_entry(self, uid_or_alias):
        "Return the ExperimentEntry given by uid or alias"
        entry_uid = self.resolve(uid_or_alias)
        return(ExperimentEntry.from_dict(read_json(
            os.path.join(self.entry_dir(entry_uid), 'meta.json'))))

    def list_entries(self):
        """
        Return all entries, sorted by creation time then uid
        """
        entries = [ExperimentEntry.from_dict(read_json(
            os.path.join(self.entry_dir(uid), 'meta.json')))
            for uid in list_entries(self.root)]
        entries.sort(key=lambda e: (e.created_at, e.entry_uid))
        return(entries)

    def set_baseline(self, uid_or_alias, point):
        """
        Mark `point` (an ExperimentPoint) as the baseline of the entry
        """
        entry_uid = self.resolve(uid_or_alias)
        with self._lock(entry_uid):
            entry = self.load_entry(entry_uid)
            entry = dataclasses.replace(
                entry, baseline_point=point.point_uid,
                baseline_stats=dict(point.characteristics))
            self.save_entry(entry)
        return(entry)

    # Points
    # ------

    def record_point(self, uid_or_alias, point):
        """
        Durably write a point and add it to the entry index

        Parameters
        ----------
        uid_or_alias: string

        point: an ExperimentPoint

        Returns
        -------
        The point uid
        """
        entry_uid = self.resolve(uid_or_alias)
        if not UID_PATTERN.match(point.point_uid):
            raise ContractError('Invalid point uid %r' % point.point_uid)
        with self._lock(entry_uid):
            path = self._point_path(entry_uid, point.point_uid)
            if os.path.exists(path):
                raise ContractError(
                    'Point %s already exists in entry %s'
                    % (point.point_uid, entry_uid))
            write_json_atomic(path, point.to_dict())
            entry = self.load_entry(entry_uid)
            entry.points.append(point.point_uid)
            self.save_entry(entry)
        logger.debug('Recorded point %s in %s', point.point_uid, entry_uid)
        return(point.point_uid)

    def remove_point(self, uid_or_alias, point_uid):
        "Remove a point from an entry"
        entry_uid = self.resolve(uid_or_alias)
        with self._lock(entry_uid):
            entry = self.load_entry(entry_uid)
            if point_uid not in entry.points:
                raise ContractError('Unknown point %s in entry %s'
                                    % (point_uid, entry_uid))
            entry.points.remove(point_uid)
            self.save_entry(entry)
            os.remove(self._point_path(entry_uid, point_uid))

    def load_point(self, uid_or_alias, point_uid):
        "Return the ExperimentPoint `point_uid` of an entry"
        entry_uid = self.resolve(uid_or_alias)
        path = self._point_path(entry_uid, point_uid)
        if not os.path.isfile(path):
            raise ContractError(
                "Unknown point '%s' in entry %s" % (point_uid, entry_uid))
        return(ExperimentPoint.from_dict(read_json(path)))

    def load_points(self, uid_or_alias):
        "Return the points of an entry, in recording order"
        entry = self.load_entry(uid_or_alias)
        return([self.load_point(entry.entry_uid, uid)
                for uid in entry.points])

    # Analysis
    # --------

    def frontier(self, uid_or_alias):
        """
        Return the uids of the points on the Pareto frontier of the entry
        (failed points never belong to it)
        """
        entry = self.load_entry(uid_or_alias)
        return(frontier_uids(self.load_points(entry.entry_uid),
                             entry.objectives))

    def export_table(self, uid_or_alias, columns=None):
        """
        Export the points of an entry as CSV text

        Parameters
        ----------
        uid_or_alias: string

        columns: list of strings, optional
            Among TABLE_COLUMNS (default: DEFAULT_COLUMNS). 'time' is the
            expected execution time and 'time_error' is (max - min) / 2.

        Returns
        -------
        A string: a header line, then one line per point
        """
        columns = list(columns or DEFAULT_COLUMNS)
        unknown = [c for c in columns if c not in TABLE_COLUMNS]
        if unknown:
            raise ContractError(
                'Unknown columns %s.\nThe available columns are:%s'
                % (unknown, format_choices(TABLE_COLUMNS)))
        entry = self.load_entry(uid_or_alias)
        points = self.load_points(entry.entry_uid)
        on_frontier = set(frontier_uids(points, entry.objectives))
        buffer = io.StringIO()
        writer = csv.writer(buffer, lineterminator='\n')
        writer.writerow(columns)
        for point in points:
            row = _table_row(point, point.point_uid in on_frontier)
            writer.writerow([row[c] for c in columns])
        return(buffer.getvalue())

    def plot_data(self, uid_or_alias):
        """
        Return the (time, size, label, frontier) tuples of the successful
        points of an entry, to draw the frontier with an external tool

        Returns
        -------
        A list of dicts with the keys 'point', 'time', 'size', 'label'
        and 'frontier'
        """
        entry = self.load_entry(uid_or_alias)
        points = self.load_points(entry.entry_uid)
        on_frontier = set(frontier_uids(points, entry.objectives))
        rows = []
        for point in points:
            if point.failure is not None:
                continue
            rows.append({'point': point.point_uid,
                         'time': point.expected('execution_time'),
                         'size': int(point.expected('binary_size')),
                         'label': point.label or point.flags,
                         'frontier': point.point_uid in on_frontier})
        return(rows)


def frontier_uids(points, objectives):
    """
    Return the uids of the non-dominated points among `points`
    (ExperimentPoint objects), for the given objectives
    """
    candidates = [FrontierPoint(p.point_uid, p.objective_vector(objectives))
                  for p in points if p.failure is None]
    return([p.point_uid for p in pareto_filter(candidates)])


def _table_row(point, on_frontier):
    "Values of all TABLE_COLUMNS for one point"
    row = dict((c, '') for c in TABLE_COLUMNS)
    row.update(point=point.point_uid, label=point.label or '',
               md5=point.binary_md5 or '',
               failure=point.failure.value if point.failure else '',
               trustable='yes' if point.trustable else 'no',
               flags=point.flags, frontier='yes' if on_frontier else 'no')
    if point.failure is None:
        time_stats = point.characteristics['execution_time']
        row.update(time=str(time_stats.expected),
                   time_error=str(time_stats.spread),
                   time_min=str(time_stats.min),
                   size=str(int(point.expected('binary_size'))),
                   object_size=str(int(point.expected('object_size')))
                   if 'object_size' in point.characteristics else '',
                   compile_time=str(point.expected('compile_time')))
    return(row)
