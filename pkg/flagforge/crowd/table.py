"""
This file is part of flagforge.

It defines the aggregation of crowd-tuning results: the table of shared
solutions of one (scenario, compiler, platform) key, the reports sent by
participants, the merge of a report into a table and the online
classification of the solutions (best / worst species).

Merging is monotone (the highest improvement per workload is kept) and
classification is a pure function of the merged reactions, so that
merging a set of reports in any order yields the same table.

Copyright 2017-2018, flagforge contributors
License: 3-Clause-BSD
"""
import os
import math
import logging
from dataclasses import dataclass, field
from ..errors import ContractError
from ..autotuning.stats import TRUST_THRESHOLD
from ..repository.utilities import md5_hex, read_json, write_json_atomic, \
    FileLock

logger = logging.getLogger(__name__)


def solution_uid(assignment_text):
    """
    Identifier of a shared solution, derived from its rendered flags
    (16 hex characters)
    """
    return(md5_hex(' '.join(assignment_text.split()))[:16])


@dataclass(frozen=True)
class ScenarioKey:
    """
    Key of a scenario table

    Attributes
    ----------
    - scenario: string, scenario id
    - compiler: string, compiler family and version (e.g. 'gcc-4.9.2')
    - platform: string, platform class ('<cpu model>|<os>')
    """
    scenario: str
    compiler: str
    platform: str

    @property
    def table_id(self):
        "File-name-safe identifier of the key"
        return(md5_hex('\n'.join([self.scenario, self.compiler,
                                  self.platform]))[:16])

    def to_dict(self):
        return({'scenario': self.scenario, 'compiler': self.compiler,
                'platform': self.platform})

    @classmethod
    def from_dict(cls, d):
        try:
            return(cls(str(d['scenario']), str(d['compiler']),
                       str(d['platform'])))
        except (KeyError, TypeError) as err:
            raise ContractError('Malformed scenario key: %s' % err)


@dataclass
class SolutionRecord:
    """
    A shared optimization solution and the reactions of workloads to it

    Attributes
    ----------
    - solution_uid: string
    - assignment_text: string, the rendered (pruned) flags
    - best_species: int, number of workloads for which it is the best
    - worst_species: int, number of workloads for which it is the worst
    - highest_improvement, worst_degradation: floats
    - reactions: dict of workload -> [improvement ratio, sample count]
    """
    solution_uid: str
    assignment_text: str
    best_species: int = 0
    worst_species: int = 0
    highest_improvement: float = 1.
    worst_degradation: float = 1.
    reactions: dict = field(default_factory=dict)

    def to_dict(self):
        return({'solution_uid': self.solution_uid,
                'assignment_text': self.assignment_text,
                'best_species': self.best_species,
                'worst_species': self.worst_species,
                'highest_improvement': self.highest_improvement,
                'worst_degradation': self.worst_degradation,
                'reactions': dict((w, [r, n]) for w, (r, n) in
                                  sorted(self.reactions.items()))})

    @classmethod
    def from_dict(cls, d):
        return(cls(solution_uid=d['solution_uid'],
                   assignment_text=d['assignment_text'],
                   best_species=int(d.get('best_species', 0)),
                   worst_species=int(d.get('worst_species', 0)),
                   highest_improvement=float(d.get('highest_improvement',
                                                   1.)),
                   worst_degradation=float(d.get('worst_degradation', 1.)),
                   reactions=dict((w, [float(r), int(n)]) for w, (r, n) in
                                  d.get('reactions', {}).items())))


@dataclass
class ScenarioTable:
    """
    The shared solutions of one scenario key, ordered by best species
    (descending), then highest improvement (descending), then uid
    """
    key: ScenarioKey
    solutions: list = field(default_factory=list)
    # solution uid -> {workload: [ratio, samples]} for uids not yet shared
    pending: dict = field(default_factory=dict)

    def find(self, uid):
        "Return the SolutionRecord `uid`, or None"
        for record in self.solutions:
            if record.solution_uid == uid:
                return(record)
        return(None)

    def workloads(self):
        "Sorted ids of the workloads with at least one reaction"
        return(sorted(set(w for s in self.solutions for w in s.reactions)))

    def to_dict(self):
        return({'key': self.key.to_dict(),
                'solutions': [s.to_dict() for s in self.solutions],
                'pending': dict((uid, dict((w, list(r)) for w, r in
                                        sorted(reactions.items())))
                                for uid, reactions in
                                sorted(self.pending.items()))})

    @classmethod
    def from_dict(cls, d):
        return(cls(ScenarioKey.from_dict(d['key']),
                   [SolutionRecord.from_dict(s)
                    for s in d.get('solutions', [])],
                   dict((uid, dict((w, [float(r), int(n)])
                                   for w, (r, n) in reactions.items()))
                        for uid, reactions in
                        d.get('pending', {}).items())))

    def copy(self):
        return(ScenarioTable.from_dict(self.to_dict()))


@dataclass
class SubmitReport:
    """
    What a participant sends after crowd-tuning one workload

    Attributes
    ----------
    - participant: string, anonymous token
    - key: a ScenarioKey
    - workload: string
    - baseline_digest: string, digest of the baseline statistics
    - reactions: dict of solution uid -> improvement ratio
    - samples: int, number of runs behind each ratio
    - candidate: dict {'assignment_text', 'improvement'}, optional
    """
    participant: str
    key: ScenarioKey
    workload: str
    baseline_digest: str = ''
    reactions: dict = field(default_factory=dict)
    samples: int = 1
    candidate: dict = None

    def to_dict(self):
        return({'participant': self.participant, 'key': self.key.to_dict(),
                'workload': self.workload,
                'baseline_digest': self.baseline_digest,
                'reactions': dict(self.reactions), 'samples': self.samples,
                'candidate': dict(self.candidate) if self.candidate
                else None})

    @classmethod
    def from_dict(cls, d):
        if not isinstance(d, dict):
            raise ContractError('A report should be a JSON object')
        try:
            return(cls(participant=str(d.get('participant', '')),
                       key=ScenarioKey.from_dict(d['key']),
                       workload=d['workload'],
                       baseline_digest=d.get('baseline_digest', ''),
                       reactions=dict((u, float(r)) for u, r in
                                      d.get('reactions', {}).items()),
                       samples=int(d.get('samples', 1)),
                       candidate=d.get('candidate')))
        except (KeyError, TypeError, ValueError) as err:
            raise ContractError('Malformed report: %s' % err)


def _valid_ratio(value):
    return(isinstance(value, (int, float)) and not isinstance(value, bool)
           and math.isfinite(value) and value > 0)


def validate_report(report):
    "Raise a ContractError if a report is malformed"
    if not report.workload:
        raise ContractError('The report has no workload')
    if report.samples < 1:
        raise ContractError('The report has no samples')
    for uid, ratio in report.reactions.items():
        if not _valid_ratio(ratio):
            raise ContractError('Invalid reaction %r for solution %s'
                                % (ratio, uid))
    if report.candidate is not None:
        text = report.candidate.get('assignment_text')
        if not isinstance(text, str) or \
                not _valid_ratio(report.candidate.get('improvement')):
            raise ContractError('Malformed candidate in the report')


def candidate_admissible(report, theta=TRUST_THRESHOLD):
    """
    Whether the candidate of a report beats every shared solution (and
    the baseline) by more than `theta`
    """
    if report.candidate is None:
        return(False)
    improvement = report.candidate['improvement']
    best_shared = max(report.reactions.values(), default=1.)
    return(improvement > best_shared * (1. + theta)
           and improvement > 1. + theta)


def _merge_reaction(reactions, workload, ratio, samples):
    "Keep the highest improvement seen for a workload"
    current = reactions.get(workload)
    if current is None or ratio > current[0]:
        reactions[workload] = [ratio, samples]
    elif ratio == current[0]:
        current[1] = max(current[1], samples)


def add_solution(table, assignment_text):
    """
    Add a solution to a table (e.g. to seed a new scenario with known
    solutions)

    The reactions already received for its uid, while it was not in the
    table, are merged into the new record.

    Returns
    -------
    The SolutionRecord
    """
    uid = solution_uid(assignment_text)
    record = table.find(uid)
    if record is None:
        record = SolutionRecord(uid, ' '.join(assignment_text.split()))
        for workload, (ratio, samples) in \
                sorted(table.pending.pop(uid, {}).items()):
            _merge_reaction(record.reactions, workload, ratio, samples)
        table.solutions.append(record)
        sort_table(table)
    return(record)


def server_merge(table, report, theta=TRUST_THRESHOLD):
    """
    Merge a participant's report into a table

    Parameters
    ----------
    table: a ScenarioTable (not modified)

    report: a SubmitReport

    theta: float, optional
        Classification margin

    Returns
    -------
    The updated ScenarioTable
    """
    validate_report(report)
    if report.key != table.key:
        raise ContractError('The report does not belong to this table')
    table = table.copy()
    for uid, ratio in sorted(report.reactions.items()):
        record = table.find(uid)
        if record is None:
            logger.warning('Keeping reaction to unknown solution %s aside',
                           uid)
            _merge_reaction(table.pending.setdefault(uid, {}),
                            report.workload, ratio, report.samples)
            continue
        _merge_reaction(record.reactions, report.workload, ratio,
                        report.samples)
    if candidate_admissible(report, theta):
        record = add_solution(table, report.candidate['assignment_text'])
        _merge_reaction(record.reactions, report.workload,
                        float(report.candidate['improvement']),
                        report.samples)
    elif report.candidate is not None:
        logger.info('Candidate of %s not admitted', report.workload)
    return(classify(table, theta))


def classify(table, theta=TRUST_THRESHOLD, prune=False):
    """
    Recompute the best/worst species counters of a table

    For each workload, the solution with the highest reaction gets best
    credit if this reaction exceeds 1 + theta, the one with the lowest
    reaction gets worst credit if it is below 1 - theta (ties go to the
    lowest uid).

    Parameters
    ----------
    table: a ScenarioTable (modified in place)

    theta: float, optional

    prune: bool, optional
        Remove the solutions without credit whose reactions never exceed
        1 + theta

    Returns
    -------
    The table
    """
    for record in table.solutions:
        record.best_species = 0
        record.worst_species = 0
        ratios = [r for r, _ in record.reactions.values()]
        record.highest_improvement = max(ratios, default=1.)
        record.worst_degradation = min(ratios, default=1.)
    by_uid = sorted(table.solutions, key=lambda s: s.solution_uid)
    for workload in table.workloads():
        reacting = [(s.reactions[workload][0], s) for s in by_uid
                    if workload in s.reactions]
        best_ratio, best = max(reacting, key=lambda x: x[0])
        # max() and min() return the first (lowest uid) of equal ratios
        if best_ratio > 1. + theta:
            best.best_species += 1
        worst_ratio, worst = min(reacting, key=lambda x: x[0])
        if worst_ratio < 1. - theta:
            worst.worst_species += 1
    if prune:
        kept = [s for s in table.solutions
                if s.best_species > 0 or s.worst_species > 0
                or s.highest_improvement >= 1. + theta]
        if len(kept) < len(table.solutions):
            logger.info('Pruned %d solutions',
                        len(table.solutions) - len(kept))
        table.solutions = kept
    sort_table(table)
    return(table)


def classify_online(table, theta=TRUST_THRESHOLD):
    """
    Recompute the counters of a table and prune the solutions which are
    neither best nor worst for any workload

    Returns
    -------
    A new ScenarioTable
    """
    return(classify(table.copy(), theta, prune=True))


def sort_table(table):
    "Order the solutions of a table"
    table.solutions.sort(key=lambda s: (-s.best_species,
                                        -s.highest_improvement,
                                        s.solution_uid))


def server_top(tables, key, n):
    """
    Return the first `n` solutions of the table of `key`

    Parameters
    ----------
    tables: a TableStore, or a dict of ScenarioKey -> ScenarioTable

    key: a ScenarioKey

    n: int

    Returns
    -------
    A list of SolutionRecord (empty for an unknown key)
    """
    table = tables.get(key)
    if table is None or n <= 0:
        return([])
    return(list(table.solutions[:n]))


class TableStore(object):
    """
    Scenario tables stored as JSON files in a directory
    (one file per key)
    """

    def __init__(self, directory):
        self.directory = os.path.abspath(directory)
        os.makedirs(self.directory, exist_ok=True)

    def path(self, key):
        return(os.path.join(self.directory, key.table_id + '.json'))

    def lock(self, key):
        "Inter-process lock serializing the merges of one key"
        return(FileLock(os.path.join(self.directory,
                                     '.' + key.table_id + '.lock')))

    def get(self, key):
        "Return the table of `key`, or None"
        path = self.path(key)
        if not os.path.isfile(path):
            return(None)
        return(ScenarioTable.from_dict(read_json(path)))

    def save(self, table):
        write_json_atomic(self.path(table.key), table.to_dict())

    def tables(self):
        "Return all stored tables, sorted by table id"
        tables = []
        for name in sorted(os.listdir(self.directory)):
            if name.endswith('.json') and not name.startswith('.'):
                tables.append(ScenarioTable.from_dict(
                    read_json(os.path.join(self.directory, name))))
        return(tables)

    def find_solution(self, uid):
        """
        Return (key, SolutionRecord) for a solution uid, or None
        """
        for table in self.tables():
            record = table.find(uid)
            if record is not None:
                return(table.key, record)
        return(None)

    def seed(self, key, texts):
        """
        Add solutions without reactions to the table of `key`
        (created if needed)

        Returns
        -------
        The list of their uids
        """
        with self.lock(key):
            table = self.get(key) or ScenarioTable(key)
            uids = [add_solution(table, text).solution_uid for text in texts]
            self.save(table)
        return(uids)

    def merge(self, report, theta=TRUST_THRESHOLD, auto_create=True,
              prune=False):
        """
        Merge a report into its stored table

        Parameters
        ----------
        report: a SubmitReport

        theta: float, optional

        auto_create: bool, optional
            Create the table of an unknown key

        prune: bool, optional
            Apply the online classification after the merge

        Returns
        -------
        The updated ScenarioTable
        """
        with self.lock(report.key):
            table = self.get(report.key)
            if table is None:
                if not auto_create:
                    raise ContractError('Unknown scenario key %r'
                                        % (report.key,))
                table = ScenarioTable(report.key)
            table = server_merge(table, report, theta)
            if prune:
                table = classify_online(table, theta)
            self.save(table)
        return(table)

    def classify_all(self, theta=TRUST_THRESHOLD):
        "Apply the online classification to every stored table"
        tables = []
        for table in self.tables():
            with self.lock(table.key):
                table = classify_online(table, theta)
                self.save(table)
            tables.append(table)
        return(tables)
