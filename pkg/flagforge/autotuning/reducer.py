"""
This file is part of flagforge.

It defines the complexity reduction of found solutions: removal of the
flags which do not influence the monitored characteristics (with the
MD5 short-circuit), explicit inversion of the remaining choices, the
contribution of each flag, and the minimization of the flags which
reproduce a failed pipeline.

Copyright 2017-2018, flagforge contributors
License: 3-Clause-BSD
"""
import logging
from dataclasses import dataclass, field
import numpy as np
from ..errors import ContractError, ReductionError, format_choices
from ..repository.utilities import measurement_lock, read_json
from ..repository.experiment_store import ExperimentPoint
from .flagspace import FlagSpace
from .replay import compatible_env
from .pipeline import PipelineRequest, DEFAULT_TIMEOUT
from .stats import TRUST_THRESHOLD

logger = logging.getLogger(__name__)

CONDITIONS = ('not_worse', 'within_tolerance')
VERDICTS = ('improves', 'degrades', 'neutral')
DEFAULT_CONDITIONS = {'execution_time': 'not_worse',
                      'binary_size': 'not_worse'}


@dataclass(frozen=True)
class PruneConfig:
    """
    When a choice can be removed from a solution

    Attributes
    ----------
    - tolerance: float >= 0
    - use_md5_shortcut: bool
        Accept a removal without running when the binary is unchanged
    - invert: bool
        Also switch off explicitly the flags absent from the solution
    - keep_key: string, optional
        A flag never removed nor inverted
    - seed: int
        Seed of the order in which flags are visited
    - shuffle: bool
        Visit the flags in random order (otherwise in space order)
    - conditions: dict of characteristic -> 'not_worse' or
      'within_tolerance'
    """
    tolerance: float = 0.025
    use_md5_shortcut: bool = True
    invert: bool = False
    keep_key: str = None
    seed: int = 0
    shuffle: bool = True
    conditions: dict = field(
        default_factory=lambda: dict(DEFAULT_CONDITIONS))

    def __post_init__(self):
        if not self.tolerance >= 0:
            raise ContractError('The tolerance should be >= 0')
        for name, condition in self.conditions.items():
            if condition not in CONDITIONS:
                raise ContractError(
                    "Invalid condition '%s' on %s.\nThe valid conditions "
                    "are:%s" % (condition, name, format_choices(CONDITIONS)))

    def holds(self, candidate, best):
        """
        Check the conditions on two dicts of characteristic -> value
        (the candidate, and the best values seen so far)
        """
        for name, condition in self.conditions.items():
            if name not in candidate or name not in best:
                return(False)
            new, old = candidate[name], best[name]
            if condition == 'not_worse':
                if new > old * (1. + self.tolerance):
                    return(False)
            elif abs(new - old) / old > self.tolerance:
                return(False)
        return(True)

    def to_dict(self):
        return({'tolerance': self.tolerance,
                'md5_shortcut': self.use_md5_shortcut,
                'invert': self.invert, 'keep_key': self.keep_key,
                'seed': self.seed, 'shuffle': self.shuffle,
                'conditions': dict(self.conditions)})

    @classmethod
    def from_dict(cls, d):
        return(cls(tolerance=float(d.get('tolerance', 0.025)),
                   use_md5_shortcut=bool(d.get('md5_shortcut', True)),
                   invert=bool(d.get('invert', False)),
                   keep_key=d.get('keep_key'), seed=int(d.get('seed', 0)),
                   shuffle=bool(d.get('shuffle', True)),
                   conditions=dict(d.get('conditions', DEFAULT_CONDITIONS))))


def load_prune_config(path):
    "Read prune conditions from a JSON file"
    return(PruneConfig.from_dict(read_json(path)))


@dataclass
class ContributionReport:
    """
    Contribution of each flag of a solution

    `rows` holds one tuple per flag:
    (flag, delta execution time, delta binary size, verdict), where the
    deltas are the relative changes observed when the flag is removed
    (None when the pipeline then fails).
    """
    rows: list = field(default_factory=list)

    def to_dict(self):
        return({'rows': [{'flag': f, 'delta_time': t, 'delta_size': s,
                          'verdict': v} for f, t, s, v in self.rows]})


def verdict(delta_time, delta_size, tolerance):
    """
    Classify a flag from the changes observed when it is removed

    Removing a flag which improves the solution makes it worse
    (positive deltas).
    """
    deltas = [d for d in (delta_time, delta_size) if d is not None]
    worse = any(d > tolerance for d in deltas)
    better = any(d < -tolerance for d in deltas)
    if worse and not better:
        return('improves')
    if better and not worse:
        return('degrades')
    if worse and better:
        # Execution time decides when the objectives disagree
        return('improves' if delta_time > 0 else 'degrades')
    return('neutral')


class Reducer(object):
    """
    Reduces recorded solutions, re-measuring them on the machine

    Every reduced solution is recorded as a new point of the entry,
    tagged with the point it comes from.
    """

    def __init__(self, pipeline, store, threshold=TRUST_THRESHOLD,
                 available=None):
        """
        Parameters
        ----------
        pipeline: a Pipeline

        store: an ExperimentStore

        threshold: float, optional
            Trust threshold of the statistics

        available: list of CompilerEnv, optional
            Candidate compilers (default: the detected ones)
        """
        self.pipeline = pipeline
        self.store = store
        self.threshold = threshold
        self.available = available

    # Helpers
    # -------

    def _context(self, uid_or_alias, point_uid):
        "Load the entry, point, space and request template of a point"
        entry = self.store.load_entry(uid_or_alias)
        point = self.store.load_point(entry.entry_uid, point_uid)
        if entry.flagspace is not None:
            space = FlagSpace.from_dict(entry.flagspace)
        else:
            workload = self.pipeline.registry.load_workload(entry.workload)
            space = self.pipeline.flagspace_for(workload, entry.compiler)
        env = compatible_env(entry.compiler, self.available)
        info = point.replay_info
        request = PipelineRequest(
            workload=entry.workload,
            dataset=info.get('dataset', entry.dataset),
            command_key=info.get('command_key'),
            assignment=point.assignment, env=env,
            repetitions=int(info.get('repetitions', 1)),
            timeout=float(info.get('timeout', DEFAULT_TIMEOUT)),
            seed=int(info.get('seed', 0)))
        return(entry, point, space, request)

    def _measure(self, request, assignment, compile_only=False):
        return(self.pipeline.execute(
            request.with_assignment(assignment, compile_only)))

    def _values(self, result):
        "Expected values of the characteristics of a result"
        return(dict((name, stats.expected) for name, stats in
                    result.characteristics(self.threshold).items()))

    def _order(self, names, space, config, rng):
        "Order in which the flags are visited during one pass"
        order = [n for n in space.names() if n in names]
        if config.shuffle:
            rng.shuffle(order)
        return(order)

    def _record(self, entry, request, assignment, source, kind):
        "Measure the final assignment and record it"
        result = self._measure(request, assignment)
        replay_info = {'command_key': request.command_key,
                       'dataset': request.dataset, 'seed': request.seed,
                       'repetitions': request.repetitions,
                       'timeout': request.timeout}
        point = ExperimentPoint.from_result(
            self.store.new_uid(), assignment, result, replay_info,
            self.threshold, tags={'reduced_from': source.point_uid,
                                  'reduction': kind})
        self.store.record_point(entry.entry_uid, point)
        return(point)

    def _prune(self, request, start, candidates, config, space, change):
        """
        Apply `change` to the flags of `candidates` one by one, keeping
        each change which leaves the monitored characteristics within the
        conditions; repeat until a full pass changes nothing.

        Returns
        -------
        The final FlagAssignment
        """
        result = self._measure(request, start)
        if result.failure is not None:
            raise ReductionError(
                'The solution fails (%s): it cannot be reduced'
                % result.failure.value)
        current = start
        current_md5 = result.binary_md5
        best = self._values(result)
        rng = np.random.default_rng(config.seed)
        changed = True
        while changed:
            changed = False
            for name in self._order(candidates(current), space, config, rng):
                if name == config.keep_key:
                    continue
                candidate = change(current, name)
                if config.use_md5_shortcut:
                    compiled = self._measure(request, candidate,
                                             compile_only=True)
                    if not compiled.compile_ok:
                        continue
                    if compiled.binary_md5 == current_md5:
                        logger.debug('%s: binary unchanged', name)
                        current = candidate
                        changed = True
                        continue
                measured = self._measure(request, candidate)
                if measured.failure is not None:
                    continue
                values = self._values(measured)
                if config.holds(values, best):
                    current = candidate
                    current_md5 = measured.binary_md5
                    for key, value in values.items():
                        best[key] = min(best.get(key, value), value)
                    changed = True
        return(current)

    # Operations
    # ----------

    def reduce(self, uid_or_alias, point_uid, config=None):
        """
        Remove the flags of a solution which do not influence the
        monitored characteristics

        Parameters
        ----------
        uid_or_alias, point_uid: strings

        config: a PruneConfig, optional

        Returns
        -------
        A tuple (reduced FlagAssignment, recorded ExperimentPoint)
        """
        config = config or PruneConfig()
        entry, point, space, request = self._context(uid_or_alias, point_uid)
        if point.failure is not None:
            raise ContractError(
                'Point %s is a failed pipeline: use minimize_failure'
                % point_uid)
        with measurement_lock(self.store.repo_root):
            reduced = self._prune(
                request, point.assignment, lambda a: set(a.values), config,
                space, lambda a, name: a.without(name))
            new_point = self._record(entry, request, reduced, point,
                                     'reduce')
        logger.info('Reduced %d flags to %d', len(point.assignment.values),
                    len(reduced.values))
        return(reduced, new_point)

    def invert(self, uid_or_alias, point_uid, config=None):
        """
        Explicitly switch off the boolean flags absent from a solution,
        keeping each switch which leaves the conditions satisfied

        Returns
        -------
        A tuple (explicit FlagAssignment, recorded ExperimentPoint)
        """
        config = config or PruneConfig(invert=True)
        entry, point, space, request = self._context(uid_or_alias, point_uid)
        if point.failure is not None:
            raise ContractError(
                'Point %s is a failed pipeline: it cannot be inverted'
                % point_uid)
        booleans = set(d.name for d in space.descriptors
                       if d.kind == 'boolean')

        def absent(assignment):
            return(booleans - set(assignment.values))

        def switch_off(assignment, name):
            return(assignment.with_value(name, 'off'))

        with measurement_lock(self.store.repo_root):
            explicit = self._prune(request, point.assignment, absent, config,
                                   space, switch_off)
            new_point = self._record(entry, request, explicit, point,
                                     'invert')
        return(explicit, new_point)

    def contribution(self, uid_or_alias, point_uid, config=None):
        """
        Measure the solution without each of its flags

        Returns
        -------
        A ContributionReport, one row per flag (space order)
        """
        config = config or PruneConfig()
        entry, point, space, request = self._context(uid_or_alias, point_uid)
        report = ContributionReport()
        with measurement_lock(self.store.repo_root):
            full = self._values(self._measure(request, point.assignment))
            if len(full) == 0:
                raise ContractError(
                    'Point %s fails: no contribution to measure' % point_uid)
            for name in space.names():
                if name not in point.assignment.values:
                    continue
                values = self._values(
                    self._measure(request, point.assignment.without(name)))
                deltas = []
                for key in ('execution_time', 'binary_size'):
                    if key in values:
                        deltas.append((values[key] - full[key]) / full[key])
                    else:
                        deltas.append(None)
                if deltas[0] is None:
                    # The solution fails without this flag
                    report.rows.append((name, None, None, 'improves'))
                    continue
                report.rows.append(
                    (name, deltas[0], deltas[1],
                     verdict(deltas[0], deltas[1], config.tolerance)))
        return(report)

    def minimize_failure(self, uid_or_alias, point_uid, config=None):
        """
        Reduce the flags of a failed pipeline while the same failure
        reproduces; the result is 1-minimal

        Returns
        -------
        A tuple (minimal FlagAssignment, recorded ExperimentPoint)
        """
        config = config or PruneConfig()
        entry, point, space, request = self._context(uid_or_alias, point_uid)
        if point.failure is None:
            raise ContractError('Point %s did not fail' % point_uid)
        kind = point.failure
        compile_only = kind.at_compile_time

        def reproduces(assignment):
            result = self._measure(request, assignment, compile_only)
            return(result.failure == kind)

        rng = np.random.default_rng(config.seed)
        with measurement_lock(self.store.repo_root):
            if not reproduces(point.assignment):
                raise ReductionError(
                    'Failure %s of point %s does not reproduce'
                    % (kind.value, point_uid))
            current = point.assignment
            changed = True
            while changed:
                changed = False
                for name in self._order(set(current.values), space, config,
                                        rng):
                    if name == config.keep_key:
                        continue
                    candidate = current.without(name)
                    if reproduces(candidate):
                        current = candidate
                        changed = True
            new_point = self._record(entry, request, current, point,
                                     'minimize_failure')
        logger.info('Failure %s reproduced with %d flags (from %d)',
                    kind.value, len(current.values),
                    len(point.assignment.values))
        return(current, new_point)
