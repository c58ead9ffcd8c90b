"""
This file is part of flagforge.

It defines the autotuning scenarios: the sampling loop over a flag space,
recording of the measured points according to a policy (all points,
Pareto frontier only, or failures only for compiler fuzzing), and the
sweep of solutions across the datasets of a workload.

Copyright 2017-2018, flagforge contributors
License: 3-Clause-BSD
"""
import logging
import dataclasses
from dataclasses import dataclass, field
import numpy as np
from ..errors import ContractError, format_choices
from ..repository.utilities import measurement_lock, read_json
from ..repository.experiment_store import ExperimentPoint
from .flagspace import FlagAssignment, SamplingPolicy, sample_random, \
    exhaustive, render
from .compilers import detect_platform
from .frontier import dominates
from .pipeline import PipelineRequest, DEFAULT_TIMEOUT
from .stats import TRUST_THRESHOLD, speedup_over_baseline, compare

logger = logging.getLogger(__name__)

RECORD_POLICIES = ('all', 'frontier_only', 'failures_only')
# Number of iterations between two measurements of the baseline
DRIFT_INTERVAL = 50


@dataclass(frozen=True)
class Scenario:
    """
    Definition of an autotuning session

    Attributes
    ----------
    - scenario_id: string
    - objectives: tuple of characteristic names (all minimized)
    - iterations: int >= 0
    - repetitions: int >= 1
    - sampling: a SamplingPolicy
    - record_policy: 'all', 'frontier_only' or 'failures_only'
    - baseline: a FlagAssignment, optional (default: the default base
      level of the space, e.g. '-O3', without flags)
    - exhaustive: bool
        Enumerate the whole space instead of sampling it (`iterations`
        is then ignored)
    - command_key: string, optional
    - timeout: float
    """
    scenario_id: str = 'autotune'
    objectives: tuple = ('execution_time', 'binary_size')
    iterations: int = 10
    repetitions: int = 3
    sampling: SamplingPolicy = SamplingPolicy()
    record_policy: str = 'all'
    baseline: FlagAssignment = None
    exhaustive: bool = False
    command_key: str = None
    timeout: float = DEFAULT_TIMEOUT

    def __post_init__(self):
        if self.iterations < 0:
            raise ContractError('iterations should be >= 0')
        if self.repetitions < 1:
            raise ContractError('repetitions should be >= 1')
        if self.record_policy not in RECORD_POLICIES:
            raise ContractError(
                "Invalid record policy '%s'.\nThe valid policies are:%s"
                % (self.record_policy, format_choices(RECORD_POLICIES)))
        if len(self.objectives) == 0 and \
                self.record_policy != 'failures_only':
            raise ContractError(
                'Scenario %s needs at least one objective' % self.scenario_id)

    def to_dict(self):
        sampling = self.sampling
        return({'scenario_id': self.scenario_id,
                'objectives': list(self.objectives),
                'iterations': self.iterations,
                'repetitions': self.repetitions,
                'sampling': {
                    'include_probability': sampling.include_probability,
                    'enable_parametric': sampling.enable_parametric,
                    'enable_cpu': sampling.enable_cpu,
                    'enable_base': sampling.enable_base,
                    'enable_env': sampling.enable_env,
                    'seed': sampling.seed},
                'record_policy': self.record_policy,
                'baseline': self.baseline.to_dict() if self.baseline
                else None,
                'exhaustive': self.exhaustive,
                'command_key': self.command_key, 'timeout': self.timeout})

    @classmethod
    def from_dict(cls, d):
        baseline = d.get('baseline')
        try:
            return(cls(
                scenario_id=d.get('scenario_id', 'autotune'),
                objectives=tuple(d.get('objectives',
                                       ('execution_time', 'binary_size'))),
                iterations=int(d.get('iterations', 10)),
                repetitions=int(d.get('repetitions', 3)),
                sampling=SamplingPolicy(**d.get('sampling', {})),
                record_policy=d.get('record_policy', 'all'),
                baseline=FlagAssignment.from_dict(baseline)
                if baseline else None,
                exhaustive=bool(d.get('exhaustive', False)),
                command_key=d.get('command_key'),
                timeout=float(d.get('timeout', DEFAULT_TIMEOUT))))
        except TypeError as err:
            raise ContractError('Malformed scenario: %s' % err)


def load_scenario(path):
    "Read a scenario definition (JSON file)"
    return(Scenario.from_dict(read_json(path)))


@dataclass
class ReactionTable:
    """
    Reactions of the datasets of a workload to a list of solutions

    Attributes
    ----------
    - workload: string
    - datasets: list of dataset ids (rows)
    - solutions: list of rendered solutions (columns)
    - reactions: list of rows of floats (speedup over the baseline of
      the dataset), None when a pipeline failed
    - trustable: list of rows of bools
    """
    workload: str
    datasets: list = field(default_factory=list)
    solutions: list = field(default_factory=list)
    reactions: list = field(default_factory=list)
    trustable: list = field(default_factory=list)

    def to_dict(self):
        return(dataclasses.asdict(self))


class Explorer(object):
    """
    Runs autotuning scenarios and records their results

    Timed measurements hold the machine-wide measurement lock.
    """

    def __init__(self, registry, pipeline, store, threshold=TRUST_THRESHOLD,
                 drift_interval=DRIFT_INTERVAL):
        """
        Parameters
        ----------
        registry: a WorkloadRegistry

        pipeline: a Pipeline

        store: an ExperimentStore

        threshold: float, optional
            Trust threshold of the statistics and of the drift check

        drift_interval: int, optional
            The baseline is measured again every `drift_interval`
            iterations
        """
        self.registry = registry
        self.pipeline = pipeline
        self.store = store
        self.threshold = threshold
        self.drift_interval = drift_interval

    def baseline_for(self, scenario, space):
        "Return the baseline assignment of a scenario"
        if scenario.baseline is not None:
            return(scenario.baseline)
        return(FlagAssignment(space.default_base, {}, {}))

    def assignments(self, scenario, space):
        """
        Generate the assignments explored by a scenario

        Returns
        -------
        A generator of FlagAssignment
        """
        if scenario.exhaustive:
            yield from exhaustive(space, scenario.sampling)
            return
        rng = np.random.default_rng(scenario.sampling.seed)
        for _ in range(scenario.iterations):
            seed = int(rng.integers(0, 2**63))
            yield sample_random(space, scenario.sampling.with_seed(seed))

    def measure(self, request, tags=None, label=None):
        """
        Execute a request and build the corresponding point

        Returns
        -------
        An ExperimentPoint (not recorded)
        """
        result = self.pipeline.execute(request)
        replay_info = {'command_key': request.command_key,
                       'dataset': request.dataset, 'seed': request.seed,
                       'repetitions': request.repetitions,
                       'timeout': request.timeout}
        return(ExperimentPoint.from_result(
            self.store.new_uid(), request.assignment, result, replay_info,
            self.threshold, label=label, tags=tags))

    def autotune(self, scenario, workload, dataset, env, space=None,
                 alias=None):
        """
        Run an autotuning scenario

        The baseline is measured first, then each explored assignment;
        points are recorded according to the scenario's record policy.

        Parameters
        ----------
        scenario: a Scenario

        workload, dataset: strings (ids)

        env: a CompilerEnv

        space: a FlagSpace, optional
            Default: the space of the workload for `env`

        alias: string, optional
            Name of the created entry

        Returns
        -------
        The uid of the created entry
        """
        meta = self.registry.load_workload(workload)
        if space is None:
            space = self.pipeline.flagspace_for(meta, env)
        entry = self.store.create_entry(
            scenario.scenario_id, workload, dataset, env,
            platform=detect_platform(), flagspace=space.to_dict(),
            objectives=list(scenario.objectives), alias=alias)
        entry_uid = entry.entry_uid
        policy = scenario.record_policy
        seeds = np.random.default_rng(scenario.sampling.seed + 1)

        def request_for(assignment):
            return(PipelineRequest(
                workload, dataset, scenario.command_key, assignment, env,
                scenario.repetitions, scenario.timeout,
                int(seeds.integers(0, 2**31))))

        with measurement_lock(self.store.repo_root):
            # Baseline
            baseline = self.measure(
                request_for(self.baseline_for(scenario, space)),
                label='baseline')
            if baseline.failure is None:
                self.store.set_baseline(entry_uid, baseline)
            elif policy != 'failures_only':
                logger.warning('The baseline of %s failed (%s)', workload,
                               baseline.failure.value)
            frontier = self._record(entry_uid, baseline, policy, [],
                                    scenario.objectives)

            drifted = False
            for i, assignment in enumerate(self.assignments(scenario,
                                                            space)):
                if i > 0 and i % self.drift_interval == 0 and \
                        baseline.failure is None and not drifted:
                    drifted = self._drifted(request_for(baseline.assignment),
                                            baseline)
                point = self.measure(request_for(assignment))
                point.trustable = not drifted
                frontier = self._record(entry_uid, point, policy, frontier,
                                        scenario.objectives)
        n_points = len(self.store.load_entry(entry_uid).points)
        logger.info('Scenario %s on %s: %d points recorded in %s',
                    scenario.scenario_id, workload, n_points, entry_uid)
        return(entry_uid)

    def _drifted(self, request, baseline):
        "Measure the baseline again and check that it did not move"
        again = self.measure(request, label='baseline-check')
        if again.failure is not None:
            logger.warning('The baseline failed when measured again')
            return(True)
        old = baseline.expected('execution_time')
        new = again.expected('execution_time')
        drift = abs(new - old) / old
        if drift > self.threshold:
            logger.warning(
                'Platform drift: the baseline moved by %.1f%%; the following '
                'points are marked untrustable', 100 * drift)
            return(True)
        return(False)

    def _record(self, entry_uid, point, policy, frontier, objectives):
        """
        Record `point` according to the policy

        Returns
        -------
        The updated list of recorded frontier points (frontier_only)
        """
        if policy == 'all':
            self.store.record_point(entry_uid, point)
        elif policy == 'failures_only':
            if point.failure is not None:
                self.store.record_point(entry_uid, point)
        elif point.failure is None:
            vector = point.objective_vector(objectives)
            if any(dominates(p.objective_vector(objectives), vector)
                   for p in frontier):
                return(frontier)
            self.store.record_point(entry_uid, point)
            kept = []
            for p in frontier:
                if dominates(vector, p.objective_vector(objectives)):
                    self.store.remove_point(entry_uid, p.point_uid)
                else:
                    kept.append(p)
            frontier = kept + [point]
        return(frontier)

    def fuzz(self, scenario, workload, dataset, env, space=None, alias=None):
        """
        Run a compiler-fuzzing scenario: only the points whose pipeline
        failed are recorded

        Returns
        -------
        The uid of the created entry
        """
        if scenario.record_policy != 'failures_only':
            scenario = dataclasses.replace(scenario,
                                           record_policy='failures_only')
        return(self.autotune(scenario, workload, dataset, env, space, alias))

    def sweep_datasets(self, scenario, workload, solutions, env, tag=None):
        """
        Measure the reaction of each dataset of a workload to solutions

        Parameters
        ----------
        scenario: a Scenario (repetitions, baseline, timeout)

        workload: string

        solutions: list of FlagAssignment

        env: a CompilerEnv

        tag: string, optional
            Only use the datasets with this tag

        Returns
        -------
        A ReactionTable, one row per dataset (sorted by id)
        """
        datasets = self.registry.resolve_datasets(workload, tag)
        if len(datasets) == 0:
            raise ContractError('Workload %s has no dataset to sweep'
                                % workload)
        meta = self.registry.load_workload(workload)
        space = self.pipeline.flagspace_for(meta, env)
        baseline_assignment = self.baseline_for(scenario, space)
        table = ReactionTable(workload)
        table.solutions = [render(s, space) for s in solutions]

        def execute(dataset_id, assignment, seed):
            request = PipelineRequest(
                workload, dataset_id, scenario.command_key, assignment, env,
                scenario.repetitions, scenario.timeout, seed)
            return(self.pipeline.execute(request).characteristics(
                self.threshold))

        # One distinct seed per (dataset, baseline or solution)
        stride = len(solutions) + 1
        with measurement_lock(self.store.repo_root):
            for d, dataset in enumerate(datasets):
                base = execute(dataset.id, baseline_assignment, d * stride)
                row, trust = [], []
                for s, solution in enumerate(solutions):
                    stats = execute(dataset.id, solution, d * stride + s + 1)
                    if 'execution_time' not in base or \
                            'execution_time' not in stats:
                        row.append(None)
                        trust.append(False)
                        continue
                    row.append(speedup_over_baseline(
                        base['execution_time'], stats['execution_time']))
                    trust.append(compare(base['execution_time'],
                                         stats['execution_time'],
                                         self.threshold).trustable)
                table.datasets.append(dataset.id)
                table.reactions.append(row)
                table.trustable.append(trust)
        return(table)
