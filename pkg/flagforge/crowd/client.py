"""
This file is part of flagforge.

It defines the crowd-tuning participant: the client of the aggregation
server (with an on-disk queue of reports and a cache of the top
solutions), and the tuner which replays the shared solutions on a local
workload, tries fresh random ones and reports the reactions.

Copyright 2017-2018, flagforge contributors
License: 3-Clause-BSD
"""
import os
import json
import time
import secrets
import logging
import urllib.request
import urllib.error
from urllib.parse import urlencode
from dataclasses import dataclass
import numpy as np
from ..errors import ContractError, EnvironmentProblem
from ..repository.utilities import measurement_lock, read_json, \
    write_json_atomic, md5_hex
from ..autotuning.compilers import detect_platform, platform_class
from ..autotuning.explorer import Explorer
from ..autotuning.flagspace import FlagAssignment, SamplingPolicy, \
    sample_random, render, parse
from ..autotuning.pipeline import PipelineRequest, DEFAULT_TIMEOUT
from ..autotuning.stats import TRUST_THRESHOLD, compare, \
    speedup_over_baseline
from .table import ScenarioKey, SolutionRecord, SubmitReport, \
    candidate_admissible

logger = logging.getLogger(__name__)

QUEUE_DIR = 'crowd-queue'
CACHE_DIR = 'crowd-cache'
TOKEN_FILE = 'crowd-participant'


def participant_token(repo_root):
    "Anonymous token of this participant, created on first use"
    path = os.path.join(repo_root, TOKEN_FILE)
    if os.path.isfile(path):
        with open(path) as f:
            return(f.read().strip())
    os.makedirs(repo_root, exist_ok=True)
    token = secrets.token_hex(8)
    with open(path, 'w') as f:
        f.write(token + '\n')
    return(token)


def scenario_key(scenario_id, env, platform=None):
    "ScenarioKey of a scenario on this machine, for the compiler `env`"
    if platform is None:
        platform = detect_platform()
    return(ScenarioKey(scenario_id, '%s-%s' % (env.family, env.version),
                       platform_class(platform)))


class CrowdClient(object):
    """
    HTTP client of the aggregation server

    Reports which cannot be delivered are queued in
    `repo_root/crowd-queue` and sent before the next report; the last
    top list of each key is cached in `repo_root/crowd-cache`.
    """

    def __init__(self, server_url, repo_root, timeout=10.):
        """
        Parameters
        ----------
        server_url: string
            e.g. 'http://localhost:8473'

        repo_root: string
            The local repository (queue, cache and token)

        timeout: float, optional
            Timeout of one HTTP request (seconds)
        """
        if not server_url:
            raise ContractError('No crowd server URL was given')
        self.server_url = server_url.rstrip('/')
        self.repo_root = os.path.abspath(repo_root)
        self.timeout = timeout
        self.queue_dir = os.path.join(self.repo_root, QUEUE_DIR)
        self.cache_dir = os.path.join(self.repo_root, CACHE_DIR)

    def _request(self, path, document=None):
        "Send a request and decode the JSON answer"
        data = None
        headers = {}
        if document is not None:
            data = json.dumps(document, sort_keys=True).encode('utf-8')
            headers['Content-Type'] = 'application/json'
        request = urllib.request.Request(self.server_url + path, data=data,
                                         headers=headers)
        try:
            with urllib.request.urlopen(request,
                                        timeout=self.timeout) as answer:
                return(json.loads(answer.read().decode('utf-8')))
        except urllib.error.HTTPError as err:
            try:
                message = json.loads(err.read().decode('utf-8'))['error']
            except (ValueError, KeyError):
                message = err.reason
            if err.code == 404:
                return(None)
            raise ContractError('The server rejected the request: %s'
                                % message)
        except (urllib.error.URLError, OSError, ValueError) as err:
            raise EnvironmentProblem(
                'Cannot reach the crowd server %s: %s'
                % (self.server_url, err))

    def top(self, key, n):
        """
        Return the top `n` shared solutions of `key`, from the server or
        (when it is unreachable) from the cache

        Returns
        -------
        A list of SolutionRecord
        """
        cache = os.path.join(self.cache_dir, key.table_id + '.json')
        query = urlencode(dict(key.to_dict(), n=n))
        try:
            document = self._request('/v1/top?' + query)
            write_json_atomic(cache, document)
        except EnvironmentProblem:
            if not os.path.isfile(cache):
                raise
            logger.warning('Crowd server unreachable: using the cached '
                           'top solutions')
            document = read_json(cache)
        return([SolutionRecord.from_dict(s)
                for s in document['solutions'][:n]])

    def solution(self, uid):
        "Return the SolutionRecord `uid` (ContractError if unknown)"
        document = self._request('/v1/solution/' + uid)
        if document is None:
            raise ContractError('The server knows no solution %s' % uid)
        return(SolutionRecord.from_dict(document['solution']))

    def queued(self):
        "Paths of the queued reports, oldest first"
        if not os.path.isdir(self.queue_dir):
            return([])
        return([os.path.join(self.queue_dir, name)
                for name in sorted(os.listdir(self.queue_dir))
                if name.endswith('.json') and not name.startswith('.')])

    def flush_queue(self):
        """
        Send the queued reports; stop at the first delivery failure

        Returns
        -------
        The number of reports sent
        """
        sent = 0
        for path in self.queued():
            self._request('/v1/report', read_json(path))
            os.remove(path)
            sent += 1
        if sent:
            logger.info('Sent %d queued reports', sent)
        return(sent)

    def _enqueue(self, report):
        document = report.to_dict()
        name = '%020d-%s.json' % (time.time_ns(),
                                  md5_hex(json.dumps(document,
                                                     sort_keys=True))[:8])
        write_json_atomic(os.path.join(self.queue_dir, name), document)

    def submit(self, report):
        """
        Send a report, after the queued ones

        Returns
        -------
        True when delivered, False when queued for later
        """
        try:
            self.flush_queue()
            self._request('/v1/report', report.to_dict())
        except EnvironmentProblem as err:
            self._enqueue(report)
            logger.warning('%s\nThe report was queued for later submission',
                           err)
            return(False)
        return(True)


class LocalCrowdClient(object):
    "Client calling a CrowdService in the same process"

    def __init__(self, service):
        self.service = service

    def top(self, key, n):
        return([SolutionRecord.from_dict(s) for s in
                self.service.top(key, n)['solutions']])

    def solution(self, uid):
        document = self.service.solution(uid)
        if document is None:
            raise ContractError('The server knows no solution %s' % uid)
        return(SolutionRecord.from_dict(document['solution']))

    def submit(self, report):
        self.service.submit(report.to_dict())
        return(True)


@dataclass
class CrowdOutcome:
    """
    Result of a crowd-tuning session

    Attributes
    ----------
    - report: the SubmitReport
    - entry_uid: string, local entry with all the measurements
    - submitted: bool, False when the report was queued
    """
    report: SubmitReport
    entry_uid: str
    submitted: bool

    def to_dict(self):
        return({'report': self.report.to_dict(), 'entry_uid': self.entry_uid,
                'submitted': self.submitted})


class CrowdTuner(object):
    """
    Participant side of crowd-tuning

    Measures the baseline of a workload, replays the top shared
    solutions, measures fresh random solutions, and reports the
    trustable reactions with the best new solution (pruned) as
    candidate.
    """

    def __init__(self, registry, pipeline, store, client,
                 threshold=TRUST_THRESHOLD, reducer=None, token=None):
        """
        Parameters
        ----------
        registry, pipeline, store: the local WorkloadRegistry, Pipeline
            and ExperimentStore

        client: a CrowdClient (or LocalCrowdClient)

        threshold: float, optional
            Trust threshold (and classification margin)

        reducer: a Reducer, optional
            Used to prune the candidate before it is shared

        token: string, optional
            Participant token (default: the token of the repository)
        """
        self.explorer = Explorer(registry, pipeline, store, threshold)
        self.pipeline = pipeline
        self.store = store
        self.client = client
        self.threshold = threshold
        self.reducer = reducer
        self.token = token or participant_token(store.repo_root)

    def _reaction(self, baseline, point):
        """
        Speedup of a point over the baseline, or None when it failed or
        the comparison is untrustable
        """
        if point.failure is not None:
            return(None)
        base = baseline.characteristics['execution_time']
        stats = point.characteristics['execution_time']
        if not compare(base, stats, self.threshold).trustable or \
                not point.trustable:
            logger.warning('Discarding the untrustable measurement of %s',
                           point.label or point.point_uid)
            return(None)
        return(speedup_over_baseline(base, stats))

    def tune(self, scenario_id, workload, dataset, env, extra_random=10,
             n_top=10, repetitions=3, seed=0, sampling=None,
             timeout=DEFAULT_TIMEOUT, command_key=None, key=None):
        """
        Run one crowd-tuning session and submit its report

        Parameters
        ----------
        scenario_id: string

        workload, dataset: strings (ids)

        env: a CompilerEnv

        extra_random: int, optional
            Number of fresh random solutions

        n_top: int, optional
            Number of shared solutions replayed

        repetitions, seed, timeout, command_key: optional
            Measurement settings

        sampling: a SamplingPolicy, optional

        key: a ScenarioKey, optional
            Default: the key of this machine for `env`

        Returns
        -------
        A CrowdOutcome
        """
        meta = self.pipeline.registry.load_workload(workload)
        space = self.pipeline.flagspace_for(meta, env)
        key = key or scenario_key(scenario_id, env)
        shared = self.client.top(key, n_top)
        sampling = sampling or SamplingPolicy(seed=seed)
        rng = np.random.default_rng(seed)
        entry = self.store.create_entry(
            scenario_id, workload, dataset, env, platform=detect_platform(),
            flagspace=space.to_dict())

        def request_for(assignment):
            return(PipelineRequest(workload, dataset, command_key, assignment,
                                   env, repetitions, timeout,
                                   int(rng.integers(0, 2**31))))

        reactions = {}
        best_new = None
        with measurement_lock(self.store.repo_root):
            baseline = self.explorer.measure(
                request_for(FlagAssignment(space.default_base, {}, {})),
                label='baseline')
            if baseline.failure is not None:
                raise ContractError('The baseline of %s fails (%s)'
                                    % (workload, baseline.failure.value))
            self.store.set_baseline(entry.entry_uid, baseline)
            self.store.record_point(entry.entry_uid, baseline)

            for record in shared:
                try:
                    assignment = parse(record.assignment_text, space)
                except ContractError as err:
                    logger.warning('Skipping shared solution %s: %s',
                                   record.solution_uid, err)
                    continue
                point = self.explorer.measure(
                    request_for(assignment), label=record.solution_uid,
                    tags={'solution_uid': record.solution_uid})
                self.store.record_point(entry.entry_uid, point)
                ratio = self._reaction(baseline, point)
                if ratio is not None:
                    reactions[record.solution_uid] = ratio

            for _ in range(extra_random):
                policy = sampling.with_seed(int(rng.integers(0, 2**63)))
                point = self.explorer.measure(
                    request_for(sample_random(space, policy)))
                self.store.record_point(entry.entry_uid, point)
                ratio = self._reaction(baseline, point)
                if ratio is not None and \
                        (best_new is None or ratio > best_new[0]):
                    best_new = (ratio, point)

        candidate = None
        if best_new is not None:
            candidate = self._candidate(entry.entry_uid, baseline, best_new,
                                        space)
        report = SubmitReport(
            participant=self.token, key=key, workload=workload,
            baseline_digest=md5_hex(json.dumps(
                baseline.characteristics['execution_time'].to_dict(),
                sort_keys=True)),
            reactions=reactions, samples=repetitions, candidate=candidate)
        if not candidate_admissible(report, self.threshold):
            report.candidate = None
        submitted = self.client.submit(report)
        logger.info('Crowd-tuned %s: %d reactions, %s', workload,
                    len(reactions),
                    'new candidate' if report.candidate else 'no candidate')
        return(CrowdOutcome(report, entry.entry_uid, submitted))

    def _candidate(self, entry_uid, baseline, best_new, space):
        "Prune the best new solution and describe it"
        ratio, point = best_new
        assignment = point.assignment
        if self.reducer is not None:
            # Called outside of the measurement lock: it takes it itself
            assignment, reduced = self.reducer.reduce(entry_uid,
                                                      point.point_uid)
            reduced_ratio = self._reaction(baseline, reduced)
            if reduced_ratio is not None:
                ratio = reduced_ratio
        return({'assignment_text': render(assignment, space),
                'improvement': ratio})

    def benchmark(self, uid, workload, dataset, env, repetitions=3, seed=0,
                  timeout=DEFAULT_TIMEOUT, command_key=None, submit=False,
                  scenario_id=None):
        """
        Measure the reaction of a local workload to one shared solution

        Parameters
        ----------
        uid: string, the solution uid

        workload, dataset: strings (ids)

        env: a CompilerEnv

        submit: bool, optional
            Report the reaction to the server (needs `scenario_id`)

        Returns
        -------
        dict with the solution, the measured improvement (None when the
        comparison is untrustable or the pipeline failed) and the entry
        """
        record = self.client.solution(uid)
        meta = self.pipeline.registry.load_workload(workload)
        space = self.pipeline.flagspace_for(meta, env)
        assignment = parse(record.assignment_text, space)
        rng = np.random.default_rng(seed)
        entry = self.store.create_entry(
            scenario_id or 'benchmark', workload, dataset, env,
            platform=detect_platform(), flagspace=space.to_dict())
        requests = [PipelineRequest(workload, dataset, command_key, a, env,
                                    repetitions, timeout,
                                    int(rng.integers(0, 2**31)))
                    for a in (FlagAssignment(space.default_base, {}, {}),
                              assignment)]
        with measurement_lock(self.store.repo_root):
            baseline = self.explorer.measure(requests[0], label='baseline')
            if baseline.failure is not None:
                raise ContractError('The baseline of %s fails (%s)'
                                    % (workload, baseline.failure.value))
            self.store.set_baseline(entry.entry_uid, baseline)
            self.store.record_point(entry.entry_uid, baseline)
            point = self.explorer.measure(requests[1], label=uid,
                                          tags={'solution_uid': uid})
            self.store.record_point(entry.entry_uid, point)
        ratio = self._reaction(baseline, point)
        if submit and ratio is not None:
            if scenario_id is None:
                raise ContractError('Submitting a reaction needs a scenario')
            report = SubmitReport(self.token,
                                  scenario_key(scenario_id, env), workload,
                                  reactions={uid: ratio},
                                  samples=repetitions)
            self.client.submit(report)
        return({'solution_uid': uid,
                'assignment_text': record.assignment_text,
                'improvement': ratio,
                'failure': point.failure.value if point.failure else None,
                'entry_uid': entry.entry_uid})

