"""
This test file is part of flagforge.

It checks crowd-tuning: the merge of reports into scenario tables (in any
order), the classification of the solutions, the aggregation server over
HTTP, the queue and cache of the client, and the participant's tuner.

Usage:
$ py.test tests/test_crowd.py

Copyright 2017-2018, flagforge contributors
License: 3-Clause-BSD
"""
import threading
import numpy as np
import pytest
from flagforge.errors import ContractError, EnvironmentProblem
from flagforge.crowd.table import ScenarioKey, ScenarioTable, \
    SolutionRecord, SubmitReport, add_solution, server_merge, classify, \
    classify_online, solution_uid, candidate_admissible, server_top
from flagforge.crowd.server import CrowdService, make_server
from flagforge.crowd.client import CrowdClient, LocalCrowdClient, \
    CrowdTuner

KEY = ScenarioKey('crowd-time', 'gcc-4.9.2', 'Intel Core i5|linux')
SHARED = ['-O3 -funroll-loops', '-O2', '-O3 -fno-inline']


def seeded_table():
    table = ScenarioTable(KEY)
    for text in SHARED:
        add_solution(table, text)
    return(table)


def random_reports(seed, n_participants=5, n_workloads=20):
    "Each participant reacts to the shared solutions on every workload"
    rng = np.random.default_rng(seed)
    uids = [solution_uid(text) for text in SHARED]
    reports = []
    for p in range(n_participants):
        for w in range(n_workloads):
            reactions = dict((u, round(float(rng.uniform(0.7, 1.5)), 3))
                             for u in uids)
            candidate = None
            if rng.random() < 0.3:
                candidate = {'assignment_text': '-O3 -fcandidate-%d' % (w % 4),
                             'improvement':
                                 round(float(rng.uniform(1.6, 2.)), 3)}
            reports.append(SubmitReport('participant-%d' % p, KEY,
                                        'workload-%d' % w, 'digest',
                                        reactions, int(rng.integers(1, 4)),
                                        candidate))
    return(reports)


def merge_all(reports, order):
    table = seeded_table()
    for i in order:
        table = server_merge(table, reports[i])
    return(table)


def test_merge_order_does_not_matter():
    reports = random_reports(seed=1)
    reference = merge_all(reports, range(len(reports))).to_dict()
    rng = np.random.default_rng(2)
    for _ in range(20):
        order = rng.permutation(len(reports))
        assert merge_all(reports, order).to_dict() == reference


def test_top_holds_the_best_of_every_workload():
    table = classify(merge_all(random_reports(seed=7), range(100)))
    credited = [s for s in table.solutions if s.best_species > 0]
    top = server_top({KEY: table}, KEY, len(credited))
    top_uids = set(s.solution_uid for s in top)
    for workload in table.workloads():
        ratios = sorted((-s.reactions[workload][0], s.solution_uid)
                        for s in table.solutions
                        if workload in s.reactions)
        ratio, uid = ratios[0]
        if -ratio > 1.05:
            assert uid in top_uids
    assert server_top({KEY: table}, KEY, 0) == []
    assert server_top({}, KEY, 3) == []


def test_merge_laws():
    reports = random_reports(seed=3, n_participants=2, n_workloads=3)
    table = seeded_table()
    merged = server_merge(table, reports[0])
    # The input table is not modified
    assert table.to_dict() == seeded_table().to_dict()
    # Idempotent
    assert server_merge(merged, reports[0]).to_dict() == merged.to_dict()
    # The highest improvement of a workload is kept
    uid = solution_uid(SHARED[0])
    low = SubmitReport('p', KEY, 'w', reactions={uid: 1.1})
    high = SubmitReport('p', KEY, 'w', reactions={uid: 1.3})
    for first, second in ((low, high), (high, low)):
        result = server_merge(server_merge(seeded_table(), first), second)
        assert result.find(uid).reactions['w'] == [1.3, 1]


def test_invalid_reports():
    table = seeded_table()
    uid = solution_uid(SHARED[0])
    with pytest.raises(ContractError):
        server_merge(table, SubmitReport('p', KEY, 'w',
                                         reactions={uid: -1.}))
    with pytest.raises(ContractError):
        server_merge(table, SubmitReport('p', KEY, 'w',
                                         reactions={uid: float('nan')}))
    with pytest.raises(ContractError):
        server_merge(table, SubmitReport('p', KEY, ''))
    other = ScenarioKey('crowd-size', 'gcc-4.9.2', 'Intel Core i5|linux')
    with pytest.raises(ContractError):
        server_merge(table, SubmitReport('p', other, 'w'))
    with pytest.raises(ContractError):
        SubmitReport.from_dict({'workload': 'w'})
    # Reactions to unknown solutions are kept aside, not shared
    merged = server_merge(table, SubmitReport('p', KEY, 'w',
                                              reactions={'0' * 16: 2.}))
    assert merged.find('0' * 16) is None
    assert merged.pending == {'0' * 16: {'w': [2., 1]}}
    assert ScenarioTable.from_dict(merged.to_dict()).pending == \
        merged.pending


def test_reaction_before_its_candidate_is_shared():
    "A reaction to a solution which another report is about to share"
    text = '-O3 -fvectorize'
    uid = solution_uid(text)
    sharing = SubmitReport('p1', KEY, 'w1', candidate={
        'assignment_text': text, 'improvement': 1.8})
    reacting = SubmitReport('p2', KEY, 'w2', reactions={uid: 1.7})
    first = server_merge(server_merge(seeded_table(), sharing), reacting)
    second = server_merge(server_merge(seeded_table(), reacting), sharing)
    assert first.to_dict() == second.to_dict()
    record = second.find(uid)
    assert record.reactions == {'w1': [1.8, 1], 'w2': [1.7, 1]}
    assert record.best_species == 2
    assert second.pending == {}


def test_candidate_admission():
    uid = solution_uid(SHARED[0])
    report = SubmitReport('p', KEY, 'w', reactions={uid: 1.5},
                          candidate={'assignment_text': '-O3 -fnew',
                                     'improvement': 1.56})
    assert not candidate_admissible(report, 0.05)
    report.candidate['improvement'] = 1.6
    assert candidate_admissible(report, 0.05)
    merged = server_merge(seeded_table(), report)
    record = merged.find(solution_uid('-O3 -fnew'))
    assert record.reactions == {'w': [1.6, 1]}
    # Without shared reactions, the candidate must beat the baseline
    alone = SubmitReport('p', KEY, 'w', candidate={
        'assignment_text': '-O3 -fnew', 'improvement': 1.04})
    assert not candidate_admissible(alone, 0.05)


def record(text, reactions):
    return(SolutionRecord(solution_uid(text), text,
                          reactions=dict((w, [r, 1])
                                         for w, r in reactions.items())))


def test_classification():
    a = record('-O3 -fa', {'w1': 1.2, 'w2': 1.02, 'w3': 1.3})
    b = record('-O3 -fb', {'w1': 0.9, 'w2': 1.01, 'w3': 1.3})
    c = record('-O3 -fc', {'w1': 1.0})
    table = classify(ScenarioTable(KEY, [c, b, a]), theta=0.05)
    counts = dict((s.assignment_text, (s.best_species, s.worst_species))
                  for s in table.solutions)
    lowest = min(a.solution_uid, b.solution_uid)
    # w3 is a tie: the lowest uid gets the credit
    assert counts['-O3 -fa'] == (1 + (lowest == a.solution_uid), 0)
    assert counts['-O3 -fb'] == (int(lowest == b.solution_uid), 1)
    assert counts['-O3 -fc'] == (0, 0)
    assert table.solutions[0].best_species >= table.solutions[1].best_species
    assert a.highest_improvement == 1.3 and b.worst_degradation == 0.9

    pruned = classify_online(table, theta=0.05)
    assert [s.assignment_text for s in pruned.solutions
            if s.assignment_text == '-O3 -fc'] == []
    assert len(pruned.solutions) == 2
    # The input table is kept
    assert len(table.solutions) == 3


def test_service(tmp_path):
    service = CrowdService(str(tmp_path / 'tables'))
    uids = service.tables.seed(KEY, SHARED)
    assert uids == [solution_uid(text) for text in SHARED]
    for report in random_reports(seed=4, n_participants=2, n_workloads=5):
        service.submit(report.to_dict())
    top = service.top(KEY, 2)['solutions']
    assert len(top) == 2
    assert top[0]['best_species'] >= top[1]['best_species']
    assert service.solution(uids[0])['key'] == KEY.to_dict()
    assert service.solution('f' * 16) is None
    assert service.top(ScenarioKey('x', 'y', 'z'), 5)['solutions'] == []

    strict = CrowdService(str(tmp_path / 'strict'), auto_create=False)
    with pytest.raises(ContractError):
        strict.submit(SubmitReport('p', KEY, 'w').to_dict())


@pytest.fixture
def server(tmp_path):
    "An aggregation server on a free port"
    service = CrowdService(str(tmp_path / 'tables'))
    service.tables.seed(KEY, SHARED)
    httpd = make_server(service, port=0)
    thread = threading.Thread(target=httpd.serve_forever, daemon=True)
    thread.start()
    yield 'http://127.0.0.1:%d' % httpd.server_address[1]
    httpd.shutdown()
    httpd.server_close()


def test_client_over_http(server, tmp_path):
    client = CrowdClient(server, str(tmp_path / 'repo'))
    uid = solution_uid(SHARED[1])
    assert client.submit(SubmitReport('p', KEY, 'w', reactions={uid: 1.4}))
    top = client.top(KEY, 10)
    assert top[0].solution_uid == uid
    assert top[0].reactions == {'w': [1.4, 1]}
    assert client.solution(uid).assignment_text == '-O2'
    with pytest.raises(ContractError):
        client.solution('0' * 16)
    with pytest.raises(ContractError, match='rejected'):
        client.submit(SubmitReport('p', KEY, 'w', reactions={uid: -2.}))


def test_queue_and_cache(server, tmp_path):
    repo = str(tmp_path / 'repo')
    uid = solution_uid(SHARED[2])
    offline = CrowdClient('http://127.0.0.1:1', repo, timeout=1.)
    with pytest.raises(EnvironmentProblem):
        offline.top(KEY, 3)
    assert not offline.submit(SubmitReport('p', KEY, 'w1',
                                           reactions={uid: 1.2}))
    assert not offline.submit(SubmitReport('p', KEY, 'w2',
                                           reactions={uid: 1.3}))
    assert len(offline.queued()) == 2

    online = CrowdClient(server, repo)
    assert online.submit(SubmitReport('p', KEY, 'w3', reactions={uid: 1.1}))
    assert online.queued() == []
    reactions = online.top(KEY, 3)[0].reactions
    assert reactions == {'w1': [1.2, 1], 'w2': [1.3, 1], 'w3': [1.1, 1]}
    # The last top list is served from the cache when offline
    cached = offline.top(KEY, 3)
    assert cached[0].reactions == reactions


def test_crowd_tuner(tmp_path, registry, pipeline, store, make_synthetic,
                     env):
    make_synthetic('toy', {'unroll': {'time_multiplier': 0.5},
                           'inline': {'time_multiplier': 0.8},
                           'verbose-asm': {}})
    service = CrowdService(str(tmp_path / 'tables'))
    key = ScenarioKey('crowd-time', 'synthetic-1.0', 'cpu|linux')
    [uid] = service.tables.seed(key, ['-O3 -funroll'])
    tuner = CrowdTuner(registry, pipeline, store, LocalCrowdClient(service),
                       token='tester')
    outcome = tuner.tune('crowd-time', 'toy', None, env, extra_random=10,
                         key=key)
    assert outcome.submitted
    assert outcome.report.participant == 'tester'
    assert outcome.report.reactions == {uid: 2.}
    if outcome.report.candidate is not None:
        assert outcome.report.candidate['improvement'] > 2. * 1.05
    table = service.tables.get(key)
    assert table.find(uid).reactions == {'toy': [2., 3]}
    # baseline, one shared solution, ten random ones
    assert len(store.load_entry(outcome.entry_uid).points) == 12

    result = tuner.benchmark(uid, 'toy', None, env)
    assert result['improvement'] == 2.
    assert result['assignment_text'] == '-O3 -funroll'
