"""
This file is part of flagforge.

It defines the `flagforge` command: one entry point for all the
workflows (compiler detection, workloads, autotuning, fuzzing, reduction,
replay, export, crowd-tuning and prediction models).

Exit codes: 0 on success, 1 on invalid use (including usage errors),
2 when the machine cannot serve the request (no compiler, unreachable
server). With --json, the result is a single JSON document on standard
output; diagnostics always go to standard error.

Copyright 2017-2018, flagforge contributors
License: 3-Clause-BSD
"""
import os
import sys
import json
import logging
import argparse
import dataclasses
from ..errors import FlagForgeException, ContractError
from ..workloads.registry import WorkloadRegistry, WorkloadMeta, \
    DatasetMeta, bundled_workloads, register_bundled
from ..repository.experiment_store import ExperimentStore, \
    ExperimentPoint, TABLE_COLUMNS
from ..repository.utilities import read_json, write_json_atomic, \
    measurement_lock
from ..autotuning.compilers import detect_compilers, detect_platform, \
    select_compiler, synthetic_env, platform_class, SYNTHETIC_FAMILY
from ..autotuning.explorer import Explorer, Scenario, load_scenario, \
    RECORD_POLICIES
from ..autotuning.flagspace import SamplingPolicy, parse
from ..autotuning.pipeline import Pipeline, PipelineRequest
from ..autotuning.reducer import Reducer, PruneConfig, load_prune_config
from ..autotuning.replay import replay
from ..crowd.table import TableStore, ScenarioKey
from ..crowd.server import serve, DEFAULT_PORT, DEFAULT_TOP
from ..crowd.client import CrowdClient, CrowdTuner
from ..learn.features import normalize_features, FeatureVector, \
    INSTRUCTION_COUNT
from ..learn.reactions import build_reaction_matrix, build_dataset, \
    group_workloads, label_workloads, LabeledDataset
from ..learn.models import ModelSpec, MODEL_KINDS, train, predict, \
    save_model, load_model
from ..learn.evaluation import accuracy, loo_cv, autotune_depth, \
    reduce_features, REDUCTION_MODES
from .config import load_config

logger = logging.getLogger('flagforge')

LOG_FORMAT = '[flagforge] %(levelname)s: %(message)s'


class UsageError(ContractError):
    "Raised by the argument parser on an invalid command line"
    pass


class FlagForgeParser(argparse.ArgumentParser):
    "Argument parser reporting usage errors with exit code 1"

    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError('%s: %s' % (self.prog, message))


# Helpers
# -------

def setup_logging(verbose=False, quiet=False):
    "Install the stderr handler of the flagforge loggers"
    for handler in list(logger.handlers):
        if getattr(handler, '_flagforge_cli', False):
            logger.removeHandler(handler)
    handler = logging.StreamHandler(sys.stderr)
    handler.setFormatter(logging.Formatter(LOG_FORMAT))
    handler._flagforge_cli = True
    logger.addHandler(handler)
    logger.setLevel(logging.DEBUG if verbose else
                    logging.WARNING if quiet else logging.INFO)


def _ask(candidates):
    "Let the user pick a compiler"
    if not sys.stdin.isatty():
        return(len(candidates) - 1)
    for i, env in enumerate(candidates):
        print('%d) %s (%s)' % (i, env.id, env.path), file=sys.stderr)
    while True:
        answer = input('Select a compiler [0-%d]: ' % (len(candidates) - 1))
        if answer.strip().isdigit() and \
                int(answer) < len(candidates):
            return(int(answer))


class Context(object):
    "Objects shared by the commands, created on demand"

    def __init__(self, config):
        self.config = config
        self.registry = WorkloadRegistry(config.repo_root)
        self.store = ExperimentStore(config.repo_root)
        self.pipeline = Pipeline(self.registry, config.flagspace_paths,
                                 config.keep_artifacts)
        self._available = None

    @property
    def available(self):
        "The detected compilers"
        if self._available is None:
            self._available = detect_compilers(self.config.compiler_paths)
        return(self._available)

    def env_for(self, workload):
        "Compiler of a workload (the synthetic marker for synthetic ones)"
        meta = self.registry.load_workload(workload)
        explicit = self.config.compiler
        if meta.kind == 'synthetic':
            if explicit and explicit.startswith(SYNTHETIC_FAMILY + '-'):
                return(synthetic_env(explicit[len(SYNTHETIC_FAMILY) + 1:]))
            return(synthetic_env())
        return(select_compiler(self.available, self.config.compiler_policy,
                               explicit=explicit, ask=_ask))

    def dataset_for(self, workload, dataset):
        "The given dataset, or the first one the workload accepts"
        if dataset is not None:
            return(dataset)
        datasets = self.registry.resolve_datasets(workload)
        return(datasets[0].id if datasets else None)

    def reducer(self):
        return(Reducer(self.pipeline, self.store,
                       self.config.trust_threshold,
                       available=None if self.config.compiler_paths is None
                       else self.available))

    def explorer(self):
        return(Explorer(self.registry, self.pipeline, self.store,
                        self.config.trust_threshold))


def _seed(config):
    return(0 if config.seed is None else config.seed)


def _split(text):
    return([x.strip() for x in text.split(',') if x.strip()])


# Commands
# --------

def cmd_detect(args, ctx):
    envs = ctx.available
    platform = detect_platform()
    document = {'compilers': [e.to_dict() for e in envs],
                'platform': platform,
                'platform_class': platform_class(platform)}
    lines = ['%-20s %s' % (e.id, e.path) for e in envs] or \
        ['(no compiler found)']
    lines.append('platform: %s' % platform_class(platform))
    return(document, '\n'.join(lines))


def cmd_workload(args, ctx):
    registry = ctx.registry
    if args.action == 'list':
        ids = registry.list_workloads()
        return({'workloads': ids, 'bundled': bundled_workloads()},
               '\n'.join(ids))
    if args.action == 'show':
        meta = registry.load_workload(args.id)
        document = meta.to_dict()
        return(document, json.dumps(document, indent=2, sort_keys=True))
    if args.action == 'bundle':
        names = bundled_workloads() if args.id == 'all' else [args.id]
        ids = [register_bundled(registry, name) for name in names
               if name not in registry.list_workloads()]
        return({'registered': ids}, '\n'.join(ids))
    meta = WorkloadMeta.from_dict(read_json(args.meta))
    source = args.source or os.path.dirname(os.path.abspath(args.meta))
    workload_id = registry.register_workload(meta, source)
    return({'registered': [workload_id]}, workload_id)


def cmd_dataset(args, ctx):
    registry = ctx.registry
    if args.action == 'list':
        ids = registry.list_datasets()
        return({'datasets': ids}, '\n'.join(ids))
    meta = DatasetMeta.from_dict(read_json(args.meta))
    dataset_id = registry.register_dataset(meta, args.source)
    return({'registered': [dataset_id]}, dataset_id)


def cmd_run(args, ctx):
    config = ctx.config
    env = ctx.env_for(args.workload)
    meta = ctx.registry.load_workload(args.workload)
    space = ctx.pipeline.flagspace_for(meta, env)
    assignment = parse(args.flags, space)
    dataset = ctx.dataset_for(args.workload, args.dataset)
    request = PipelineRequest(args.workload, dataset, args.cmd, assignment,
                              env, args.repetitions, config.timeout,
                              _seed(config))
    with measurement_lock(config.repo_root):
        result = ctx.pipeline.execute(request)
    document = {'result': result.to_dict(),
                'characteristics': dict(
                    (k, s.to_dict()) for k, s in
                    result.characteristics(config.trust_threshold).items())}
    if args.record is not None:
        entry = ctx.store.find_alias(args.record)
        if entry is None:
            entry = ctx.store.create_entry(
                'run', args.workload, dataset, env,
                platform=detect_platform(), flagspace=space.to_dict(),
                alias=args.record).entry_uid
        replay_info = {'command_key': args.cmd, 'dataset': dataset,
                       'seed': request.seed,
                       'repetitions': args.repetitions,
                       'timeout': config.timeout}
        point = ExperimentPoint.from_result(
            ctx.store.new_uid(), assignment, result, replay_info,
            config.trust_threshold)
        ctx.store.record_point(entry, point)
        document['entry'] = ctx.store.resolve(entry)
        document['point'] = point.point_uid
    if result.failure is not None:
        text = 'failure: %s' % result.failure.value
    else:
        stats = result.characteristics(config.trust_threshold)
        text = 'time %.6g s (min %.6g), size %d bytes' % (
            stats['execution_time'].expected, stats['execution_time'].min,
            int(stats['binary_size'].expected))
    return(document, text)


def _scenario(args, ctx, fuzz=False):
    if args.scenario is not None:
        scenario = load_scenario(args.scenario)
    else:
        scenario = Scenario(scenario_id='fuzz' if fuzz else 'autotune')
    changes = {}
    if args.iterations is not None:
        changes['iterations'] = args.iterations
    if args.repetitions is not None:
        changes['repetitions'] = args.repetitions
    if args.cmd is not None:
        changes['command_key'] = args.cmd
    if getattr(args, 'policy', None) is not None:
        changes['record_policy'] = args.policy
    if getattr(args, 'exhaustive', False):
        changes['exhaustive'] = True
    if getattr(args, 'objectives', None):
        changes['objectives'] = tuple(_split(args.objectives))
    if args.scenario is None:
        sampling = SamplingPolicy(include_probability=args.probability,
                                  seed=_seed(ctx.config))
    elif ctx.config.seed is not None:
        sampling = scenario.sampling.with_seed(ctx.config.seed)
    else:
        sampling = scenario.sampling
    # The flag classes switched on by the command line
    enabled = dict((field, True) for field, option in
                   [('enable_parametric', args.parametric_flags),
                    ('enable_cpu', args.cpu_flags),
                    ('enable_base', args.base_flags)] if option)
    changes['sampling'] = dataclasses.replace(sampling, **enabled)
    changes['timeout'] = ctx.config.timeout
    return(dataclasses.replace(scenario, **changes))


def _entry_summary(ctx, entry_uid):
    entry = ctx.store.load_entry(entry_uid)
    frontier = ctx.store.frontier(entry_uid)
    document = {'entry': entry_uid, 'alias': entry.alias,
                'points': len(entry.points), 'frontier': frontier}
    text = 'entry %s%s: %d points, %d on the frontier' % (
        entry_uid, ' (%s)' % entry.alias if entry.alias else '',
        len(entry.points), len(frontier))
    return(document, text)


def cmd_autotune(args, ctx):
    scenario = _scenario(args, ctx)
    dataset = ctx.dataset_for(args.workload, args.dataset)
    entry_uid = ctx.explorer().autotune(
        scenario, args.workload, dataset, ctx.env_for(args.workload),
        alias=args.record)
    return(_entry_summary(ctx, entry_uid))


def cmd_fuzz(args, ctx):
    scenario = _scenario(args, ctx, fuzz=True)
    dataset = ctx.dataset_for(args.workload, args.dataset)
    entry_uid = ctx.explorer().fuzz(
        scenario, args.workload, dataset, ctx.env_for(args.workload),
        alias=args.record)
    points = ctx.store.load_points(entry_uid)
    failures = {}
    for point in points:
        kind = point.failure.value if point.failure else 'none'
        failures[kind] = failures.get(kind, 0) + 1
    document = {'entry': entry_uid, 'failures': failures}
    text = '\n'.join('%-16s %d' % kv for kv in sorted(failures.items())) \
        or 'no failure found'
    return(document, text)


def cmd_sweep(args, ctx):
    env = ctx.env_for(args.workload)
    meta = ctx.registry.load_workload(args.workload)
    space = ctx.pipeline.flagspace_for(meta, env)
    solutions = [parse(text, space) for text in args.solution]
    scenario = Scenario(repetitions=args.repetitions or 3,
                        command_key=args.cmd, timeout=ctx.config.timeout)
    table = ctx.explorer().sweep_datasets(scenario, args.workload,
                                          solutions, env, args.tag)
    lines = []
    for dataset, row in zip(table.datasets, table.reactions):
        lines.append('%-20s %s' % (dataset, ' '.join(
            '-' if r is None else '%.3f' % r for r in row)))
    return(table.to_dict(), '\n'.join(lines))


def cmd_reduce(args, ctx):
    config = load_prune_config(args.config) if args.config \
        else PruneConfig()
    changes = {}
    if args.tolerance is not None:
        changes['tolerance'] = args.tolerance
    if args.md5_shortcut is not None:
        changes['use_md5_shortcut'] = args.md5_shortcut
    if args.invert:
        changes['invert'] = True
    if args.keep is not None:
        changes['keep_key'] = args.keep
    config = dataclasses.replace(config, **changes)
    reducer = ctx.reducer()
    if args.mode == 'contribution':
        report = reducer.contribution(args.entry, args.point, config)
        lines = ['%-40s %8s %8s %s' % (f, '-' if t is None else
                                       '%+.3f' % t, '-' if s is None else
                                       '%+.3f' % s, v)
                 for f, t, s, v in report.rows]
        return(report.to_dict(), '\n'.join(lines))
    mode = args.mode
    if mode == 'reduce' and config.invert:
        mode = 'invert'
    operation = {'reduce': reducer.reduce, 'invert': reducer.invert,
                 'minimize': reducer.minimize_failure}[mode]
    assignment, point = operation(args.entry, args.point, config)
    document = {'assignment': assignment.to_dict(), 'flags': point.flags,
                'point': point.point_uid,
                'failure': point.failure.value if point.failure else None}
    return(document, point.flags)


def cmd_replay(args, ctx):
    available = None if ctx.config.compiler_paths is None \
        else ctx.available
    report = replay(ctx.store, ctx.pipeline, args.entry, args.point,
                    tolerance=args.tolerance, available=available,
                    threshold=ctx.config.trust_threshold)
    lines = ['%-16s %.4f %s' % (name, d, 'ok' if
                                report.within_tolerance[name] else 'DIFFERS')
             for name, d in sorted(report.differences.items())]
    if report.behavior_changed:
        lines.append('failure %s -> %s' % (report.original_failure,
                                           report.replayed_failure))
    if not report.passed:
        logger.warning('Replay of point %s differs from the record',
                       args.point)
    return(report.to_dict(), '\n'.join(lines))


def cmd_entries(args, ctx):
    entries = ctx.store.list_entries()
    document = {'entries': [{'entry': e.entry_uid, 'alias': e.alias,
                             'scenario': e.scenario_id,
                             'workload': e.workload, 'dataset': e.dataset,
                             'compiler': e.compiler.id,
                             'points': len(e.points)} for e in entries]}
    lines = ['%s %-24s %-20s %-16s %d' % (e.entry_uid, e.alias or '-',
                                          e.workload, e.compiler.id,
                                          len(e.points)) for e in entries]
    return(document, '\n'.join(lines))


def cmd_export(args, ctx):
    columns = _split(args.columns) if args.columns else None
    text = ctx.store.export_table(args.entry, columns)
    return({'entry': ctx.store.resolve(args.entry), 'csv': text},
           text.rstrip('\n'))


def cmd_plot_data(args, ctx):
    rows = ctx.store.plot_data(args.entry)
    lines = ['%.6g %d %s %s' % (r['time'], r['size'],
                                'frontier' if r['frontier'] else '-',
                                r['label']) for r in rows]
    return({'rows': rows}, '\n'.join(lines))


def cmd_show(args, ctx):
    entry = ctx.store.load_entry(args.entry)
    points = ctx.store.load_points(entry.entry_uid)
    frontier = ctx.store.frontier(entry.entry_uid)
    document = entry.to_dict()
    document['frontier'] = frontier
    document['point_details'] = [p.to_dict() for p in points]
    lines = ['entry %s%s: %s on %s (%s), compiler %s' % (
        entry.entry_uid, ' (%s)' % entry.alias if entry.alias else '',
        entry.workload, entry.dataset, entry.scenario_id, entry.compiler.id)]
    for point in points:
        if point.failure is not None:
            outcome = 'failure: %s' % point.failure.value
        else:
            outcome = 'time %.6g size %d' % (
                point.expected('execution_time'),
                point.expected('binary_size'))
        lines.append('%s %s %-28s %s' % (
            point.point_uid, '*' if point.point_uid in frontier else ' ',
            outcome, point.flags))
    return(document, '\n'.join(lines))


def cmd_experiment(args, ctx):
    "The experiment actions share the handlers of the top-level commands"
    handlers = {'list': cmd_entries, 'show': cmd_show,
                'export': cmd_export, 'replay': cmd_replay}
    return(handlers[args.action](args, ctx))


def cmd_crowd(args, ctx):
    config = ctx.config
    if args.action == 'serve':
        serve(args.store, args.host, args.port, config.trust_threshold,
              auto_create=not args.no_auto_create,
              prune_on_merge=args.prune)
        return({'status': 'stopped'}, 'stopped')
    if args.action == 'classify':
        tables = TableStore(args.store).classify_all(config.trust_threshold)
        document = {'tables': [t.to_dict() for t in tables]}
        return(document, '%d tables classified' % len(tables))
    client = CrowdClient(config.server_url, config.repo_root)
    tuner = CrowdTuner(ctx.registry, ctx.pipeline, ctx.store, client,
                       config.trust_threshold,
                       reducer=None if args.no_prune else ctx.reducer())
    dataset = ctx.dataset_for(args.workload, args.dataset)
    outcome = tuner.tune(args.scenario_id, args.workload, dataset,
                         ctx.env_for(args.workload),
                         extra_random=args.iterations, n_top=args.top,
                         repetitions=args.repetitions,
                         seed=_seed(config), timeout=config.timeout,
                         command_key=args.cmd)
    report = outcome.report
    text = '%d reactions, %s, report %s' % (
        len(report.reactions),
        'candidate %s' % report.candidate['assignment_text']
        if report.candidate else 'no candidate',
        'submitted' if outcome.submitted else 'queued')
    return(outcome.to_dict(), text)


def cmd_benchmark(args, ctx):
    config = ctx.config
    client = CrowdClient(config.server_url, config.repo_root)
    tuner = CrowdTuner(ctx.registry, ctx.pipeline, ctx.store, client,
                       config.trust_threshold)
    dataset = ctx.dataset_for(args.workload, args.dataset)
    document = tuner.benchmark(args.solution_uid, args.workload, dataset,
                               ctx.env_for(args.workload),
                               repetitions=args.repetitions,
                               seed=_seed(config),
                               timeout=config.timeout, command_key=args.cmd,
                               submit=args.submit,
                               scenario_id=args.scenario_id)
    if document['improvement'] is None:
        text = 'no trustable reaction'
    else:
        text = 'improvement %.3f' % document['improvement']
    return(document, text)


def _spec(args, dataset):
    features = _split(args.features) if args.features \
        else dataset.feature_ids()
    return(ModelSpec(args.kind, tuple(features), args.max_depth))


def _features_of(ctx, workloads, normalize):
    features = {}
    for workload in workloads:
        try:
            vector = ctx.registry.load_feature_vector(workload)
        except ContractError as err:
            logger.warning('%s', err)
            continue
        if normalize and INSTRUCTION_COUNT in vector.values:
            vector = normalize_features(vector)
        features[workload] = vector
    return(features)


def _crowd_key(args):
    return(ScenarioKey(args.scenario_id, args.compiler_key,
                       args.platform_key))


def cmd_model(args, ctx):
    config = ctx.config
    if args.action == 'dataset':
        if args.crowd_store:
            table = TableStore(args.crowd_store).get(_crowd_key(args))
            if table is None:
                raise ContractError('No crowd table for this scenario key')
            matrix = build_reaction_matrix(table)
        else:
            matrix = build_reaction_matrix(
                ctx.store.list_entries(), ctx.store,
                threshold=config.trust_threshold)
        labels = label_workloads(matrix, config.trust_threshold)
        dataset = build_dataset(
            matrix, _features_of(ctx, matrix.workloads, args.normalize),
            config.trust_threshold)
        write_json_atomic(args.output, dataset.to_dict())
        groups = group_workloads(labels)
        document = {'output': args.output, 'items': len(dataset),
                    'groups': groups, 'solutions': matrix.texts}
        lines = ['%-18s %3d %s' % (label, len(w),
                                   matrix.texts.get(label, ''))
                 for label, w in groups.items()]
        return(document, '\n'.join(lines))

    if args.action == 'predict':
        model = load_model(args.model)
        vector = FeatureVector.from_dict(read_json(args.vector))
        if args.normalize and INSTRUCTION_COUNT in vector.values:
            vector = normalize_features(vector)
        label = predict(model, vector)
        document = {'workload': vector.workload, 'label': label}
        if args.crowd_store:
            found = TableStore(args.crowd_store).find_solution(label)
            if found is not None:
                document['assignment_text'] = found[1].assignment_text
        return(document, document.get('assignment_text', label))

    dataset = LabeledDataset.from_dict(read_json(args.dataset))
    spec = _spec(args, dataset)
    if args.action == 'train':
        model = train(spec, dataset)
        save_model(model, args.output)
        document = {'output': args.output, 'spec': spec.to_dict(),
                    'in_sample_accuracy': accuracy(model, dataset)}
        text = 'in-sample accuracy %.3f' % document['in_sample_accuracy']
        if spec.kind == 'decision_tree':
            document['rules'] = model.rules()
            document['depth'] = model.depth()
            text += '\n' + model.rules().rstrip('\n')
        return(document, text)
    if args.action == 'cv':
        score = loo_cv(spec, dataset)
        return({'spec': spec.to_dict(), 'cv_accuracy': score},
               'cross-validated accuracy %.3f' % score)
    if args.action == 'autotune-depth':
        depths = [None if d in ('none', 'unlimited') else int(d)
                  for d in _split(args.depths)]
        curve = autotune_depth(spec, dataset, depths)
        lines = ['%-10s %.3f %.3f' % ('unlimited' if d is None else d,
                                      cv, ins) for d, cv, ins in curve.points]
        lines.append('best depth: %s' % curve.best_depth)
        return(curve.to_dict(), '\n'.join(lines))
    reduction = reduce_features(spec, dataset, args.mode)
    return(reduction.to_dict(), '%s (accuracy %.3f)' % (
        ' '.join(reduction.features), reduction.accuracy))


# Parser
# ------

def _common():
    "Options accepted by every command"
    common = argparse.ArgumentParser(add_help=False)
    group = common.add_argument_group('global options')
    group.add_argument('--repo', dest='repo_root',
                       help='local repository (env FLAGFORGE_REPO)')
    group.add_argument('--seed', type=int,
                       help='random seed (env FLAGFORGE_SEED)')
    group.add_argument('--server', dest='server_url',
                       help='crowd server URL (env FLAGFORGE_SERVER)')
    group.add_argument('--threshold', dest='trust_threshold', type=float,
                       help='trust threshold of the statistics')
    group.add_argument('--compiler', help='compiler id or path')
    group.add_argument('--compiler-policy',
                       choices=['newest', 'prompt', 'explicit'])
    group.add_argument('--json', action='store_true',
                       help='print the result as JSON')
    group.add_argument('-v', '--verbose', action='store_true')
    group.add_argument('-q', '--quiet', action='store_true')
    return(common)


def _add_workload_options(parser, dataset=True):
    parser.add_argument('--workload', required=True)
    if dataset:
        parser.add_argument('--dataset')
    parser.add_argument('--cmd', help='key of the run command')


def _add_scenario_options(parser, policy=True):
    _add_workload_options(parser)
    parser.add_argument('--scenario', help='scenario file (JSON)')
    parser.add_argument('--iterations', type=int)
    parser.add_argument('--repetitions', type=int)
    parser.add_argument('--record', help='alias of the created entry')
    parser.add_argument('--probability', type=float, default=.25,
                        help='probability of including each flag')
    flags = parser.add_argument_group('flag classes')
    flags.add_argument('--parametric-flags', action='store_true',
                       help='also sample the parametric flags')
    flags.add_argument('--cpu-flags', action='store_true',
                       help='also sample the CPU-specific flags')
    flags.add_argument('--base-flags', action='store_true',
                       help='draw the base optimization level')
    if policy:
        parser.add_argument('--policy', choices=RECORD_POLICIES)
        parser.add_argument('--exhaustive', action='store_true')
        parser.add_argument('--objectives',
                            help='comma-separated characteristics')


def _add_model_options(parser):
    parser.add_argument('--dataset', required=True,
                        help='labeled dataset (JSON)')
    parser.add_argument('--kind', choices=MODEL_KINDS,
                        default='decision_tree')
    parser.add_argument('--features', help='comma-separated feature ids')
    parser.add_argument('--max-depth', type=int)


def _add_key_options(parser):
    parser.add_argument('--scenario-id', default='autotune')
    parser.add_argument('--compiler-key', help="e.g. 'gcc-7.1.0'")
    parser.add_argument('--platform-key', help="'<cpu model>|<os>'")


def build_parser():
    common = _common()
    parser = FlagForgeParser(
        prog='flagforge', parents=[common],
        description='Multi-objective compiler autotuning workbench')
    commands = parser.add_subparsers(dest='command', metavar='command')
    commands.required = True

    def add(name, func, help, parents=(common,)):
        sub = commands.add_parser(name, parents=list(parents), help=help)
        sub.set_defaults(func=func)
        return(sub)

    add('detect', cmd_detect, 'detect compilers and the platform')

    sub = add('workload', cmd_workload, 'manage workloads')
    actions = sub.add_subparsers(dest='action', metavar='action')
    actions.required = True
    actions.add_parser('list', parents=[common])
    actions.add_parser('show', parents=[common]).add_argument('id')
    actions.add_parser('bundle', parents=[common],
                       help="register a bundled workload ('all')"
                       ).add_argument('id')
    workload_add = actions.add_parser('add', parents=[common])
    workload_add.add_argument('--meta', required=True)
    workload_add.add_argument('--source')

    sub = add('dataset', cmd_dataset, 'manage datasets')
    actions = sub.add_subparsers(dest='action', metavar='action')
    actions.required = True
    actions.add_parser('list', parents=[common])
    dataset_add = actions.add_parser('add', parents=[common])
    dataset_add.add_argument('--meta', required=True)
    dataset_add.add_argument('--source')

    sub = add('run', cmd_run, 'compile and run a workload once')
    _add_workload_options(sub)
    sub.add_argument('--flags', default='')
    sub.add_argument('--repetitions', type=int, default=3)
    sub.add_argument('--record', help='alias of the entry to record into')

    _add_scenario_options(add('autotune', cmd_autotune,
                              'explore the flag space'))
    _add_scenario_options(add('fuzz', cmd_fuzz,
                              'record the flag combinations which fail'),
                          policy=False)

    sub = add('sweep', cmd_sweep, 'measure solutions on all datasets')
    _add_workload_options(sub, dataset=False)
    sub.add_argument('--solution', action='append', required=True,
                     help='rendered flags (repeatable)')
    sub.add_argument('--tag', help='only the datasets with this tag')
    sub.add_argument('--repetitions', type=int)

    for name, func, help in [
            ('reduce', cmd_reduce, 'prune the flags of a solution'),
            ('replay', cmd_replay, 'execute a recorded point again')]:
        sub = add(name, func, help)
        sub.add_argument('--entry', required=True, help='uid or alias')
        sub.add_argument('--point', required=True)
        sub.add_argument('--tolerance', type=float,
                         default=None if name == 'reduce' else .05)
        if name == 'reduce':
            sub.add_argument('--mode', default='reduce',
                             choices=['reduce', 'invert', 'contribution',
                                      'minimize'])
            sub.add_argument('--config', help='prune conditions (JSON)')
            sub.add_argument('--md5-shortcut', dest='md5_shortcut',
                             action='store_const', const=True,
                             help='accept a removal which leaves the '
                             'binary unchanged without running it')
            sub.add_argument('--no-md5-shortcut', dest='md5_shortcut',
                             action='store_const', const=False)
            sub.add_argument('--invert', action='store_true',
                             help='switch off the absent flags explicitly')
            sub.add_argument('--keep', metavar='NAME',
                             help='a flag never removed nor inverted')

    add('entries', cmd_entries, 'list the experiment entries')
    sub = add('export', cmd_export, 'export the points of an entry as CSV')
    sub.add_argument('--entry', required=True)
    sub.add_argument('--columns', help='among: ' + ','.join(TABLE_COLUMNS))
    sub = add('plot-data', cmd_plot_data,
              'export (time, size, label, frontier) tuples')
    sub.add_argument('--entry', required=True)

    sub = add('experiment', cmd_experiment, 'browse the recorded entries')
    actions = sub.add_subparsers(dest='action', metavar='action')
    actions.required = True
    actions.add_parser('list', parents=[common])
    actions.add_parser('show', parents=[common]).add_argument(
        '--entry', required=True, help='uid or alias')
    experiment_export = actions.add_parser('export', parents=[common])
    experiment_export.add_argument('--entry', required=True)
    experiment_export.add_argument('--columns',
                                   help='among: ' + ','.join(TABLE_COLUMNS))
    experiment_replay = actions.add_parser('replay', parents=[common])
    experiment_replay.add_argument('--entry', required=True)
    experiment_replay.add_argument('--point', required=True)
    experiment_replay.add_argument('--tolerance', type=float, default=.05)

    sub = add('crowd', cmd_crowd, 'crowd-tuning')
    actions = sub.add_subparsers(dest='action', metavar='action')
    actions.required = True
    crowd_serve = actions.add_parser('serve', parents=[common])
    crowd_serve.add_argument('--store', required=True)
    crowd_serve.add_argument('--host', default='127.0.0.1')
    crowd_serve.add_argument('--port', type=int, default=DEFAULT_PORT)
    crowd_serve.add_argument('--no-auto-create', action='store_true')
    crowd_serve.add_argument('--prune', action='store_true',
                             help='classify online after each merge')
    actions.add_parser('classify', parents=[common]).add_argument(
        '--store', required=True)
    crowd_tune = actions.add_parser('tune', parents=[common])
    _add_workload_options(crowd_tune)
    crowd_tune.add_argument('--scenario-id', default='autotune')
    crowd_tune.add_argument('--iterations', type=int, default=10,
                            help='number of extra random solutions')
    crowd_tune.add_argument('--top', type=int, default=DEFAULT_TOP)
    crowd_tune.add_argument('--repetitions', type=int, default=3)
    crowd_tune.add_argument('--no-prune', action='store_true')

    sub = add('benchmark', cmd_benchmark,
              'measure a shared solution on a workload')
    _add_workload_options(sub)
    sub.add_argument('--solution-uid', required=True)
    sub.add_argument('--repetitions', type=int, default=3)
    sub.add_argument('--submit', action='store_true')
    sub.add_argument('--scenario-id')

    sub = add('model', cmd_model, 'predict optimizations from features')
    actions = sub.add_subparsers(dest='action', metavar='action')
    actions.required = True
    model_dataset = actions.add_parser('dataset', parents=[common])
    model_dataset.add_argument('--output', required=True)
    model_dataset.add_argument('--crowd-store')
    model_dataset.add_argument('--normalize', action='store_true')
    _add_key_options(model_dataset)
    for name in ('train', 'cv', 'autotune-depth', 'reduce-features'):
        action = actions.add_parser(name, parents=[common])
        _add_model_options(action)
        if name == 'train':
            action.add_argument('--output', required=True)
        elif name == 'autotune-depth':
            action.add_argument('--depths', default='1,2,3,4,5,none')
        elif name == 'reduce-features':
            action.add_argument('--mode', choices=REDUCTION_MODES,
                                default='greedy_remove')
    model_predict = actions.add_parser('predict', parents=[common])
    model_predict.add_argument('--model', required=True)
    model_predict.add_argument('--vector', required=True,
                               help='feature vector (JSON)')
    model_predict.add_argument('--normalize', action='store_true')
    model_predict.add_argument('--crowd-store')
    return(parser)


def dispatch(argv=None):
    """
    Run the command line `argv`

    Returns
    -------
    The exit code
    """
    parser = build_parser()
    setup_logging()
    try:
        args = parser.parse_args(argv)
    except UsageError as err:
        logger.error('%s', err)
        return(err.exit_code)
    except SystemExit as err:
        # --help
        return(err.code or 0)
    setup_logging(args.verbose, args.quiet)
    try:
        config = load_config({
            'repo_root': args.repo_root, 'seed': args.seed,
            'server_url': args.server_url,
            'trust_threshold': args.trust_threshold,
            'compiler': args.compiler,
            'compiler_policy': args.compiler_policy or
            ('explicit' if args.compiler else None)})
        document, text = args.func(args, Context(config))
    except FlagForgeException as err:
        logger.error('%s', err)
        if args.json:
            print(json.dumps({'error': str(err),
                              'exit_code': err.exit_code}))
        return(err.exit_code)
    except KeyboardInterrupt:
        logger.error('Interrupted')
        return(1)
    if args.json:
        print(json.dumps(document, indent=2, sort_keys=True))
    elif text:
        print(text)
    return(0)


def main():
    sys.exit(dispatch())
