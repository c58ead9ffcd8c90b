"""
This file is part of flagforge.

It defines the workload registry: workloads (real programs or synthetic
response functions), their build/run recipes, their datasets and their
feature files. Every other module addresses workloads by identifier.

On disk, entries follow a two-level layout:
    repo_root/workload/<id>/meta.json   (+ the workload sources)
    repo_root/dataset/<id>/meta.json    (+ the dataset files)

Copyright 2017-2018, flagforge contributors
License: 3-Clause-BSD
"""
import os
import re
import math
import glob
import shutil
import string
import logging
import dataclasses
from dataclasses import dataclass, field
from ..errors import ContractError, format_choices
from ..repository.utilities import read_json, write_json_atomic, \
    list_entries, FileLock
from ..learn.features import FeatureVector, FEATURE_PATTERN

logger = logging.getLogger(__name__)

# Directory of the workloads shipped with the package
BUNDLED_WORKLOADS = os.path.join(
    os.path.dirname(os.path.dirname(os.path.abspath(__file__))),
    'data', 'workloads')

WORKLOAD_KINDS = ('real', 'synthetic')
FAILURE_KINDS = ('COMPILER_CRASH', 'COMPILE_ERROR', 'RUNTIME_CRASH',
                 'WRONG_OUTPUT', 'TIMEOUT')
BUILD_PLACEHOLDERS = ('compiler', 'flags', 'binary', 'source_dir')
RUN_PLACEHOLDERS = ('binary', 'dataset', 'output', 'run_dir')
NOISE_KINDS = ('none', 'gaussian', 'bimodal')
OUTPUT_CHECK_MODES = ('digest', 'numeric')
ENTRY_ID_PATTERN = re.compile(r'^[A-Za-z0-9][A-Za-z0-9_.-]*$')


def template_fields(template):
    """
    Return the set of placeholder names used in a command template
    (e.g. {'compiler', 'flags'} for '{compiler} {flags} -o {binary} a.c')
    """
    try:
        return(set(name for _, name, _, _ in
                   string.Formatter().parse(template) if name is not None))
    except ValueError as err:
        raise ContractError('Malformed template %r: %s' % (template, err))


@dataclass(frozen=True)
class TunableParam:
    """
    A workload parameter exposed to tuning (e.g. a blocking size)

    It is rendered as an environment variable on the run command.
    """
    name: str
    minimum: int
    maximum: int
    variable: str

    def to_dict(self):
        return({'name': self.name, 'min': self.minimum, 'max': self.maximum,
                'variable': self.variable})

    @classmethod
    def from_dict(cls, d):
        return(cls(d['name'], int(d['min']), int(d['max']),
                   d.get('variable', d['name'])))


@dataclass(frozen=True)
class NoiseModel:
    """
    Measurement noise of a synthetic workload

    - kind 'none': bit-identical results
    - kind 'gaussian': each run is multiplied by (1 + N(0, sigma))
    - kind 'bimodal': with `probability`, a run is multiplied by
      (1 + offset), mimicking a second frequency state of the machine
    """
    kind: str = 'none'
    sigma: float = 0.
    offset: float = 0.
    probability: float = 0.

    def __post_init__(self):
        if self.kind not in NOISE_KINDS:
            raise ContractError(
                "Invalid noise model '%s'.\nThe valid models are:%s"
                % (self.kind, format_choices(NOISE_KINDS)))

    def to_dict(self):
        return(dataclasses.asdict(self))

    @classmethod
    def from_dict(cls, d):
        return(cls(**d))


@dataclass(frozen=True)
class FlagEffect:
    """
    Effect of one setting on a synthetic workload

    The `key` selects the setting: 'name' is active when the flag is set
    (for boolean flags: set on), 'name=value' is active when the flag,
    the base level ('base=-O3') or an environment parameter has exactly
    this value. The optional `when` restricts the effect to some
    datasets or compiler versions:
        {"params": {"size": [513, null]}, "compiler": "<7"}
    """
    key: str
    time_multiplier: float = 1.
    size_delta: int = 0
    md5_salt: str = None
    failure: str = None
    when: dict = None

    def __post_init__(self):
        if not self.time_multiplier > 0:
            raise ContractError(
                'Effect %s: time_multiplier should be positive' % self.key)
        if self.failure is not None and self.failure not in FAILURE_KINDS:
            raise ContractError(
                "Effect %s: invalid failure kind '%s'.\nThe valid kinds "
                "are:%s" % (self.key, self.failure,
                            format_choices(FAILURE_KINDS)))

    @property
    def neutral(self):
        "Whether this effect leaves time, size and behavior unchanged"
        return(self.time_multiplier == 1. and self.size_delta == 0
               and self.failure is None)

    def to_dict(self):
        d = {'time_multiplier': self.time_multiplier,
             'size_delta': self.size_delta}
        if self.md5_salt is not None:
            d['md5_salt'] = self.md5_salt
        if self.failure is not None:
            d['failure'] = self.failure
        if self.when is not None:
            d['when'] = self.when
        return(d)

    @classmethod
    def from_dict(cls, key, d):
        return(cls(key=key,
                   time_multiplier=float(d.get('time_multiplier', 1.)),
                   size_delta=int(d.get('size_delta', 0)),
                   md5_salt=d.get('md5_salt'), failure=d.get('failure'),
                   when=d.get('when')))


@dataclass(frozen=True)
class SyntheticSpec:
    """
    A deterministic response function standing in for a real program

    Attributes
    ----------
    - flag_effects: dict of key -> FlagEffect
    - base_time: float (seconds), base_size: int (bytes)
    - noise: a NoiseModel
    - compile_time: float (seconds)
    - flagspace: dict, optional
        A flag-space description document; when absent, a space of
        boolean flags '-fNAME' / '-fno-NAME' is derived from the keys
        of `flag_effects`
    """
    flag_effects: dict = field(default_factory=dict)
    base_time: float = 1.
    base_size: int = 10000
    noise: NoiseModel = NoiseModel()
    compile_time: float = 0.5
    flagspace: dict = None

    def __post_init__(self):
        if not self.base_time > 0:
            raise ContractError('Synthetic base_time should be positive')
        if not self.base_size > 0:
            raise ContractError('Synthetic base_size should be positive')

    def derive_flagspace(self):
        """
        Return the flag space of this synthetic workload

        Returns
        -------
        A FlagSpace (see flagforge.autotuning.flagspace)
        """
        from ..autotuning.flagspace import FlagSpace, \
            FlagDescriptor
        if self.flagspace is not None:
            return(FlagSpace.from_dict(self.flagspace))
        names = []
        for key in self.flag_effects:
            name, _, value = key.partition('=')
            if name == 'base' or name in names:
                continue
            if value not in ('', 'on', 'off'):
                raise ContractError(
                    "Effect key '%s' needs an explicit flag space" % key)
            names.append(name)
        descriptors = tuple(
            FlagDescriptor(name=n, kind='boolean', on_form='-f' + n,
                           off_form='-fno-' + n) for n in names)
        return(FlagSpace('synthetic', '*', ('', '-O3'), descriptors))

    def to_dict(self):
        d = {'flag_effects': dict((k, e.to_dict())
                                  for k, e in self.flag_effects.items()),
             'base_time': self.base_time, 'base_size': self.base_size,
             'noise': self.noise.to_dict(),
             'compile_time': self.compile_time}
        if self.flagspace is not None:
            d['flagspace'] = self.flagspace
        return(d)

    @classmethod
    def from_dict(cls, d):
        effects = dict((k, FlagEffect.from_dict(k, e))
                       for k, e in d.get('flag_effects', {}).items())
        return(cls(flag_effects=effects,
                   base_time=float(d.get('base_time', 1.)),
                   base_size=int(d.get('base_size', 10000)),
                   noise=NoiseModel.from_dict(d.get('noise',
                                                    {'kind': 'none'})),
                   compile_time=float(d.get('compile_time', 0.5)),
                   flagspace=d.get('flagspace')))


@dataclass(frozen=True)
class WorkloadMeta:
    """
    Meta information of a workload (how to compile and run it)

    Attributes
    ----------
    - id, title: strings
    - kind: 'real' or 'synthetic'
    - build_template: string, with placeholders {compiler}, {flags},
      {binary}, {source_dir}
    - run_commands: dict of command key -> template with placeholders
      {binary}, {dataset}, {output}, {run_dir}
    - reference_output: dict of 'cmd' or 'cmd:dataset' -> 'md5:<hex>'
      or a path (relative to the workload entry) of a reference file
    - output_check: dict, {"mode": "digest"} or
      {"mode": "numeric", "rel_tol": 1e-6}
    - dataset_tags: list of strings
    - feature_file: string, optional (relative to the workload entry)
    - tunable_params: list of TunableParam
    - synthetic: SyntheticSpec, for kind 'synthetic'
    - sources: list of files of the entry (copied at registration)
    - deterministic_build: bool
    """
    id: str
    title: str = ''
    kind: str = 'real'
    build_template: str = None
    run_commands: dict = field(default_factory=dict)
    reference_output: dict = field(default_factory=dict)
    output_check: dict = field(default_factory=lambda: {'mode': 'digest'})
    dataset_tags: list = field(default_factory=list)
    feature_file: str = None
    tunable_params: list = field(default_factory=list)
    synthetic: SyntheticSpec = None
    sources: list = field(default_factory=list)
    deterministic_build: bool = False

    def to_dict(self):
        d = {'id': self.id, 'title': self.title, 'kind': self.kind,
             'run_commands': dict(self.run_commands),
             'reference_output': dict(self.reference_output),
             'output_check': dict(self.output_check),
             'dataset_tags': list(self.dataset_tags),
             'tunable_params': [p.to_dict() for p in self.tunable_params],
             'sources': list(self.sources),
             'deterministic_build': self.deterministic_build}
        if self.build_template is not None:
            d['build_template'] = self.build_template
        if self.feature_file is not None:
            d['feature_file'] = self.feature_file
        if self.synthetic is not None:
            d['synthetic'] = self.synthetic.to_dict()
        return(d)

    @classmethod
    def from_dict(cls, d):
        try:
            synthetic = d.get('synthetic')
            return(cls(
                id=d['id'], title=d.get('title', ''),
                kind=d.get('kind', 'real'),
                build_template=d.get('build_template'),
                run_commands=dict(d.get('run_commands', {})),
                reference_output=dict(d.get('reference_output', {})),
                output_check=dict(d.get('output_check',
                                        {'mode': 'digest'})),
                dataset_tags=list(d.get('dataset_tags', [])),
                feature_file=d.get('feature_file'),
                tunable_params=[TunableParam.from_dict(p)
                                for p in d.get('tunable_params', [])],
                synthetic=(SyntheticSpec.from_dict(synthetic)
                           if synthetic is not None else None),
                sources=list(d.get('sources', [])),
                deterministic_build=bool(d.get('deterministic_build',
                                               False))))
        except KeyError as err:
            raise ContractError('Workload meta misses the key %s' % err)


@dataclass(frozen=True)
class DatasetMeta:
    """
    Meta information of a dataset

    Attributes
    ----------
    - id: string
    - tags: list of strings (e.g. ['image', 'jpeg'])
    - files: list of paths (relative to the dataset entry when stored;
      absolute once resolved by `WorkloadRegistry.resolve_datasets`)
    - params: dict of name -> value (e.g. {'CT_MATRIX_DIMENSION': 128}),
      exported to the run environment
    """
    id: str
    tags: list = field(default_factory=list)
    files: list = field(default_factory=list)
    params: dict = field(default_factory=dict)

    def to_dict(self):
        return({'id': self.id, 'tags': list(self.tags),
                'files': list(self.files), 'params': dict(self.params)})

    @classmethod
    def from_dict(cls, d):
        try:
            return(cls(id=d['id'], tags=list(d.get('tags', [])),
                       files=list(d.get('files', [])),
                       params=dict(d.get('params', {}))))
        except KeyError as err:
            raise ContractError('Dataset meta misses the key %s' % err)


def validate_workload(meta):
    """
    Raise a ContractError if the workload meta is inconsistent
    """
    if not ENTRY_ID_PATTERN.match(meta.id or ''):
        raise ContractError('Invalid workload id %r' % meta.id)
    if meta.kind not in WORKLOAD_KINDS:
        raise ContractError(
            "Invalid workload kind '%s'.\nThe valid kinds are:%s"
            % (meta.kind, format_choices(WORKLOAD_KINDS)))
    if meta.kind == 'synthetic':
        if meta.synthetic is None:
            raise ContractError(
                'Synthetic workload %s needs a synthetic spec' % meta.id)
        if meta.build_template is not None or len(meta.run_commands) > 0:
            raise ContractError(
                'Synthetic workload %s cannot have build or run templates'
                % meta.id)
        return
    if meta.synthetic is not None:
        raise ContractError(
            'Real workload %s cannot carry a synthetic spec' % meta.id)
    if not meta.build_template:
        raise ContractError('Workload %s needs a build template' % meta.id)
    unresolved = template_fields(meta.build_template) - \
        set(BUILD_PLACEHOLDERS)
    if unresolved:
        raise ContractError(
            'Unresolvable placeholders %s in the build template of %s.\n'
            'The available placeholders are:%s'
            % (sorted(unresolved), meta.id,
               format_choices(BUILD_PLACEHOLDERS)))
    for key, template in meta.run_commands.items():
        unresolved = template_fields(template) - set(RUN_PLACEHOLDERS)
        if unresolved:
            raise ContractError(
                "Unresolvable placeholders %s in the run command '%s' of "
                "%s.\nThe available placeholders are:%s"
                % (sorted(unresolved), key, meta.id,
                   format_choices(RUN_PLACEHOLDERS)))
    mode = meta.output_check.get('mode', 'digest')
    if mode not in OUTPUT_CHECK_MODES:
        raise ContractError(
            "Invalid output check mode '%s'.\nThe valid modes are:%s"
            % (mode, format_choices(OUTPUT_CHECK_MODES)))


class WorkloadRegistry(object):
    """
    Registry of workloads and datasets, stored under `repo_root`

    Reads can happen from any number of concurrent contexts;
    registrations are serialized by a write lock.
    """

    def __init__(self, repo_root):
        """
        Parameters
        ----------
        repo_root: string
            The root of the repository
        """
        self.repo_root = os.path.abspath(repo_root)
        self.workload_root = os.path.join(self.repo_root, 'workload')
        self.dataset_root = os.path.join(self.repo_root, 'dataset')
        self._lock_path = os.path.join(self.repo_root, '.registry.lock')

    # Workloads
    # ---------

    def workload_dir(self, workload_id):
        "Return the entry directory of a workload"
        return(os.path.join(self.workload_root, workload_id))

    def register_workload(self, meta, source_dir=None):
        """
        Register a workload

        Parameters
        ----------
        meta: a WorkloadMeta

        source_dir: string, optional
            Directory from which the files listed in `meta.sources`
            (and the feature file) are copied into the entry

        Returns
        -------
        The workload id
        """
        validate_workload(meta)
        with FileLock(self._lock_path):
            entry_dir = self.workload_dir(meta.id)
            if os.path.exists(os.path.join(entry_dir, 'meta.json')):
                raise ContractError(
                    "A workload with id '%s' is already registered"
                    % meta.id)
            os.makedirs(entry_dir, exist_ok=True)
            if source_dir is not None:
                to_copy = list(meta.sources)
                if meta.feature_file is not None:
                    to_copy.append(meta.feature_file)
                for name in to_copy:
                    src = os.path.join(source_dir, name)
                    if not os.path.exists(src):
                        raise ContractError(
                            'Missing source file %s of workload %s'
                            % (src, meta.id))
                    dst = os.path.join(entry_dir, name)
                    os.makedirs(os.path.dirname(dst), exist_ok=True)
                    shutil.copy2(src, dst)
            write_json_atomic(os.path.join(entry_dir, 'meta.json'),
                              meta.to_dict())
        logger.info('Registered workload %s', meta.id)
        return(meta.id)

    def load_workload(self, workload_id):
        """
        Return the WorkloadMeta registered under `workload_id`
        """
        path = os.path.join(self.workload_dir(workload_id), 'meta.json')
        if not os.path.isfile(path):
            raise ContractError(
                "Unknown workload '%s'.\nThe registered workloads are:%s"
                % (workload_id, format_choices(self.list_workloads())))
        return(WorkloadMeta.from_dict(read_json(path)))

    def list_workloads(self):
        "Return the sorted ids of the registered workloads"
        return(list_entries(self.workload_root))

    # Datasets
    # --------

    def dataset_dir(self, dataset_id):
        "Return the entry directory of a dataset"
        return(os.path.join(self.dataset_root, dataset_id))

    def register_dataset(self, meta, source_dir=None):
        """
        Register a dataset

        Parameters
        ----------
        meta: a DatasetMeta

        source_dir: string, optional
            Directory from which `meta.files` are copied into the entry

        Returns
        -------
        The dataset id
        """
        if not ENTRY_ID_PATTERN.match(meta.id or ''):
            raise ContractError('Invalid dataset id %r' % meta.id)
        with FileLock(self._lock_path):
            entry_dir = self.dataset_dir(meta.id)
            if os.path.exists(os.path.join(entry_dir, 'meta.json')):
                raise ContractError(
                    "A dataset with id '%s' is already registered" % meta.id)
            os.makedirs(entry_dir, exist_ok=True)
            if source_dir is not None:
                for name in meta.files:
                    shutil.copy2(os.path.join(source_dir, name),
                                 os.path.join(entry_dir,
                                              os.path.basename(name)))
                meta = dataclasses.replace(
                    meta, files=[os.path.basename(f) for f in meta.files])
            write_json_atomic(os.path.join(entry_dir, 'meta.json'),
                              meta.to_dict())
        logger.info('Registered dataset %s', meta.id)
        return(meta.id)

    def load_dataset(self, dataset_id):
        "Return the DatasetMeta registered under `dataset_id`"
        path = os.path.join(self.dataset_dir(dataset_id), 'meta.json')
        if not os.path.isfile(path):
            raise ContractError(
                "Unknown dataset '%s'.\nThe registered datasets are:%s"
                % (dataset_id, format_choices(self.list_datasets())))
        return(DatasetMeta.from_dict(read_json(path)))

    def list_datasets(self):
        "Return the sorted ids of the registered datasets"
        return(list_entries(self.dataset_root))

    def resolve_dataset(self, dataset_id):
        """
        Return the DatasetMeta of `dataset_id` with absolute file paths,
        checking that all files exist
        """
        meta = self.load_dataset(dataset_id)
        files = []
        for name in meta.files:
            path = name if os.path.isabs(name) else \
                os.path.join(self.dataset_dir(meta.id), name)
            if not os.path.exists(path):
                raise ContractError(
                    'File %s of dataset %s does not exist' % (path, meta.id))
            files.append(path)
        return(dataclasses.replace(meta, files=files))

    def resolve_datasets(self, workload_id, tag=None):
        """
        Return the datasets a workload can run on

        Parameters
        ----------
        workload_id: string

        tag: string, optional
            Only keep datasets carrying this tag

        Returns
        -------
        A list of DatasetMeta (with absolute file paths), sorted by id:
        the datasets whose tags intersect the workload's dataset tags
        """
        workload = self.load_workload(workload_id)
        wanted = set(workload.dataset_tags)
        datasets = []
        if len(wanted) == 0:
            return(datasets)
        for dataset_id in self.list_datasets():
            tags = set(self.load_dataset(dataset_id).tags)
            if not tags & wanted:
                continue
            if tag is not None and tag not in tags:
                continue
            datasets.append(self.resolve_dataset(dataset_id))
        return(datasets)

    # Features
    # --------

    def load_feature_vector(self, workload_id):
        """
        Read the feature vector of a workload

        The feature file is a JSON mapping {"ft1": number, ...}.
        Features missing from the file are absent from the vector.

        Returns
        -------
        A FeatureVector
        """
        workload = self.load_workload(workload_id)
        if workload.feature_file is None:
            raise ContractError('Workload %s has no feature file'
                                % workload_id)
        path = workload.feature_file
        if not os.path.isabs(path):
            path = os.path.join(self.workload_dir(workload_id), path)
        if not os.path.isfile(path):
            raise ContractError('Missing feature file %s of workload %s'
                                % (path, workload_id))
        document = read_json(path)
        if not isinstance(document, dict):
            raise ContractError('Feature file %s should hold a mapping'
                                % path)
        values = {}
        for key, value in document.items():
            if FEATURE_PATTERN.match(key) is None:
                raise ContractError(
                    "Malformed feature id '%s' in %s" % (key, path))
            if isinstance(value, bool) or \
                    not isinstance(value, (int, float)) or \
                    not math.isfinite(value):
                raise ContractError(
                    "Malformed entry %s=%r in %s: expected a finite number"
                    % (key, value, path))
            values[key] = float(value)
        return(FeatureVector(workload_id, values))


def bundled_workloads():
    """
    Return the names of the workloads shipped with flagforge
    """
    return(sorted(os.path.basename(os.path.dirname(p)) for p in
                  glob.glob(os.path.join(BUNDLED_WORKLOADS, '*',
                                         'meta.json'))))


def register_bundled(registry, name):
    """
    Register a workload shipped with flagforge, and its datasets

    Parameters
    ----------
    registry: a WorkloadRegistry

    name: string
        One of `bundled_workloads()`

    Returns
    -------
    The workload id
    """
    directory = os.path.join(BUNDLED_WORKLOADS, name)
    if not os.path.isfile(os.path.join(directory, 'meta.json')):
        raise ContractError(
            "Unknown bundled workload '%s'.\nThe bundled workloads are:%s"
            % (name, format_choices(bundled_workloads())))
    document = read_json(os.path.join(directory, 'meta.json'))
    datasets = document.pop('datasets', [])
    meta = WorkloadMeta.from_dict(document)
    workload_id = registry.register_workload(meta, source_dir=directory)
    for d in datasets:
        dataset = DatasetMeta.from_dict(d)
        if dataset.id not in registry.list_datasets():
            registry.register_dataset(dataset)
    return(workload_id)
