"""
This file is part of flagforge.

It defines the program pipeline: one (workload, dataset, flag assignment)
is compiled and run a number of times, either with a real compiler or
with the synthetic backend, and its raw characteristics are returned.

Copyright 2017-2018, flagforge contributors
License: 3-Clause-BSD
"""
import os
import re
import glob
import json
import shlex
import shutil
import logging
import tempfile
import subprocess
import time
from dataclasses import dataclass
import numpy as np
from ..errors import ContractError, format_choices
from ..repository.utilities import md5_hex, file_md5
from .flagspace import FlagAssignment, load_flagspace, with_params, \
    check_assignment, render
from .compilers import CompilerEnv
from .results import FailureKind, RunOutcome, PipelineResult, MonotonicClock
from .synthetic import evaluate, TIMEOUT_STATUS

logger = logging.getLogger(__name__)

DEFAULT_TIMEOUT = 60.
DATASET_VARIABLE = 'FLAGFORGE_DATASET'
RESULT_FILE = 'flagforge-result.json'
BINARY_NAME = 'a.out'
NUMBER = re.compile(r'^[-+]?(\d+\.?\d*|\.\d+)([eE][-+]?\d+)?$')


@dataclass(frozen=True)
class PipelineRequest:
    """
    What to execute

    Attributes
    ----------
    - workload: string, workload id
    - dataset: string, dataset id (or None)
    - command_key: string, key of the run command (None: the first one)
    - assignment: a FlagAssignment
    - env: a CompilerEnv (possibly the synthetic marker)
    - repetitions: int >= 1
    - timeout: float > 0 (seconds, per run and for the compilation)
    - seed: int, seed of the synthetic noise
    - compile_only: bool, stop after the compilation
    """
    workload: str
    dataset: str
    command_key: str
    assignment: FlagAssignment
    env: CompilerEnv
    repetitions: int = 1
    timeout: float = DEFAULT_TIMEOUT
    seed: int = 0
    compile_only: bool = False

    def __post_init__(self):
        if int(self.repetitions) < 1:
            raise ContractError('repetitions should be >= 1, got %r'
                                % self.repetitions)
        if not self.timeout > 0:
            raise ContractError('timeout should be positive, got %r'
                                % self.timeout)

    def with_assignment(self, assignment, compile_only=None):
        "Return a copy of this request for another assignment"
        return(PipelineRequest(
            self.workload, self.dataset, self.command_key, assignment,
            self.env, self.repetitions, self.timeout, self.seed,
            self.compile_only if compile_only is None else compile_only))


def _numeric_tokens(data):
    "Split text output in tokens, converting the numbers to floats"
    tokens = []
    for token in data.decode('utf-8', errors='replace').split():
        tokens.append(float(token) if NUMBER.match(token) else token)
    return(tokens)


def validate_output(produced, reference, output_check=None, base_dir=None):
    """
    Check the output of a run against a reference

    Parameters
    ----------
    produced: bytes, or string (path of the produced file)

    reference: string or None
        Either 'md5:<hex digest>' or the path of a reference file
        (relative to `base_dir`)

    output_check: dict, optional
        {"mode": "digest"} (default: exact content) or
        {"mode": "numeric", "rel_tol": 1e-6} (numbers compared with a
        relative tolerance, other tokens exactly)

    base_dir: string, optional

    Returns
    -------
    True or False, or None when no reference is available (the
    validation is skipped)
    """
    if reference is None:
        return(None)
    if not isinstance(produced, (bytes, bytearray)):
        with open(produced, 'rb') as f:
            produced = f.read()
    output_check = output_check or {'mode': 'digest'}

    if reference.startswith('md5:'):
        return(md5_hex(bytes(produced)) == reference[4:].lower())

    path = reference
    if base_dir is not None and not os.path.isabs(path):
        path = os.path.join(base_dir, path)
    if not os.path.isfile(path):
        logger.warning('Reference output %s is missing: validation skipped',
                       path)
        return(None)
    with open(path, 'rb') as f:
        expected = f.read()
    if output_check.get('mode', 'digest') == 'digest':
        return(md5_hex(bytes(produced)) == md5_hex(expected))

    # Numeric comparison
    rel_tol = float(output_check.get('rel_tol', 1.e-6))
    produced_tokens = _numeric_tokens(bytes(produced))
    expected_tokens = _numeric_tokens(expected)
    if len(produced_tokens) != len(expected_tokens):
        return(False)
    for a, b in zip(produced_tokens, expected_tokens):
        if isinstance(a, float) and isinstance(b, float):
            if not np.isclose(a, b, rtol=rel_tol, atol=0.):
                return(False)
        elif a != b:
            return(False)
    return(True)


def classify_compile_failure(returncode, stderr):
    """
    Distinguish a crash of the compiler from a rejected compilation
    """
    if returncode < 0 or 'internal compiler error' in stderr.lower():
        return(FailureKind.COMPILER_CRASH)
    return(FailureKind.COMPILE_ERROR)


class Pipeline(object):
    """
    Executes pipeline requests

    Each real build takes place in its own scratch directory, so that
    distinct requests can be executed concurrently; the explorer
    serializes the timed runs.
    """

    def __init__(self, registry, flagspace_paths=None, keep_artifacts=False,
                 scratch_root=None):
        """
        Parameters
        ----------
        registry: a WorkloadRegistry

        flagspace_paths: list of strings, optional
            Directories with user flag-space descriptions

        keep_artifacts: bool, optional
            Keep the scratch directories of real builds

        scratch_root: string, optional
            Where the scratch directories are created
        """
        self.registry = registry
        self.flagspace_paths = flagspace_paths
        self.keep_artifacts = keep_artifacts
        self.scratch_root = scratch_root
        self.clock = MonotonicClock()

    def flagspace_for(self, workload, env):
        """
        Return the flag space of a workload compiled by `env`
        (including the tunable workload parameters)

        Parameters
        ----------
        workload: a WorkloadMeta

        env: a CompilerEnv
        """
        if workload.kind == 'synthetic':
            space = workload.synthetic.derive_flagspace()
        else:
            if env.synthetic:
                raise ContractError(
                    'Workload %s is a real program: it needs a real '
                    'compiler' % workload.id)
            space = load_flagspace(env.family, env.version,
                                   self.flagspace_paths)
        return(with_params(space, workload.tunable_params))

    def execute(self, request):
        """
        Compile and run a workload

        Failures of the compiler or of the program are returned inside
        the result; only invalid requests raise.

        Parameters
        ----------
        request: a PipelineRequest

        Returns
        -------
        A PipelineResult
        """
        workload = self.registry.load_workload(request.workload)
        dataset = None
        if request.dataset is not None:
            dataset = self.registry.resolve_dataset(request.dataset)
        space = self.flagspace_for(workload, request.env)
        check_assignment(request.assignment, space)
        flags = render(request.assignment, space)
        params = dict(dataset.params) if dataset is not None else {}

        if workload.kind == 'synthetic':
            return(evaluate(workload.synthetic, workload.id,
                            request.assignment, flags=flags, params=params,
                            compiler_version=request.env.version,
                            repetitions=request.repetitions,
                            timeout=request.timeout, seed=request.seed,
                            compile_only=request.compile_only,
                            clock=self.clock))

        command_key = request.command_key
        if command_key is None:
            command_key = sorted(workload.run_commands)[0]
        if command_key not in workload.run_commands:
            raise ContractError(
                "Workload %s has no command '%s'.\nThe commands are:%s"
                % (workload.id, command_key,
                   format_choices(sorted(workload.run_commands))))
        scratch = tempfile.mkdtemp(prefix='flagforge-', dir=self.scratch_root)
        try:
            return(self._execute_real(workload, dataset, command_key, flags,
                                      request, scratch))
        finally:
            if self.keep_artifacts:
                logger.info('Artifacts kept in %s', scratch)
            else:
                shutil.rmtree(scratch, ignore_errors=True)

    def _execute_real(self, workload, dataset, command_key, flags, request,
                      scratch):
        "Build and run a real workload inside `scratch`"
        # Copy the sources of the workload entry
        source_dir = os.path.join(scratch, 'src')
        shutil.copytree(self.registry.workload_dir(workload.id), source_dir)
        binary = os.path.join(scratch, BINARY_NAME)
        command = workload.build_template.format(
            compiler=shlex.quote(request.env.path), flags=flags,
            binary=shlex.quote(binary), source_dir=shlex.quote(source_dir))
        logger.debug('Build: %s', command)

        # Compile
        start = time.perf_counter()
        try:
            proc = subprocess.run(command, shell=True, cwd=source_dir,
                                  capture_output=True, text=True,
                                  timeout=request.timeout)
        except subprocess.TimeoutExpired:
            logger.info('Compilation timed out after %ss', request.timeout)
            return(PipelineResult(False, time.perf_counter() - start,
                                  failure=FailureKind.COMPILER_CRASH,
                                  flags=flags))
        compile_time = time.perf_counter() - start
        if proc.returncode != 0 or not os.path.isfile(binary):
            failure = classify_compile_failure(proc.returncode, proc.stderr)
            logger.info('Compilation failed (%s): %s', failure.value,
                        proc.stderr.strip()[-500:])
            return(PipelineResult(False, compile_time, failure=failure,
                                  flags=flags))

        # Measure the produced files
        binary_size = os.path.getsize(binary)
        objects = glob.glob(os.path.join(source_dir, '**', '*.o'),
                            recursive=True)
        object_size = sum(os.path.getsize(o) for o in objects) \
            if objects else binary_size
        binary_md5 = file_md5(binary)
        if request.compile_only:
            return(PipelineResult(True, compile_time, binary_size,
                                  object_size, binary_md5, [], None, flags))

        # Run sequentially
        runs = []
        for i in range(request.repetitions):
            outcome = self._run_once(workload, dataset, command_key, binary,
                                     os.path.join(scratch, 'run-%d' % i),
                                     request)
            runs.append(outcome)
            if outcome.failure is not None:
                break
        failure = next((r.failure for r in runs if r.failure is not None),
                       None)
        return(PipelineResult(True, compile_time, binary_size, object_size,
                              binary_md5, runs, failure, flags))

    def _run_once(self, workload, dataset, command_key, binary, run_dir,
                  request):
        "Run the binary once and validate its output"
        os.makedirs(run_dir)
        output = os.path.join(run_dir, 'output')
        dataset_file = ''
        if dataset is not None and len(dataset.files) > 0:
            dataset_file = dataset.files[0]
        command = workload.run_commands[command_key].format(
            binary=shlex.quote(binary), dataset=shlex.quote(dataset_file),
            output=shlex.quote(output), run_dir=shlex.quote(run_dir))
        environment = dict(os.environ)
        if dataset is not None:
            environment.update((k, str(v)) for k, v in dataset.params.items())
        environment.update((k, str(v)) for k, v in
                           request.assignment.env_values.items())
        environment[DATASET_VARIABLE] = dataset_file

        started_at = self.clock.stamp()
        start = time.perf_counter()
        try:
            proc = subprocess.run(command, shell=True, cwd=run_dir,
                                  env=environment, stdout=subprocess.PIPE,
                                  stderr=subprocess.PIPE,
                                  timeout=request.timeout)
        except subprocess.TimeoutExpired:
            return(RunOutcome(request.timeout, TIMEOUT_STATUS, None,
                              FailureKind.TIMEOUT, started_at,
                              self.clock.stamp()))
        wall_time = time.perf_counter() - start
        finished_at = self.clock.stamp()
        if proc.returncode != 0:
            return(RunOutcome(wall_time, proc.returncode, None,
                              FailureKind.RUNTIME_CRASH, started_at,
                              finished_at))

        # Validate what the program wrote (its output file, else stdout)
        produced = output if os.path.isfile(output) else proc.stdout
        key = '%s:%s' % (command_key, dataset.id) if dataset else command_key
        reference = workload.reference_output.get(
            key, workload.reference_output.get(command_key))
        output_ok = validate_output(produced, reference, workload.output_check,
                                    self.registry.workload_dir(workload.id))
        failure = FailureKind.WRONG_OUTPUT if output_ok is False else None
        return(RunOutcome(wall_time, 0, output_ok, failure, started_at,
                          finished_at, _read_region_time(run_dir)))


def _read_region_time(run_dir):
    "Return the time of the instrumented region written by the workload"
    path = os.path.join(run_dir, RESULT_FILE)
    if not os.path.isfile(path):
        return(None)
    try:
        with open(path) as f:
            value = float(json.load(f)['region_time'])
    except (ValueError, KeyError, TypeError) as err:
        logger.warning('Ignoring malformed %s: %s', path, err)
        return(None)
    return(value if value > 0 else None)
