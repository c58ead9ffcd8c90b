"""
This file is part of flagforge.

It defines the optimization choice space of a compiler (boolean flags,
parametric flags, enumerated choices, environment parameters), together
with random and exhaustive sampling, rendering of a selection to
command-line text, and parsing of command-line text back to a selection.

Copyright 2017-2018, flagforge contributors
License: 3-Clause-BSD
"""
import os
import re
import glob
import numbers
import itertools
from dataclasses import dataclass, field
import numpy as np
from ..errors import ContractError, EnvironmentProblem, \
    format_choices
from ..repository.utilities import read_json

# Directory of the flag-space description files shipped with the package
SHIPPED_FLAGSPACES = os.path.join(
    os.path.dirname(os.path.dirname(os.path.abspath(__file__))),
    'data', 'flagspaces')

FLAG_KINDS = ('boolean', 'parametric', 'choice', 'env_param')
FLAG_TAGS = ('base', 'cpu', 'parametric')
MAX_EXHAUSTIVE = 2**20


def parse_version(version):
    """
    Convert a dotted version string (e.g. '4.9.2') to a tuple of integers

    Parameters
    ----------
    version: string

    Returns
    -------
    A tuple of ints, e.g. (4, 9, 2)
    """
    components = re.findall(r'\d+', str(version))
    if len(components) == 0:
        raise ContractError('Invalid version string: %r' % version)
    return(tuple(int(c) for c in components))


def version_in_range(version, version_range):
    """
    Check whether `version` belongs to `version_range`

    A range is a comma-separated conjunction of constraints of the form
    '>=7', '<5', '<=4.9', '>4', '==7.1', or an inclusive interval
    '4.6-4.9'. An empty range or '*' contains all versions.
    Each bound only compares as many components as it declares,
    so that '4.6-4.9' contains 4.9.2.

    Parameters
    ----------
    version: string
        A dotted version, e.g. '4.9.2'

    version_range: string

    Returns
    -------
    A boolean
    """
    if version_range is None:
        return(True)
    v = parse_version(version)
    for constraint in str(version_range).split(','):
        constraint = constraint.strip()
        if constraint in ('', '*'):
            continue
        interval = re.match(r'^(\d[\d.]*)\s*-\s*(\d[\d.]*)$', constraint)
        if interval is not None:
            low = parse_version(interval.group(1))
            high = parse_version(interval.group(2))
            if v[:len(low)] < low or v[:len(high)] > high:
                return(False)
            continue
        op_match = re.match(r'^(>=|<=|==|>|<)?\s*(\d[\d.]*)$', constraint)
        if op_match is None:
            raise ContractError('Invalid version range: %r' % version_range)
        op = op_match.group(1) or '=='
        bound = parse_version(op_match.group(2))
        truncated = v[:len(bound)]
        if op == '>=' and not truncated >= bound:
            return(False)
        if op == '<=' and not truncated <= bound:
            return(False)
        if op == '>' and not truncated > bound:
            return(False)
        if op == '<' and not truncated < bound:
            return(False)
        if op == '==' and not truncated == bound:
            return(False)
    return(True)


@dataclass(frozen=True)
class FlagDescriptor:
    """
    One tunable choice of a compiler

    Attributes
    ----------
    - name: string
        Canonical base name, e.g. 'ivopts' for '-fivopts' / '-fno-ivopts'
    - kind: string
        Either 'boolean', 'parametric', 'choice' or 'env_param'
    - on_form, off_form: strings
        Command-line forms of a boolean flag
    - minimum, maximum: ints
        Range of a parametric flag or environment parameter
    - template: string
        Rendering of a parametric or choice flag, where '{value}' is
        replaced by the selected value (e.g. '--param NAME={value}')
    - values: tuple of strings
        Alternatives of a choice flag
    - variable: string
        Name of the environment variable of an env_param
    - tags: frozenset of strings among 'base', 'cpu', 'parametric'
    - versions: string
        Range of compiler versions for which the flag is valid
    """
    name: str
    kind: str
    on_form: str = None
    off_form: str = None
    minimum: int = None
    maximum: int = None
    template: str = None
    values: tuple = ()
    variable: str = None
    tags: frozenset = frozenset()
    versions: str = '*'

    def __post_init__(self):
        if self.kind not in FLAG_KINDS:
            raise ContractError(
                "Flag %s has an invalid kind '%s'.\nThe valid kinds are:%s"
                % (self.name, self.kind, format_choices(FLAG_KINDS)))
        unknown_tags = set(self.tags) - set(FLAG_TAGS)
        if unknown_tags:
            raise ContractError(
                "Flag %s has invalid tags %s.\nThe valid tags are:%s"
                % (self.name, sorted(unknown_tags), format_choices(FLAG_TAGS)))
        if self.kind == 'boolean':
            if not self.on_form or not self.off_form \
                    or self.on_form == self.off_form:
                raise ContractError(
                    'Boolean flag %s needs two distinct forms' % self.name)
        elif self.kind in ('parametric', 'env_param'):
            if self.minimum is None or self.maximum is None \
                    or self.minimum > self.maximum:
                raise ContractError(
                    'Flag %s needs an integer range with min <= max'
                    % self.name)
            if self.kind == 'parametric' and '{value}' not in \
                    (self.template or ''):
                raise ContractError(
                    'Parametric flag %s needs a template with {value}'
                    % self.name)
            if self.kind == 'env_param' and not self.variable:
                raise ContractError(
                    'Environment parameter %s needs a variable name'
                    % self.name)
        elif self.kind == 'choice':
            if len(self.values) == 0 or '{value}' not in \
                    (self.template or ''):
                raise ContractError(
                    'Choice flag %s needs values and a template' % self.name)

    def options(self):
        """
        Return the list of values this flag can take (excluding absence)
        """
        if self.kind == 'boolean':
            return(['on', 'off'])
        elif self.kind == 'choice':
            return(list(self.values))
        return(list(range(self.minimum, self.maximum + 1)))

    def check_value(self, value):
        "Raise a ContractError if `value` is not valid for this flag"
        if self.kind == 'boolean':
            valid = value in ('on', 'off')
        elif self.kind == 'choice':
            valid = value in self.values
        else:
            valid = isinstance(value, (int, np.integer)) \
                and not isinstance(value, bool) \
                and self.minimum <= value <= self.maximum
        if not valid:
            raise ContractError(
                "Invalid value %r for flag '%s' (kind %s)"
                % (value, self.name, self.kind))

    def render_value(self, value):
        "Return the command-line text of this flag set to `value`"
        if self.kind == 'boolean':
            return(self.on_form if value == 'on' else self.off_form)
        return(self.template.replace('{value}', str(value)))

    def match(self, text):
        """
        Return the value encoded by the command-line `text`,
        or None if `text` is not a form of this flag
        """
        if self.kind == 'boolean':
            if text == self.on_form:
                return('on')
            if text == self.off_form:
                return('off')
            return(None)
        if self.kind == 'env_param':
            return(None)
        head, tail = self.template.split('{value}', 1)
        if not (text.startswith(head) and text.endswith(tail)) \
                or len(text) < len(head) + len(tail):
            return(None)
        raw = text[len(head):len(text) - len(tail)]
        if self.kind == 'choice':
            return(raw if raw in self.values else None)
        if re.match(r'^-?\d+$', raw) is None:
            return(None)
        return(int(raw))

    def token_count(self):
        "Number of whitespace-separated tokens in a rendered form"
        if self.kind == 'boolean':
            return(1)
        return(len(self.template.split()))

    def to_dict(self):
        "Serialize to the description-file schema"
        d = {'name': self.name, 'kind': self.kind,
             'tags': sorted(self.tags), 'versions': self.versions}
        if self.kind == 'boolean':
            d.update(on=self.on_form, off=self.off_form)
        if self.kind in ('parametric', 'env_param'):
            d.update(min=self.minimum, max=self.maximum)
        if self.template is not None:
            d['template'] = self.template
        if self.kind == 'choice':
            d['values'] = list(self.values)
        if self.variable is not None:
            d['variable'] = self.variable
        return(d)

    @classmethod
    def from_dict(cls, d):
        "Build a descriptor from an entry of a description file"
        try:
            kind = d['kind']
            tags = set(d.get('tags', []))
            if kind == 'parametric':
                tags.add('parametric')
            return(cls(name=d['name'], kind=kind,
                       on_form=d.get('on'), off_form=d.get('off'),
                       minimum=d.get('min'), maximum=d.get('max'),
                       template=d.get('template'),
                       values=tuple(d.get('values', ())),
                       variable=d.get('variable'),
                       tags=frozenset(tags),
                       versions=d.get('versions', '*')))
        except KeyError as err:
            raise ContractError(
                'Flag description %r misses the key %s' % (d, err))


@dataclass(frozen=True)
class FlagSpace:
    """
    The optimization choice space of one compiler (version range)

    The order of `descriptors` is stable: it defines the rendering order,
    and the order in which random draws are taken during sampling.
    """
    compiler_id: str
    version_range: str
    base_levels: tuple
    descriptors: tuple

    def __post_init__(self):
        if len(self.base_levels) == 0:
            raise ContractError('A flag space needs at least one base level')
        names = [d.name for d in self.descriptors]
        duplicates = sorted(set(n for n in names if names.count(n) > 1))
        if duplicates:
            raise ContractError(
                'Duplicate flag names in space %s:%s'
                % (self.compiler_id, format_choices(duplicates)))

    @property
    def default_base(self):
        "The base level of the reference solution ('-O3' when available)"
        if '-O3' in self.base_levels:
            return('-O3')
        return(self.base_levels[0])

    def descriptor(self, name):
        "Return the descriptor called `name`"
        for d in self.descriptors:
            if d.name == name:
                return(d)
        raise ContractError(
            "Unknown flag '%s' in the space of %s"
            % (name, self.compiler_id))

    def env_descriptor(self, variable):
        "Return the env_param descriptor bound to `variable`"
        for d in self.descriptors:
            if d.kind == 'env_param' and d.variable == variable:
                return(d)
        raise ContractError(
            "Unknown environment parameter '%s' in the space of %s"
            % (variable, self.compiler_id))

    def names(self):
        "Return the names of the flags, in space order"
        return([d.name for d in self.descriptors])

    def to_dict(self):
        "Serialize to the description-file schema"
        return({'compiler': self.compiler_id,
                'versions': self.version_range,
                'base_levels': list(self.base_levels),
                'flags': [d.to_dict() for d in self.descriptors]})

    @classmethod
    def from_dict(cls, d, version=None):
        """
        Build a space from a description document

        Parameters
        ----------
        d: dict
            A document of the form
            {compiler, versions, base_levels, flags: [...]}

        version: string, optional
            When given, only keep the flags valid for this version
        """
        descriptors = [FlagDescriptor.from_dict(f) for f in d.get('flags', [])]
        if version is not None:
            descriptors = [f for f in descriptors
                           if version_in_range(version, f.versions)]
        return(cls(compiler_id=d.get('compiler', 'unknown'),
                   version_range=d.get('versions', '*'),
                   base_levels=tuple(d.get('base_levels', ['', '-O3'])),
                   descriptors=tuple(descriptors)))


@dataclass(frozen=True)
class FlagAssignment:
    """
    One concrete selection of choices in a FlagSpace

    Attributes
    ----------
    - base_level: string (e.g. '-O3')
    - values: dict
        flag name -> 'on'/'off' (boolean), int (parametric) or string
    - env_values: dict
        environment variable -> int
    """
    base_level: str
    values: dict = field(default_factory=dict)
    env_values: dict = field(default_factory=dict)

    def flags(self):
        "Return the sorted names of the flags set in this assignment"
        return(sorted(self.values))

    def without(self, name):
        "Return a copy of this assignment where flag `name` is unset"
        values = dict(self.values)
        values.pop(name, None)
        return(FlagAssignment(self.base_level, values, dict(self.env_values)))

    def with_value(self, name, value):
        "Return a copy of this assignment where flag `name` is `value`"
        values = dict(self.values)
        values[name] = value
        return(FlagAssignment(self.base_level, values, dict(self.env_values)))

    def to_dict(self):
        return({'base_level': self.base_level,
                'values': dict(self.values),
                'env_values': dict(self.env_values)})

    @classmethod
    def from_dict(cls, d):
        return(cls(base_level=d.get('base_level', ''),
                   values=dict(d.get('values', {})),
                   env_values=dict(d.get('env_values', {}))))


@dataclass(frozen=True)
class SamplingPolicy:
    """
    How random assignments are drawn from a FlagSpace

    Attributes
    ----------
    - include_probability: float in [0, 1]
        Probability that each eligible optional flag is included
    - enable_parametric: bool
        Whether parametric flags are eligible
    - enable_cpu: bool
        Whether flags tagged 'cpu' are eligible
    - enable_base: bool
        Whether the base level is drawn among the space's base levels
        (otherwise the default base, '-O3', is used)
    - enable_env: bool
        Whether environment parameters (tunable workload parameters)
        are drawn; when enabled they are always set
    - seed: int >= 0
    """
    include_probability: float = 0.25
    enable_parametric: bool = False
    enable_cpu: bool = False
    enable_base: bool = False
    enable_env: bool = True
    seed: int = 0

    def __post_init__(self):
        if not 0. <= self.include_probability <= 1.:
            raise ContractError(
                'include_probability should be in [0, 1], got %r'
                % self.include_probability)
        if isinstance(self.seed, bool) or \
                not isinstance(self.seed, numbers.Integral) or self.seed < 0:
            raise ContractError(
                'The sampling seed should be an integer >= 0, got %r'
                % (self.seed,))

    def eligible(self, descriptor):
        "Whether `descriptor` takes part in sampling under this policy"
        if descriptor.kind == 'env_param':
            return(self.enable_env)
        if descriptor.kind == 'parametric' or 'parametric' in descriptor.tags:
            if not self.enable_parametric:
                return(False)
        if 'cpu' in descriptor.tags and not self.enable_cpu:
            return(False)
        return(True)

    def with_seed(self, seed):
        "Return a copy of this policy with another seed"
        return(SamplingPolicy(self.include_probability,
                              self.enable_parametric, self.enable_cpu,
                              self.enable_base, self.enable_env, seed))


def find_description_files(search_paths=None):
    """
    Return the flag-space description files, user paths first

    Parameters
    ----------
    search_paths: list of strings, optional
        Directories searched before the shipped descriptions
    """
    directories = list(search_paths or []) + [SHIPPED_FLAGSPACES]
    files = []
    for directory in directories:
        files.extend(sorted(glob.glob(os.path.join(directory, '*.json'))))
    return(files)


def load_flagspace(compiler_id, version, search_paths=None):
    """
    Load the optimization space of a compiler version

    The first description file of `compiler_id` whose version range
    contains `version` is used; only the flags valid for `version`
    are kept, in file order.

    Parameters
    ----------
    compiler_id: string
        The compiler family, e.g. 'gcc'

    version: string
        The detected version, e.g. '4.9.2'

    search_paths: list of strings, optional
        Directories with user description files

    Returns
    -------
    A FlagSpace
    """
    candidates = []
    for path in find_description_files(search_paths):
        document = read_json(path)
        if document.get('compiler') == compiler_id:
            candidates.append((path, document))
    if len(candidates) == 0:
        raise EnvironmentProblem(
            "No flag-space description for compiler '%s'." % compiler_id)
    for path, document in candidates:
        if version_in_range(version, document.get('versions', '*')):
            return(FlagSpace.from_dict(document, version=version))
    ranges = ['%s (%s)' % (d.get('versions'), os.path.basename(p))
              for p, d in candidates]
    raise EnvironmentProblem(
        "Version %s of %s is outside all described ranges.\n"
        "The available ranges are:%s"
        % (version, compiler_id, format_choices(ranges)))


def with_params(space, tunable_params):
    """
    Return a copy of `space` extended with a workload's tunable parameters
    (as env_param descriptors)

    Parameters
    ----------
    space: a FlagSpace

    tunable_params: list of TunableParam objects
        (see flagforge.workloads.registry)
    """
    existing = set(space.names())
    extra = [FlagDescriptor(name=p.name, kind='env_param',
                            minimum=p.minimum, maximum=p.maximum,
                            variable=p.variable)
             for p in tunable_params if p.name not in existing]
    return(FlagSpace(space.compiler_id, space.version_range,
                     space.base_levels, space.descriptors + tuple(extra)))


def check_assignment(assignment, space):
    """
    Raise a ContractError if `assignment` is not valid for `space`
    """
    if assignment.base_level not in space.base_levels:
        raise ContractError(
            "Unknown base level '%s'.\nThe available base levels are:%s"
            % (assignment.base_level, format_choices(space.base_levels)))
    for name, value in assignment.values.items():
        descriptor = space.descriptor(name)
        if descriptor.kind == 'env_param':
            raise ContractError(
                "'%s' is an environment parameter: set it in env_values"
                % name)
        descriptor.check_value(value)
    for variable, value in assignment.env_values.items():
        space.env_descriptor(variable).check_value(value)


def _draw(descriptor, rng):
    "Draw a uniform value for an included flag"
    if descriptor.kind == 'boolean':
        return('on' if rng.random() < 0.5 else 'off')
    if descriptor.kind == 'choice':
        return(descriptor.values[int(rng.integers(len(descriptor.values)))])
    return(int(rng.integers(descriptor.minimum, descriptor.maximum + 1)))


def sample_random(space, policy):
    """
    Draw a random assignment from `space`

    Each eligible optional flag is included independently with
    probability `policy.include_probability`; included boolean flags are
    set on or off uniformly, parametric values are uniform over their
    range. The result is fully determined by `policy.seed`.

    Parameters
    ----------
    space: a FlagSpace

    policy: a SamplingPolicy

    Returns
    -------
    A FlagAssignment
    """
    rng = np.random.default_rng(policy.seed)
    if policy.enable_base:
        base = space.base_levels[int(rng.integers(len(space.base_levels)))]
    else:
        base = space.default_base
    values = {}
    env_values = {}
    for descriptor in space.descriptors:
        if not policy.eligible(descriptor):
            continue
        if descriptor.kind == 'env_param':
            env_values[descriptor.variable] = _draw(descriptor, rng)
        elif rng.random() < policy.include_probability:
            values[descriptor.name] = _draw(descriptor, rng)
    return(FlagAssignment(base, values, env_values))


def count_combinations(space, policy):
    "Number of assignments enumerated by `exhaustive`"
    total = len(space.base_levels) if policy.enable_base else 1
    for descriptor in space.descriptors:
        if not policy.eligible(descriptor):
            continue
        n_options = len(descriptor.options())
        if descriptor.kind == 'env_param':
            total *= n_options
        elif descriptor.kind == 'boolean':
            # Absent or on: the off form equals absence of an optimization
            total *= 2
        else:
            total *= n_options + 1
    return(total)


def exhaustive(space, policy):
    """
    Enumerate every assignment of `space` under `policy`

    Boolean flags are either absent or on, parametric and choice flags
    are absent or set to one of their values, environment parameters
    take every value of their range.

    Parameters
    ----------
    space: a FlagSpace

    policy: a SamplingPolicy (the seed and probability are ignored)

    Returns
    -------
    A generator of FlagAssignment objects
    """
    n_total = count_combinations(space, policy)
    if n_total > MAX_EXHAUSTIVE:
        raise ContractError(
            'The space has %d combinations: exhaustive mode is limited to '
            '%d' % (n_total, MAX_EXHAUSTIVE))
    bases = list(space.base_levels) if policy.enable_base \
        else [space.default_base]
    eligible = [d for d in space.descriptors if policy.eligible(d)]
    axes = []
    for descriptor in eligible:
        if descriptor.kind == 'env_param':
            axes.append(descriptor.options())
        elif descriptor.kind == 'boolean':
            axes.append([None, 'on'])
        else:
            axes.append([None] + descriptor.options())
    for base in bases:
        for combination in itertools.product(*axes):
            values = {}
            env_values = {}
            for descriptor, value in zip(eligible, combination):
                if value is None:
                    continue
                if descriptor.kind == 'env_param':
                    env_values[descriptor.variable] = value
                else:
                    values[descriptor.name] = value
            yield FlagAssignment(base, values, env_values)


def render(assignment, space):
    """
    Render `assignment` as command-line text

    The base level comes first, followed by the flags in space order,
    separated by single spaces. Environment values are not rendered
    (they are passed to the run environment instead).

    Parameters
    ----------
    assignment: a FlagAssignment

    space: a FlagSpace

    Returns
    -------
    A string, e.g. '-O3 -fno-ivopts --param max-unswitch-insns=5'
    """
    check_assignment(assignment, space)
    tokens = []
    if assignment.base_level:
        tokens.append(assignment.base_level)
    for descriptor in space.descriptors:
        if descriptor.name in assignment.values:
            tokens.append(
                descriptor.render_value(assignment.values[descriptor.name]))
    return(' '.join(tokens))


def parse(command, space, env_values=None):
    """
    Parse command-line text back to a FlagAssignment (inverse of `render`)

    The environment parameters of an assignment do not appear in its
    rendered flags: they travel separately (e.g. in the recorded
    assignment) and are given back through `env_values`.

    Parameters
    ----------
    command: string
        E.g. '-O3 -flto'

    space: a FlagSpace

    env_values: dict of variable -> value, optional
        Values of the environment parameters of `space`

    Returns
    -------
    A FlagAssignment. When no base level appears in `command`, the first
    base level of the space is used.
    """
    tokens = command.split()
    base_level = None
    values = {}
    i = 0
    while i < len(tokens):
        token = tokens[i]
        if token in space.base_levels:
            if base_level is not None:
                raise ContractError(
                    "Second base level '%s' at position %d in '%s'"
                    % (token, i, command))
            base_level = token
            i += 1
            continue
        matched = False
        for descriptor in space.descriptors:
            n = descriptor.token_count()
            if i + n > len(tokens):
                continue
            value = descriptor.match(' '.join(tokens[i:i + n]))
            if value is None:
                continue
            if descriptor.name in values:
                raise ContractError(
                    "Flag '%s' given twice (position %d) in '%s'"
                    % (descriptor.name, i, command))
            descriptor.check_value(value)
            values[descriptor.name] = value
            i += n
            matched = True
            break
        if not matched:
            offset = len(' '.join(tokens[:i])) + (1 if i > 0 else 0)
            raise ContractError(
                "Unknown token '%s' at position %d (character %d) in '%s'"
                % (token, i, offset, command))
    if base_level is None:
        base_level = space.base_levels[0]
    variables = dict((d.variable, d) for d in space.descriptors
                     if d.kind == 'env_param')
    env_values = dict(env_values or {})
    for variable, value in env_values.items():
        if variable not in variables:
            raise ContractError(
                "Unknown environment parameter '%s'.\nThe parameters "
                "are:%s" % (variable, format_choices(sorted(variables))))
        variables[variable].check_value(value)
    return(FlagAssignment(base_level, values, env_values))
