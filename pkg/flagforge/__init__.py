"""
flagforge

Multi-objective compiler autotuning workbench

Usage
-----
See the class Explorer to run autotuning scenarios, the class Reducer to
prune the solutions they find, and the `flagforge` command for all the
workflows.
"""
# Make the main objects accessible from outside the package
from .errors import FlagForgeException, ContractError, EnvironmentProblem
from .workloads.registry import WorkloadRegistry
from .repository.experiment_store import ExperimentStore
from .autotuning.pipeline import Pipeline
from .autotuning.explorer import Explorer, Scenario
from .autotuning.reducer import Reducer, PruneConfig
from .autotuning.replay import replay
__all__ = ['FlagForgeException', 'ContractError', 'EnvironmentProblem',
           'WorkloadRegistry', 'ExperimentStore', 'Pipeline', 'Explorer',
           'Scenario', 'Reducer', 'PruneConfig', 'replay']

# Package version number
__version__ = '0.1.0'
