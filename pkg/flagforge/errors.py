"""
This file is part of flagforge.

It defines the exceptions raised for invalid use of the flagforge API.
Failures of a compiled program (crashes, wrong output, timeouts) are not
exceptions: they are recorded as data by the pipeline.

Copyright 2017-2018, flagforge contributors
License: 3-Clause-BSD
"""


class FlagForgeException(Exception):
    "Exception raised for invalid use of the flagforge API"
    exit_code = 1


class ContractError(FlagForgeException):
    """
    Raised when a caller breaks a precondition: unknown or duplicate
    identifiers, malformed meta information, invalid flag assignments...
    """
    exit_code = 1


class ConfigurationError(ContractError):
    "Raised when the global configuration holds invalid values"
    pass


class ReductionError(ContractError):
    "Raised when a solution cannot be reduced (e.g. failure not reproducible)"
    pass


class EnvironmentProblem(FlagForgeException):
    """
    Raised when the machine cannot serve a request: no compiler, no
    compatible compiler, no flag-space description, unreachable server
    """
    exit_code = 2


def format_choices(choices):
    """
    Format a list of valid alternatives for an error message

    Parameters
    ----------
    choices: iterable of strings

    Returns
    -------
    A string with one alternative per line, or '(none)'
    """
    choices = [str(c) for c in choices]
    if len(choices) == 0:
        return('\n - (none)')
    return('\n - ' + '\n - '.join(choices))
