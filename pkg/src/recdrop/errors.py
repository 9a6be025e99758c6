"""Exception taxonomy shared across modules.

The CLI maps these onto exit codes: configuration/input problems exit 2,
numerical failures exit 3, and I/O errors (plain OSError) exit 4.
"""

from __future__ import annotations


class RecdropError(Exception):
    """Base class for all errors raised by this package."""


class InputError(RecdropError, ValueError):
    """An operation rejected its input (bad shape, range, or value)."""


class ConfigError(InputError):
    """A configuration file or override could not be resolved."""


class NumericalError(RecdropError, ArithmeticError):
    """An iterative numerical procedure failed to converge or blew up.

    ``diagnostics`` carries procedure-specific context, e.g. the partially
    converged spectrum of the eigensolver or the step index of a training
    run that produced a non-finite loss.
    """

    def __init__(self, message: str, **diagnostics):
        super().__init__(message)
        self.diagnostics = diagnostics
