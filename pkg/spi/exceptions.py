#!/usr/bin/env python3
# -*- coding: utf-8 -*-

"""
spi.exceptions
~~~~~~~~~~~~~~

This module defines the exception hierarchy raised by the :mod:`spi` package.
Every error derives from :class:`~spi.exceptions.SpiError`.
"""


class SpiError(Exception):
    """Base class for all errors raised by the package."""


class DimensionMismatch(SpiError, ValueError):
    """Matrix shapes are inconsistent with each other or with a partition."""


class IndexOutOfRange(SpiError, IndexError):
    """Subsystem index outside of ``range(partition.n)``."""


class NotSPD(SpiError, ValueError):
    """A matrix required to be symmetric positive definite is not."""


class NotBlockDiagonal(SpiError, ValueError):
    """A matrix required to be block diagonal has nonzero off-diagonal blocks."""


class SingularMatrix(SpiError):
    """A required inverse failed numerically."""


class NotStabilizing(SpiError):
    """Feedback does not stabilize the closed loop, the accumulated cost is infinite."""


class RiccatiFailure(SpiError):
    """Base class for failures of the Riccati solvers."""


class NotStabilizable(RiccatiFailure):
    """No stabilizing initial feedback could be found."""


class NoConvergence(RiccatiFailure):
    """Newton iteration on the Riccati equation exceeded its step budget."""


class SubproblemNotControllable(SpiError):
    """Subsystem subproblem cannot be solved from the current feedback."""

    def __init__(self, index, message=None):
        """Initialize error.

        :param int index: Subsystem index (0-based).
        :param str message: Optional message.
        """
        self.index = index
        super().__init__(message or "subproblem of subsystem {} is not controllable".format(index + 1))


class AllSubsystemsUncontrollable(SpiError):
    """Every subsystem was skipped during one sweep."""


class MaxSweepsExceeded(SpiError):
    """Split iteration did not meet the stopping rule within ``max_sweeps``."""

    def __init__(self, report):
        """Initialize error.

        :param report: Partial report, trace included.
        :type report: :class:`~spi.splititeration.SolveReport`
        """
        self.report = report
        super().__init__("no convergence after {} sweeps".format(report.sweeps))


class DomainMismatch(SpiError):
    """Operation is not defined for the problem's time domain."""


class NotOptimal(SpiError):
    """Value matrix does not solve the full algebraic Riccati equation."""


class InsufficientData(SpiError):
    """Not enough error pairs in the asymptotic window to fit a convergence order."""


class GenerationFailed(SpiError):
    """Random problem generator exhausted its retry budget."""


class ConfigError(SpiError):
    """Invalid experiment configuration."""


class ParseError(SpiError):
    """Malformed problem, matrix or configuration file."""

    def __init__(self, message, path=None, line=None, field=None):
        """Initialize error.

        :param str message: What went wrong.
        :param str path: File path, if known.
        :param int line: Line number, if known.
        :param str field: Field name, if known.
        """
        self.path = path
        self.line = line
        self.field = field
        location = []
        if path is not None:
            location.append(str(path))
        if line is not None:
            location.append("line {}".format(line))
        if field is not None:
            location.append('field "{}"'.format(field))
        prefix = "{}: ".format(", ".join(location)) if location else ""
        super().__init__(prefix + message)
