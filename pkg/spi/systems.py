#!/usr/bin/env python3
# -*- coding: utf-8 -*-

"""
spi.systems
~~~~~~~~~~~

This module has classes to represent the objects the iteration works on:
time domain, LQR problem and the block partitions of the control and state
spaces. It also defines the row-major textual form of matrices,
e.g. ``0,1;0,0``.
"""

import enum

import numpy as np
from scipy import linalg

from .exceptions import DimensionMismatch, IndexOutOfRange, NotSPD, ParseError


class TimeDomain(enum.Enum):
    """Continuous (differential equation) or discrete (difference equation) time."""

    CONTINUOUS = "continuous"
    DISCRETE = "discrete"

    @classmethod
    def parse(cls, value):
        """Convert string into time domain.

        :param value: ``"continuous"``/``"discrete"`` (case-insensitive) or a :class:`TimeDomain`.
        :return: Time domain.
        :rtype: :class:`~spi.systems.TimeDomain`
        """
        if isinstance(value, cls):
            return value
        try:
            return cls(str(value).strip().lower())
        except ValueError:
            raise ParseError('unknown time domain "{}"'.format(value), field="domain")


def as_matrix(data, name="matrix"):
    """Convert data into a read-only two-dimensional float array.

    :param data: Array-like data or matrix text form.
    :param str name: Matrix name used in error messages.
    :return: Matrix.
    :rtype: :class:`numpy.ndarray`
    """
    if isinstance(data, str):
        data = parse_matrix(data, field=name)
    matrix = np.array(data, dtype=float, ndmin=2)
    if matrix.ndim != 2:
        raise DimensionMismatch("{} must be two-dimensional, got shape {}".format(name, matrix.shape))
    if not np.all(np.isfinite(matrix)):
        raise ValueError("{} has non-finite entries".format(name))
    matrix.setflags(write=False)
    return matrix


def parse_matrix(text, field=None):
    """Parse row-major matrix text: rows separated by semicolons, entries by commas.

    :param str text: Matrix text, e.g. ``"0,1;0,0"``.
    :param str field: Field name for diagnostics.
    :return: Parsed matrix.
    :rtype: :class:`numpy.ndarray`
    """
    rows = []
    for row_idx, row_text in enumerate(text.strip().split(";")):
        row = []
        for col_idx, entry in enumerate(row_text.split(",")):
            try:
                row.append(float(entry))
            except ValueError:
                raise ParseError('row {}, entry {}: "{}" is not a number'.format(row_idx + 1, col_idx + 1,
                                                                              entry.strip()), field=field)
        if rows and len(row) != len(rows[0]):
            raise ParseError("row {} has {} entries, expected {}".format(row_idx + 1, len(row), len(rows[0])),
                             field=field)
        rows.append(row)
    return np.array(rows, dtype=float)


def format_matrix(matrix):
    """Convert matrix into row-major text with 17 significant digits (exact for doubles).

    :param matrix: Matrix.
    :type matrix: :class:`numpy.ndarray`
    :return: Matrix text.
    :rtype: :py:class:`str`
    """
    return ";".join(",".join("{:.17g}".format(entry) for entry in row) for row in np.atleast_2d(matrix))


def is_spd(matrix, tol_sym=1e-12):
    """Test if matrix is symmetric positive definite.

    :param matrix: Square matrix.
    :param float tol_sym: Relative symmetry tolerance.
    :return: SPD (True) or not (False).
    :rtype: :py:obj:`True` or :py:obj:`False`
    """
    if matrix.shape[0] != matrix.shape[1]:
        return False
    if linalg.norm(matrix - matrix.T) > tol_sym * linalg.norm(matrix):
        return False
    return bool(np.min(linalg.eigvalsh((matrix + matrix.T) / 2)) > 0)


class LqrProblem(object):
    """LQR problem: system matrices (A, B), cost matrices (Q, R) and time domain.
    Instances are immutable."""

    def __init__(self, A, B, Q, R, domain, tol_sym=1e-12):
        """LQR problem initializer.

        :param A: State matrix (m x m).
        :param B: Input matrix (m x r).
        :param Q: Symmetric positive definite state cost (m x m).
        :param R: Symmetric positive definite control cost (r x r).
        :param domain: Time domain.
        :type domain: :class:`~spi.systems.TimeDomain` or :py:class:`str`
        :param float tol_sym: Relative symmetry tolerance for Q and R.
        """
        self.A = as_matrix(A, "A")
        self.B = as_matrix(B, "B")
        self.Q = as_matrix(Q, "Q")
        self.R = as_matrix(R, "R")
        self.domain = TimeDomain.parse(domain)
        self.tol_sym = float(tol_sym)

        m = self.A.shape[0]
        r = self.B.shape[1]
        if self.A.shape != (m, m):
            raise DimensionMismatch("A must be square, got shape {}".format(self.A.shape))
        if self.B.shape[0] != m:
            raise DimensionMismatch("B must have {} rows, got shape {}".format(m, self.B.shape))
        if self.Q.shape != (m, m):
            raise DimensionMismatch("Q must be {0}x{0}, got shape {1}".format(m, self.Q.shape))
        if self.R.shape != (r, r):
            raise DimensionMismatch("R must be {0}x{0}, got shape {1}".format(r, self.R.shape))
        if not is_spd(self.Q, tol_sym):
            raise NotSPD("Q must be symmetric positive definite")
        if not is_spd(self.R, tol_sym):
            raise NotSPD("R must be symmetric positive definite")

    @property
    def m(self):
        """State dimension."""
        return self.A.shape[0]

    @property
    def r(self):
        """Input dimension."""
        return self.B.shape[1]

    @property
    def is_continuous(self):
        """Problem lives in continuous time."""
        return self.domain is TimeDomain.CONTINUOUS

    def replace(self, **matrices):
        """Construct a problem with some of the matrices replaced.

        :return: New LQR problem.
        :rtype: :class:`~spi.systems.LqrProblem`
        """
        fields = {"A": self.A, "B": self.B, "Q": self.Q, "R": self.R, "domain": self.domain, "tol_sym": self.tol_sym}
        fields.update(matrices)
        return LqrProblem(**fields)

    def check_feedback(self, F, name="F"):
        """Check feedback shape against problem dimensions.

        :param F: Feedback matrix.
        :return: Feedback as read-only matrix.
        :rtype: :class:`numpy.ndarray`
        """
        F = as_matrix(F, name)
        if F.shape != (self.r, self.m):
            raise DimensionMismatch("{} must be {}x{}, got shape {}".format(name, self.r, self.m, F.shape))
        return F

    def __repr__(self):
        return "LqrProblem(m={}, r={}, domain={})".format(self.m, self.r, self.domain.value)


class Partition(object):
    """Block partition of a vector space into consecutive blocks."""

    def __init__(self, block_sizes):
        """Partition initializer.

        :param list block_sizes: Positive block sizes.
        """
        self.block_sizes = tuple(int(size) for size in block_sizes)
        if not self.block_sizes:
            raise DimensionMismatch("partition needs at least one block")
        if any(size < 1 for size in self.block_sizes):
            raise DimensionMismatch("block sizes must be positive, got {}".format(list(self.block_sizes)))
        self.offsets = tuple(np.concatenate([[0], np.cumsum(self.block_sizes)]).astype(int))

    @property
    def n(self):
        """Number of blocks (subsystems)."""
        return len(self.block_sizes)

    @property
    def size(self):
        """Dimension of the partitioned space."""
        return self.offsets[-1]

    def check_index(self, i):
        """Validate subsystem index.

        :param int i: Subsystem index (0-based).
        :return: The index.
        :rtype: :py:class:`int`
        """
        if not 0 <= i < self.n:
            raise IndexOutOfRange("subsystem index {} outside of 0..{}".format(i, self.n - 1))
        return i

    def slice(self, i):
        """Index slice of block ``i``."""
        self.check_index(i)
        return slice(self.offsets[i], self.offsets[i + 1])

    def selector(self, i):
        """Block column selector: ``size x block_sizes[i]`` with a single identity block.

        :param int i: Block index.
        :return: Selector matrix.
        :rtype: :class:`numpy.ndarray`
        """
        selector = np.zeros((self.size, self.block_sizes[self.check_index(i)]))
        selector[self.slice(i), :] = np.eye(self.block_sizes[i])
        return selector

    def projector(self, i):
        """Orthogonal projector onto block ``i``."""
        selector = self.selector(i)
        return selector @ selector.T

    def complement(self, i):
        """Complementary projector ``I - projector(i)``."""
        return np.eye(self.size) - self.projector(i)

    def block(self, matrix, i, j):
        """Extract block ``(i, j)`` of a square matrix partitioned on both sides."""
        return matrix[self.slice(i), self.slice(j)]

    def check_size(self, size, what):
        """Raise :class:`~spi.exceptions.DimensionMismatch` unless partition covers ``size``."""
        if self.size != size:
            raise DimensionMismatch("{} blocks {} sum to {}, expected {}".format(
                what, list(self.block_sizes), self.size, size))

    def __eq__(self, other):
        return type(self) is type(other) and self.block_sizes == other.block_sizes

    def __hash__(self):
        return hash((type(self).__name__, self.block_sizes))

    def __repr__(self):
        return "{}({})".format(type(self).__name__, list(self.block_sizes))


class InputPartition(Partition):
    """Partition of the control space, one block per subsystem; consistent with block diagonal R."""

    def block_row(self, F, i):
        """Block row ``i`` of a feedback matrix (the gain of subsystem ``i``)."""
        return F[self.slice(i), :]


class StatePartition(Partition):
    """Partition of the state space, one block per subsystem."""
