#!/usr/bin/env python3
# -*- coding: utf-8 -*-

"""
spi.problemio
~~~~~~~~~~~~~

This module reads and writes problem files and matrix files.

A problem file is a JSON object with the fields ``domain``, ``state_blocks``,
``input_blocks`` and the matrices ``A``, ``B``, ``Q`` and ``R`` in row-major
text form with 17 significant digits, e.g.:

.. code-block:: json

   {
     "domain": "discrete",
     "state_blocks": [1, 1],
     "input_blocks": [1, 1],
     "A": "0.5,0.1;0.1,0.5",
     "B": "1,0;0,1",
     "Q": "1,0;0,1",
     "R": "1,0;0,1"
   }

A matrix file (initial feedback) holds one matrix in text form, rows
separated by semicolons or newlines.
"""

import json
import logging
import re

from .exceptions import DimensionMismatch, ParseError
from .systems import InputPartition, LqrProblem, StatePartition, as_matrix, format_matrix, parse_matrix

logger = logging.getLogger(__name__)


PROBLEM_FIELDS = ("domain", "state_blocks", "input_blocks", "A", "B", "Q", "R")


def _field_line(text, field):
    match = re.search(r'"{}"\s*:'.format(re.escape(field)), text)
    if match is None:
        return None
    return text.count("\n", 0, match.start()) + 1


def _block_sizes(document, field, path, text):
    sizes = document[field]
    if not isinstance(sizes, list) or not all(isinstance(size, int) and not isinstance(size, bool)
                                              for size in sizes):
        raise ParseError("expected a list of integers", path=path, line=_field_line(text, field), field=field)
    return sizes


def parse_problem(text, path=None, tol_sym=1e-12):
    """Parse problem file contents.

    :param str text: Problem file contents.
    :param str path: File path for diagnostics.
    :param float tol_sym: Relative symmetry tolerance for Q and R.
    :return: Problem, input partition and state partition.
    :rtype: :py:class:`tuple`
    """
    try:
        document = json.loads(text)
    except json.JSONDecodeError as error:
        raise ParseError(error.msg, path=path, line=error.lineno)
    if not isinstance(document, dict):
        raise ParseError("expected a JSON object", path=path, line=1)

    for field in PROBLEM_FIELDS:
        if field not in document:
            raise ParseError("missing field", path=path, field=field)
    unknown = sorted(set(document) - set(PROBLEM_FIELDS))
    if unknown:
        raise ParseError("unknown field", path=path, line=_field_line(text, unknown[0]), field=unknown[0])

    matrices = {}
    for name in ("A", "B", "Q", "R"):
        value = document[name]
        if not isinstance(value, str):
            raise ParseError("expected matrix text", path=path, line=_field_line(text, name), field=name)
        try:
            matrices[name] = parse_matrix(value, field=name)
        except ParseError as error:
            raise ParseError(str(error), path=path, line=_field_line(text, name))

    state_partition = StatePartition(_block_sizes(document, "state_blocks", path, text))
    input_partition = InputPartition(_block_sizes(document, "input_blocks", path, text))
    if state_partition.n != input_partition.n:
        raise DimensionMismatch("{} state blocks but {} input blocks".format(state_partition.n, input_partition.n))

    try:
        problem = LqrProblem(domain=document["domain"], tol_sym=tol_sym, **matrices)
    except ParseError as error:
        raise ParseError(str(error), path=path, line=_field_line(text, "domain"))
    state_partition.check_size(problem.m, "state")
    input_partition.check_size(problem.r, "input")
    return problem, input_partition, state_partition


def format_problem(problem, input_partition, state_partition):
    """Convert problem into problem file contents.

    :param problem: LQR problem.
    :type problem: :class:`~spi.systems.LqrProblem`
    :param input_partition: Input partition.
    :type input_partition: :class:`~spi.systems.InputPartition`
    :param state_partition: State partition.
    :type state_partition: :class:`~spi.systems.StatePartition`
    :return: Problem file contents.
    :rtype: :py:class:`str`
    """
    input_partition.check_size(problem.r, "input")
    state_partition.check_size(problem.m, "state")
    document = {"domain": problem.domain.value,
                "state_blocks": list(state_partition.block_sizes),
                "input_blocks": list(input_partition.block_sizes),
                "A": format_matrix(problem.A),
                "B": format_matrix(problem.B),
                "Q": format_matrix(problem.Q),
                "R": format_matrix(problem.R)}
    return json.dumps(document, indent=2) + "\n"


def load_problem(path, tol_sym=1e-12):
    """Load problem file.

    :param str path: Path to problem file.
    :param float tol_sym: Relative symmetry tolerance for Q and R.
    :return: Problem, input partition and state partition.
    :rtype: :py:class:`tuple`
    """
    with open(path, "r") as infile:
        text = infile.read()
    logger.debug("loading problem from %s", path)
    return parse_problem(text, path=str(path), tol_sym=tol_sym)


def save_problem(problem, input_partition, state_partition, path):
    """Save problem file; :func:`load_problem` reproduces every entry exactly."""
    with open(path, "w") as outfile:
        outfile.write(format_problem(problem, input_partition, state_partition))


def load_matrix(path, name="matrix"):
    """Load matrix file.

    :param str path: Path to matrix file.
    :param str name: Matrix name for diagnostics.
    :return: Matrix.
    :rtype: :class:`numpy.ndarray`
    """
    with open(path, "r") as infile:
        rows = [line.strip().rstrip(";") for line in infile if line.strip() and not line.startswith("#")]
    if not rows:
        raise ParseError("empty matrix file", path=str(path), field=name)
    try:
        return as_matrix(parse_matrix(";".join(rows), field=name), name)
    except ParseError as error:
        raise ParseError(str(error), path=str(path))


def save_matrix(matrix, path):
    """Save matrix file, one row per line."""
    with open(path, "w") as outfile:
        for row in as_matrix(matrix):
            outfile.write(format_matrix(row) + "\n")
