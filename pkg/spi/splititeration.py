#!/usr/bin/env python3
# -*- coding: utf-8 -*-

"""
spi.splititeration
~~~~~~~~~~~~~~~~~~

This module implements the split optimal policy iteration: the feedback
block row of one subsystem is replaced by its optimal response to the frozen
block rows of all other subsystems, cyclically over the subsystems, until
the feedback stops changing.

Updating subsystem ``i`` merges the frozen feedback of the other subsystems
into the system and cost matrices::

    A_i = A + B (I - E_i E_i^T) F
    B_i = B E_i
    Q_i = Q + F^T (I - E_i E_i^T) R (I - E_i E_i^T) F
    R_i = E_i^T R E_i

where ``E_i`` is the block column selector of subsystem ``i``. The optimal
feedback of the LQR problem ``(A_i, B_i, Q_i, R_i)`` becomes block row ``i``.
"""

import collections
import enum
import logging

import numpy as np
import pandas as pd
from scipy import linalg

from . import lqrcore
from .exceptions import (AllSubsystemsUncontrollable, MaxSweepsExceeded, RiccatiFailure, SingularMatrix, SpiError,
                         SubproblemNotControllable)
from .systems import LqrProblem

logger = logging.getLogger(__name__)


SubproblemMatrices = collections.namedtuple("SubproblemMatrices", ["A", "B", "Q", "R"])

UpdateRecord = collections.namedtuple("UpdateRecord", ["sweep", "subsystem", "F", "P", "residual", "change",
                                                       "min_eig_decrement", "stabilizing", "skipped"])

IterationOptions = collections.namedtuple("IterationOptions", ["max_sweeps", "tol_outer", "tol_outer_residual",
                                                               "order", "start", "tolerances"])
IterationOptions.__new__.__defaults__ = (500, 1e-10, 1e-8, None, 0, lqrcore.DEFAULT_TOLERANCES)


class Termination(enum.Enum):
    """Reason the iteration stopped."""

    CONVERGED = "converged"
    MAX_SWEEPS = "max_sweeps"
    SUBPROBLEM_FAILURE = "subproblem_failure"


def build_subproblem(problem, partition, F, i):
    """Construct the LQR subproblem of subsystem ``i`` for the frozen feedback ``F``.

    :param problem: Full LQR problem.
    :type problem: :class:`~spi.systems.LqrProblem`
    :param partition: Input partition.
    :type partition: :class:`~spi.systems.InputPartition`
    :param F: Current feedback matrix (r x m).
    :param int i: Subsystem index (0-based).
    :return: Subproblem matrices.
    :rtype: :class:`~spi.splititeration.SubproblemMatrices`
    """
    partition.check_size(problem.r, "input")
    F = problem.check_feedback(F)
    partition.check_index(i)

    selector = partition.selector(i)
    complement = partition.complement(i)
    frozen = complement @ F
    return SubproblemMatrices(A=problem.A + problem.B @ frozen,
                              B=problem.B @ selector,
                              Q=lqrcore.symmetrize(problem.Q + frozen.T @ problem.R @ frozen),
                              R=lqrcore.symmetrize(selector.T @ problem.R @ selector))


def subproblem(problem, partition, F, i, tolerances=lqrcore.DEFAULT_TOLERANCES):
    """Subproblem of subsystem ``i`` as :class:`~spi.systems.LqrProblem` in the problem's domain."""
    matrices = build_subproblem(problem, partition, F, i)
    return LqrProblem(matrices.A, matrices.B, matrices.Q, matrices.R, problem.domain, tolerances.tol_sym)


def update_subsystem(problem, partition, F, i, tolerances=lqrcore.DEFAULT_TOLERANCES):
    """Replace block row ``i`` of the feedback by the optimal response of subsystem ``i``.

    The subproblem must be controllable unless ``F`` already stabilizes the full system,
    in which case block row ``i`` of ``F`` is a stabilizing warm start.

    :param problem: Full LQR problem.
    :type problem: :class:`~spi.systems.LqrProblem`
    :param partition: Input partition.
    :type partition: :class:`~spi.systems.InputPartition`
    :param F: Current feedback matrix (r x m).
    :param int i: Subsystem index (0-based).
    :param tolerances: Numerical tolerances.
    :type tolerances: :class:`~spi.lqrcore.Tolerances`
    :return: New feedback and the value matrix of the solved subproblem.
    :rtype: :py:class:`tuple`
    """
    F = problem.check_feedback(F)
    sub = subproblem(problem, partition, F, i, tolerances)

    # A_i + B_i F_i = A + B F, so a stabilizing F is a valid warm start
    warm_start = None
    if lqrcore.is_stabilizing(problem, F, tolerances):
        warm_start = partition.block_row(F, i)
    elif not lqrcore.is_controllable(sub.A, sub.B, tolerances.tol_rank):
        raise SubproblemNotControllable(i)

    try:
        P_new = lqrcore.solve_are(sub, warm_start, tolerances)
        row = lqrcore.optimal_feedback(P_new, sub)
    except SingularMatrix as error:
        raise RiccatiFailure("subsystem {}: {}".format(i + 1, error))

    F_new = np.array(F)
    F_new[partition.slice(i), :] = row
    return F_new, P_new


def sweep_order(n, order=None, start=0):
    """Validate or construct the order of one sweep.

    :param int n: Number of subsystems.
    :param order: Permutation of ``range(n)`` or ``None`` for ascending order.
    :param int start: First subsystem of the ascending order.
    :return: Sweep order.
    :rtype: :py:class:`tuple`
    """
    if order is None:
        if not 0 <= start < n:
            raise ValueError("start subsystem {} outside of 0..{}".format(start, n - 1))
        return tuple((start + k) % n for k in range(n))
    order = tuple(int(i) for i in order)
    if sorted(order) != list(range(n)):
        raise ValueError("sweep order {} is not a permutation of 0..{}".format(list(order), n - 1))
    return order


def sweep(problem, partition, F, order=None, tolerances=lqrcore.DEFAULT_TOLERANCES, sweep_index=1, P_prev=None):
    """Update every subsystem once in the given order.

    Subsystems whose subproblem fails the controllability check while the
    current feedback is not yet stabilizing are skipped without changing it.

    :param problem: Full LQR problem.
    :type problem: :class:`~spi.systems.LqrProblem`
    :param partition: Input partition.
    :type partition: :class:`~spi.systems.InputPartition`
    :param F: Feedback matrix at the start of the sweep (r x m).
    :param order: Permutation of ``range(n)``, ascending if ``None``.
    :param tolerances: Numerical tolerances.
    :type tolerances: :class:`~spi.lqrcore.Tolerances`
    :param int sweep_index: Sweep number written into the records.
    :param P_prev: Value matrix of ``F`` if known, for the monotonicity records.
    :return: Feedback after the sweep and one record per subsystem.
    :rtype: :py:class:`tuple`
    """
    order = sweep_order(partition.n, order)
    F = problem.check_feedback(F)
    records = []

    for i in order:
        try:
            F_new, P_new = update_subsystem(problem, partition, F, i, tolerances)
        except SubproblemNotControllable:
            logger.info("sweep %d: subsystem %d skipped", sweep_index, i + 1)
            records.append(UpdateRecord(sweep=sweep_index, subsystem=i, F=F, P=None, residual=np.nan,
                                        change=0.0, min_eig_decrement=np.nan,
                                        stabilizing=lqrcore.is_stabilizing(problem, F, tolerances), skipped=True))
            continue

        decrement = np.nan if P_prev is None else lqrcore.min_eigenvalue(P_prev - P_new)
        records.append(UpdateRecord(sweep=sweep_index, subsystem=i, F=F_new, P=P_new,
                                    residual=lqrcore.riccati_residual(P_new, problem),
                                    change=float(linalg.norm(F_new - F)), min_eig_decrement=decrement,
                                    stabilizing=lqrcore.is_stabilizing(problem, F_new, tolerances), skipped=False))
        F, P_prev = F_new, P_new

    if all(record.skipped for record in records):
        raise AllSubsystemsUncontrollable("every subsystem was skipped in sweep {}".format(sweep_index))
    return F, records


def initial_feedback(problem, partition, policy="zero"):
    """Initial feedback of the iteration.

    :param problem: Full LQR problem.
    :type problem: :class:`~spi.systems.LqrProblem`
    :param partition: Input partition.
    :type partition: :class:`~spi.systems.InputPartition`
    :param policy: ``"zero"`` or a given feedback matrix (r x m).
    :return: Feedback matrix (r x m).
    :rtype: :class:`numpy.ndarray`
    """
    partition.check_size(problem.r, "input")
    if isinstance(policy, str):
        if policy.strip().lower() != "zero":
            raise ValueError('unknown initial feedback policy "{}"'.format(policy))
        return np.zeros((problem.r, problem.m))
    return np.array(problem.check_feedback(policy, "F0"))


class IterationTrace(object):
    """Per-update record of a split iteration run."""

    columns = ["sweep", "subsystem", "frobenius_change_F", "full_ARE_residual", "min_eig_P_decrement",
               "stabilizing"]

    def __init__(self, F0):
        """Initialize trace.

        :param F0: Initial feedback matrix.
        """
        self.records = []
        self.sweep_feedbacks = [F0]
        self.status = None

    def extend(self, records, F):
        """Add the records of one sweep and the feedback at its end."""
        self.records.extend(records)
        self.sweep_feedbacks.append(F)

    @property
    def updates(self):
        """Records of updates that were not skipped."""
        return [record for record in self.records if not record.skipped]

    def value_matrices(self):
        """Value matrices of the performed updates, in order."""
        return [record.P for record in self.updates]

    def is_monotone(self, tol_psd=1e-8):
        """Test ``P^(k+1) <= P^k`` in the PSD order for consecutive recorded value matrices.

        :param float tol_psd: Slack relative to ``1 + ||P^k||_F``.
        :rtype: :py:obj:`True` or :py:obj:`False`
        """
        values = self.value_matrices()
        return all(lqrcore.min_eigenvalue(before - after) >= -tol_psd * (1 + linalg.norm(before))
                   for before, after in zip(values, values[1:]))

    def is_stabilizing(self):
        """Every feedback after the first performed update is stabilizing."""
        return all(record.stabilizing for record in self.updates)

    def to_dataframe(self):
        """DataFrame representation of the trace, one row per subsystem update.

        :return: Trace table with 1-based subsystem numbers.
        :rtype: :class:`~pandas.DataFrame`
        """
        rows = [(record.sweep, record.subsystem + 1, record.change, record.residual, record.min_eig_decrement,
                 int(record.stabilizing)) for record in self.records]
        return pd.DataFrame(rows, columns=self.columns)

    def write_csv(self, path):
        """Write trace as CSV with 17 significant digits."""
        self.to_dataframe().to_csv(path, index=False, float_format="%.17g")

    def __len__(self):
        return len(self.records)


class SolveReport(object):
    """Result of a split iteration run."""

    def __init__(self, F, P, sweeps, termination, trace, residual=np.nan):
        """Initialize report.

        :param F: Final feedback matrix.
        :param P: Value matrix of the last solved subproblem.
        :param int sweeps: Number of executed sweeps.
        :param termination: Termination reason.
        :type termination: :class:`~spi.splititeration.Termination`
        :param trace: Iteration trace.
        :type trace: :class:`~spi.splititeration.IterationTrace`
        :param float residual: Full-problem ARE residual of ``P``.
        """
        self.F = F
        self.P = P
        self.sweeps = sweeps
        self.termination = termination
        self.trace = trace
        self.residual = residual

    @property
    def converged(self):
        return self.termination is Termination.CONVERGED

    @property
    def productive_sweeps(self):
        """Sweeps that moved the feedback; the last sweep of a converged run only confirms the fixed point."""
        if self.converged:
            return self.sweeps - 1
        return self.sweeps


def run(problem, partition, F0, options=IterationOptions()):
    """Run sweeps until the feedback reaches a fixed point.

    The stopping rule requires ``||F_after - F_before||_F <= tol_outer * (1 + ||F_after||_F)``
    over a full sweep and a full-problem ARE residual of the last solved value matrix
    below ``tol_outer_residual * (1 + ||P||_F)``.

    :param problem: Full LQR problem.
    :type problem: :class:`~spi.systems.LqrProblem`
    :param partition: Input partition.
    :type partition: :class:`~spi.systems.InputPartition`
    :param F0: Initial feedback matrix (r x m), no stability requirement.
    :param options: Iteration options.
    :type options: :class:`~spi.splititeration.IterationOptions`
    :return: Solve report.
    :rtype: :class:`~spi.splititeration.SolveReport`
    """
    partition.check_size(problem.r, "input")
    F = np.array(problem.check_feedback(F0, "F0"))
    tolerances = options.tolerances
    order = sweep_order(partition.n, options.order, options.start)
    trace = IterationTrace(F)

    P_prev = None
    if lqrcore.is_stabilizing(problem, F, tolerances):
        P_prev = lqrcore.evaluate_policy(problem, F, tolerances)

    for sweep_index in range(1, options.max_sweeps + 1):
        try:
            F_next, records = sweep(problem, partition, F, order, tolerances, sweep_index, P_prev)
        except SpiError as error:
            trace.status = Termination.SUBPROBLEM_FAILURE
            error.report = SolveReport(F, P_prev, sweep_index - 1, Termination.SUBPROBLEM_FAILURE, trace)
            logger.warning("sweep %d failed: %s", sweep_index, error)
            raise

        P_prev = [record.P for record in records if not record.skipped][-1]
        trace.extend(records, F_next)
        change = linalg.norm(F_next - F)
        residual = lqrcore.riccati_residual(P_prev, problem)
        F = F_next
        logger.info("sweep %d: change %.3e, residual %.3e", sweep_index, change, residual)

        if (change <= options.tol_outer * (1 + linalg.norm(F)) and
                residual <= options.tol_outer_residual * (1 + linalg.norm(P_prev))):
            trace.status = Termination.CONVERGED
            return SolveReport(F, P_prev, sweep_index, Termination.CONVERGED, trace, residual)

    trace.status = Termination.MAX_SWEEPS
    report = SolveReport(F, P_prev, options.max_sweeps, Termination.MAX_SWEEPS, trace,
                         lqrcore.riccati_residual(P_prev, problem))
    raise MaxSweepsExceeded(report)


def nash_gap(problem, partition, F, tolerances=lqrcore.DEFAULT_TOLERANCES):
    """Largest change a single best-response update would make to ``F``.

    Zero exactly when no subsystem can improve on its block row, i.e. at a Nash
    equilibrium, which is a fixed point of the iteration.

    :param problem: Full LQR problem.
    :type problem: :class:`~spi.systems.LqrProblem`
    :param partition: Input partition.
    :type partition: :class:`~spi.systems.InputPartition`
    :param F: Feedback matrix (r x m).
    :rtype: :py:class:`float`
    """
    F = problem.check_feedback(F)
    gaps = []
    for i in range(partition.n):
        try:
            F_new, _ = update_subsystem(problem, partition, F, i, tolerances)
        except SubproblemNotControllable:
            continue
        gaps.append(linalg.norm(F_new - F))
    if not gaps:
        raise AllSubsystemsUncontrollable("no subsystem could be updated")
    return float(max(gaps))
