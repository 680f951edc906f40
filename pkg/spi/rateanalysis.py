#!/usr/bin/env python3
# -*- coding: utf-8 -*-

"""
spi.rateanalysis
~~~~~~~~~~~~~~~~

This module implements the local convergence analysis of the split optimal
policy iteration:

* the Jacobian ``Dg_i`` of the update of subsystem ``i`` at the optimal
  feedback of a discrete-time problem, its distributed-actuation block form
  and a central-difference oracle for it;
* the Jacobian of a full sweep and its spectral radius, the asymptotic
  per-sweep contraction of discrete-time runs;
* the matrix identities behind the fixed-point argument for discrete time;
* the empirical convergence order fitted to an iteration trace.

Linear maps on feedback perturbations are materialized on column-major
vectorizations, ``vec(M Delta) = kron(I_m, M) vec(Delta)``.
"""

import collections
import logging

import numpy as np
from scipy import linalg

from . import generator
from . import lqrcore
from . import splititeration
from .exceptions import (DimensionMismatch, DomainMismatch, InsufficientData, NotBlockDiagonal, NotOptimal, NotSPD,
                         SpiError)
from .systems import is_spd

logger = logging.getLogger(__name__)

# relative size of off-diagonal blocks still accepted as zero
BLOCK_TOL = 1e-12

IdentityResiduals = collections.namedtuple("IdentityResiduals", ["first", "second", "aggregate"])


def _check_optimal(problem, P_opt, tolerances):
    if problem.is_continuous:
        raise DomainMismatch("the update Jacobian vanishes at the optimum in continuous time")
    residual = lqrcore.riccati_residual(P_opt, problem)
    if residual > tolerances.tol_optimal * (1 + linalg.norm(P_opt)):
        raise NotOptimal("P_opt has DARE residual {:.3e}".format(residual))


def row_sensitivity(problem, partition, P_opt, i):
    """Left multiplier ``M_i = -E_i (R_i + B_i^T P B_i)^-1 B_i^T P B (I - E_i E_i^T)``, r x r.

    ``Dg_i Delta = M_i Delta``; only block row ``i`` of ``M_i`` is nonzero.
    """
    sub = splititeration.build_subproblem(problem, partition, np.zeros((problem.r, problem.m)), i)
    selector = partition.selector(i)
    gain = linalg.solve(sub.R + sub.B.T @ P_opt @ sub.B, sub.B.T @ P_opt @ problem.B @ partition.complement(i))
    return -selector @ gain


def rate_matrix_subsystem(problem, partition, P_opt, i, tolerances=lqrcore.DEFAULT_TOLERANCES):
    """Jacobian of the block-row update of subsystem ``i`` at the optimal feedback (discrete time).

    :param problem: Discrete-time LQR problem.
    :type problem: :class:`~spi.systems.LqrProblem`
    :param partition: Input partition.
    :type partition: :class:`~spi.systems.InputPartition`
    :param P_opt: Solution of the full DARE.
    :param int i: Subsystem index (0-based).
    :param tolerances: Numerical tolerances.
    :type tolerances: :class:`~spi.lqrcore.Tolerances`
    :return: ``(r m) x (r m)`` matrix acting on ``vec(Delta)``.
    :rtype: :class:`numpy.ndarray`
    """
    _check_optimal(problem, P_opt, tolerances)
    partition.check_size(problem.r, "input")
    return np.kron(np.eye(problem.m), row_sensitivity(problem, partition, P_opt, i))


class RateReport(object):
    """Local convergence rate of a discrete-time split iteration."""

    def __init__(self, jacobians, cycle, row_product, spectral_radius, norm, order):
        """Initialize report.

        :param list jacobians: Per-subsystem Jacobians ``Dg_i`` in subsystem index order.
        :param cycle: Jacobian of one full sweep.
        :param row_product: Ordered product of the ``Dg_i`` alone.
        :param float spectral_radius: Spectral radius of ``cycle``.
        :param float norm: Operator 2-norm of ``cycle``.
        :param tuple order: Sweep order used (0-based).
        """
        self.jacobians = jacobians
        self.cycle = cycle
        self.row_product = row_product
        self.spectral_radius = spectral_radius
        self.norm = norm
        self.order = order

    def to_dict(self):
        """Summary of the report as plain :py:class:`dict`."""
        return {"spectral_radius": self.spectral_radius,
                "norm": self.norm,
                "row_product_spectral_radius": float(np.max(np.abs(linalg.eigvals(self.row_product)))),
                "order": [i + 1 for i in self.order]}


def rate_matrix_cycle(problem, partition, P_opt, order=None, tolerances=lqrcore.DEFAULT_TOLERANCES):
    """Jacobian of one sweep at the optimal feedback and its spectral radius (discrete time).

    The update of subsystem ``i`` leaves all other block rows untouched, so its
    full Jacobian is ``(I - E_i E_i^T) + M_i``; the sweep Jacobian is the product
    of these in reverse application order.

    :param problem: Discrete-time LQR problem.
    :type problem: :class:`~spi.systems.LqrProblem`
    :param partition: Input partition.
    :type partition: :class:`~spi.systems.InputPartition`
    :param P_opt: Solution of the full DARE.
    :param order: Sweep order, ascending if ``None``.
    :param tolerances: Numerical tolerances.
    :type tolerances: :class:`~spi.lqrcore.Tolerances`
    :return: Rate report.
    :rtype: :class:`~spi.rateanalysis.RateReport`
    """
    _check_optimal(problem, P_opt, tolerances)
    partition.check_size(problem.r, "input")
    order = splititeration.sweep_order(partition.n, order)

    sensitivities = [row_sensitivity(problem, partition, P_opt, i) for i in range(partition.n)]
    cycle = np.eye(problem.r)
    row_product = np.eye(problem.r)
    for i in order:
        cycle = (partition.complement(i) + sensitivities[i]) @ cycle
        row_product = sensitivities[i] @ row_product

    identity = np.eye(problem.m)
    spectral_radius = float(np.max(np.abs(linalg.eigvals(cycle))))
    logger.info("sweep Jacobian spectral radius %.6g", spectral_radius)
    return RateReport(jacobians=[np.kron(identity, M) for M in sensitivities],
                      cycle=np.kron(identity, cycle),
                      row_product=np.kron(identity, row_product),
                      spectral_radius=spectral_radius,
                      norm=float(linalg.norm(cycle, 2)),
                      order=order)


def check_block_diagonal(matrix, row_partition, col_partition, name="matrix"):
    """Raise :class:`~spi.exceptions.NotBlockDiagonal` if off-diagonal blocks are nonzero."""
    if row_partition.n != col_partition.n:
        raise DimensionMismatch("{} needs matching numbers of row and column blocks".format(name))
    scale = linalg.norm(matrix)
    for a in range(row_partition.n):
        for b in range(col_partition.n):
            if a != b and linalg.norm(matrix[row_partition.slice(a), col_partition.slice(b)]) > BLOCK_TOL * scale:
                raise NotBlockDiagonal("{} has nonzero block ({}, {})".format(name, a + 1, b + 1))


def distributed_block(problem, partition, state_partition, P_opt, i, j):
    """Block ``(i, j)`` of ``M_i`` under distributed actuation (block diagonal B).

    For ``j != i`` this is ``-(R_ii + B_ii^T P_ii B_ii)^-1 B_ii^T P_ij B_jj``, the
    zero matrix for ``j == i``. It multiplies block row ``j`` of a feedback
    perturbation.

    :param problem: LQR problem with block diagonal B.
    :type problem: :class:`~spi.systems.LqrProblem`
    :param partition: Input partition.
    :type partition: :class:`~spi.systems.InputPartition`
    :param state_partition: State partition with one block per subsystem.
    :type state_partition: :class:`~spi.systems.StatePartition`
    :param P_opt: Optimal value matrix.
    :param int i: Row block (0-based).
    :param int j: Column block (0-based).
    :return: ``r_i x r_j`` block.
    :rtype: :class:`numpy.ndarray`
    """
    partition.check_size(problem.r, "input")
    state_partition.check_size(problem.m, "state")
    check_block_diagonal(problem.B, state_partition, partition, "B")
    partition.check_index(i)
    partition.check_index(j)
    if i == j:
        return np.zeros((partition.block_sizes[i], partition.block_sizes[j]))

    B_ii = problem.B[state_partition.slice(i), partition.slice(i)]
    B_jj = problem.B[state_partition.slice(j), partition.slice(j)]
    R_ii = partition.block(problem.R, i, i)
    P_ii = state_partition.block(P_opt, i, i)
    P_ij = state_partition.block(P_opt, i, j)
    return -linalg.solve(R_ii + B_ii.T @ P_ii @ B_ii, B_ii.T @ P_ij @ B_jj)


def update_map(problem, partition, i, row_only=True, tolerances=lqrcore.DEFAULT_TOLERANCES):
    """The update ``g_i`` of subsystem ``i`` as a callable on feedback matrices.

    :param bool row_only: Return only block row ``i`` of the result (other rows zero),
        which is the part ``Dg_i`` describes.
    :return: Function ``F -> g_i(F)``.
    """
    projector = partition.projector(i)

    def g(F):
        F_new, _ = splititeration.update_subsystem(problem, partition, F, i, tolerances)
        return projector @ F_new if row_only else F_new

    return g


def finite_difference_jacobian(func, F_opt, h=None, executor=None):
    """Central-difference Jacobian of a map on feedback matrices.

    Column ``k`` is ``vec(func(F + h E_k) - func(F - h E_k)) / (2 h)`` with ``E_k``
    the ``k``-th column-major unit matrix.

    :param func: Map from feedback matrices to matrices.
    :param F_opt: Expansion point.
    :param float h: Step, defaults to ``1e-5 * (1 + ||F_opt||_F)``.
    :param executor: Optional :class:`concurrent.futures.Executor` to evaluate columns in parallel.
    :return: Jacobian matrix on column-major vectorizations.
    :rtype: :class:`numpy.ndarray`
    """
    F_opt = np.asarray(F_opt, dtype=float)
    if h is None:
        h = 1e-5 * (1 + linalg.norm(F_opt))
    if h <= 0:
        raise ValueError("step must be positive")

    def column(k):
        direction = lqrcore.unvec(np.eye(F_opt.size)[:, k], F_opt.shape)
        return lqrcore.vec(func(F_opt + h * direction) - func(F_opt - h * direction)) / (2 * h)

    indices = range(F_opt.size)
    columns = list(executor.map(column, indices)) if executor is not None else [column(k) for k in indices]
    return np.column_stack(columns)


class TechIdentityScratch(object):
    """Matrices of the identities that reduce a fixed point of the discrete-time
    iteration to a solution of the full DARE."""

    def __init__(self, R, S, partition, i):
        """Initialize scratch matrices.

        :param R: Block diagonal SPD matrix (r x r).
        :param S: SPD matrix (r x r), ``B^T P B`` in the iteration.
        :param partition: Block partition consistent with R.
        :type partition: :class:`~spi.systems.Partition`
        :param int i: Block index (0-based).
        """
        R = np.asarray(R, dtype=float)
        S = np.asarray(S, dtype=float)
        if R.shape != S.shape or R.shape != (partition.size, partition.size):
            raise DimensionMismatch("R and S must both be {0}x{0}".format(partition.size))
        if not is_spd(R):
            raise NotSPD("R must be symmetric positive definite")
        if not is_spd(S):
            raise NotSPD("S must be symmetric positive definite")
        check_block_diagonal(R, partition, partition, "R")

        self.R = R
        self.S = S
        self.i = partition.check_index(i)
        self.Z_inv = R + S
        self.Z = linalg.inv(self.Z_inv)
        selector = partition.selector(i)
        self.Z_i = selector @ linalg.inv(selector.T @ self.Z_inv @ selector) @ selector.T
        self.I_hat = partition.complement(i)
        self.projector = partition.projector(i)

    def first_lhs(self):
        I_hat, S, Z_i, Z_inv = self.I_hat, self.S, self.Z_i, self.Z_inv
        return Z_inv @ Z_i @ Z_inv - I_hat @ S @ Z_i @ Z_inv - Z_inv @ Z_i @ S @ I_hat + I_hat @ S @ Z_i @ S @ I_hat

    def diagonal_block(self):
        """``Z^-1`` with everything but its ``(i, i)`` block set to zero."""
        return self.projector @ self.Z_inv @ self.projector

    def second_rhs(self):
        I_hat, Z_inv = self.I_hat, self.Z_inv
        return I_hat @ Z_inv + Z_inv @ I_hat - I_hat @ Z_inv @ I_hat + self.diagonal_block()

    def aggregate(self):
        """The matrix that replaces ``Z`` when the subproblem DARE is expanded at a fixed point."""
        I_hat, Z_inv = self.I_hat, self.Z_inv
        inner = I_hat @ Z_inv + Z_inv @ I_hat - I_hat @ Z_inv @ I_hat + self.first_lhs()
        return self.Z @ inner @ self.Z


def verify_tech_identities(R, S, partition, i):
    """Evaluate both matrix identities and the aggregate identity ``M = Z``.

    :param R: Block diagonal SPD matrix (r x r).
    :param S: SPD matrix (r x r).
    :param partition: Block partition consistent with R.
    :type partition: :class:`~spi.systems.Partition`
    :param int i: Block index (0-based).
    :return: Frobenius residuals of the first identity, the second identity and ``M - Z``.
    :rtype: :class:`~spi.rateanalysis.IdentityResiduals`
    """
    scratch = TechIdentityScratch(R, S, partition, i)
    return IdentityResiduals(first=float(linalg.norm(scratch.first_lhs() - scratch.diagonal_block())),
                             second=float(linalg.norm(scratch.Z_inv - scratch.second_rhs())),
                             aggregate=float(linalg.norm(scratch.aggregate() - scratch.Z)))


def random_identity_instance(rng, block_sizes, margin=1.0):
    """Random block diagonal SPD R, SPD S and block index for :func:`verify_tech_identities`.

    :param rng: Random generator.
    :type rng: :class:`numpy.random.Generator`
    :param list block_sizes: Block sizes of R.
    :return: R, S and block index.
    :rtype: :py:class:`tuple`
    """
    r = sum(block_sizes)
    R = linalg.block_diag(*[generator.random_spd(rng, size, margin) for size in block_sizes])
    S = generator.random_spd(rng, r, margin)
    return R, S, int(rng.integers(len(block_sizes)))


def sweep_errors(trace, F_opt):
    """Errors ``||F^(k n) - F_opt||_F`` of the feedback at the end of every sweep, F0 included."""
    return np.array([linalg.norm(F - F_opt) for F in trace.sweep_feedbacks])


def update_errors(trace, F_opt, stride=None):
    """Errors ``||F - F_opt||_F`` after performed updates, sampled every ``stride`` updates.

    Sampling starts at the last update of the first sweep; earlier feedbacks still
    carry rows of F0 that no update has touched. The default stride is ``n - 1``
    for ``n`` subsystems (1 for one or two subsystems): over ``n - 1`` consecutive
    updates every row but the stalest one is replaced by a best response.

    :param trace: Iteration trace.
    :type trace: :class:`~spi.splititeration.IterationTrace`
    :param F_opt: Optimal feedback.
    :param int stride: Updates between two samples.
    :rtype: :class:`numpy.ndarray`
    """
    updates = trace.updates
    if not updates:
        return np.array([])
    first_sweep = trace.records[0].sweep
    if stride is None:
        n = sum(1 for record in trace.records if record.sweep == first_sweep)
        stride = max(n - 1, 1)
    start = max(k for k, record in enumerate(updates) if record.sweep == updates[0].sweep)
    return np.array([linalg.norm(record.F - F_opt) for record in updates[start::int(stride)]])


def error_pairs(errors, window=(1e-10, 1e-2)):
    """Consecutive error pairs ``(e_k, e_(k+1))`` with both errors inside ``window``.

    :param errors: Error sequence.
    :param tuple window: Asymptotic window ``(noise floor, threshold)``.
    :rtype: :py:class:`list`
    """
    low, high = window
    errors = [float(error) for error in errors]
    return [(before, after) for before, after in zip(errors, errors[1:])
            if low <= before <= high and low <= after <= high]


def fit_pairs(pairs, order=None, min_pairs=3):
    """Least-squares fit of ``log e_(k+1) = p log e_k + log c`` over error pairs.

    :param list pairs: Pairs ``(e_k, e_(k+1))``, possibly pooled from several runs of one problem.
    :param order: Fix ``p`` and fit only ``c`` if given.
    :param int min_pairs: Minimum number of pairs.
    :return: Order estimate ``p`` and rate estimate ``c``.
    :rtype: :py:class:`tuple`
    """
    if len(pairs) < min_pairs:
        raise InsufficientData("{} error pairs in the asymptotic window, need {}".format(len(pairs), min_pairs))
    x = np.log([before for before, _ in pairs])
    y = np.log([after for _, after in pairs])
    if order is None:
        if np.ptp(x) == 0:
            raise InsufficientData("error pairs do not determine an order")
        p, log_c = np.polyfit(x, y, 1)
    else:
        p = float(order)
        log_c = float(np.mean(y - p * x))
    return float(p), float(np.exp(log_c))


def fit_order(errors, window=(1e-10, 1e-2), order=None, min_pairs=3):
    """Fit convergence order and rate to an error sequence.

    Only consecutive pairs with both errors inside ``window`` qualify.

    :param errors: Error sequence.
    :param tuple window: Asymptotic window ``(noise floor, threshold)``.
    :param order: Fix ``p`` and fit only ``c`` if given.
    :param int min_pairs: Minimum number of qualifying pairs.
    :return: Order estimate ``p`` and rate estimate ``c``.
    :rtype: :py:class:`tuple`
    """
    return fit_pairs(error_pairs(errors, window), order, min_pairs)


def empirical_order(trace, F_opt, window=(1e-10, 1e-2), order=None, min_pairs=3, per_update=False):
    """Fit convergence order and rate to the errors of an iteration trace.

    :param trace: Iteration trace.
    :type trace: :class:`~spi.splititeration.IterationTrace`
    :param F_opt: Optimal feedback.
    :param bool per_update: Fit :func:`update_errors` instead of :func:`sweep_errors`.
    :return: Order estimate ``p`` and rate estimate ``c``.
    :rtype: :py:class:`tuple`
    """
    errors = update_errors(trace, F_opt) if per_update else sweep_errors(trace, F_opt)
    return fit_order(errors, window, order, min_pairs)


# relative restart distances from 1 down to 1e-3, four per decade
RESTART_DISTANCES = tuple(10.0 ** (-k / 4) for k in range(13))


def restart_pairs(problem, partition, F_opt, distances=RESTART_DISTANCES, seed=0, window=(1e-10, 1e-2),
                  options=splititeration.IterationOptions()):
    """Per-update error pairs of runs restarted at random feedbacks near the optimum.

    Run ``k`` starts from ``F_opt + distances[k] * (1 + ||F_opt||_F) * D`` with a
    random direction ``D`` of unit Frobenius norm. Quadratic convergence leaves
    one or two pairs per run inside ``window``, so an order fit pools several runs.

    :param problem: Full LQR problem.
    :type problem: :class:`~spi.systems.LqrProblem`
    :param partition: Input partition.
    :type partition: :class:`~spi.systems.InputPartition`
    :param F_opt: Optimal feedback.
    :param distances: Relative distances of the restarts.
    :param int seed: Seed of the random directions.
    :param tuple window: Asymptotic window ``(noise floor, threshold)``.
    :param options: Iteration options of the restarted runs.
    :type options: :class:`~spi.splititeration.IterationOptions`
    :return: Pooled error pairs.
    :rtype: :py:class:`list`
    """
    rng = np.random.default_rng(seed)
    scale = 1 + linalg.norm(F_opt)
    pairs = []
    for distance in distances:
        direction = rng.uniform(-1.0, 1.0, F_opt.shape)
        F0 = F_opt + distance * scale * direction / linalg.norm(direction)
        try:
            report = splititeration.run(problem, partition, F0, options)
        except SpiError as error:
            logger.info("restart at distance %g failed: %s", distance, error)
            continue
        pairs.extend(error_pairs(update_errors(report.trace, F_opt), window))
    logger.debug("%d error pairs from %d restarts", len(pairs), len(distances))
    return pairs


def coupling_sweep(spec, couplings, tolerances=lqrcore.DEFAULT_TOLERANCES):
    """Spectral radius of the sweep Jacobian over a grid of coupling strengths.

    :param spec: Discrete-time generator specification, its coupling is overridden.
    :type spec: :class:`~spi.generator.GeneratorSpec`
    :param list couplings: Coupling strengths.
    :return: Pairs ``(coupling, spectral radius)``.
    :rtype: :py:class:`list`
    """
    rates = []
    for coupling in couplings:
        problem, partition, _ = generator.generate_coupled_system(spec._replace(coupling=coupling), tolerances)
        P_opt = lqrcore.solve_are(problem, tolerances=tolerances)
        rates.append((coupling, rate_matrix_cycle(problem, partition, P_opt, tolerances=tolerances).spectral_radius))
    return rates
