#!/usr/bin/env python3
# -*- coding: utf-8 -*-

"""
spi.lqrcore
~~~~~~~~~~~

This module implements the dense LQR primitives: Riccati solvers for
continuous time (CARE) and discrete time (DARE), optimal feedback extraction,
policy evaluation via Lyapunov/Stein equations, and the stability,
stabilizability and controllability predicates.

Riccati equations are solved by Newton iteration on the feedback
(Kleinman in continuous time, Hewer in discrete time). Each Newton step is a
policy evaluation, i.e. a Lyapunov or Stein equation, solved here by Kronecker
vectorization with column-major stacking.
"""

import collections
import logging

import numpy as np
from scipy import linalg

from .exceptions import DomainMismatch, NoConvergence, NotStabilizable, NotStabilizing, SingularMatrix
from .systems import TimeDomain

logger = logging.getLogger(__name__)


Tolerances = collections.namedtuple("Tolerances", ["tol_riccati", "tol_sym", "tol_stab", "tol_rank", "tol_psd",
                                                   "tol_optimal", "newton_step", "max_newton", "max_bootstrap",
                                                   "tol_pbh", "max_stall"])
Tolerances.__new__.__defaults__ = (1e-10, 1e-12, 1e-9, None, 1e-8, 1e-8, 1e-14, 100, 200, 1e-9, 10)
Tolerances.__doc__ = """Numerical tolerances of the LQR primitives.

:param float tol_riccati: Relative ARE residual accepted from a Riccati solve.
:param float tol_sym: Relative symmetry tolerance.
:param float tol_stab: Strict stability margin.
:param tol_rank: Relative singular value cutoff of the Kalman rank test, ``None`` means m * machine epsilon.
:param float tol_psd: Slack of PSD-order comparisons.
:param float tol_optimal: Relative ARE residual accepted as "solves the full problem".
:param float newton_step: Relative Newton increment that stops the iteration.
:param int max_newton: Newton step budget.
:param int max_bootstrap: Round budget of the stabilizing-feedback bootstrap.
:param float tol_pbh: Relative singular value cutoff of the PBH stabilizability test.
:param int max_stall: Newton steps without residual improvement before the best iterate is returned.
"""

DEFAULT_TOLERANCES = Tolerances()


def vec(matrix):
    """Column-major vectorization."""
    return np.reshape(matrix, -1, order="F")


def unvec(vector, shape):
    """Inverse of :func:`~spi.lqrcore.vec`."""
    return np.reshape(vector, shape, order="F")


def symmetrize(matrix):
    """Symmetric part of a square matrix."""
    return (matrix + matrix.T) / 2


def closed_loop(problem, F):
    """Closed-loop state matrix ``A + BF``."""
    return problem.A + problem.B @ F


def stability_margin(problem, F):
    """Spectral abscissa (continuous time) or spectral radius (discrete time) of ``A + BF``.

    :param problem: LQR problem.
    :type problem: :class:`~spi.systems.LqrProblem`
    :param F: Feedback matrix (r x m).
    :return: Largest real part or largest modulus of the closed-loop eigenvalues.
    :rtype: :py:class:`float`
    """
    eigenvalues = linalg.eigvals(closed_loop(problem, F))
    if problem.is_continuous:
        return float(np.max(eigenvalues.real))
    return float(np.max(np.abs(eigenvalues)))


def is_stabilizing(problem, F, tolerances=DEFAULT_TOLERANCES):
    """Test if feedback stabilizes the closed loop with strict margin ``tol_stab``.

    :param problem: LQR problem.
    :type problem: :class:`~spi.systems.LqrProblem`
    :param F: Feedback matrix (r x m).
    :param tolerances: Numerical tolerances.
    :type tolerances: :class:`~spi.lqrcore.Tolerances`
    :return: Stabilizing (True) or not (False).
    :rtype: :py:obj:`True` or :py:obj:`False`
    """
    margin = stability_margin(problem, F)
    if problem.is_continuous:
        return margin < -tolerances.tol_stab
    return margin < 1 - tolerances.tol_stab


def controllability_matrix(A, B):
    """Kalman controllability matrix ``[B, AB, ..., A^(m-1) B]``."""
    blocks = [np.asarray(B, dtype=float)]
    for _ in range(np.shape(A)[0] - 1):
        blocks.append(A @ blocks[-1])
    return np.hstack(blocks)


def _numerical_rank(matrix, tol):
    singular_values = linalg.svdvals(matrix)
    if singular_values.size == 0 or singular_values[0] == 0:
        return 0
    return int(np.sum(singular_values > tol * singular_values[0]))


def is_controllable(A, B, tol_rank=None):
    """Kalman rank test of the pair (A, B).

    :param A: Square state matrix (m x m).
    :param B: Input matrix (m x r).
    :param tol_rank: Relative singular value cutoff, defaults to m * machine epsilon.
    :return: Controllable (True) or not (False).
    :rtype: :py:obj:`True` or :py:obj:`False`
    """
    m = np.shape(A)[0]
    if tol_rank is None:
        tol_rank = m * np.finfo(float).eps
    return _numerical_rank(controllability_matrix(A, B), tol_rank) == m


def is_stabilizable(A, B, domain, tol_rank=None):
    """PBH test: every eigenvalue of A outside the stability region is controllable.

    :param A: Square state matrix (m x m).
    :param B: Input matrix (m x r).
    :param domain: Time domain that defines the stability region.
    :type domain: :class:`~spi.systems.TimeDomain`
    :param float tol_rank: Relative singular value cutoff, defaults to the ``tol_pbh`` default.
    :return: Stabilizable (True) or not (False).
    :rtype: :py:obj:`True` or :py:obj:`False`
    """
    m = np.shape(A)[0]
    if tol_rank is None:
        tol_rank = DEFAULT_TOLERANCES.tol_pbh
    for eigenvalue in linalg.eigvals(A):
        if TimeDomain.parse(domain) is TimeDomain.CONTINUOUS:
            stable = eigenvalue.real < 0
        else:
            stable = abs(eigenvalue) < 1
        if stable:
            continue
        pencil = np.hstack([A - eigenvalue * np.eye(m), B])
        if _numerical_rank(pencil, tol_rank) < m:
            return False
    return True


def solve_lyapunov(Ac, W):
    """Solve ``Ac^T P + P Ac + W = 0`` by Kronecker vectorization.

    :param Ac: Hurwitz closed-loop matrix (m x m).
    :param W: Symmetric right-hand side (m x m).
    :return: Symmetrized solution P.
    :rtype: :class:`numpy.ndarray`
    """
    m = Ac.shape[0]
    identity = np.eye(m)
    operator = np.kron(identity, Ac.T) + np.kron(Ac.T, identity)
    try:
        solution = linalg.solve(operator, -vec(W))
    except linalg.LinAlgError as error:
        raise SingularMatrix("Lyapunov operator is singular: {}".format(error))
    return symmetrize(unvec(solution, (m, m)))


def solve_stein(Ac, W):
    """Solve ``P = Ac^T P Ac + W`` by Kronecker vectorization.

    :param Ac: Schur-stable closed-loop matrix (m x m).
    :param W: Symmetric right-hand side (m x m).
    :return: Symmetrized solution P.
    :rtype: :class:`numpy.ndarray`
    """
    m = Ac.shape[0]
    operator = np.eye(m * m) - np.kron(Ac.T, Ac.T)
    try:
        solution = linalg.solve(operator, vec(W))
    except linalg.LinAlgError as error:
        raise SingularMatrix("Stein operator is singular: {}".format(error))
    return symmetrize(unvec(solution, (m, m)))


def evaluate_policy(problem, F, tolerances=DEFAULT_TOLERANCES):
    """Value matrix of a fixed stabilizing feedback ``u = Fx``.

    :param problem: LQR problem.
    :type problem: :class:`~spi.systems.LqrProblem`
    :param F: Stabilizing feedback matrix (r x m).
    :param tolerances: Numerical tolerances.
    :type tolerances: :class:`~spi.lqrcore.Tolerances`
    :return: Value matrix P_F with ``V(x) = x^T P_F x``.
    :rtype: :class:`numpy.ndarray`
    """
    if not is_stabilizing(problem, F, tolerances):
        raise NotStabilizing("closed loop has stability margin {:.3g}".format(stability_margin(problem, F)))
    Ac = closed_loop(problem, F)
    W = symmetrize(problem.Q + F.T @ problem.R @ F)
    if problem.is_continuous:
        return solve_lyapunov(Ac, W)
    return solve_stein(Ac, W)


def optimal_feedback(P, problem):
    """Optimal feedback implied by a value matrix.

    Continuous time: ``F = -R^-1 B^T P``; discrete time: ``F = -(R + B^T P B)^-1 B^T P A``.

    :param P: Value matrix (m x m).
    :param problem: LQR problem.
    :type problem: :class:`~spi.systems.LqrProblem`
    :return: Feedback matrix (r x m).
    :rtype: :class:`numpy.ndarray`
    """
    B, R = problem.B, problem.R
    try:
        if problem.is_continuous:
            F = -linalg.solve(R, B.T @ P, assume_a="sym")
        else:
            F = -linalg.solve(R + B.T @ P @ B, B.T @ P @ problem.A, assume_a="sym")
    except linalg.LinAlgError as error:
        raise SingularMatrix("cannot extract feedback: {}".format(error))
    if not np.all(np.isfinite(F)):
        raise SingularMatrix("feedback has non-finite entries")
    return F


def riccati_residual(P, problem):
    """Frobenius norm of the residual of the problem's algebraic Riccati equation.

    :param P: Value matrix (m x m).
    :param problem: LQR problem.
    :type problem: :class:`~spi.systems.LqrProblem`
    :return: Nonnegative residual, :py:data:`numpy.inf` if the residual cannot be evaluated.
    :rtype: :py:class:`float`
    """
    A, B, Q, R = problem.A, problem.B, problem.Q, problem.R
    try:
        if problem.is_continuous:
            residual = A.T @ P + P @ A - P @ B @ linalg.solve(R, B.T @ P) + Q
        else:
            gain = linalg.solve(R + B.T @ P @ B, B.T @ P @ A)
            residual = A.T @ P @ A - A.T @ P @ B @ gain + Q - P
    except linalg.LinAlgError:
        return np.inf
    return float(linalg.norm(residual))


def _newton(problem, F, tolerances):
    """Newton iteration on the feedback from a stabilizing initial feedback.

    Stops at the rounding floor of the increments. If the ARE residual has not
    improved for ``max_stall`` steps, or an iterate loses stability, the iterate
    with the smallest residual so far is returned and the caller judges it.
    """
    try:
        P = evaluate_policy(problem, F, tolerances)
    except NotStabilizing:
        raise NotStabilizable("initial feedback is not stabilizing")

    best, best_residual = P, riccati_residual(P, problem)
    previous_increment = np.inf
    stalled = 0
    for step in range(tolerances.max_newton):
        F = optimal_feedback(P, problem)
        try:
            P_next = evaluate_policy(problem, F, tolerances)
        except NotStabilizing:
            logger.debug("newton step %d lost stability, keeping best iterate", step + 1)
            return best
        increment = linalg.norm(P_next - P)
        P = P_next
        scale = 1 + linalg.norm(P)
        residual = riccati_residual(P, problem)
        logger.debug("newton step %d: increment %.3e, residual %.3e", step + 1, increment, residual)
        if increment <= tolerances.newton_step * scale:
            return P
        # rounding floor reached
        if increment >= previous_increment and residual <= tolerances.tol_riccati * scale:
            return P
        previous_increment = increment

        if residual < best_residual:
            best, best_residual = P, residual
            stalled = 0
        else:
            stalled += 1
        if stalled >= tolerances.max_stall:
            logger.debug("newton stalled at residual %.3e after %d steps", best_residual, step + 1)
            return best
    raise NoConvergence("Newton iteration exceeded {} steps".format(tolerances.max_newton))


def stabilizing_feedback(problem, tolerances=DEFAULT_TOLERANCES):
    """Find a stabilizing feedback by an eigenvalue-shifted LQR bootstrap.

    Continuous time solves the LQR problem of ``A - beta I`` and lowers ``beta``
    below the resulting closed-loop abscissa; discrete time does the same with
    the scaled pair ``(A / alpha, B / alpha)`` and the closed-loop spectral radius.

    :param problem: LQR problem.
    :type problem: :class:`~spi.systems.LqrProblem`
    :param tolerances: Numerical tolerances.
    :type tolerances: :class:`~spi.lqrcore.Tolerances`
    :return: Stabilizing feedback matrix (r x m).
    :rtype: :class:`numpy.ndarray`
    """
    F = np.zeros((problem.r, problem.m))
    if is_stabilizing(problem, F, tolerances):
        return F
    if not is_stabilizable(problem.A, problem.B, problem.domain, tolerances.tol_pbh):
        raise NotStabilizable("(A, B) is not stabilizable")

    margin = stability_margin(problem, F)
    shift = margin + 1.0
    for round_idx in range(tolerances.max_bootstrap):
        if problem.is_continuous:
            shifted = problem.replace(A=problem.A - shift * np.eye(problem.m))
        else:
            shifted = problem.replace(A=problem.A / shift, B=problem.B / shift)
        F = optimal_feedback(_newton(shifted, F, tolerances), shifted)
        margin = stability_margin(problem, F)
        logger.debug("bootstrap round %d: shift %.6g, closed-loop margin %.6g", round_idx + 1, shift, margin)
        if is_stabilizing(problem, F, tolerances):
            return F
        shift = margin + 0.1 * (shift - margin)
    raise NotStabilizable("bootstrap exceeded {} rounds".format(tolerances.max_bootstrap))


def _solve(problem, warm_start, tolerances):
    F = None
    if warm_start is not None:
        F = problem.check_feedback(warm_start, "warm_start")
        if not is_stabilizing(problem, F, tolerances):
            logger.debug("warm start is not stabilizing, bootstrapping instead")
            F = None
    if F is None:
        F = stabilizing_feedback(problem, tolerances)

    P = _newton(problem, F, tolerances)
    residual = riccati_residual(P, problem)
    if residual > tolerances.tol_riccati * (1 + linalg.norm(P)):
        logger.warning("Riccati residual %.3e above tolerance", residual)
        raise NoConvergence("Riccati residual {:.3e} above tolerance".format(residual))
    return P


def solve_care(problem, warm_start=None, tolerances=DEFAULT_TOLERANCES):
    """Solve the continuous algebraic Riccati equation
    ``A^T P + P A - P B R^-1 B^T P + Q = 0``.

    :param problem: Continuous-time LQR problem.
    :type problem: :class:`~spi.systems.LqrProblem`
    :param warm_start: Optional stabilizing feedback (r x m) to start Newton from.
    :param tolerances: Numerical tolerances.
    :type tolerances: :class:`~spi.lqrcore.Tolerances`
    :return: Unique symmetric positive definite solution P.
    :rtype: :class:`numpy.ndarray`
    """
    if not problem.is_continuous:
        raise DomainMismatch("solve_care needs a continuous-time problem")
    return _solve(problem, warm_start, tolerances)


def solve_dare(problem, warm_start=None, tolerances=DEFAULT_TOLERANCES):
    """Solve the discrete algebraic Riccati equation
    ``P = A^T P A - A^T P B (R + B^T P B)^-1 B^T P A + Q``.

    :param problem: Discrete-time LQR problem.
    :type problem: :class:`~spi.systems.LqrProblem`
    :param warm_start: Optional stabilizing feedback (r x m) to start Newton from.
    :param tolerances: Numerical tolerances.
    :type tolerances: :class:`~spi.lqrcore.Tolerances`
    :return: Unique symmetric positive definite solution P.
    :rtype: :class:`numpy.ndarray`
    """
    if problem.is_continuous:
        raise DomainMismatch("solve_dare needs a discrete-time problem")
    return _solve(problem, warm_start, tolerances)


def solve_are(problem, warm_start=None, tolerances=DEFAULT_TOLERANCES):
    """Solve the algebraic Riccati equation of the problem's time domain."""
    if problem.is_continuous:
        return solve_care(problem, warm_start, tolerances)
    return solve_dare(problem, warm_start, tolerances)


def full_solution(problem, tolerances=DEFAULT_TOLERANCES):
    """Reference solution of the full problem.

    :return: Optimal value matrix and optimal feedback.
    :rtype: :py:class:`tuple`
    """
    P = solve_are(problem, tolerances=tolerances)
    return P, optimal_feedback(P, problem)


def min_eigenvalue(matrix):
    """Smallest eigenvalue of the symmetric part of a square matrix."""
    return float(np.min(linalg.eigvalsh(symmetrize(matrix))))
