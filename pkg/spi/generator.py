#!/usr/bin/env python3
# -*- coding: utf-8 -*-

"""
spi.generator
~~~~~~~~~~~~~

This module generates seeded random coupled LQR problems:
``A = blockdiag(A_11, ..., A_nn) + coupling * C`` with subsystem blocks and
off-diagonal coupling ``C`` drawn uniformly from ``[-1, 1]``, block diagonal
``B`` with full column rank blocks and block diagonal SPD ``Q`` and ``R``.

Diagonal blocks of ``A`` are not forced stable. With positive coupling every
subproblem at ``F = 0`` must be controllable with the Kalman rank cutoff
``GENERATION_RANK_TOL``. A decoupled problem (``coupling = 0``) has no path
from one subsystem to another, so its diagonal blocks are moved into the
stability region and every subproblem at ``F = 0`` must be stabilizable
instead. In both cases the Riccati equation of every subproblem at ``F = 0``
must be solvable to tolerance.
"""

import collections
import logging

import numpy as np
from scipy import linalg

from . import lqrcore
from . import splititeration
from .exceptions import ConfigError, GenerationFailed, RiccatiFailure, SingularMatrix
from .systems import InputPartition, LqrProblem, StatePartition, TimeDomain

logger = logging.getLogger(__name__)


GeneratorSpec = collections.namedtuple("GeneratorSpec", ["state_block_sizes", "input_block_sizes", "coupling",
                                                         "domain", "seed", "stability_margin"])
GeneratorSpec.__new__.__defaults__ = (1.0,)
GeneratorSpec.__doc__ = """Random coupled problem specification.

:param list state_block_sizes: States per subsystem.
:param list input_block_sizes: Inputs per subsystem, at most the number of states.
:param float coupling: Coupling strength, nonnegative.
:param domain: Time domain.
:param int seed: Random seed.
:param float stability_margin: Shift ``margin * I`` that keeps ``Q = G^T G + margin * I`` and ``R`` away from singular.
"""

MAX_RETRIES = 100
MAX_BLOCK_REDRAWS = 1000

# stability required of the diagonal blocks of decoupled problems
DECOUPLED_MARGIN = 0.05

# relative Kalman rank cutoff of generated subproblems
GENERATION_RANK_TOL = 1e-6


def check_spec(spec):
    """Validate generator specification.

    :param spec: Generator specification.
    :type spec: :class:`~spi.generator.GeneratorSpec`
    :return: Specification with normalized fields.
    :rtype: :class:`~spi.generator.GeneratorSpec`
    """
    state_sizes = [int(size) for size in spec.state_block_sizes]
    input_sizes = [int(size) for size in spec.input_block_sizes]
    if not state_sizes or len(state_sizes) != len(input_sizes):
        raise ConfigError("need one state block and one input block per subsystem, got {} and {}".format(
            len(state_sizes), len(input_sizes)))
    if any(size < 1 for size in state_sizes + input_sizes):
        raise ConfigError("block sizes must be positive")
    if any(inputs > states for states, inputs in zip(state_sizes, input_sizes)):
        raise ConfigError("a subsystem cannot have more inputs than states")
    coupling = float(spec.coupling)
    if not np.isfinite(coupling) or coupling < 0:
        raise ConfigError("coupling must be a nonnegative number, got {}".format(spec.coupling))
    if not float(spec.stability_margin) > 0:
        raise ConfigError("stability_margin must be positive")
    return spec._replace(state_block_sizes=tuple(state_sizes), input_block_sizes=tuple(input_sizes),
                         coupling=coupling, domain=TimeDomain.parse(spec.domain), seed=int(spec.seed),
                         stability_margin=float(spec.stability_margin))


def random_spd(rng, size, margin=1.0):
    """Random symmetric positive definite matrix ``G^T G + margin * I``."""
    G = rng.uniform(-1.0, 1.0, (size, size))
    return G.T @ G + margin * np.eye(size)


def _block_margin(block, domain):
    eigenvalues = linalg.eigvals(block)
    if domain is TimeDomain.CONTINUOUS:
        return float(np.max(eigenvalues.real)) + DECOUPLED_MARGIN
    return float(np.max(np.abs(eigenvalues))) - 1.0 + DECOUPLED_MARGIN


def stabilized_block(block, domain):
    """Move a diagonal block into the stability region with margin ``2 * DECOUPLED_MARGIN``.

    Continuous time shifts the spectrum left, discrete time scales it; blocks
    that are already stable with margin ``DECOUPLED_MARGIN`` are returned as they are.
    """
    if _block_margin(block, domain) < 0:
        return block
    eigenvalues = linalg.eigvals(block)
    if domain is TimeDomain.CONTINUOUS:
        abscissa = float(np.max(eigenvalues.real))
        return block - (abscissa + 2 * DECOUPLED_MARGIN) * np.eye(block.shape[0])
    radius = float(np.max(np.abs(eigenvalues)))
    return block * (1.0 - 2 * DECOUPLED_MARGIN) / radius


def _full_rank_block(rng, rows, cols):
    for _ in range(MAX_BLOCK_REDRAWS):
        block = rng.uniform(-1.0, 1.0, (rows, cols))
        if np.linalg.matrix_rank(block) == cols:
            return block
    raise GenerationFailed("no full column rank {}x{} input block in {} draws".format(rows, cols,
                                                                                  MAX_BLOCK_REDRAWS))


def _draw(rng, spec, state_partition, tolerances):
    diagonal = [rng.uniform(-1.0, 1.0, (size, size)) for size in spec.state_block_sizes]
    if spec.coupling == 0:
        diagonal = [stabilized_block(block, spec.domain) for block in diagonal]
    coupling = rng.uniform(-1.0, 1.0, (state_partition.size, state_partition.size))
    for i in range(state_partition.n):
        coupling[state_partition.slice(i), state_partition.slice(i)] = 0.0
    B = linalg.block_diag(*[_full_rank_block(rng, states, inputs)
                            for states, inputs in zip(spec.state_block_sizes, spec.input_block_sizes)])
    Q = linalg.block_diag(*[random_spd(rng, size, spec.stability_margin) for size in spec.state_block_sizes])
    R = linalg.block_diag(*[random_spd(rng, size, spec.stability_margin) for size in spec.input_block_sizes])
    return LqrProblem(linalg.block_diag(*diagonal) + spec.coupling * coupling, B, Q, R, spec.domain,
                      tolerances.tol_sym)


def _solvable(problem, partition, F, i, tolerances):
    try:
        lqrcore.solve_are(splititeration.subproblem(problem, partition, F, i, tolerances), tolerances=tolerances)
    except (RiccatiFailure, SingularMatrix) as error:
        logger.debug("subproblem %d at zero feedback rejected: %s", i + 1, error)
        return False
    return True


def _subproblems_admissible(problem, partition, decoupled, tolerances):
    tol_rank = max(tolerances.tol_rank or 0.0, GENERATION_RANK_TOL)
    F = np.zeros((problem.r, problem.m))
    for i in range(partition.n):
        sub = splititeration.build_subproblem(problem, partition, F, i)
        if decoupled:
            if not lqrcore.is_stabilizable(sub.A, sub.B, problem.domain, tolerances.tol_pbh):
                return False
        elif not lqrcore.is_controllable(sub.A, sub.B, tol_rank):
            return False
        if not _solvable(problem, partition, F, i, tolerances):
            return False
    return True


def generate_coupled_system(spec, tolerances=lqrcore.DEFAULT_TOLERANCES):
    """Generate a seeded random coupled LQR problem.

    Identical specifications produce bitwise identical problems. Every draw
    consumes the random stream the same way whatever the coupling, so specs that
    differ only in coupling share diagonal blocks, ``C``, ``B``, ``Q`` and ``R``
    as long as their first draw is admissible.

    :param spec: Generator specification.
    :type spec: :class:`~spi.generator.GeneratorSpec`
    :param tolerances: Numerical tolerances of the admissibility checks.
    :type tolerances: :class:`~spi.lqrcore.Tolerances`
    :return: Problem, input partition and state partition.
    :rtype: :py:class:`tuple`
    """
    spec = check_spec(spec)
    state_partition = StatePartition(spec.state_block_sizes)
    input_partition = InputPartition(spec.input_block_sizes)
    decoupled = spec.coupling == 0

    for attempt in range(MAX_RETRIES):
        rng = np.random.default_rng([spec.seed, attempt])
        problem = _draw(rng, spec, state_partition, tolerances)
        if _subproblems_admissible(problem, input_partition, decoupled, tolerances):
            logger.debug("seed %d: admissible problem after %d draw(s)", spec.seed, attempt + 1)
            return problem, input_partition, state_partition
    raise GenerationFailed("no admissible problem for seed {} in {} draws".format(spec.seed, MAX_RETRIES))
