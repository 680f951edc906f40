#!/usr/bin/env python3
# -*- coding: utf-8 -*-

"""Routines for solving coupled LQR problems by split optimal policy iteration,
one subsystem block row of the feedback at a time.

This package includes the following modules:

``systems``
    This module provides the :class:`~spi.systems.LqrProblem` class, the time domain
    and the :class:`~spi.systems.InputPartition` / :class:`~spi.systems.StatePartition`
    block partitions.

``lqrcore``
    This module provides the Riccati solvers :func:`~spi.lqrcore.solve_care` and
    :func:`~spi.lqrcore.solve_dare`, policy evaluation and the stability and
    controllability predicates.

``splititeration``
    This module provides the subsystem update, the sweep scheduler and
    :func:`~spi.splititeration.run` which iterates sweeps to a fixed point.

``rateanalysis``
    This module provides the local convergence analysis: update Jacobians, the
    sweep Jacobian spectral radius and empirical order fits.

``generator``
    This module provides :func:`~spi.generator.generate_coupled_system` for seeded
    random coupled problems.

``problemio``
    This module reads and writes problem and matrix files.

``experiment``
    This module runs end-to-end experiments and writes their artifacts.

``exceptions``
    This module defines the exceptions raised by the package.
"""

__version__ = "0.1.0"
