#!/usr/bin/env python3
# -*- coding: utf-8 -*-

"""
spi.experiment
~~~~~~~~~~~~~~

This module runs end-to-end experiments: it generates or loads a problem,
runs the split iteration, compares the result with the full-problem Riccati
solution, checks monotonicity and stabilization along the trace, analyses
the local rate (discrete time) and fits the empirical convergence order.

An experiment writes ``problem.json``, ``trace.csv`` and ``summary.json`` into
its output directory and returns an exit status: 0 if every check passed.

Experiment configuration file (JSON), every key but one of ``generator`` and
``problem`` optional:

.. code-block:: json

   {
     "generator": {"state_blocks": [2, 2], "input_blocks": [1, 1], "coupling": 0.1,
                   "domain": "discrete", "seed": 42},
     "order": [1, 2],
     "f0": "zero",
     "max_sweeps": 500,
     "tol_outer": 1e-10,
     "tolerances": {"tol_riccati": 1e-10},
     "outputs": ["trace", "rate", "order_fit"],
     "checks": {"reference_tol": 1e-7, "order_window": [1e-10, 1e-2], "min_pairs": 3,
                "order_range": [1.7, 2.3], "rate_tol": 0.25}
   }

Subsystem numbers in ``order`` and ``start`` are 1-based; relative paths are
resolved against the directory of the configuration file.
"""

import collections
import concurrent.futures
import json
import logging
import os

import numpy as np
import pandas as pd
from scipy import linalg

from . import generator
from . import lqrcore
from . import problemio
from . import rateanalysis
from . import splititeration
from .exceptions import (AllSubsystemsUncontrollable, ConfigError, DimensionMismatch, DomainMismatch,
                         GenerationFailed, IndexOutOfRange, InsufficientData, MaxSweepsExceeded, NotBlockDiagonal,
                         NotSPD, NotStabilizing, ParseError, RiccatiFailure, SingularMatrix, SpiError,
                         SubproblemNotControllable)

logger = logging.getLogger(__name__)


EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_CONVERGENCE = 3
EXIT_VERIFICATION = 4
EXIT_GENERATION = 5
EXIT_IO = 6

EXIT_STATUSES = (
    ((ParseError, ConfigError, DimensionMismatch, IndexOutOfRange, NotSPD, NotBlockDiagonal, DomainMismatch,
      ValueError), EXIT_CONFIG),
    ((MaxSweepsExceeded, RiccatiFailure, AllSubsystemsUncontrollable, SubproblemNotControllable, SingularMatrix,
      NotStabilizing), EXIT_CONVERGENCE),
    ((GenerationFailed,), EXIT_GENERATION),
    ((OSError,), EXIT_IO),
)

OUTPUTS = ("trace", "rate", "order_fit")
CHECK_KEYS = ("reference_tol", "order_window", "min_pairs", "order_range", "rate_tol")
GENERATOR_KEYS = {"state_blocks": "state_block_sizes", "input_blocks": "input_block_sizes", "coupling": "coupling",
                  "domain": "domain", "seed": "seed", "stability_margin": "stability_margin"}
CONFIG_KEYS = ("generator", "problem", "order", "start", "f0", "tolerances", "max_sweeps", "tol_outer",
               "tol_outer_residual", "outputs", "checks")


ExperimentConfig = collections.namedtuple("ExperimentConfig", [
    "generator", "problem", "order", "start", "f0", "tolerances", "max_sweeps", "tol_outer", "tol_outer_residual",
    "trace", "rate", "order_fit", "reference_tol", "order_window", "min_pairs", "order_range", "rate_tol"])
ExperimentConfig.__new__.__defaults__ = (None, None, None, 0, "zero", lqrcore.DEFAULT_TOLERANCES, 500, 1e-10, 1e-8,
                                         True, True, True, 1e-7, (1e-10, 1e-2), 3, (1.7, 2.3), 0.25)


def exit_status(error):
    """Exit status of the failure class an exception belongs to.

    :param error: Exception.
    :type error: :py:class:`Exception`
    :rtype: :py:class:`int`
    """
    for classes, status in EXIT_STATUSES:
        if isinstance(error, classes):
            return status
    return EXIT_VERIFICATION


def iteration_options(config):
    """Split iteration options of an experiment."""
    return splititeration.IterationOptions(max_sweeps=config.max_sweeps, tol_outer=config.tol_outer,
                                           tol_outer_residual=config.tol_outer_residual, order=config.order,
                                           start=config.start, tolerances=config.tolerances)


def _positive(document, key, default, kind=float):
    value = document.get(key, default)
    try:
        value = kind(value)
    except (TypeError, ValueError):
        raise ConfigError('"{}" must be a number, got {!r}'.format(key, value))
    if not value > 0:
        raise ConfigError('"{}" must be positive, got {}'.format(key, value))
    return value


def _resolve(path, base_dir, key):
    if not isinstance(path, str):
        raise ConfigError('"{}" must be a path'.format(key))
    path = os.path.join(base_dir, path)
    if not os.path.isfile(path):
        raise ConfigError('"{}" file {} does not exist'.format(key, path))
    return path


def _generator_spec(document):
    if not isinstance(document, dict):
        raise ConfigError('"generator" must be an object')
    unknown = sorted(set(document) - set(GENERATOR_KEYS))
    if unknown:
        raise ConfigError('unknown generator key "{}"'.format(unknown[0]))
    missing = sorted(set(GENERATOR_KEYS) - set(document) - {"stability_margin"})
    if missing:
        raise ConfigError('missing generator key "{}"'.format(missing[0]))
    try:
        return generator.check_spec(generator.GeneratorSpec(**{GENERATOR_KEYS[key]: value
                                                               for key, value in document.items()}))
    except (TypeError, ValueError, ParseError) as error:
        raise ConfigError("invalid generator: {}".format(error))


def _tolerances(document):
    if not isinstance(document, dict):
        raise ConfigError('"tolerances" must be an object')
    unknown = sorted(set(document) - set(lqrcore.Tolerances._fields))
    if unknown:
        raise ConfigError('unknown tolerance "{}"'.format(unknown[0]))
    tolerances = {}
    for key, value in document.items():
        if key == "tol_rank" and value is None:
            tolerances[key] = None
        elif key in ("max_newton", "max_bootstrap", "max_stall"):
            tolerances[key] = _positive(document, key, None, int)
        else:
            tolerances[key] = _positive(document, key, None)
    return lqrcore.DEFAULT_TOLERANCES._replace(**tolerances)


def _interval(document, key, default):
    value = document.get(key, default)
    try:
        low, high = (float(bound) for bound in value)
    except (TypeError, ValueError):
        raise ConfigError('"{}" must be a pair of numbers'.format(key))
    if not low < high:
        raise ConfigError('"{}" must be an increasing pair, got {}'.format(key, [low, high]))
    return low, high


def parse_config(document, base_dir="."):
    """Construct experiment configuration from a decoded JSON document.

    :param dict document: Configuration document.
    :param str base_dir: Directory relative paths are resolved against.
    :return: Experiment configuration.
    :rtype: :class:`~spi.experiment.ExperimentConfig`
    """
    if not isinstance(document, dict):
        raise ConfigError("configuration must be a JSON object")
    unknown = sorted(set(document) - set(CONFIG_KEYS))
    if unknown:
        raise ConfigError('unknown configuration key "{}"'.format(unknown[0]))
    if ("generator" in document) == ("problem" in document):
        raise ConfigError('configuration needs exactly one of "generator" and "problem"')

    defaults = ExperimentConfig()
    fields = {}
    if "generator" in document:
        fields["generator"] = _generator_spec(document["generator"])
    else:
        fields["problem"] = _resolve(document["problem"], base_dir, "problem")

    order = document.get("order")
    if order is not None:
        if not isinstance(order, list):
            raise ConfigError('"order" must be a list of subsystem numbers')
        try:
            fields["order"] = tuple(int(number) - 1 for number in order)
        except (TypeError, ValueError):
            raise ConfigError('"order" must be a list of subsystem numbers')
    fields["start"] = _positive(document, "start", defaults.start + 1, int) - 1

    f0 = document.get("f0", "zero")
    fields["f0"] = "zero" if f0 == "zero" else _resolve(f0, base_dir, "f0")
    fields["tolerances"] = _tolerances(document.get("tolerances", {}))
    fields["max_sweeps"] = _positive(document, "max_sweeps", defaults.max_sweeps, int)
    fields["tol_outer"] = _positive(document, "tol_outer", defaults.tol_outer)
    fields["tol_outer_residual"] = _positive(document, "tol_outer_residual", defaults.tol_outer_residual)

    outputs = document.get("outputs", list(OUTPUTS))
    if not isinstance(outputs, list) or not set(outputs) <= set(OUTPUTS):
        raise ConfigError('"outputs" must be a list drawn from {}'.format(list(OUTPUTS)))
    fields.update((output, output in outputs) for output in OUTPUTS)

    checks = document.get("checks", {})
    if not isinstance(checks, dict):
        raise ConfigError('"checks" must be an object')
    unknown = sorted(set(checks) - set(CHECK_KEYS))
    if unknown:
        raise ConfigError('unknown check "{}"'.format(unknown[0]))
    fields["reference_tol"] = _positive(checks, "reference_tol", defaults.reference_tol)
    fields["order_window"] = _interval(checks, "order_window", defaults.order_window)
    fields["min_pairs"] = _positive(checks, "min_pairs", defaults.min_pairs, int)
    fields["order_range"] = _interval(checks, "order_range", defaults.order_range)
    fields["rate_tol"] = _positive(checks, "rate_tol", defaults.rate_tol)
    return ExperimentConfig(**fields)


def load_config(path):
    """Load experiment configuration file.

    :param str path: Path to JSON configuration file.
    :return: Experiment configuration.
    :rtype: :class:`~spi.experiment.ExperimentConfig`
    """
    with open(path, "r") as infile:
        try:
            document = json.load(infile)
        except json.JSONDecodeError as error:
            raise ParseError(error.msg, path=str(path), line=error.lineno)
    return parse_config(document, os.path.dirname(os.path.abspath(path)))


def to_plain(value):
    """Convert numpy scalars and containers into JSON types, non-finite floats into ``None``."""
    if isinstance(value, dict):
        return {key: to_plain(item) for key, item in value.items()}
    if isinstance(value, (list, tuple)):
        return [to_plain(item) for item in value]
    if isinstance(value, (bool, np.bool_)):
        return bool(value)
    if isinstance(value, (int, np.integer)):
        return int(value)
    if isinstance(value, (float, np.floating)):
        return float(value) if np.isfinite(value) else None
    return value


def write_summary(summary, path):
    """Write summary as sorted JSON, NaN and infinity as ``null``."""
    with open(path, "w") as outfile:
        json.dump(to_plain(summary), outfile, indent=2, sort_keys=True, allow_nan=False)
        outfile.write("\n")


def _order_fit(report, problem, partition, F_opt, config, spectral_radius, checks):
    try:
        if problem.is_continuous:
            pairs = rateanalysis.error_pairs(rateanalysis.update_errors(report.trace, F_opt), config.order_window)
            seed = config.generator.seed if config.generator is not None else 0
            pairs += rateanalysis.restart_pairs(problem, partition, F_opt, seed=seed, window=config.order_window,
                                                options=iteration_options(config))
            p, c = rateanalysis.fit_pairs(pairs, None, config.min_pairs)
            checks["order"] = config.order_range[0] <= p <= config.order_range[1]
            return {"order": p, "constant": c, "pairs": len(pairs)}
        _, c = rateanalysis.empirical_order(report.trace, F_opt, config.order_window, 1, config.min_pairs)
    except InsufficientData as error:
        logger.info("order fit skipped: %s", error)
        if problem.is_continuous:
            checks["order"] = False
        return {"skipped": str(error)}

    fit = {"order": 1.0, "rate": c}
    if spectral_radius is not None:
        fit["relative_rate_error"] = abs(c - spectral_radius) / max(spectral_radius, 0.01)
        checks["rate_match"] = fit["relative_rate_error"] <= config.rate_tol
    return fit


def _problem(config):
    if config.generator is not None:
        return generator.generate_coupled_system(config.generator, config.tolerances)
    return problemio.load_problem(config.problem, config.tolerances.tol_sym)


def _evaluate(config, out_dir, summary):
    problem, partition, state_partition = _problem(config)
    problemio.save_problem(problem, partition, state_partition, os.path.join(out_dir, "problem.json"))
    summary["problem"] = {"domain": problem.domain.value, "m": problem.m, "r": problem.r,
                          "state_blocks": list(state_partition.block_sizes),
                          "input_blocks": list(partition.block_sizes)}

    policy = "zero" if config.f0 == "zero" else problemio.load_matrix(config.f0, "F0")
    F0 = splititeration.initial_feedback(problem, partition, policy)
    report = splititeration.run(problem, partition, F0, iteration_options(config))
    if config.trace:
        report.trace.write_csv(os.path.join(out_dir, "trace.csv"))

    tolerances = config.tolerances
    P_opt, F_opt = lqrcore.full_solution(problem, tolerances)
    error = float(linalg.norm(report.F - F_opt))
    tolerance = config.reference_tol * (1 + linalg.norm(F_opt))
    checks = {"reference": error <= tolerance,
              "monotone": report.trace.is_monotone(tolerances.tol_psd),
              "stabilizing": report.trace.is_stabilizing()}
    summary["reference"] = {"error": error, "tolerance": tolerance}
    summary["iteration"] = {"sweeps": report.sweeps, "productive_sweeps": report.productive_sweeps,
                            "termination": report.termination.value, "residual": report.residual,
                            "nash_gap": splititeration.nash_gap(problem, partition, report.F, tolerances)}

    spectral_radius = None
    if config.rate and not problem.is_continuous:
        rate = rateanalysis.rate_matrix_cycle(problem, partition, P_opt,
                                              splititeration.sweep_order(partition.n, config.order, config.start),
                                              tolerances)
        spectral_radius = rate.spectral_radius
        summary["rate"] = rate.to_dict()
        checks["contraction"] = spectral_radius < 1
    if config.order_fit:
        summary["order_fit"] = _order_fit(report, problem, partition, F_opt, config, spectral_radius, checks)

    summary["checks"] = checks
    failed = sorted(name for name, passed in checks.items() if not passed)
    if failed:
        logger.warning("checks failed: %s", ", ".join(failed))
        return EXIT_VERIFICATION
    return EXIT_OK


def run_experiment(config, out_dir):
    """Run one experiment and write its artifacts.

    :param config: Experiment configuration.
    :type config: :class:`~spi.experiment.ExperimentConfig`
    :param str out_dir: Output directory, created if missing.
    :return: Exit status.
    :rtype: :py:class:`int`
    """
    summary = {}
    try:
        os.makedirs(out_dir, exist_ok=True)
        status = _evaluate(config, out_dir, summary)
    except (SpiError, ValueError, OSError) as error:
        logger.error("experiment failed: %s", error)
        status = exit_status(error)
        summary["error"] = "{}: {}".format(type(error).__name__, error)
        report = getattr(error, "report", None)
        if report is not None:
            summary["iteration"] = {"sweeps": report.sweeps, "termination": report.termination.value}
            if config.trace and os.path.isdir(out_dir):
                report.trace.write_csv(os.path.join(out_dir, "trace.csv"))

    summary["status"] = status
    try:
        write_summary(summary, os.path.join(out_dir, "summary.json"))
    except OSError as error:
        logger.error("cannot write summary: %s", error)
        return EXIT_IO
    return status


def _run_seed(config, out_dir):
    return run_experiment(config, out_dir)


def run_batch(config, out_dir, seeds, processes=1):
    """Rerun a generator experiment over several seeds, one sub-directory per seed.

    :param config: Experiment configuration with a generator.
    :type config: :class:`~spi.experiment.ExperimentConfig`
    :param str out_dir: Output directory.
    :param list seeds: Random seeds.
    :param int processes: Number of worker processes.
    :return: Worst exit status.
    :rtype: :py:class:`int`
    """
    if config.generator is None:
        raise ConfigError("batch runs need a generator configuration")
    os.makedirs(out_dir, exist_ok=True)
    jobs = [(config._replace(generator=config.generator._replace(seed=int(seed))),
             os.path.join(out_dir, "seed_{}".format(seed))) for seed in seeds]

    if processes > 1:
        with concurrent.futures.ProcessPoolExecutor(max_workers=processes) as executor:
            statuses = list(executor.map(_run_seed, *zip(*jobs)))
    else:
        statuses = [_run_seed(*job) for job in jobs]

    table = pd.DataFrame({"seed": [int(seed) for seed in seeds], "status": statuses})
    table.to_csv(os.path.join(out_dir, "batch.csv"), index=False)
    return max(statuses) if statuses else EXIT_OK
