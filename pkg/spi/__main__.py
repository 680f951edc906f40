#!/usr/bin/env python3
# -*- coding: utf-8 -*-

"""
spi (split policy iteration) command-line interface

Usage:
    spi -h | --help
    spi --version
    spi solve (--problem=<path>) [--domain=<domain>] [--out=<path>] [--verbose]
    spi iterate (--problem=<path>) [--order=<perm>] [--start=<i>] [--f0=<policy>] [--tol=<x>] [--max-sweeps=<k>] [--trace=<path>] [--out=<path>] [--verbose]
    spi rate (--problem=<path>) [--order=<perm>] [--verbose]
    spi rate (--config=<path>) (--coupling=<list>) [--verbose]
    spi experiment (--config=<path>) (--out=<path>) [--seeds=<list>] [--processes=<k>] [--verbose]
    spi check-identities [--seeds=<k>] [--blocks=<sizes>] [--verbose]

Options:
    -h, --help              Show this screen.
    --version               Show version.
    --verbose               Print debug messages of the iteration.
    --problem=<path>        Path to problem file.
    --domain=<domain>       Override time domain of the problem: continuous or discrete.
    --out=<path>            Path to output file (final feedback) or output directory (experiment).
    --order=<perm>          Comma-separated sweep order, subsystems numbered from 1.
    --start=<i>             First subsystem of the ascending sweep order [default: 1].
    --f0=<policy>           Initial feedback: zero or path to matrix file [default: zero].
    --tol=<x>               Relative feedback change over one sweep that stops the iteration [default: 1e-10].
    --max-sweeps=<k>        Maximum number of sweeps [default: 500].
    --trace=<path>          Path to trace CSV file.
    --config=<path>         Path to experiment configuration file.
    --coupling=<list>       Comma-separated coupling strengths of the generator.
    --seeds=<list>          Comma-separated seeds (experiment) or number of draws (check-identities).
    --processes=<k>         Number of worker processes of a batch experiment [default: 1].
    --blocks=<sizes>        Comma-separated block sizes of R [default: 2,3].

Exit statuses:
    0    Success, every requested check passed.
    2    Usage, parse or configuration error.
    3    Convergence failure of a Riccati solve or of the split iteration.
    4    Verification failure, a check of the results did not pass.
    5    Problem generation failure, no admissible draw within the retry budget.
    6    I/O error.
"""

import json
import logging
import sys

import docopt
import numpy as np
from scipy import linalg

from . import __version__
from . import experiment
from . import lqrcore
from . import problemio
from . import rateanalysis
from . import splititeration
from .exceptions import ConfigError, SpiError
from .systems import Partition, format_matrix

logger = logging.getLogger(__name__)

IDENTITY_TOL = 1e-12


def _numbers(text, kind, option):
    try:
        return [kind(item) for item in text.split(",") if item.strip()]
    except ValueError:
        raise ConfigError('{} expects comma-separated numbers, got "{}"'.format(option, text))


def _order(cmdargs):
    if not cmdargs["--order"]:
        return None
    return tuple(number - 1 for number in _numbers(cmdargs["--order"], int, "--order"))


def _print(document):
    sys.stdout.write(json.dumps(experiment.to_plain(document), indent=2, sort_keys=True) + "\n")


def solve(cmdargs):
    problem, _, _ = problemio.load_problem(cmdargs["--problem"])
    if cmdargs["--domain"]:
        problem = problem.replace(domain=cmdargs["--domain"])
    P, F = lqrcore.full_solution(problem)
    if cmdargs["--out"]:
        problemio.save_matrix(F, cmdargs["--out"])
    _print({"domain": problem.domain.value, "P": format_matrix(P), "F": format_matrix(F),
            "residual": lqrcore.riccati_residual(P, problem)})
    return experiment.EXIT_OK


def iterate(cmdargs):
    problem, partition, _ = problemio.load_problem(cmdargs["--problem"])
    policy = cmdargs["--f0"]
    if policy != "zero":
        policy = problemio.load_matrix(policy, "F0")
    F0 = splititeration.initial_feedback(problem, partition, policy)
    options = splititeration.IterationOptions(max_sweeps=_numbers(cmdargs["--max-sweeps"], int, "--max-sweeps")[0],
                                              tol_outer=_numbers(cmdargs["--tol"], float, "--tol")[0],
                                              order=_order(cmdargs),
                                              start=_numbers(cmdargs["--start"], int, "--start")[0] - 1)
    try:
        report = splititeration.run(problem, partition, F0, options)
    except SpiError as error:
        partial = getattr(error, "report", None)
        if cmdargs["--trace"] and partial is not None:
            partial.trace.write_csv(cmdargs["--trace"])
        raise
    if cmdargs["--trace"]:
        report.trace.write_csv(cmdargs["--trace"])

    if cmdargs["--out"]:
        problemio.save_matrix(report.F, cmdargs["--out"])
    _print({"sweeps": report.sweeps, "productive_sweeps": report.productive_sweeps,
            "termination": report.termination.value, "residual": report.residual,
            "F": format_matrix(report.F)})
    return experiment.EXIT_OK


def rate(cmdargs):
    if cmdargs["--coupling"]:
        config = experiment.load_config(cmdargs["--config"])
        if config.generator is None:
            raise ConfigError("coupling sweeps need a generator configuration")
        couplings = _numbers(cmdargs["--coupling"], float, "--coupling")
        rates = rateanalysis.coupling_sweep(config.generator, couplings, config.tolerances)
        _print([{"coupling": coupling, "spectral_radius": radius} for coupling, radius in rates])
        return experiment.EXIT_OK

    problem, partition, _ = problemio.load_problem(cmdargs["--problem"])
    P_opt = lqrcore.solve_are(problem)
    report = rateanalysis.rate_matrix_cycle(problem, partition, P_opt, _order(cmdargs))
    _print(report.to_dict())
    return experiment.EXIT_OK if report.spectral_radius < 1 else experiment.EXIT_VERIFICATION


def check_identities(cmdargs):
    count = _numbers(cmdargs["--seeds"] or "100", int, "--seeds")[0]
    block_sizes = _numbers(cmdargs["--blocks"], int, "--blocks")
    partition = Partition(block_sizes)

    worst = 0.0
    for seed in range(count):
        R, S, i = rateanalysis.random_identity_instance(np.random.default_rng(seed), block_sizes)
        residuals = rateanalysis.verify_tech_identities(R, S, partition, i)
        scaled = max(residuals) / (1 + linalg.norm(R + S))
        logger.debug("seed %d, block %d: residuals %s", seed, i + 1, residuals)
        worst = max(worst, scaled)

    passed = worst <= IDENTITY_TOL
    _print({"draws": count, "block_sizes": block_sizes, "max_relative_residual": worst, "passed": passed})
    return experiment.EXIT_OK if passed else experiment.EXIT_VERIFICATION


def run_experiment(cmdargs):
    config = experiment.load_config(cmdargs["--config"])
    if cmdargs["--seeds"]:
        return experiment.run_batch(config, cmdargs["--out"], _numbers(cmdargs["--seeds"], int, "--seeds"),
                                    _numbers(cmdargs["--processes"], int, "--processes")[0])
    status = experiment.run_experiment(config, cmdargs["--out"])
    sys.stdout.write("experiment finished with status {}\n".format(status))
    return status


def main(cmdargs):
    logging.basicConfig(level=logging.DEBUG if cmdargs["--verbose"] else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    commands = (("solve", solve), ("iterate", iterate), ("rate", rate), ("experiment", run_experiment),
                ("check-identities", check_identities))
    try:
        for command, handler in commands:
            if cmdargs[command]:
                return handler(cmdargs)
    except (SpiError, ValueError, OSError) as error:
        logger.error("%s: %s", type(error).__name__, error)
        return experiment.exit_status(error)
    return experiment.EXIT_OK


def run(argv=None):
    try:
        args = docopt.docopt(__doc__, argv=argv, version=__version__)
    except docopt.DocoptExit as error:
        sys.stderr.write("{}\n".format(error))
        return experiment.EXIT_CONFIG
    return main(args)


if __name__ == "__main__":
    sys.exit(run())
