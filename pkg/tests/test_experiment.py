import json
import shutil

import numpy as np
import pandas as pd
import pytest

from spi import experiment
from spi import lqrcore
from spi.exceptions import ConfigError, GenerationFailed, NotOptimal, NotStabilizable, ParseError
from spi.systems import TimeDomain


def generator_config(domain="discrete", coupling=0.0, seed=42, **fields):
    document = {"generator": {"state_blocks": [2, 2], "input_blocks": [1, 1], "coupling": coupling,
                              "domain": domain, "seed": seed}}
    document.update(fields)
    return experiment.parse_config(document)


def read_summary(out_dir):
    with open(str(out_dir / "summary.json")) as infile:
        return json.load(infile)


def test_decoupled_experiment(tmp_path):
    status = experiment.run_experiment(generator_config(), str(tmp_path))
    summary = read_summary(tmp_path)

    assert status == experiment.EXIT_OK
    assert summary["status"] == 0
    assert summary["iteration"]["productive_sweeps"] == 1
    assert summary["rate"]["spectral_radius"] <= 1e-10
    assert all(summary["checks"].values())
    assert (tmp_path / "problem.json").exists()
    assert (tmp_path / "trace.csv").exists()


def test_continuous_experiment_has_no_rate(tmp_path):
    config = generator_config("continuous", coupling=0.1, outputs=["trace", "rate"])
    status = experiment.run_experiment(config, str(tmp_path))
    summary = read_summary(tmp_path)

    assert status == experiment.EXIT_OK
    assert "rate" not in summary
    assert "order_fit" not in summary
    assert summary["problem"]["domain"] == "continuous"
    assert summary["iteration"]["termination"] == "converged"
    assert summary["reference"]["error"] <= summary["reference"]["tolerance"]


def test_coupled_discrete_experiment(tmp_path):
    experiment.run_experiment(generator_config(coupling=0.1), str(tmp_path))
    summary = read_summary(tmp_path)

    assert summary["checks"]["reference"]
    assert summary["checks"]["monotone"]
    assert summary["checks"]["contraction"]
    assert 0 < summary["rate"]["spectral_radius"] < 1
    assert summary["rate"]["order"] == [1, 2]
    assert summary["iteration"]["nash_gap"] <= 1e-6


def test_experiment_on_problem_file(tmp_path, two_subsystem_path):
    shutil.copy(two_subsystem_path, str(tmp_path / "two_subsystem.json"))
    config_path = tmp_path / "config.json"
    config_path.write_text(json.dumps({"problem": "two_subsystem.json", "order": [2, 1], "outputs": ["trace"]}))
    config = experiment.load_config(str(config_path))
    assert config.order == (1, 0)

    out_dir = tmp_path / "out"
    status = experiment.run_experiment(config, str(out_dir))
    assert status == experiment.EXIT_OK
    saved = json.loads((out_dir / "problem.json").read_text())
    assert saved == json.loads((tmp_path / "two_subsystem.json").read_text())


def test_sweep_budget_failure_keeps_partial_trace(tmp_path):
    config = generator_config(coupling=0.3, max_sweeps=1, seed=1)
    status = experiment.run_experiment(config, str(tmp_path))
    summary = read_summary(tmp_path)

    assert status == experiment.EXIT_CONVERGENCE
    assert summary["status"] == 3
    assert summary["error"].startswith("MaxSweepsExceeded")
    assert summary["iteration"]["termination"] == "max_sweeps"
    assert len(pd.read_csv(str(tmp_path / "trace.csv"))) == 2


def test_trace_is_reproducible(tmp_path):
    config = generator_config("continuous", coupling=0.2, seed=3, outputs=["trace"])
    for name in ("first", "second"):
        experiment.run_experiment(config, str(tmp_path / name))
    assert (tmp_path / "first" / "trace.csv").read_bytes() == (tmp_path / "second" / "trace.csv").read_bytes()
    assert (tmp_path / "first" / "problem.json").read_bytes() == (tmp_path / "second" / "problem.json").read_bytes()


def test_batch_run(tmp_path):
    status = experiment.run_batch(generator_config(), str(tmp_path), [1, 2])
    assert status == experiment.EXIT_OK
    table = pd.read_csv(str(tmp_path / "batch.csv"))
    assert list(table["seed"]) == [1, 2]
    assert list(table["status"]) == [0, 0]
    assert read_summary(tmp_path / "seed_2")["status"] == 0


def test_batch_needs_generator(tmp_path, two_subsystem_path):
    config = experiment.ExperimentConfig(problem=two_subsystem_path)
    with pytest.raises(ConfigError):
        experiment.run_batch(config, str(tmp_path), [1])


def test_config_defaults():
    config = generator_config()
    assert config.generator.domain is TimeDomain.DISCRETE
    assert config.order is None
    assert config.start == 0
    assert config.f0 == "zero"
    assert config.max_sweeps == 500
    assert config.tolerances == lqrcore.DEFAULT_TOLERANCES
    assert config.trace and config.rate and config.order_fit


def test_config_fields():
    config = generator_config(start=2, tolerances={"tol_riccati": 1e-9}, outputs=["rate"],
                              checks={"rate_tol": 0.1, "order_window": [1e-9, 1e-3]})
    assert config.start == 1
    assert config.tolerances.tol_riccati == 1e-9
    assert not config.trace and config.rate and not config.order_fit
    assert config.rate_tol == 0.1
    assert config.order_window == (1e-9, 1e-3)


@pytest.mark.parametrize("document", [
    {"generator": {"state_blocks": [2], "input_blocks": [1], "coupling": 0.1, "domain": "discrete", "seed": 1},
     "sweeps": 3},
    {"order": [1, 2]},
    {"generator": {"state_blocks": [2], "input_blocks": [1], "coupling": 0.1, "domain": "discrete"}},
    {"generator": {"state_blocks": [2], "input_blocks": [1], "coupling": 0.1, "domain": "hybrid", "seed": 1}},
    {"generator": {"state_blocks": [2], "input_blocks": [1], "coupling": 0.1, "domain": "discrete", "seed": 1},
     "outputs": ["plots"]},
    {"generator": {"state_blocks": [2], "input_blocks": [1], "coupling": 0.1, "domain": "discrete", "seed": 1},
     "tolerances": {"tol_magic": 1.0}},
    {"generator": {"state_blocks": [2], "input_blocks": [1], "coupling": 0.1, "domain": "discrete", "seed": 1},
     "max_sweeps": 0},
    {"generator": {"state_blocks": [2], "input_blocks": [1], "coupling": 0.1, "domain": "discrete", "seed": 1},
     "f0": "missing.txt"},
])
def test_invalid_configs(document, tmp_path):
    with pytest.raises(ConfigError):
        experiment.parse_config(document, str(tmp_path))


def test_malformed_config_file(tmp_path):
    path = tmp_path / "config.json"
    path.write_text('{\n  "generator": \n')
    with pytest.raises(ParseError):
        experiment.load_config(str(path))


@pytest.mark.parametrize("error, status", [
    (ParseError("bad"), experiment.EXIT_CONFIG),
    (ValueError("bad"), experiment.EXIT_CONFIG),
    (NotStabilizable("bad"), experiment.EXIT_CONVERGENCE),
    (GenerationFailed("bad"), experiment.EXIT_GENERATION),
    (FileNotFoundError("bad"), experiment.EXIT_IO),
    (NotOptimal("bad"), experiment.EXIT_VERIFICATION),
])
def test_exit_status(error, status):
    assert experiment.exit_status(error) == status


def test_summary_is_plain_json(tmp_path):
    path = tmp_path / "summary.json"
    experiment.write_summary({"b": np.float64(np.nan), "a": [np.int64(1), np.bool_(True)]}, str(path))
    assert json.loads(path.read_text()) == {"a": [1, True], "b": None}
    assert path.read_text().index('"a"') < path.read_text().index('"b"')


def test_continuous_experiment_fits_quadratic_order(tmp_path):
    config = generator_config("continuous", coupling=0.3, seed=3, outputs=["order_fit"])
    status = experiment.run_experiment(config, str(tmp_path))
    summary = read_summary(tmp_path)

    assert status == experiment.EXIT_OK
    assert summary["checks"]["order"]
    assert 1.7 <= summary["order_fit"]["order"] <= 2.3
    assert summary["order_fit"]["pairs"] >= 3


def test_continuous_order_fit_fails_without_pairs(tmp_path):
    config = generator_config("continuous", coupling=0.3, seed=3, outputs=["order_fit"],
                              checks={"order_window": [1e-300, 1e-299]})
    status = experiment.run_experiment(config, str(tmp_path))
    summary = read_summary(tmp_path)

    assert status == experiment.EXIT_VERIFICATION
    assert not summary["checks"]["order"]
    assert "skipped" in summary["order_fit"]


def test_config_wires_all_tolerances():
    config = generator_config(tolerances={"tol_sym": 1e-8, "tol_pbh": 1e-6, "max_stall": 3})
    assert config.tolerances.tol_sym == 1e-8
    assert config.tolerances.tol_pbh == 1e-6
    assert config.tolerances.max_stall == 3
    assert isinstance(config.tolerances.max_stall, int)
