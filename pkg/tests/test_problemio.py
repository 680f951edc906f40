import json

import numpy as np
import pytest

from spi import generator
from spi import problemio
from spi.exceptions import DimensionMismatch, NotSPD, ParseError
from spi.systems import TimeDomain


def test_load_two_subsystem_fixture(two_subsystem_path):
    problem, partition, state_partition = problemio.load_problem(two_subsystem_path)
    assert problem.domain is TimeDomain.DISCRETE
    assert partition.block_sizes == (1, 1)
    assert state_partition.block_sizes == (1, 1)
    assert np.array_equal(problem.A, np.array([[0.9, 0.2], [0.1, 1.1]]))
    assert np.array_equal(problem.R, np.diag([2.0, 1.0]))


def test_round_trip_is_exact(tmp_path, domain):
    spec = generator.GeneratorSpec((2, 3), (1, 2), 0.1, domain, 3)
    problem, partition, state_partition = generator.generate_coupled_system(spec)
    path = tmp_path / "problem.json"
    problemio.save_problem(problem, partition, state_partition, str(path))

    loaded, loaded_partition, loaded_state_partition = problemio.load_problem(str(path))
    for name in ("A", "B", "Q", "R"):
        assert np.array_equal(getattr(loaded, name), getattr(problem, name))
    assert loaded.domain is problem.domain
    assert loaded_partition == partition
    assert loaded_state_partition == state_partition


def test_same_seed_gives_byte_identical_files(tmp_path):
    paths = []
    for name in ("first.json", "second.json"):
        spec = generator.GeneratorSpec((2, 2), (1, 1), 0.2, TimeDomain.CONTINUOUS, 11)
        problem, partition, state_partition = generator.generate_coupled_system(spec)
        paths.append(tmp_path / name)
        problemio.save_problem(problem, partition, state_partition, str(paths[-1]))
    assert paths[0].read_bytes() == paths[1].read_bytes()


def write(tmp_path, document):
    path = tmp_path / "problem.json"
    path.write_text(json.dumps(document, indent=2))
    return str(path)


def fixture_document(two_subsystem_path):
    with open(two_subsystem_path) as infile:
        return json.load(infile)


def test_input_blocks_must_cover_inputs(tmp_path, two_subsystem_path):
    document = fixture_document(two_subsystem_path)
    document["input_blocks"] = [1, 2]
    with pytest.raises(DimensionMismatch):
        problemio.load_problem(write(tmp_path, document))


def test_block_counts_must_match(tmp_path, two_subsystem_path):
    document = fixture_document(two_subsystem_path)
    document["input_blocks"] = [2]
    with pytest.raises(DimensionMismatch):
        problemio.load_problem(write(tmp_path, document))


def edited(tmp_path, two_subsystem_path, old, new):
    with open(two_subsystem_path) as infile:
        text = infile.read()
    path = tmp_path / "problem.json"
    path.write_text(text.replace(old, new))
    return str(path)


def test_malformed_matrix_reports_line_and_field(tmp_path, two_subsystem_path):
    with pytest.raises(ParseError) as excinfo:
        problemio.load_problem(edited(tmp_path, two_subsystem_path, '"Q": "1,0;0,1"', '"Q": "1,0;0,x"'))
    assert excinfo.value.line == 7
    assert 'field "Q"' in str(excinfo.value)


def test_missing_and_unknown_fields(tmp_path, two_subsystem_path):
    document = fixture_document(two_subsystem_path)
    del document["R"]
    with pytest.raises(ParseError) as excinfo:
        problemio.load_problem(write(tmp_path, document))
    assert excinfo.value.field == "R"

    document = fixture_document(two_subsystem_path)
    document["C"] = "1"
    with pytest.raises(ParseError) as excinfo:
        problemio.load_problem(write(tmp_path, document))
    assert excinfo.value.field == "C"


def test_invalid_json_reports_line(tmp_path):
    path = tmp_path / "broken.json"
    path.write_text('{\n  "domain": "discrete",\n  "A": \n}\n')
    with pytest.raises(ParseError) as excinfo:
        problemio.load_problem(str(path))
    assert excinfo.value.line == 4


def test_unknown_domain(tmp_path, two_subsystem_path):
    with pytest.raises(ParseError) as excinfo:
        problemio.load_problem(edited(tmp_path, two_subsystem_path, '"discrete"', '"hybrid"'))
    assert excinfo.value.line == 2


def test_matrix_file_round_trip(tmp_path):
    matrix = np.array([[0.1, -1.0 / 3.0], [2e-17, 5.0]])
    path = tmp_path / "F0.txt"
    problemio.save_matrix(matrix, str(path))
    assert len(path.read_text().splitlines()) == 2
    assert np.array_equal(problemio.load_matrix(str(path)), matrix)


def test_matrix_file_accepts_single_line(tmp_path):
    path = tmp_path / "F0.txt"
    path.write_text("# initial feedback\n0,1;2,3\n")
    assert np.array_equal(problemio.load_matrix(str(path)), np.array([[0.0, 1.0], [2.0, 3.0]]))


def test_symmetry_tolerance_reaches_problem(tmp_path, two_subsystem_path):
    document = fixture_document(two_subsystem_path)
    document["Q"] = "1,0;1e-10,1"
    path = write(tmp_path, document)
    with pytest.raises(NotSPD):
        problemio.load_problem(path)

    problem, _, _ = problemio.load_problem(path, tol_sym=1e-8)
    assert problem.tol_sym == 1e-8
