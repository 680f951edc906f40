import json
import os

import pytest

from spi import generator
from spi.systems import TimeDomain


PROBLEMS_DIR = os.path.join(os.path.dirname(os.path.abspath(__file__)), "problems")


@pytest.fixture
def make_system():
    def coupled_system(seed, domain, coupling=0.1, state_blocks=(2, 2), input_blocks=(1, 1)):
        spec = generator.GeneratorSpec(state_block_sizes=state_blocks, input_block_sizes=input_blocks,
                                       coupling=coupling, domain=domain, seed=seed)
        return generator.generate_coupled_system(spec)
    return coupled_system


@pytest.fixture
def two_subsystem_path():
    return os.path.join(PROBLEMS_DIR, "two_subsystem.json")


@pytest.fixture(params=[TimeDomain.CONTINUOUS, TimeDomain.DISCRETE], ids=["continuous", "discrete"])
def domain(request):
    return request.param


@pytest.fixture
def regression_value():
    """Compare a value with its entry in ``problems/regression.json``, recording it if it has none yet."""
    path = os.path.join(PROBLEMS_DIR, "regression.json")

    def check(name, value, rel=1e-8):
        recorded = {}
        if os.path.exists(path):
            with open(path) as infile:
                recorded = json.load(infile)
        if name not in recorded:
            recorded[name] = float(value)
            with open(path, "w") as outfile:
                json.dump(recorded, outfile, indent=2, sort_keys=True)
                outfile.write("\n")
        assert value == pytest.approx(recorded[name], rel=rel)
    return check
