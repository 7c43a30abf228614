import numpy as np
import pytest

from adaptive_mpc.anfis import AnfisAdapter
from adaptive_mpc.cli import bundled_dataset_path
from adaptive_mpc.nn import NnAdapter
from adaptive_mpc.tuning import dataset_arrays, read_dataset


@pytest.fixture(scope="session")
def records():
    return read_dataset(bundled_dataset_path())


@pytest.fixture(scope="session")
def nn_adapter(records):
    x, y = dataset_arrays(records)
    adapter, results = NnAdapter.train(x, y)
    return adapter, results


@pytest.fixture(scope="session")
def anfis_adapter(records):
    x, y = dataset_arrays(records)
    adapter, results = AnfisAdapter.train(x, y)
    return adapter, results


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
