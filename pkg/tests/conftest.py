import os
from pathlib import Path

import numpy as np
import pytest

from crossgcn.graphdata import make_synthetic_dataset

REPO = Path(__file__).resolve().parent.parent
RAW_ROOT = REPO / "data" / "raw"


def data_root() -> Path:
    """Where prepared datasets (``<root>/<name>/meta.json``) are looked up."""
    return Path(os.environ.get("CROSSGCN_DATA", REPO / "data"))


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def small_dataset():
    return make_synthetic_dataset(n_nodes=300, n_classes=3, n_features=8, seed=3, n_val=60, n_test=90)


@pytest.fixture(scope="session")
def cora_raw():
    path = RAW_ROOT / "cora"
    if not list(path.glob("cora_nodes.parquet*")):
        pytest.skip("raw Cora tables are not in data/raw/cora")
    return path


VERDICTS = pytest.StashKey[list]()


def pytest_configure(config):
    config.stash[VERDICTS] = []


@pytest.fixture
def criterion(request):
    """``criterion(name, passed, detail)`` records one verdict line and fails the test if not passed."""
    lines = request.config.stash[VERDICTS]

    def record(name, passed, detail=""):
        line = f"{'PASS' if passed else 'FAIL'}  {name}" + (f": {detail}" if detail else "")
        lines.append(line)
        print(line)
        if not passed:
            pytest.fail(line, pytrace=False)

    return record


def pytest_terminal_summary(terminalreporter, config):
    lines = config.stash.get(VERDICTS, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
