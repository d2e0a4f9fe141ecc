from pathlib import Path

import numpy as np
import pytest

from e2tree.dataset import CATEGORICAL, NUMERIC, DataTable, FeatureColumn, load_csv

ROOT = Path(__file__).resolve().parents[1]
DATA = ROOT / "src" / "e2tree" / "data"
IRIS_SCHEMA = {
    "Sepal.Width": NUMERIC,
    "Sepal.Length": NUMERIC,
    "Petal.Width": NUMERIC,
    "Species": CATEGORICAL,
}


@pytest.fixture(scope="session")
def iris():
    return load_csv(DATA / "iris.csv", IRIS_SCHEMA, "Petal.Length")


def make_table(X, y, cat=()):
    """DataTable from a matrix; columns listed in ``cat`` become categorical."""
    X = np.asarray(X)
    feats = []
    for j in range(X.shape[1]):
        if j in cat:
            codes = X[:, j].astype(np.int64)
            levels = tuple(f"L{k}" for k in range(int(codes.max()) + 1))
            feats.append(FeatureColumn(f"x{j}", CATEGORICAL, codes, levels))
        else:
            feats.append(FeatureColumn(f"x{j}", NUMERIC, X[:, j].astype(float)))
    return DataTable(tuple(feats), np.asarray(y, dtype=float), "y")


# one line per acceptance criterion, printed after the run
ACCEPTANCE: dict[int, str] = {}


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for k in sorted(ACCEPTANCE):
            terminalreporter.write_line(ACCEPTANCE[k])
