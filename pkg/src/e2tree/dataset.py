"""Typed tabular data: CSV ingestion, train/test splitting and summaries."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

NUMERIC = "numeric"
CATEGORICAL = "categorical"
KINDS = (NUMERIC, CATEGORICAL)

MISSING_TOKENS = frozenset({"", "na", "nan", "null", "?"})


class DataError(ValueError):
    """Raised for malformed or unusable input data."""


@dataclass(frozen=True)
class FeatureColumn:
    """One predictor column.

    Numeric columns hold float values. Categorical columns hold integer level
    codes into ``levels`` (ordered by first appearance when loaded from CSV).
    """

    name: str
    kind: str
    values: np.ndarray
    levels: tuple[str, ...] = ()

    def __post_init__(self):
        if self.kind not in KINDS:
            raise DataError(f"column {self.name!r}: unknown kind {self.kind!r}")
        if self.kind == CATEGORICAL:
            if len(set(self.levels)) != len(self.levels):
                raise DataError(f"column {self.name!r}: duplicate levels")
            codes = np.asarray(self.values)
            if codes.size and (codes.min() < 0 or codes.max() >= len(self.levels)):
                raise DataError(f"column {self.name!r}: level code out of range")

    @property
    def is_categorical(self) -> bool:
        return self.kind == CATEGORICAL

    def __len__(self) -> int:
        return len(self.values)

    def render(self, i: int) -> str:
        if self.is_categorical:
            return self.levels[int(self.values[i])]
        return repr(float(self.values[i]))


@dataclass(frozen=True)
class DataTable:
    features: tuple[FeatureColumn, ...]
    response: np.ndarray
    response_name: str = "y"

    def __post_init__(self):
        object.__setattr__(self, "features", tuple(self.features))
        object.__setattr__(self, "response", np.asarray(self.response, dtype=float))
        n = len(self.response)
        if n < 2:
            raise DataError("need at least 2 rows")
        for col in self.features:
            if len(col) != n:
                raise DataError(f"column {col.name!r} has {len(col)} rows, expected {n}")

    @property
    def n(self) -> int:
        return len(self.response)

    @property
    def p(self) -> int:
        return len(self.features)

    @property
    def feature_names(self) -> list[str]:
        return [c.name for c in self.features]

    def column(self, name: str) -> FeatureColumn:
        for c in self.features:
            if c.name == name:
                return c
        raise KeyError(name)

    def matrix(self) -> np.ndarray:
        """Feature matrix (n, p); categorical columns contribute level codes."""
        if not self.features:
            return np.empty((self.n, 0))
        return np.column_stack([np.asarray(c.values, dtype=float) for c in self.features])

    def schema(self) -> dict[str, str]:
        return {c.name: c.kind for c in self.features}


@dataclass(frozen=True)
class TrainTestSplit:
    train: np.ndarray
    test: np.ndarray
    seed: int
    fraction: float = field(default=0.7)


def _is_missing(cell: str) -> bool:
    return cell.strip().lower() in MISSING_TOKENS


def load_csv(path, schema: Mapping[str, str], response: str) -> DataTable:
    """Load a CSV with a header row.

    ``schema`` maps predictor names to ``"numeric"`` or ``"categorical"``;
    CSV columns absent from the schema (other than the response) are ignored.
    Missing cells are rejected, never imputed.
    """
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"no such file: {path}")
    for name, kind in schema.items():
        if kind not in KINDS:
            raise DataError(f"column {name!r}: unknown kind {kind!r}")
    predictors = [name for name in schema if name != response]
    if not predictors:
        raise DataError("no predictors")

    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise DataError(f"{path}: empty file") from None
        rows = [r for r in reader if r]

    for name in [response, *predictors]:
        if name not in header:
            raise DataError(f"unknown column {name!r}")
    pos = {h: i for i, h in enumerate(header)}

    for lineno, row in enumerate(rows, start=2):
        if len(row) != len(header):
            raise DataError(f"line {lineno}: expected {len(header)} fields, got {len(row)}")

    def cells(name):
        j = pos[name]
        out = []
        for lineno, row in enumerate(rows, start=2):
            cell = row[j]
            if _is_missing(cell):
                raise DataError(f"missing value at line {lineno}, column {name!r}")
            out.append(cell.strip())
        return out

    def as_float(name):
        vals = []
        for lineno, cell in enumerate(cells(name), start=2):
            try:
                vals.append(float(cell))
            except ValueError:
                raise DataError(
                    f"unparsable value {cell!r} at line {lineno}, column {name!r}"
                ) from None
        return np.array(vals, dtype=float)

    features = []
    for name in predictors:
        if schema[name] == NUMERIC:
            features.append(FeatureColumn(name, NUMERIC, as_float(name)))
        else:
            raw = cells(name)
            levels = list(dict.fromkeys(raw))
            index = {lv: k for k, lv in enumerate(levels)}
            codes = np.array([index[v] for v in raw], dtype=np.int64)
            features.append(FeatureColumn(name, CATEGORICAL, codes, tuple(levels)))
    return DataTable(tuple(features), as_float(response), response)


def write_csv(data: DataTable, path) -> None:
    """Write ``data`` as CSV; `load_csv` with ``data.schema()`` reads it back."""
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([*data.feature_names, data.response_name])
        for i in range(data.n):
            w.writerow([c.render(i) for c in data.features] + [repr(float(data.response[i]))])


def train_count(n: int, fraction: float, rounding: str = "half_up") -> int:
    x = fraction * n
    if rounding == "half_up":
        m = math.floor(x + 0.5)
    elif rounding == "floor":
        # guard against 0.7 * 150 = 105.00000000000001 style noise
        m = math.floor(x + 1e-9)
    else:
        raise ValueError(f"unknown rounding {rounding!r}")
    return min(max(m, 1), n - 1)


def split_train_test(
    n: int | DataTable,
    fraction: float = 0.7,
    seed: int = 0,
    *,
    train_size: int | None = None,
    rounding: str = "half_up",
) -> TrainTestSplit:
    """Random disjoint train/test partition of ``range(n)``, sorted indices."""
    if isinstance(n, DataTable):
        n = n.n
    if not 0.0 < fraction < 1.0:
        raise DataError(f"fraction must lie in (0, 1), got {fraction}")
    if train_size is None:
        m = train_count(n, fraction, rounding)
    else:
        if not 1 <= train_size < n:
            raise DataError(f"train_size must lie in [1, {n - 1}], got {train_size}")
        m = train_size
    perm = np.random.default_rng(seed).permutation(n)
    return TrainTestSplit(np.sort(perm[:m]), np.sort(perm[m:]), seed, fraction)


def subset(data: DataTable, rows: Sequence[int]) -> DataTable:
    rows = np.asarray(rows, dtype=np.int64)
    feats = tuple(
        FeatureColumn(c.name, c.kind, np.asarray(c.values)[rows], c.levels) for c in data.features
    )
    return DataTable(feats, data.response[rows], data.response_name)


def _numeric_summary(x: np.ndarray) -> dict:
    sd = float(np.std(x, ddof=1)) if len(x) > 1 else 0.0
    return {"mean": float(np.mean(x)), "sd": sd, "min": float(np.min(x)), "max": float(np.max(x))}


def summarize(data: DataTable) -> dict[str, dict]:
    """Mean/sd/min/max for numeric columns (response included), level counts otherwise."""
    out = {}
    for c in data.features:
        if c.is_categorical:
            counts = np.bincount(c.values, minlength=len(c.levels))
            out[c.name] = {"counts": {lv: int(k) for lv, k in zip(c.levels, counts)}}
        else:
            out[c.name] = _numeric_summary(np.asarray(c.values, dtype=float))
    out[data.response_name] = _numeric_summary(data.response)
    return out


def format_summary(summary: Mapping[str, dict]) -> str:
    lines = [f"{'feature':<16}{'mean':>10}{'sd':>10}{'min':>10}{'max':>10}"]
    for name, s in summary.items():
        if "counts" in s:
            counts = ", ".join(f"{k}={v}" for k, v in s["counts"].items())
            lines.append(f"{name:<16}{counts}")
        else:
            lines.append(
                f"{name:<16}{s['mean']:>10.2f}{s['sd']:>10.2f}{s['min']:>10.2f}{s['max']:>10.2f}"
            )
    return "\n".join(lines)
