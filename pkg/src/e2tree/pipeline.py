"""End-to-end stages used by the command line and the experiment scripts.

Each stage computes everything in memory first; the ``write_*`` helpers are
called only after all checks have passed, so a failing command leaves no
partial artifacts behind.
"""

from __future__ import annotations

import json
import os
import tempfile
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .config import RunConfig
from .cooccurrence import check_pair_matrix, cooccurrence_matrix, dissimilarity
from .dataset import DataTable, TrainTestSplit, load_csv, split_train_test
from .export import heatmap_svg, tree_to_dot, write_labels_csv, write_matrix_bin, write_matrix_csv
from .fidelity import FidelityReport, fidelity_report
from .forest import Forest, fit_forest, importances, oob_metrics
from .surrogate import ExplTree, format_node_table, grow, reconstruct_ohat


class InvariantError(RuntimeError):
    """An internal consistency check failed (a bug, not bad input)."""


def load_data(cfg: RunConfig) -> tuple[DataTable, TrainTestSplit]:
    d = cfg.data
    data = load_csv(d.path, d.columns, d.response)
    split = split_train_test(data, d.fraction, d.seed, train_size=d.train_size, rounding=d.rounding)
    return data, split


@dataclass
class FitResult:
    forest: Forest
    metrics: dict
    importance: dict[str, dict]


def fit(cfg: RunConfig, data: DataTable, split: TrainTestSplit) -> FitResult:
    forest = fit_forest(data, split.train, cfg.forest, n_jobs=cfg.n_jobs)
    metrics = oob_metrics(forest)
    metrics.update(n_trees=forest.n_trees, mtry=forest.config.mtry, n_train=len(split.train))
    return FitResult(forest, metrics, importances(forest))


@dataclass
class ExplainResult:
    O: np.ndarray
    tree: ExplTree
    Ohat: np.ndarray


def explain(cfg: RunConfig, forest: Forest, data: DataTable) -> ExplainResult:
    O = cooccurrence_matrix(forest, data, mode=cfg.normalization, node_source=cfg.node_source)
    try:
        check_pair_matrix(O, diagonal=1.0)
    except ValueError as e:
        raise InvariantError(f"co-occurrence matrix: {e}") from e
    tree = grow(dissimilarity(O), data, forest.train, cfg.stop, cfg.surrogate_normalization)
    Ohat = reconstruct_ohat(tree, cfg.ohat_rule)
    try:
        check_pair_matrix(Ohat, diagonal=1.0)
    except ValueError as e:
        raise InvariantError(f"reconstructed matrix: {e}") from e
    return ExplainResult(O, tree, Ohat)


def evaluate(O: np.ndarray, Ohat: np.ndarray, k: int) -> FidelityReport:
    if O.shape != Ohat.shape:
        raise ValueError(f"O is {O.shape[0]}x{O.shape[1]} but Ohat is {Ohat.shape[0]}x{Ohat.shape[1]}")
    if not 1 <= k <= O.shape[0]:
        raise ValueError(f"k must lie in [1, {O.shape[0]}], got {k}")
    return fidelity_report(O, Ohat, k)


# ------------------------------------------------------------------ writing


def _json(obj) -> str:
    return json.dumps(obj, indent=1, sort_keys=False) + "\n"


def _atomic_write(path: Path, text: str | bytes) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    mode = "wb" if isinstance(text, bytes) else "w"
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, mode) as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        Path(tmp).unlink(missing_ok=True)
        raise


def format_metrics(fr: FitResult) -> str:
    m = fr.metrics
    lines = [
        f"Number of trees: {m['n_trees']}",
        f"No. of variables tried at each split: {m['mtry']}",
        f"Mean of squared residuals: {m['mse_oob']:.4f}",
        f"% Var explained: {m['pct_var_explained']:.2f}",
        "",
        f"{'feature':<16}{'%IncMSE':>10}{'IncNodePurity':>16}",
    ]
    ranked = sorted(fr.importance.items(), key=lambda kv: -kv[1]["pct_inc_mse"])
    for name, v in ranked:
        lines.append(f"{name:<16}{v['pct_inc_mse']:>10.2f}{v['inc_node_purity']:>16.2f}")
    return "\n".join(lines) + "\n"


def write_fit(out: Path, fr: FitResult) -> None:
    _atomic_write(out / "forest.json", json.dumps(fr.forest.to_dict(), separators=(",", ":")) + "\n")
    _atomic_write(out / "metrics.json", _json({"oob": fr.metrics, "importance": fr.importance}))
    _atomic_write(out / "metrics.txt", format_metrics(fr))


def write_explain(out: Path, er: ExplainResult, order=None) -> None:
    _atomic_write(out / "e2tree.json", er.tree.to_json())
    _atomic_write(out / "e2tree.dot", tree_to_dot(er.tree))
    _atomic_write(out / "node_table.txt", format_node_table(er.tree))
    out.mkdir(parents=True, exist_ok=True)
    write_matrix_bin(er.O, out / "O.bin")
    write_matrix_csv(er.O, out / "O.csv")
    write_matrix_bin(er.Ohat, out / "Ohat.bin")
    _atomic_write(out / "heatmap_o.svg", heatmap_svg(er.O, order, "O"))
    _atomic_write(out / "heatmap_ohat.svg", heatmap_svg(er.Ohat, order, "Ohat"))


def write_evaluate(out: Path, report: FidelityReport, row_ids) -> None:
    _atomic_write(out / "fidelity.json", _json(report.to_dict()))
    out.mkdir(parents=True, exist_ok=True)
    write_labels_csv(report, row_ids, out / "labels.csv")


def format_fidelity(report: FidelityReport) -> str:
    return (
        f"FMI: {report.fmi:.4f}\n"
        f"k: {report.k}\n"
        f"cluster sizes (O): {report.labels_o.sizes()}\n"
        f"cluster sizes (Ohat): {report.labels_ohat.sizes()}\n"
    )
