"""Explainable surrogate trees for random forest regression."""

from .cooccurrence import NormalizationMode, cooccurrence_matrix, dissimilarity
from .dataset import DataError, DataTable, load_csv, split_train_test, summarize
from .fidelity import fidelity_report, fmi, hclust_complete
from .forest import Forest, ForestConfig, fit_forest, importances, oob_metrics
from .mannwhitney import mann_whitney_u
from .surrogate import ExplTree, StopConfig, grow, reconstruct_ohat

__all__ = [
    "DataError",
    "DataTable",
    "ExplTree",
    "Forest",
    "ForestConfig",
    "NormalizationMode",
    "StopConfig",
    "cooccurrence_matrix",
    "dissimilarity",
    "fidelity_report",
    "fit_forest",
    "fmi",
    "grow",
    "hclust_complete",
    "importances",
    "load_csv",
    "mann_whitney_u",
    "oob_metrics",
    "reconstruct_ohat",
    "split_train_test",
    "summarize",
]
