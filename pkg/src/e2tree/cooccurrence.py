"""Fit-weighted co-occurrence of observations across the terminal nodes of a forest.

Every leaf of every tree gets a local goodness-of-fit weight
``w = max(0, 1 - NMSE)``. Two rows co-occur in tree ``b`` when they reach the
same leaf, and the co-occurrence counts that leaf's weight. The sum over trees
is normalized by the larger of the two rows' total leaf weights, so
``0 <= O_ij <= 1``.
"""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass
from enum import Enum

import numpy as np
import scipy.sparse as sp

from .dataset import DataTable
from .forest import LEAF, Forest

logger = logging.getLogger(__name__)

MAX_ROWS = 20_000


class NormalizationMode(str, Enum):
    JACOBSON_RANGE = "jacobson_range"
    ABS_NODE_MEAN = "abs_node_mean"


def mse_max(y) -> float:
    """Upper bound on the MSE for responses spanning ``[min(y), max(y)]``: range**2 / 9."""
    y = np.asarray(y, dtype=float)
    if y.size == 0:
        return 0.0
    r = float(y.max() - y.min())
    return r * r / 9.0


def nmse(mse_node, mse_max=0.0, p_t=1.0, mode=NormalizationMode.JACOBSON_RANGE, node_mean=0.0):
    """Normalized node MSE; vectorizes over array arguments.

    ``0/0`` is treated as a perfect node (0) and ``x/0`` with ``x > 0`` as ``inf``.
    """
    mode = NormalizationMode(mode)
    mse_node = np.asarray(mse_node, dtype=float)
    if mode is NormalizationMode.JACOBSON_RANGE:
        denom = np.asarray(mse_max, dtype=float) * np.asarray(p_t, dtype=float)
    else:
        denom = np.abs(np.asarray(node_mean, dtype=float))
    denom = np.broadcast_to(denom, np.broadcast_shapes(denom.shape, mse_node.shape))
    mse_node = np.broadcast_to(mse_node, denom.shape)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.where(denom > 0, mse_node / np.where(denom > 0, denom, 1.0), np.where(mse_node > 0, np.inf, 0.0))
    return float(out) if out.ndim == 0 else out


def local_fit_w(nmse_value):
    """``max(0, 1 - NMSE)``, clamped into [0, 1]."""
    w = np.maximum(0.0, 1.0 - np.asarray(nmse_value, dtype=float))
    return float(w) if w.ndim == 0 else w


@dataclass(frozen=True)
class NodeWeights:
    """Per-node fit statistics for one tree (arrays indexed by node id; only
    leaf entries are used downstream)."""

    w: np.ndarray
    nmse: np.ndarray
    mse: np.ndarray
    p_t: np.ndarray
    n_t: np.ndarray
    mse_max: float


def tree_node_weights(
    tree,
    y_train: np.ndarray,
    mode=NormalizationMode.JACOBSON_RANGE,
    node_source: str = "in_bag",
    X_train: np.ndarray | None = None,
) -> NodeWeights:
    """Leaf weights of a single tree.

    ``node_source="in_bag"`` uses the bootstrap rows (with multiplicity) that
    grew the tree; ``"all"`` re-routes every training row and recomputes the
    node statistics from them.
    """
    if node_source == "in_bag":
        bag = tree.in_bag
        y_bag = np.repeat(y_train, bag)
        N = int(bag.sum())
        n_t = tree.n_node.astype(float)
        mse = tree.mse_node.astype(float)
        mean = tree.value.astype(float)
    elif node_source == "all":
        if X_train is None:
            raise ValueError("node_source='all' needs X_train")
        y_bag = y_train
        N = len(y_train)
        leaf = tree.apply(X_train)
        k = tree.n_nodes
        n_t = np.bincount(leaf, minlength=k).astype(float)
        s1 = np.bincount(leaf, weights=y_train, minlength=k)
        s2 = np.bincount(leaf, weights=y_train**2, minlength=k)
        with np.errstate(divide="ignore", invalid="ignore"):
            mean = np.where(n_t > 0, s1 / np.maximum(n_t, 1), 0.0)
            mse = np.where(n_t > 0, np.maximum(s2 / np.maximum(n_t, 1) - mean**2, 0.0), 0.0)
    else:
        raise ValueError(f"unknown node_source {node_source!r}")

    mmax = mse_max(y_bag)
    p_t = n_t / N
    if NormalizationMode(mode) is NormalizationMode.JACOBSON_RANGE and mmax == 0.0:
        warnings.warn("constant in-bag response: all leaves of this tree get weight 0")
        v = np.full(tree.n_nodes, np.inf)
        return NodeWeights(np.zeros(tree.n_nodes), v, mse, p_t, n_t.astype(np.int64), mmax)
    v = nmse(mse, mmax, p_t, mode, mean)
    # empty leaves (possible only with node_source="all") carry no rows
    v = np.where(n_t > 0, v, np.inf)
    return NodeWeights(local_fit_w(v), v, mse, p_t, n_t.astype(np.int64), mmax)


def node_weight_table(forest: Forest, mode=NormalizationMode.JACOBSON_RANGE, node_source="in_bag"):
    return [
        tree_node_weights(t, forest.y_train, mode, node_source, forest.X_train) for t in forest.trees
    ]


def leaf_assignments(forest: Forest, data: DataTable | None = None, rows=None) -> np.ndarray:
    """(n, B) leaf ids for ``rows`` of ``data`` (default: the training rows)."""
    if data is None:
        X = forest.X_train if rows is None else forest.X_train[np.asarray(rows)]
    else:
        forest.check_schema(data)
        rows = forest.train if rows is None else np.asarray(rows)
        X = data.matrix()[rows]
    return forest.apply(X)


def weighted_cooccurrence(leaves: np.ndarray, leaf_w: list[np.ndarray]) -> np.ndarray:
    """O from an (n, B) leaf-id table and per-tree node weight arrays."""
    n, B = leaves.shape
    if n > MAX_ROWS:
        raise ValueError(f"{n} rows exceeds the dense matrix limit of {MAX_ROWS}")
    sizes = np.array([len(w) for w in leaf_w], dtype=np.int64)
    offsets = np.concatenate([[0], np.cumsum(sizes)[:-1]])
    cols = (leaves + offsets[None, :]).ravel()
    rows = np.repeat(np.arange(n), B)
    w_all = np.concatenate(leaf_w)
    A = sp.csr_matrix((np.ones(n * B), (rows, cols)), shape=(n, int(sizes.sum())))
    num = (A @ sp.diags(w_all) @ A.T).toarray()
    own = w_all[cols].reshape(n, B).sum(axis=1)

    denom = np.maximum(own[:, None], own[None, :])
    with np.errstate(divide="ignore", invalid="ignore"):
        O = np.where(denom > 0, num / np.where(denom > 0, denom, 1.0), 0.0)
    dead = own <= 0
    if dead.any():
        warnings.warn(f"{int(dead.sum())} rows have zero total leaf weight; their co-occurrences are set to 0")
        O[dead, :] = 0.0
        O[:, dead] = 0.0
    O = np.clip(O, 0.0, 1.0)
    O = 0.5 * (O + O.T)
    np.fill_diagonal(O, 1.0)
    return O


def cooccurrence_matrix(
    forest: Forest,
    data: DataTable | None = None,
    rows=None,
    mode=NormalizationMode.JACOBSON_RANGE,
    node_source: str = "in_bag",
    leaf_weight: float | None = None,
) -> np.ndarray:
    """Weighted co-occurrence matrix O over ``rows`` (default: training rows).

    ``leaf_weight`` forces every leaf to the same weight, in which case O is
    the classical proximity (fraction of trees where two rows share a leaf).
    """
    leaves = leaf_assignments(forest, data, rows)
    if leaf_weight is not None:
        ws = [np.where(t.feature == LEAF, float(leaf_weight), 0.0) for t in forest.trees]
    else:
        ws = [nw.w for nw in node_weight_table(forest, mode, node_source)]
    return weighted_cooccurrence(leaves, ws)


def dissimilarity(O: np.ndarray) -> np.ndarray:
    D = 1.0 - np.asarray(O, dtype=float)
    np.fill_diagonal(D, 0.0)
    return D


def check_pair_matrix(M: np.ndarray, diagonal: float | None = None, atol: float = 0.0) -> None:
    """Raise ValueError unless M is square, symmetric and inside [0, 1]."""
    M = np.asarray(M)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {M.shape}")
    if not np.all(np.isfinite(M)):
        raise ValueError("matrix has non-finite entries")
    if np.any(M < -atol) or np.any(M > 1 + atol):
        raise ValueError("matrix entries outside [0, 1]")
    if not np.allclose(M, M.T, rtol=0, atol=atol):
        raise ValueError("matrix is not symmetric")
    if diagonal is not None and not np.allclose(np.diag(M), diagonal, rtol=0, atol=atol):
        raise ValueError(f"diagonal is not {diagonal}")
