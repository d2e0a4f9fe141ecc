"""Random-forest regression: bootstrap CART trees with per-node feature sampling."""

from __future__ import annotations

import json
import logging
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np
from joblib import Parallel, delayed

from .dataset import CATEGORICAL, NUMERIC, DataError, DataTable

logger = logging.getLogger(__name__)

LEAF = -1
MAX_LEVELS = 62  # left-level subsets are stored as int64 bitmasks
EXHAUSTIVE_LEVELS = 10
FORMAT = "e2tree-forest"


@dataclass(frozen=True)
class ForestConfig:
    n_trees: int = 500
    mtry: int | None = None  # None -> max(1, p // 3)
    min_leaf: int = 5
    seed: int = 0

    def resolved(self, p: int) -> "ForestConfig":
        mtry = max(1, p // 3) if self.mtry is None else self.mtry
        if self.n_trees < 1:
            raise ValueError("n_trees must be >= 1")
        if not 1 <= mtry <= p:
            raise ValueError(f"mtry must lie in [1, {p}], got {mtry}")
        if self.min_leaf < 1:
            raise ValueError("min_leaf must be >= 1")
        return replace(self, mtry=mtry)


@dataclass(frozen=True)
class SplitRule:
    """Numeric rules route left iff ``value <= threshold``; categorical rules
    route left iff the level code is in ``left_levels``."""

    feature: int
    threshold: float | None = None
    left_levels: frozenset[int] | None = None

    @property
    def is_categorical(self) -> bool:
        return self.left_levels is not None

    def goes_left(self, column: np.ndarray) -> np.ndarray:
        column = np.asarray(column)
        if self.is_categorical:
            return np.isin(column.astype(np.int64), list(self.left_levels))
        return column <= self.threshold

    def describe(self, names, levels=None, side: str = "left", present=None) -> str:
        """Readable predicate; ``present`` limits the listed levels to those
        observed in the node."""
        name = names[self.feature]
        if self.is_categorical:
            lv = levels[self.feature]
            pool = range(len(lv)) if present is None else sorted(set(int(k) for k in present))
            chosen = [k for k in pool if (k in self.left_levels) == (side == "left")]
            labels = [lv[k] for k in chosen]
            body = labels[0] if len(labels) == 1 else "(" + ", ".join(labels) + ")"
            return f"{name} = {body}"
        op = "≤" if side == "left" else ">"
        return f"{name} {op} {_fmt_threshold(self.threshold)}"


def _fmt_threshold(x: float) -> str:
    return f"{x:.6g}"


def _mask_of(levels) -> int:
    m = 0
    for k in levels:
        m |= 1 << int(k)
    return m


def _levels_of(mask: int) -> frozenset[int]:
    return frozenset(k for k in range(MAX_LEVELS + 1) if (mask >> k) & 1)


@dataclass
class RegressionTree:
    """Array-backed binary tree; node 0 is the root.

    ``n_node`` and ``mse_node`` describe the in-bag rows (counted with bootstrap
    multiplicity) that reached each node during growth.
    """

    feature: np.ndarray
    threshold: np.ndarray
    left_mask: np.ndarray
    is_cat: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray
    n_node: np.ndarray
    mse_node: np.ndarray
    purity_gain: np.ndarray
    in_bag: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))

    @property
    def n_nodes(self) -> int:
        return len(self.feature)

    def is_leaf(self, node: int) -> bool:
        return self.feature[node] == LEAF

    def leaves(self) -> np.ndarray:
        return np.flatnonzero(self.feature == LEAF)

    def rule(self, node: int) -> SplitRule | None:
        if self.is_leaf(node):
            return None
        if self.is_cat[node]:
            return SplitRule(int(self.feature[node]), left_levels=_levels_of(int(self.left_mask[node])))
        return SplitRule(int(self.feature[node]), threshold=float(self.threshold[node]))

    def apply(self, X: np.ndarray) -> np.ndarray:
        """Terminal node id reached by each row of ``X``."""
        X = np.atleast_2d(np.asarray(X, dtype=float))
        node = np.zeros(len(X), dtype=np.int64)
        active = np.flatnonzero(self.feature[node] != LEAF)
        while active.size:
            nd = node[active]
            f = self.feature[nd]
            x = X[active, f]
            cat = self.is_cat[nd]
            left = x <= self.threshold[nd]
            if cat.any():
                codes = np.where(cat, x, 0.0)
                ok = (codes >= 0) & (codes <= MAX_LEVELS) & (codes == np.floor(codes))
                safe = np.where(ok, codes, 0).astype(np.int64)
                in_subset = ok & (((self.left_mask[nd] >> safe) & 1) == 1)
                if (cat & ~ok).any():
                    logger.warning("unseen categorical level routed right")
                left = np.where(cat, in_subset, left)
            node[active] = np.where(left, self.left[nd], self.right[nd])
            active = active[self.feature[node[active]] != LEAF]
        return node

    def predict(self, X: np.ndarray) -> np.ndarray:
        return self.value[self.apply(X)]

    def to_dict(self) -> dict:
        thr = [None if (c or f == LEAF) else float(t) for t, c, f in zip(self.threshold, self.is_cat, self.feature)]
        return {
            "feature": self.feature.tolist(),
            "threshold": thr,
            "left_mask": self.left_mask.tolist(),
            "is_cat": [bool(c) for c in self.is_cat],
            "left": self.left.tolist(),
            "right": self.right.tolist(),
            "value": self.value.tolist(),
            "n_node": self.n_node.tolist(),
            "mse_node": self.mse_node.tolist(),
            "purity_gain": self.purity_gain.tolist(),
            "in_bag": self.in_bag.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "RegressionTree":
        return cls(
            feature=np.array(d["feature"], dtype=np.int64),
            threshold=np.array([np.nan if t is None else t for t in d["threshold"]], dtype=float),
            left_mask=np.array(d["left_mask"], dtype=np.int64),
            is_cat=np.array(d["is_cat"], dtype=bool),
            left=np.array(d["left"], dtype=np.int64),
            right=np.array(d["right"], dtype=np.int64),
            value=np.array(d["value"], dtype=float),
            n_node=np.array(d["n_node"], dtype=np.int64),
            mse_node=np.array(d["mse_node"], dtype=float),
            purity_gain=np.array(d["purity_gain"], dtype=float),
            in_bag=np.array(d["in_bag"], dtype=np.int64),
        )


def route_to_terminal(tree: RegressionTree, row) -> int:
    return int(tree.apply(np.asarray(row, dtype=float)[None, :])[0])


# ---------------------------------------------------------------- growth


def _best_numeric(x, y, min_child):
    order = np.argsort(x, kind="stable")
    xs, ys = x[order], y[order]
    m = len(ys)
    k = np.arange(1, m)  # left size
    ok = (xs[:-1] < xs[1:]) & (k >= min_child) & (m - k >= min_child)
    if not ok.any():
        return None
    cs = np.cumsum(ys)[:-1]
    total = cs[-1] + ys[-1]
    # maximize between-part term; equivalent to minimizing child SSE
    gain = cs**2 / k + (total - cs) ** 2 / (m - k)
    gain = np.where(ok, gain, -np.inf)
    j = int(np.argmax(gain))
    return gain[j], 0.5 * (xs[j] + xs[j + 1]), 0


def _best_categorical(codes, y, min_child):
    codes = codes.astype(np.int64)
    present = np.unique(codes)
    if len(present) < 2:
        return None
    cnt = np.array([(codes == c).sum() for c in present], dtype=float)
    sm = np.array([y[codes == c].sum() for c in present])
    m, total = len(y), y.sum()
    L = len(present)
    if L <= EXHAUSTIVE_LEVELS:
        # subsets of all but the last present level; bit i selects present[i]
        bits = (np.arange(1, 2 ** (L - 1))[:, None] >> np.arange(L)) & 1
        groups = bits.astype(bool)
    else:
        order = np.argsort(sm / cnt, kind="stable")
        groups = np.zeros((L - 1, L), dtype=bool)
        for i in range(L - 1):
            groups[i, order[: i + 1]] = True
    nl = groups @ cnt
    sl = groups @ sm
    ok = (nl >= min_child) & (m - nl >= min_child)
    if not ok.any():
        return None
    with np.errstate(divide="ignore", invalid="ignore"):
        gain = sl**2 / nl + (total - sl) ** 2 / (m - nl)
    gain = np.where(ok, gain, -np.inf)
    j = int(np.argmax(gain))
    return gain[j], np.nan, _mask_of(present[groups[j]])


def grow_tree(X, y, is_cat, mtry, min_leaf, rng, sample=None) -> RegressionTree:
    """Grow one CART regression tree on rows ``sample`` (bootstrap indices into X).

    A node is split only while it holds more than ``min_leaf`` in-bag rows
    (randomForest's ``nodesize`` rule); children may be smaller than that.
    """
    n, p = X.shape
    if sample is None:
        sample = np.arange(n)
    feature, threshold, left_mask, cat_flag = [], [], [], []
    left, right, value, n_node, mse_node, gain_list = [], [], [], [], [], []

    def new_node(idx):
        yy = y[idx]
        mu = float(yy.mean())
        feature.append(LEAF)
        threshold.append(np.nan)
        left_mask.append(0)
        cat_flag.append(False)
        left.append(LEAF)
        right.append(LEAF)
        value.append(mu)
        n_node.append(len(idx))
        mse_node.append(float(np.mean((yy - mu) ** 2)))
        gain_list.append(0.0)
        return len(feature) - 1

    stack = [(new_node(sample), sample)]
    while stack:
        node, idx = stack.pop()
        m = len(idx)
        if m <= min_leaf or mse_node[node] <= 0.0:
            continue
        yy = y[idx]
        best = None
        for f in rng.choice(p, size=mtry, replace=False):
            x = X[idx, f]
            cand = _best_categorical(x, yy, 1) if is_cat[f] else _best_numeric(x, yy, 1)
            if cand is not None and (best is None or cand[0] > best[0]):
                best = (cand[0], cand[1], cand[2], int(f))
        if best is None:
            continue
        _, thr, mask, f = best
        x = X[idx, f]
        if is_cat[f]:
            go_left = ((mask >> x.astype(np.int64)) & 1) == 1
        else:
            go_left = x <= thr
        li, ri = idx[go_left], idx[~go_left]
        sse_parent = mse_node[node] * m
        feature[node] = f
        threshold[node] = thr
        left_mask[node] = mask
        cat_flag[node] = bool(is_cat[f])
        lnode, rnode = new_node(li), new_node(ri)
        left[node], right[node] = lnode, rnode
        gain_list[node] = sse_parent - mse_node[lnode] * len(li) - mse_node[rnode] * len(ri)
        stack.append((rnode, ri))
        stack.append((lnode, li))

    return RegressionTree(
        feature=np.array(feature, dtype=np.int64),
        threshold=np.array(threshold, dtype=float),
        left_mask=np.array(left_mask, dtype=np.int64),
        is_cat=np.array(cat_flag, dtype=bool),
        left=np.array(left, dtype=np.int64),
        right=np.array(right, dtype=np.int64),
        value=np.array(value, dtype=float),
        n_node=np.array(n_node, dtype=np.int64),
        mse_node=np.array(mse_node, dtype=float),
        purity_gain=np.array(gain_list, dtype=float),
        in_bag=np.bincount(sample, minlength=n).astype(np.int64),
    )


def _fit_one(X, y, is_cat, cfg: ForestConfig, b: int) -> RegressionTree:
    rng = np.random.default_rng([cfg.seed, b])
    sample = rng.integers(0, len(y), size=len(y))
    return grow_tree(X, y, is_cat, cfg.mtry, cfg.min_leaf, rng, sample)


# ---------------------------------------------------------------- forest


@dataclass
class Forest:
    trees: list[RegressionTree]
    config: ForestConfig
    train: np.ndarray
    feature_names: list[str]
    kinds: list[str]
    levels: list[tuple[str, ...]]
    response_name: str
    X_train: np.ndarray
    y_train: np.ndarray

    @property
    def n_trees(self) -> int:
        return len(self.trees)

    @property
    def is_cat(self) -> np.ndarray:
        return np.array([k == CATEGORICAL for k in self.kinds], dtype=bool)

    def in_bag_counts(self) -> np.ndarray:
        """(n_train, B) bootstrap multiplicities."""
        return np.column_stack([t.in_bag for t in self.trees])

    def apply(self, X: np.ndarray) -> np.ndarray:
        """(n, B) terminal node ids."""
        return np.column_stack([t.apply(X) for t in self.trees])

    def predict_all(self, X: np.ndarray) -> np.ndarray:
        return np.column_stack([t.predict(X) for t in self.trees])

    def predict(self, X: np.ndarray) -> np.ndarray:
        return self.predict_all(X).mean(axis=1)

    def check_schema(self, data: DataTable) -> None:
        if data.feature_names != self.feature_names:
            raise DataError(
                f"forest features {self.feature_names} do not match data {data.feature_names}"
            )
        for col, kind, lv in zip(data.features, self.kinds, self.levels):
            if col.kind != kind or (kind == CATEGORICAL and tuple(col.levels) != tuple(lv)):
                raise DataError(f"column {col.name!r} does not match the forest schema")

    def to_dict(self) -> dict:
        return {
            "format": FORMAT,
            "version": 1,
            "config": asdict(self.config),
            "response": self.response_name,
            "schema": [
                {"name": n, "kind": k, "levels": list(lv)}
                for n, k, lv in zip(self.feature_names, self.kinds, self.levels)
            ],
            "train": self.train.tolist(),
            "trees": [t.to_dict() for t in self.trees],
        }

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), separators=(",", ":")) + "\n")

    @classmethod
    def from_dict(cls, d: dict, data: DataTable) -> "Forest":
        if d.get("format") != FORMAT:
            raise DataError("not a serialized forest")
        train = np.array(d["train"], dtype=np.int64)
        forest = cls(
            trees=[RegressionTree.from_dict(t) for t in d["trees"]],
            config=ForestConfig(**d["config"]),
            train=train,
            feature_names=[s["name"] for s in d["schema"]],
            kinds=[s["kind"] for s in d["schema"]],
            levels=[tuple(s["levels"]) for s in d["schema"]],
            response_name=d["response"],
            X_train=np.empty((0, 0)),
            y_train=np.empty(0),
        )
        forest.check_schema(data)
        if train.size and train.max() >= data.n:
            raise DataError("forest training rows exceed the dataset size")
        forest.X_train = data.matrix()[train]
        forest.y_train = data.response[train]
        return forest

    @classmethod
    def load(cls, path, data: DataTable) -> "Forest":
        return cls.from_dict(json.loads(Path(path).read_text()), data)


def fit_forest(data: DataTable, train, config: ForestConfig = ForestConfig(), n_jobs: int = 1) -> Forest:
    train = np.asarray(train, dtype=np.int64)
    if train.size == 0:
        raise DataError("empty training set")
    if data.p == 0:
        raise DataError("no predictors")
    for c in data.features:
        if c.kind == CATEGORICAL and len(c.levels) > MAX_LEVELS:
            raise DataError(f"column {c.name!r}: more than {MAX_LEVELS} levels")
    X = data.matrix()[train]
    y = data.response[train]
    if np.unique(y).size < 2:
        raise DataError("constant response: nothing to fit")
    cfg = config.resolved(data.p)
    is_cat = np.array([c.kind == CATEGORICAL for c in data.features], dtype=bool)
    if n_jobs == 1:
        trees = [_fit_one(X, y, is_cat, cfg, b) for b in range(cfg.n_trees)]
    else:
        trees = Parallel(n_jobs=n_jobs)(delayed(_fit_one)(X, y, is_cat, cfg, b) for b in range(cfg.n_trees))
    return Forest(
        trees=list(trees),
        config=cfg,
        train=train,
        feature_names=data.feature_names,
        kinds=[c.kind for c in data.features],
        levels=[tuple(c.levels) for c in data.features],
        response_name=data.response_name,
        X_train=X,
        y_train=y,
    )


def oob_metrics(forest: Forest) -> dict:
    """OOB mean squared residual and percent variance explained.

    Rows that are in-bag for every tree are skipped and counted.
    """
    P = forest.predict_all(forest.X_train)
    oob = forest.in_bag_counts() == 0
    k = oob.sum(axis=1)
    used = k > 0
    pred = (P * oob).sum(axis=1)[used] / k[used]
    y = forest.y_train[used]
    mse = float(np.mean((y - pred) ** 2))
    var = float(np.var(forest.y_train))
    return {
        "mse_oob": mse,
        "pct_var_explained": 100.0 * (1.0 - mse / var),
        "n_skipped": int((~used).sum()),
    }


def importances(forest: Forest) -> dict[str, dict]:
    """Permutation %IncMSE (OOB, per-tree mean over its standard error) and
    IncNodePurity (split SSE decrease, averaged over trees)."""
    X, y = forest.X_train, forest.y_train
    p, B = X.shape[1], forest.n_trees
    diffs = np.zeros((B, p))
    purity = np.zeros(p)
    for b, tree in enumerate(forest.trees):
        internal = tree.feature != LEAF
        np.add.at(purity, tree.feature[internal], tree.purity_gain[internal])
        rows = np.flatnonzero(tree.in_bag == 0)
        if rows.size == 0:
            continue
        Xo = X[rows]
        base = np.mean((y[rows] - tree.predict(Xo)) ** 2)
        rng = np.random.default_rng([forest.config.seed, b, 1])
        used = set(tree.feature[internal].tolist())
        for f in range(p):
            perm = rng.permutation(rows.size)
            if f not in used:
                continue
            Xp = Xo.copy()
            Xp[:, f] = Xo[perm, f]
            diffs[b, f] = np.mean((y[rows] - tree.predict(Xp)) ** 2) - base
    mean = diffs.mean(axis=0)
    se = diffs.std(axis=0, ddof=1) / np.sqrt(B) if B > 1 else np.zeros(p)
    scaled = np.divide(mean, se, out=np.zeros(p), where=se > 0)
    return {
        name: {"pct_inc_mse": float(scaled[f]), "inc_node_purity": float(purity[f] / B)}
        for f, name in enumerate(forest.feature_names)
    }
