"""Explainable surrogate tree grown on a forest dissimilarity matrix.

Nodes carry heap ids (root 1, children ``2t`` and ``2t + 1``). At each node
every binary split of every feature is scored by the weighted mean
within-child dissimilarity and the minimizer is kept. The node stays terminal
when it is too small or too deep, when its normalized MSE is already at most
``gamma``, or when a Mann-Whitney test cannot tell the two children's
responses apart.
"""

from __future__ import annotations

import json
from collections import deque
from dataclasses import dataclass, field

import numpy as np

from .cooccurrence import NormalizationMode, local_fit_w, mse_max, nmse
from .dataset import DataTable, subset
from .forest import EXHAUSTIVE_LEVELS, SplitRule
from .mannwhitney import mann_whitney_u

WITHIN = "within"
BETWEEN = "between"
TIE_TOL = 1e-12

# stopping reasons recorded on terminal nodes
MIN_SIZE = "min_size"
MAX_DEPTH = "max_depth"
ZERO_DISSIMILARITY = "zero_dissimilarity"
NO_SPLIT = "no_split"
NMSE_RULE = "nmse"
MANN_WHITNEY = "mann_whitney"
STOP_REASONS = (MIN_SIZE, MAX_DEPTH, ZERO_DISSIMILARITY, NO_SPLIT, NMSE_RULE, MANN_WHITNEY)


@dataclass(frozen=True)
class StopConfig:
    gamma: float = 0.05
    alpha: float = 0.05
    min_node: int = 5
    max_depth: int = 10
    objective: str = WITHIN

    def __post_init__(self):
        if not self.gamma > 0:
            raise ValueError("gamma must be > 0")
        if not 0 < self.alpha < 1:
            raise ValueError("alpha must lie in (0, 1)")
        if self.min_node < 1 or self.max_depth < 0:
            raise ValueError("min_node must be >= 1 and max_depth >= 0")
        if self.objective not in (WITHIN, BETWEEN):
            raise ValueError(f"unknown objective {self.objective!r}")


@dataclass(frozen=True)
class SplitCandidate:
    rule: SplitRule
    score: float = np.nan

    @property
    def feature(self) -> int:
        return self.rule.feature


@dataclass
class ExplNode:
    t: int
    rows: np.ndarray  # positions into the tree's row set
    prediction: float
    nmse: float
    w: float
    depth: int
    path: tuple[str, ...] = ()
    s_star: SplitCandidate | None = None
    stop_reason: str | None = None
    mw_p: float | None = None

    @property
    def n_t(self) -> int:
        return len(self.rows)

    @property
    def terminal(self) -> bool:
        return self.s_star is None


@dataclass
class ExplTree:
    nodes: dict[int, ExplNode]
    feature_names: list[str]
    levels: list[tuple[str, ...]]
    row_ids: np.ndarray  # dataset row index for each tree row
    stop: StopConfig = field(default_factory=StopConfig)

    @property
    def n(self) -> int:
        return len(self.row_ids)

    def terminals(self) -> list[ExplNode]:
        return [nd for nd in self.preorder() if nd.terminal]

    def preorder(self) -> list[ExplNode]:
        out, stack = [], [1]
        while stack:
            t = stack.pop()
            if t in self.nodes:
                out.append(self.nodes[t])
                stack.extend([2 * t + 1, 2 * t])
        return out

    def terminal_of_rows(self) -> np.ndarray:
        """Heap id of the terminal node holding each tree row."""
        out = np.zeros(self.n, dtype=np.int64)
        for nd in self.terminals():
            out[nd.rows] = nd.t
        return out

    def apply(self, data: DataTable, rows=None) -> np.ndarray:
        """Route arbitrary rows of ``data`` to terminal heap ids."""
        X = data.matrix() if rows is None else data.matrix()[np.asarray(rows)]
        t = np.ones(len(X), dtype=np.int64)
        while True:
            moved = False
            for nd in list(self.nodes.values()):
                if nd.terminal:
                    continue
                here = t == nd.t
                if here.any():
                    left = nd.s_star.rule.goes_left(X[here, nd.s_star.feature])
                    t[here] = np.where(left, 2 * nd.t, 2 * nd.t + 1)
                    moved = True
            if not moved:
                return t

    def predict(self, data: DataTable, rows=None) -> np.ndarray:
        t = self.apply(data, rows)
        return np.array([self.nodes[int(k)].prediction for k in t])

    def describe(self, rule: SplitRule, side: str = "left") -> str:
        return rule.describe(self.feature_names, self.levels, side)

    def node_table(self) -> list[dict]:
        rows = []
        for nd in self.preorder():
            rows.append(
                {
                    "t": nd.t,
                    "n_t": nd.n_t,
                    "prediction": nd.prediction,
                    "w_t": nd.w,
                    "nmse": nd.nmse,
                    "s_star": None if nd.terminal else self.nodes[2 * nd.t].path[-1],
                    "node_type": "Terminal" if nd.terminal else "Non-Terminal",
                    "path": " & ".join(nd.path),
                    "stop_reason": nd.stop_reason,
                    "mw_p": nd.mw_p,
                }
            )
        return rows

    def to_dict(self) -> dict:
        nodes = []
        for nd, row in zip(self.preorder(), self.node_table()):
            entry = dict(row)
            entry["depth"] = nd.depth
            entry["rows"] = self.row_ids[nd.rows].tolist()
            if not nd.terminal:
                rule = nd.s_star.rule
                entry["split"] = {
                    "feature": self.feature_names[rule.feature],
                    "threshold": rule.threshold,
                    "left_levels": None
                    if rule.left_levels is None
                    else [self.levels[rule.feature][k] for k in sorted(rule.left_levels)],
                    "score": nd.s_star.score,
                }
            nodes.append(entry)
        return {
            "format": "e2tree-surrogate",
            "version": 1,
            "stop": {
                "gamma": self.stop.gamma,
                "alpha": self.stop.alpha,
                "min_node": self.stop.min_node,
                "max_depth": self.stop.max_depth,
                "objective": self.stop.objective,
            },
            "n_terminal": len(self.terminals()),
            "nodes": nodes,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=1, ensure_ascii=False) + "\n"


# ------------------------------------------------------------- split search


def _sorted_codes_subsets(present: np.ndarray, node_means: np.ndarray | None):
    """Canonical left-level subsets over the levels present in a node."""
    L = len(present)
    if L <= EXHAUSTIVE_LEVELS:
        # every proper nonempty subset that leaves out the last present level
        masks = (np.arange(1, 2 ** (L - 1))[:, None] >> np.arange(L)) & 1
        subsets = [frozenset(present[m.astype(bool)].tolist()) for m in masks]
        return sorted(subsets, key=lambda s: sorted(s))
    order = np.argsort(node_means, kind="stable")
    return [frozenset(present[order[: i + 1]].tolist()) for i in range(L - 1)]


def enumerate_splits(data: DataTable, rows) -> list[SplitRule]:
    """All binary splits of ``rows`` with two nonempty children, schema order."""
    rows = np.asarray(rows)
    y = data.response[rows]
    out = []
    for f, col in enumerate(data.features):
        x = np.asarray(col.values)[rows]
        if col.is_categorical:
            present = np.unique(x)
            if len(present) < 2:
                continue
            means = np.array([y[x == c].mean() for c in present])
            out.extend(SplitRule(f, left_levels=s) for s in _sorted_codes_subsets(present, means))
        else:
            u = np.unique(x)
            out.extend(SplitRule(f, threshold=float(t)) for t in 0.5 * (u[:-1] + u[1:]))
    return out


def _child_score(tl, br, nl, nr, total, objective):
    """Score from within-left and within-right block sums (each pair counted twice)."""
    m = nl + nr
    with np.errstate(divide="ignore", invalid="ignore"):
        dl = np.where(nl > 1, tl / (nl * (nl - 1)), 0.0)
        dr = np.where(nr > 1, br / (nr * (nr - 1)), 0.0)
        if objective == WITHIN:
            return (nl * dl + nr * dr) / m
        cross = 0.5 * (total - tl - br)
        return -cross / (nl * nr)


def evaluate_split(D: np.ndarray, rows, rule: SplitRule, data: DataTable, objective: str = WITHIN) -> float:
    """Score of one rule (lower is better); ``inf`` if a child is empty."""
    rows = np.asarray(rows)
    left = rule.goes_left(np.asarray(data.features[rule.feature].values)[rows])
    nl, nr = int(left.sum()), int((~left).sum())
    if nl == 0 or nr == 0:
        return np.inf
    Dn = D[np.ix_(rows, rows)]
    tl = Dn[np.ix_(left, left)].sum()
    br = Dn[np.ix_(~left, ~left)].sum()
    return float(_child_score(tl, br, nl, nr, Dn.sum(), objective))


def score_all(D: np.ndarray, data: DataTable, rows, objective: str = WITHIN) -> list[SplitCandidate]:
    """Every candidate of `enumerate_splits` with its score, computed in bulk."""
    rows = np.asarray(rows)
    Dn = D[np.ix_(rows, rows)]
    total = Dn.sum()
    m = len(rows)
    y = data.response[rows]
    out = []
    for f, col in enumerate(data.features):
        x = np.asarray(col.values)[rows]
        if col.is_categorical:
            present = np.unique(x)
            if len(present) < 2:
                continue
            Z = (x[:, None] == present[None, :]).astype(float)
            G = Z.T @ Dn @ Z
            cnt = Z.sum(axis=0)
            means = np.array([y[x == c].mean() for c in present])
            for s in _sorted_codes_subsets(present, means):
                ind = np.isin(present, list(s)).astype(float)
                nl = float(ind @ cnt)
                tl = ind @ G @ ind
                br = (1 - ind) @ G @ (1 - ind)
                sc = float(_child_score(tl, br, nl, m - nl, total, objective))
                out.append(SplitCandidate(SplitRule(f, left_levels=s), sc))
        else:
            order = np.argsort(x, kind="stable")
            xs = x[order]
            cut = np.flatnonzero(xs[:-1] < xs[1:])  # left = order[: k + 1]
            if cut.size == 0:
                continue
            P = Dn[np.ix_(order, order)]
            C = P.cumsum(axis=0).cumsum(axis=1)
            k = cut + 1
            tl = C[cut, cut]
            rowsum = C[cut, m - 1]
            br = total - 2 * rowsum + tl
            sc = _child_score(tl, br, k.astype(float), (m - k).astype(float), total, objective)
            for j, c in enumerate(cut):
                thr = 0.5 * (xs[c] + xs[c + 1])
                out.append(SplitCandidate(SplitRule(f, threshold=float(thr)), float(sc[j])))
    return out


def best_split(candidates: list[SplitCandidate]) -> SplitCandidate:
    """Minimal score; near-ties keep the earliest candidate (schema order, then
    ascending threshold or lexicographic subset)."""
    if not candidates:
        raise ValueError("no candidates")
    best = candidates[0]
    for c in candidates[1:]:
        if c.score < best.score - TIE_TOL * max(1.0, abs(best.score)):
            best = c
    return best


# ------------------------------------------------------------------ growth


def _node_fit(y_node, mmax, n_root, mode):
    mu = float(y_node.mean())
    mse = float(np.mean((y_node - mu) ** 2))
    v = float(nmse(mse, mmax, len(y_node) / n_root, mode, mu))
    return mu, v, float(local_fit_w(v))


def grow(
    D: np.ndarray,
    data: DataTable,
    rows=None,
    stop: StopConfig = StopConfig(),
    surrogate_norm=NormalizationMode.JACOBSON_RANGE,
) -> ExplTree:
    """Grow the surrogate tree breadth-first on ``rows`` of ``data``.

    ``D`` is indexed like ``rows`` (its i-th row belongs to ``rows[i]``).
    """
    rows = np.arange(data.n) if rows is None else np.asarray(rows)
    D = np.asarray(D, dtype=float)
    if D.shape != (len(rows), len(rows)):
        raise ValueError(f"D has shape {D.shape}, expected {(len(rows), len(rows))}")
    sub = subset(data, rows)
    y = sub.response
    mmax = mse_max(y)
    n_root = len(rows)

    def make(t, idx, depth, path):
        mu, v, w = _node_fit(y[idx], mmax, n_root, surrogate_norm)
        return ExplNode(t, idx, mu, v, w, depth, path)

    root = make(1, np.arange(n_root), 0, ())
    nodes = {1: root}
    queue = deque([root])
    while queue:
        nd = queue.popleft()
        idx = nd.rows
        if nd.n_t < 2 * stop.min_node:
            nd.stop_reason = MIN_SIZE
            continue
        if nd.depth >= stop.max_depth:
            nd.stop_reason = MAX_DEPTH
            continue
        if not D[np.ix_(idx, idx)].any():
            nd.stop_reason = ZERO_DISSIMILARITY
            continue
        cands = score_all(D, sub, idx, stop.objective)
        if not cands:
            nd.stop_reason = NO_SPLIT
            continue
        s = best_split(cands)
        if nd.nmse <= stop.gamma:
            nd.stop_reason = NMSE_RULE
            continue
        left = s.rule.goes_left(np.asarray(sub.features[s.feature].values)[idx])
        li, ri = idx[left], idx[~left]
        nd.mw_p = mann_whitney_u(y[li], y[ri]).p_two_sided
        if nd.mw_p >= stop.alpha:
            nd.stop_reason = MANN_WHITNEY
            continue
        nd.s_star = s
        levels = [c.levels for c in data.features]
        present = np.asarray(sub.features[s.feature].values)[idx] if s.rule.is_categorical else None
        lname = s.rule.describe(data.feature_names, levels, "left", present)
        rname = s.rule.describe(data.feature_names, levels, "right", present)
        for t, part, name in ((2 * nd.t, li, lname), (2 * nd.t + 1, ri, rname)):
            child = make(t, part, nd.depth + 1, nd.path + (name,))
            nodes[t] = child
            queue.append(child)

    return ExplTree(
        nodes=nodes,
        feature_names=data.feature_names,
        levels=[tuple(c.levels) for c in data.features],
        row_ids=rows,
        stop=stop,
    )


TERMINAL = "terminal"
COMMON_ANCESTOR = "common_ancestor"


def reconstruct_ohat(tree: ExplTree, rule: str = TERMINAL) -> np.ndarray:
    """Co-occurrence matrix implied by the surrogate tree; diagonal 1.

    ``"terminal"``: a pair sharing a terminal node gets that node's weight and
    any other pair gets 0, i.e. the forest's co-occurrence numerator for a
    single tree. ``"common_ancestor"``: every pair gets the weight of its
    deepest common node.
    """
    term = tree.terminal_of_rows()
    ids = np.unique(term)
    pos = {int(t): k for k, t in enumerate(ids)}
    if rule == TERMINAL:
        W = np.diag([tree.nodes[int(t)].w for t in ids])
    elif rule == COMMON_ANCESTOR:
        W = np.empty((len(ids), len(ids)))
        for a, ta in enumerate(ids):
            for b, tb in enumerate(ids):
                W[a, b] = tree.nodes[_common_ancestor(int(ta), int(tb))].w
    else:
        raise ValueError(f"unknown rule {rule!r}")
    code = np.array([pos[int(t)] for t in term])
    Ohat = W[np.ix_(code, code)]
    np.fill_diagonal(Ohat, 1.0)
    return Ohat


def _common_ancestor(a: int, b: int) -> int:
    while a.bit_length() > b.bit_length():
        a >>= 1
    while b.bit_length() > a.bit_length():
        b >>= 1
    while a != b:
        a >>= 1
        b >>= 1
    return a


def format_node_table(tree: ExplTree) -> str:
    """Plain-text table: t, n_t, Prediction, W_t, s*, Node Type, Path."""
    header = ["t", "n_t", "Prediction", "W_t", "s*", "Node Type", "Path"]
    body = [
        [
            str(r["t"]),
            str(r["n_t"]),
            f"{r['prediction']:.2f}",
            f"{r['w_t']:.2f}",
            r["s_star"] or "-",
            r["node_type"],
            r["path"],
        ]
        for r in tree.node_table()
    ]
    widths = [max(len(h), *(len(b[i]) for b in body)) for i, h in enumerate(header)]
    lines = [" | ".join(h.ljust(w) for h, w in zip(header, widths)).rstrip()]
    lines.append("-+-".join("-" * w for w in widths))
    lines += [" | ".join(c.ljust(w) for c, w in zip(b, widths)).rstrip() for b in body]
    return "\n".join(lines) + "\n"
