"""How faithfully a surrogate's Ô reproduces the forest's O.

Both matrices are turned into distances (``1 - M``), clustered with complete
linkage, cut at ``k`` clusters and compared with the Fowlkes-Mallows index.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class ClusterLabels:
    labels: np.ndarray  # 1..k, numbered by first appearance
    k: int
    order: np.ndarray | None = None  # dendrogram leaf order
    merges: tuple[tuple[int, int, float], ...] = ()

    def sizes(self) -> list[int]:
        return np.bincount(self.labels, minlength=self.k + 1)[1:].tolist()


@dataclass(frozen=True)
class FidelityReport:
    fmi: float
    k: int
    labels_o: ClusterLabels
    labels_ohat: ClusterLabels

    def to_dict(self) -> dict:
        return {
            "fmi": self.fmi,
            "k": self.k,
            "cluster_sizes_o": self.labels_o.sizes(),
            "cluster_sizes_ohat": self.labels_ohat.sizes(),
        }


def hclust_complete(D: np.ndarray, k: int) -> ClusterLabels:
    """Agglomerative complete-linkage clustering cut at ``k`` clusters.

    Each active cluster lives in the slot of its smallest member. Every step
    merges the closest pair of slots; ties go to the lexicographically
    smallest ``(i, j)``. ``merges`` lists ``(i, j, height)`` slot pairs for
    the full dendrogram.
    """
    D = np.array(D, dtype=float)
    n = D.shape[0]
    if D.shape != (n, n):
        raise ValueError("D must be square")
    if not 1 <= k <= n:
        raise ValueError(f"k must lie in [1, {n}], got {k}")
    dist = D.copy()
    np.fill_diagonal(dist, np.inf)
    active = np.ones(n, dtype=bool)
    members = {i: [i] for i in range(n)}
    labels_at_k = None
    merges = []
    iu = np.triu_indices(n, 1)
    for step in range(n - 1):
        if n - step == k:
            labels_at_k = _labels_from(members, n)
        masked = np.where(active[:, None] & active[None, :], dist, np.inf)
        flat = masked[iu]
        pos = int(np.argmin(flat))  # first minimum = smallest (i, j) in row-major order
        i, j = int(iu[0][pos]), int(iu[1][pos])
        h = float(flat[pos])
        merges.append((i, j, h))
        # complete linkage: distance to the union is the larger of the two
        new = np.maximum(dist[i], dist[j])
        dist[i, :] = new
        dist[:, i] = new
        dist[i, i] = np.inf
        active[j] = False
        members[i] = members[i] + members.pop(j)
    if labels_at_k is None:  # k == 1
        labels_at_k = _labels_from(members, n)
    order = np.array(members[0] if members else [], dtype=np.int64)
    return ClusterLabels(labels_at_k, k, order, tuple(merges))


def _labels_from(members: dict[int, list[int]], n: int) -> np.ndarray:
    labels = np.zeros(n, dtype=np.int64)
    for slot in members.values():
        for r in slot:
            labels[r] = -1 - min(slot)  # temporary unique id
    out = np.zeros(n, dtype=np.int64)
    seen = {}
    for r in range(n):
        out[r] = seen.setdefault(labels[r], len(seen) + 1)
    return out


def _pairs(counts: np.ndarray) -> float:
    counts = np.asarray(counts, dtype=float)
    return float((counts * (counts - 1) / 2).sum())


def fmi(a, b) -> float:
    """Fowlkes-Mallows index ``TP / sqrt((TP + FP)(TP + FN))`` over unordered pairs."""
    a = np.asarray(getattr(a, "labels", a))
    b = np.asarray(getattr(b, "labels", b))
    if a.shape != b.shape:
        raise ValueError("labelings have different lengths")
    _, ai = np.unique(a, return_inverse=True)
    _, bi = np.unique(b, return_inverse=True)
    table = np.zeros((ai.max() + 1, bi.max() + 1))
    np.add.at(table, (ai, bi), 1)
    tp = _pairs(table)
    pa = _pairs(table.sum(axis=1))
    pb = _pairs(table.sum(axis=0))
    if pa == 0 or pb == 0:
        return 0.0
    return float(tp / np.sqrt(pa * pb))


def fidelity_report(O: np.ndarray, Ohat: np.ndarray, k: int) -> FidelityReport:
    O = np.asarray(O, dtype=float)
    Ohat = np.asarray(Ohat, dtype=float)
    if O.shape != Ohat.shape:
        raise ValueError(f"matrix shapes differ: {O.shape} vs {Ohat.shape}")
    lo = hclust_complete(_distance(O), k)
    lh = hclust_complete(_distance(Ohat), k)
    return FidelityReport(fmi(lo, lh), k, lo, lh)


def _distance(M: np.ndarray) -> np.ndarray:
    D = 1.0 - M
    np.fill_diagonal(D, 0.0)
    return D
