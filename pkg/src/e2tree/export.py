"""File formats: pair matrices (binary and CSV), SVG heatmaps, DOT trees, label CSVs."""

from __future__ import annotations

import csv
import struct
from pathlib import Path

import numpy as np

MATRIX_MAGIC = b"E2PAIRM1"


def write_matrix_bin(M: np.ndarray, path) -> None:
    """Magic, then n as little-endian uint64, then n*n little-endian float64 row-major."""
    M = np.ascontiguousarray(M, dtype="<f8")
    n = M.shape[0]
    if M.shape != (n, n):
        raise ValueError("matrix must be square")
    with Path(path).open("wb") as fh:
        fh.write(MATRIX_MAGIC)
        fh.write(struct.pack("<Q", n))
        fh.write(M.tobytes(order="C"))


def read_matrix_bin(path) -> np.ndarray:
    raw = Path(path).read_bytes()
    head = len(MATRIX_MAGIC) + 8
    if len(raw) < head or raw[: len(MATRIX_MAGIC)] != MATRIX_MAGIC:
        raise ValueError(f"{path}: not a pair-matrix file")
    (n,) = struct.unpack("<Q", raw[len(MATRIX_MAGIC) : head])
    if len(raw) != head + 8 * n * n:
        raise ValueError(f"{path}: truncated matrix (n={n})")
    return np.frombuffer(raw, dtype="<f8", offset=head).reshape(n, n).astype(float)


def write_matrix_csv(M: np.ndarray, path) -> None:
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        for row in np.asarray(M, dtype=float):
            w.writerow([repr(float(v)) for v in row])


def read_matrix_csv(path) -> np.ndarray:
    with Path(path).open(newline="") as fh:
        rows = [[float(v) for v in r] for r in csv.reader(fh) if r]
    M = np.array(rows, dtype=float)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise ValueError(f"{path}: not a square matrix")
    return M


def heatmap_svg(M: np.ndarray, order=None, title: str = "", size: int = 600) -> str:
    """Grey-scale heatmap of a [0, 1] matrix; darker cells are larger values.

    Rows and columns are permuted by ``order``. Equal adjacent cells in a row
    are merged into one rectangle to keep the file small.
    """
    M = np.asarray(M, dtype=float)
    n = M.shape[0]
    if order is not None:
        order = np.asarray(order)
        M = M[np.ix_(order, order)]
    level = np.clip(np.rint(255 * (1.0 - np.clip(M, 0.0, 1.0))), 0, 255).astype(int)
    top = 20 if title else 0
    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{size}" height="{size + top}" '
        f'viewBox="0 {-top * n / size:.6g} {n} {n + top * n / size:.6g}" shape-rendering="crispEdges">'
    ]
    if title:
        out.append(
            f'<text x="0" y="{-4 * n / size:.6g}" font-size="{14 * n / size:.6g}" '
            f'font-family="sans-serif">{_xml(title)}</text>'
        )
    for i in range(n):
        row = level[i]
        j = 0
        while j < n:
            k = j
            while k + 1 < n and row[k + 1] == row[j]:
                k += 1
            g = row[j]
            out.append(f'<rect x="{j}" y="{i}" width="{k - j + 1}" height="1" fill="#{g:02x}{g:02x}{g:02x}"/>')
            j = k + 1
    out.append("</svg>")
    return "\n".join(out) + "\n"


def _xml(s: str) -> str:
    return s.replace("&", "&amp;").replace("<", "&lt;").replace(">", "&gt;").replace('"', "&quot;")


def _dot(s: str) -> str:
    return s.replace("\\", "\\\\").replace('"', '\\"')


def tree_to_dot(tree) -> str:
    """Graphviz DOT for a surrogate tree; fill darkens with the node prediction."""
    nodes = tree.preorder()
    preds = np.array([nd.prediction for nd in nodes])
    lo, hi = float(preds.min()), float(preds.max())
    lines = [
        "digraph e2tree {",
        '  node [shape=box, style="rounded,filled", fontname="Helvetica"];',
        '  edge [fontname="Helvetica"];',
    ]
    for nd in nodes:
        frac = 0.0 if hi == lo else (nd.prediction - lo) / (hi - lo)
        g = int(round(235 - 175 * frac))
        font = "white" if frac > 0.6 else "black"
        label = f"t = {nd.t}\\nn = {nd.n_t}\\npred = {nd.prediction:.2f}\\nW = {nd.w:.2f}"
        lines.append(
            f'  n{nd.t} [label="{label}", fillcolor="#{g:02x}{g:02x}{min(255, g + 20):02x}", fontcolor="{font}"];'
        )
    for nd in nodes:
        if nd.terminal:
            continue
        for child in (2 * nd.t, 2 * nd.t + 1):
            lines.append(f'  n{nd.t} -> n{child} [label="{_dot(tree.nodes[child].path[-1])}"];')
    lines.append("}")
    return "\n".join(lines) + "\n"


def write_labels_csv(report, row_ids, path) -> None:
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["row_id", "cluster_o", "cluster_ohat"])
        for r, a, b in zip(row_ids, report.labels_o.labels, report.labels_ohat.labels):
            w.writerow([int(r), int(a), int(b)])
