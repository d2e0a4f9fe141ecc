import xml.etree.ElementTree as ET

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from e2tree.export import (
    heatmap_svg,
    read_matrix_bin,
    read_matrix_csv,
    tree_to_dot,
    write_matrix_bin,
    write_matrix_csv,
)
from e2tree.surrogate import grow

from conftest import make_table


@settings(max_examples=30)
@given(st.integers(1, 12).flatmap(lambda n: arrays(np.float64, (n, n), elements=st.floats(0, 1))))
def test_matrix_round_trips(tmp_path_factory, M):
    d = tmp_path_factory.mktemp("m")
    write_matrix_bin(M, d / "m.bin")
    write_matrix_csv(M, d / "m.csv")
    assert np.array_equal(read_matrix_bin(d / "m.bin"), M)
    assert np.array_equal(read_matrix_csv(d / "m.csv"), M)


def test_bin_layout(tmp_path):
    write_matrix_bin(np.array([[1.0, 0.5], [0.5, 1.0]]), tmp_path / "m.bin")
    raw = (tmp_path / "m.bin").read_bytes()
    assert raw[:8] == b"E2PAIRM1"
    assert int.from_bytes(raw[8:16], "little") == 2
    assert len(raw) == 16 + 32


def test_bad_bin(tmp_path):
    (tmp_path / "x.bin").write_bytes(b"nope")
    with pytest.raises(ValueError):
        read_matrix_bin(tmp_path / "x.bin")


def test_heatmap_is_svg():
    M = np.array([[1.0, 0.0, 0.0], [0.0, 1.0, 0.5], [0.0, 0.5, 1.0]])
    root = ET.fromstring(heatmap_svg(M, order=[2, 1, 0], title="O & co"))
    rects = [el for el in root.iter() if el.tag.endswith("rect")]
    # each row is covered exactly once
    for i in range(3):
        assert sum(int(r.get("width")) for r in rects if r.get("y") == str(i)) == 3
    assert any(r.get("fill") == "#000000" for r in rects)


def test_dot_output():
    X = np.column_stack([np.r_[np.zeros(10), np.ones(10)], np.arange(20.0)])
    y = np.r_[np.zeros(10), 10 * np.ones(10)] + np.arange(20) * 0.01
    block = X[:, 0] == 1
    D = (block[:, None] != block[None, :]).astype(float)
    tree = grow(D, make_table(X, y))
    dot = tree_to_dot(tree)
    assert dot.startswith("digraph e2tree {")
    assert 'n1 -> n2 [label="x0 ≤ 0.5"]' in dot
    assert 'n1 -> n3 [label="x0 > 0.5"]' in dot
