import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from e2tree.mannwhitney import exact_p, mann_whitney_u, normal_p


def doubled_u(a, b):
    """2U by pair counting: ties count one half."""
    return sum(2 * (x > y) + (x == y) for x in a for y in b)


def enumerate_p(a, b):
    pooled = list(a) + list(b)
    n1, n2 = len(a), len(b)
    centre = n1 * n2
    obs = abs(doubled_u(a, b) - centre)
    hit = total = 0
    for pick in itertools.combinations(range(len(pooled)), n1):
        rest = [pooled[i] for i in range(len(pooled)) if i not in pick]
        u2 = doubled_u([pooled[i] for i in pick], rest)
        hit += abs(u2 - centre) >= obs
        total += 1
    return hit / total


def test_separated_triples():
    r = mann_whitney_u([1, 2, 3], [4, 5, 6])
    assert r.u == 0
    assert r.p_two_sided == pytest.approx(0.1, abs=1e-12)
    assert r.method == "exact"


SIZES = [(n1, n2) for n1 in range(1, 10) for n2 in range(1, 10) if n1 + n2 <= 10]


@pytest.mark.parametrize("n1,n2", SIZES)
def test_exact_matches_enumeration(n1, n2):
    rng = np.random.default_rng(1000 * n1 + n2)
    for trial in range(4):
        if trial % 2:
            pool = rng.permutation(n1 + n2).astype(float)  # tie-free
        else:
            pool = rng.integers(0, 4, n1 + n2).astype(float)  # heavy ties
        a, b = pool[:n1], pool[n1:]
        got = mann_whitney_u(a, b)
        if np.unique(pool).size == 1:
            assert got.p_two_sided == 1.0
            continue
        assert got.p_two_sided == pytest.approx(enumerate_p(a, b), abs=1e-9)
        assert 2 * got.u == doubled_u(a, b)


def test_normal_close_to_exact_20_20():
    rng = np.random.default_rng(7)
    worst = 0.0
    for _ in range(100):
        shift = rng.uniform(0, 1.2)
        a = rng.normal(0, 1, 20)
        b = rng.normal(shift, 1, 20)
        ref = stats.mannwhitneyu(a, b, alternative="two-sided", method="exact").pvalue
        got = mann_whitney_u(a, b)
        assert got.method == "normal"
        assert exact_p(a, b) == pytest.approx(ref, abs=1e-9)
        worst = max(worst, abs(got.p_two_sided - ref))
    assert worst <= 0.01


def test_normal_matches_scipy_asymptotic_with_ties():
    rng = np.random.default_rng(3)
    for _ in range(20):
        a = rng.integers(0, 6, 15).astype(float)
        b = rng.integers(1, 7, 12).astype(float)
        ref = stats.mannwhitneyu(a, b, alternative="two-sided", method="asymptotic", use_continuity=True).pvalue
        assert normal_p(a, b) == pytest.approx(ref, abs=1e-12)


@settings(max_examples=60)
@given(
    st.lists(st.integers(0, 5), min_size=1, max_size=7),
    st.lists(st.integers(0, 5), min_size=1, max_size=7),
)
def test_symmetry_and_range(a, b):
    r1, r2 = mann_whitney_u(a, b), mann_whitney_u(b, a)
    assert 0.0 <= r1.p_two_sided <= 1.0
    assert r1.p_two_sided == pytest.approx(r2.p_two_sided, abs=1e-12)
    assert r1.u + r2.u == pytest.approx(len(a) * len(b))


def test_empty_sample():
    with pytest.raises(ValueError):
        mann_whitney_u([], [1.0])
