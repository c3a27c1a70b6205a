import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from meshqs import kernels

BACKENDS = kernels.backends()


def brute_edit_distance(a, b):
    """Plain recursion with memo; independent of the DP-row kernels."""
    from functools import lru_cache

    @lru_cache(maxsize=None)
    def d(i, j):
        if i == 0:
            return j
        if j == 0:
            return i
        return min(d(i - 1, j) + 1, d(i, j - 1) + 1, d(i - 1, j - 1) + (a[i - 1] != b[j - 1]))

    return d(len(a), len(b))


@pytest.fixture(params=sorted(BACKENDS))
def impl(request):
    return BACKENDS[request.param]


def test_cython_backend_builds():
    assert "cython" in BACKENDS, "compiled kernels missing; run pip install -e ."
    assert kernels.BACKEND == "cython"


@pytest.mark.parametrize(
    "a,b,expected",
    [
        ("", "", 0),
        ("abc", "", 3),
        ("", "ab", 2),
        ("kitten", "sitting", 3),
        (["data", "engineer"], ["data", "analyst"], 1),
    ],
)
def test_edit_distance_known(impl, a, b, expected):
    assert impl.edit_distance(a, b) == expected


@settings(max_examples=200, deadline=None)
@given(st.lists(st.sampled_from("abc"), max_size=7), st.lists(st.sampled_from("abc"), max_size=7))
def test_edit_distance_matches_recursion(a, b):
    for mod in BACKENDS.values():
        assert mod.edit_distance(a, b) == brute_edit_distance(tuple(a), tuple(b))


def test_count_pairs(impl):
    words = [[1, 1, 1, 2], [1, 2]]
    counts = impl.count_pairs(words, [2, 5])
    assert counts == {(1, 1): 4, (1, 2): 7}


def test_merge_pair_left_to_right(impl):
    words = [[1, 1, 1], [2, 1, 1, 2], [3]]
    changed = impl.merge_pair(words, 1, 1, 9)
    assert words == [[9, 1], [2, 9, 2], [3]]
    assert changed == 2


def test_apply_merges_respects_rank(impl):
    # (2,3) ranks before (1,2): 1 2 3 -> 1 (23)
    ranks = {(1, 2): (1, 10), (2, 3): (0, 11)}
    assert impl.apply_merges([1, 2, 3], ranks) == [1, 11]
    assert impl.apply_merges([1, 2, 4], ranks) == [10, 4]
    assert impl.apply_merges([], ranks) == []


def test_backends_agree_on_random_bpe_workloads():
    rng = random.Random(7)
    for _ in range(50):
        words = [[rng.randrange(4) for _ in range(rng.randrange(1, 9))] for _ in range(6)]
        freqs = [rng.randrange(1, 5) for _ in words]
        results = []
        for mod in BACKENDS.values():
            w = [list(x) for x in words]
            c = mod.count_pairs(w, freqs)
            mod.merge_pair(w, 0, 1, 99)
            results.append((c, w))
        assert all(r == results[0] for r in results)
