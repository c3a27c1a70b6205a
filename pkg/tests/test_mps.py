import pytest

from meshqs.errors import PreconditionError
from meshqs.mps import CandidatePool, build_pool, suggest_mps, suggest_sessions

from conftest import make_session


def pool():
    train = [
        make_session([("a", []), ("b", [])], "c", "1"),
        make_session([("a", [])], "c", "2"),
        make_session([("a", [])], "d", "3"),
        make_session([("x", [])], "d", "4"),
    ]
    return build_pool(train)


def test_counts_adjacent_pairs():
    p = pool()
    assert p.candidates("a") == {"b": 1, "c": 1, "d": 1}
    assert p.candidates("b") == {"c": 1}
    assert p.global_freq["c"] == 2 and p.global_freq["d"] == 2


def test_ranking_and_tiebreak():
    p = pool()
    # all count 1; c and d have global frequency 2, b 1; c < d lexically
    assert suggest_mps("a", p, 3) == ["c", "d", "b"]
    assert suggest_mps("a", p, 1) == ["c"]


def test_unseen_query_empty():
    assert suggest_mps("zzz", pool(), 3) == []


def test_bad_k():
    with pytest.raises(PreconditionError):
        suggest_mps("a", pool(), 0)


def test_roundtrip(tmp_path):
    p = pool()
    p.save(tmp_path / "pool.txt")
    q = CandidatePool.load(tmp_path / "pool.txt")
    assert q.dumps() == p.dumps()
    assert q.candidates("a") == p.candidates("a")


def test_coverage():
    sessions = [make_session([("a", [])], "c", "t1"), make_session([("q", [])], "c", "t2")]
    lists, coverage = suggest_sessions(sessions, pool(), 2)
    assert coverage == 0.5
    assert lists[0].texts == ["c", "d"] and lists[1].texts == []
