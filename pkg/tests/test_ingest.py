import random
from collections import Counter

import pytest

from meshqs.errors import ConfigurationError, PreconditionError
from meshqs.ingest import (
    EventKind,
    Interaction,
    RawEvent,
    SessionRecord,
    apply_filters,
    holdout_ground_truth,
    parse_event_line,
    query_frequencies,
    read_events,
    segment_sessions,
)
from meshqs.tokenizer import Tokenizer

from conftest import make_session


def q(user, t, text):
    return RawEvent(user, t, EventKind.QUERY, text)


def c(user, t, text):
    return RawEvent(user, t, EventKind.CLICK, text)


class TestSegmentation:
    def test_just_below_gap_same_session(self):
        out = segment_sessions([q("u", 0, "a"), q("u", 1799, "b")], 1800)
        assert len(out) == 1
        assert out[0].queries == ["a", "b"]

    def test_exact_gap_splits(self):
        out = segment_sessions([q("u", 0, "a"), q("u", 1800, "b")], 1800)
        assert [s.queries for s in out] == [["a"], ["b"]]

    def test_hand_trace(self):
        events = [q("u", 0, "q1"), c("u", 10, "c1"), q("u", 20, "q2"), q("u", 4000, "q3")]
        s1, s2 = segment_sessions(events, 1800)
        assert s1.interactions == (Interaction("q1", ("c1",), 0), Interaction("q2", (), 20))
        assert s2.interactions == (Interaction("q3", (), 4000),)

    def test_orphan_click_dropped_and_counted(self):
        stats = Counter()
        out = segment_sessions([c("u", 0, "t"), q("u", 5, "a")], 1800, stats)
        assert stats["dropped_clicks"] == 1
        assert out[0].interactions == (Interaction("a", (), 5),)

    def test_click_after_gap_starts_new_session_without_query(self):
        stats = Counter()
        out = segment_sessions([q("u", 0, "a"), c("u", 5000, "t"), q("u", 5010, "b")], 1800, stats)
        assert stats["dropped_clicks"] == 1
        assert [s.queries for s in out] == [["a"], ["b"]]

    def test_duplicate_clicks_deduplicated_in_order(self):
        events = [q("u", 0, "a"), c("u", 1, "Y"), c("u", 2, "x"), c("u", 3, "y")]
        (s,) = segment_sessions(events)
        assert s.interactions[0].clicks == ("y", "x")

    def test_users_never_share_sessions(self):
        out = segment_sessions([q("a", 0, "x"), q("b", 1, "y")])
        assert [s.session_id for s in out] == ["a#0", "b#0"]

    def test_bad_gap(self):
        with pytest.raises(PreconditionError):
            segment_sessions([], 0)

    def test_permutation_invariance(self):
        rng = random.Random(3)
        events = []
        for u in "abc":
            t = 0
            for _ in range(12):
                t += rng.choice([5, 100, 1799, 1800, 4000])
                kind = rng.choice([EventKind.QUERY, EventKind.CLICK])
                events.append(RawEvent(u, t, kind, f"w{rng.randrange(5)}"))
        ref = segment_sessions(events)
        for _ in range(5):
            shuffled = events[:]
            rng.shuffle(shuffled)
            assert segment_sessions(shuffled) == ref

    def test_clicks_between_query_and_next(self):
        rng = random.Random(1)
        events = []
        t = 0
        for _ in range(40):
            t += rng.choice([3, 60, 2000])
            events.append(RawEvent("u", t, rng.choice(list(EventKind)), f"t{rng.randrange(9)}"))
        clicks_by_time = {(e.text, e.timestamp) for e in events if e.kind is EventKind.CLICK}
        for s in segment_sessions(events):
            times = [it.query_time for it in s.interactions]
            assert times == sorted(set(times))
            for k, it in enumerate(s.interactions):
                hi = times[k + 1] if k + 1 < len(times) else float("inf")
                for title in it.clicks:
                    assert any(text == title and it.query_time <= ts <= hi for text, ts in clicks_by_time)


class TestParsing:
    def test_normalizes_text(self):
        ev = parse_event_line("u\t5\tquery\t  Data   ENGINEER \n")
        assert ev.text == "data engineer"

    @pytest.mark.parametrize("line", ["u\t5\tquery", "u\tx\tquery\ta", "u\t5\tview\ta", "u\t-1\tquery\ta", "u\t1\tquery\t   "])
    def test_malformed(self, line):
        with pytest.raises(ValueError):
            parse_event_line(line)


class TestHoldout:
    def test_two(self):
        s = make_session([("q1", ["t1"]), ("q2", [])])
        h = holdout_ground_truth(s)
        assert h.queries == ["q1"] and h.interactions[0].clicks == ("t1",)
        assert h.ground_truth == "q2"

    def test_three_discards_final_clicks(self):
        s = make_session([("q1", []), ("q2", ["t2"]), ("q3", ["late"])])
        h = holdout_ground_truth(s)
        assert [(i.query, i.clicks) for i in h.interactions] == [("q1", ()), ("q2", ("t2",))]
        assert h.ground_truth == "q3"

    def test_single_query_rejected(self):
        with pytest.raises(PreconditionError):
            holdout_ground_truth(make_session([("q1", [])]))


class TestFilters:
    def test_singleton_removed(self, small_tokenizer):
        split = apply_filters([make_session([("data engineer", [])])], 0, 100, small_tokenizer, test_fraction=0)
        assert split.train == [] and split.stats.removed_too_few_queries == 1

    def test_frequency_threshold_inclusive(self, small_tokenizer):
        sessions = [make_session([("x", []), ("y", [])], session_id=f"s{i}") for i in range(10)]
        sessions.append(make_session([("y", []), ("z", [])], session_id="extra"))
        # x: 10 submissions, y: 11
        split = apply_filters(sessions, 10, 100, small_tokenizer, test_fraction=0)
        assert "x" not in split.query_frequency
        assert split.stats.surviving == 0
        split = apply_filters(sessions, 9, 100, small_tokenizer, test_fraction=0)
        assert split.query_frequency["x"] == 10

    def test_empty_input(self, small_tokenizer):
        split = apply_filters([], 10, 100, small_tokenizer)
        assert split.train == split.dev == split.test == []
        assert split.stats.sessions_removed == 0 and split.stats.queries_removed == 0

    def test_untrained_tokenizer(self):
        with pytest.raises(ConfigurationError):
            apply_filters([], 0, 10, Tokenizer())

    def test_too_long_removed(self, small_tokenizer):
        s = make_session([("nurse", ["registered nurse " * 20]), ("chef", [])])
        split = apply_filters([s], 0, 40, small_tokenizer, test_fraction=0)
        assert split.stats.removed_too_long == 1

    def test_split_by_time_and_counters_partition_input(self, small_tokenizer):
        rng = random.Random(0)
        sessions = []
        for i in range(60):
            n = rng.randrange(1, 4)
            history = [(rng.choice(["a", "b", "c", "d", "e"]), []) for _ in range(n)]
            inter = tuple(Interaction(qq, (), 1000 * i + k) for k, (qq, _) in enumerate(history))
            sessions.append(SessionRecord(f"s{i:02d}", inter))
        split = apply_filters(sessions, 2, 100, small_tokenizer, test_fraction=0.25, dev_size=5, seed=1)
        st = split.stats
        assert st.sessions_removed + st.surviving == st.input_sessions == 60
        ids = [s.session_id for s in split.all_sessions()]
        assert len(ids) == len(set(ids)) == st.surviving
        assert len(split.dev) == 5
        assert max(s.start_time for s in split.train + split.dev) <= min(s.start_time for s in split.test)
        freq = query_frequencies(sessions)
        for s in split.all_sessions():
            assert len(s.interactions) >= 1 and s.ground_truth
            for qq in s.queries + [s.ground_truth]:
                assert freq[qq] > 2


class TestGolden:
    """30-event hand-built log against checked-in expectations."""

    def test_segmentation(self, data_dir, tmp_path):
        from meshqs.ingest import write_sessions

        stats = Counter()
        sessions = segment_sessions(read_events(data_dir / "golden_events.tsv"), 1800, stats)
        write_sessions(sessions, tmp_path / "s.jsonl")
        assert (tmp_path / "s.jsonl").read_text() == (data_dir / "golden_sessions.jsonl").read_text()
        assert stats["dropped_clicks"] == 2

    def test_filters(self, data_dir, tmp_path):
        from meshqs.ingest import write_split

        sessions = segment_sessions(read_events(data_dir / "golden_events.tsv"), 1800)
        corpus = [it.query for s in sessions for it in s.interactions]
        corpus += [t for s in sessions for it in s.interactions for t in it.clicks]
        # one merge: lengths stay essentially byte counts, so the long title is unambiguous
        tok = Tokenizer().train(corpus, 262)
        split = apply_filters(sessions, 1, 100, tok, test_fraction=0.0)
        write_split(split, tmp_path)
        for name in ("train.jsonl", "filter_stats.txt"):
            golden = (data_dir / f"golden_{name}").read_text()
            assert (tmp_path / name).read_text() == golden, name
        assert split.dev == split.test == []
