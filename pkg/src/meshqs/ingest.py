"""Interaction-log parsing, session segmentation, filtering and holdout."""

from __future__ import annotations

import json
import logging
import random
from collections import Counter
from dataclasses import asdict, dataclass, field
from enum import Enum
from pathlib import Path
from typing import Iterable, Sequence

from .errors import ConfigurationError, PreconditionError
from .text import normalize

log = logging.getLogger(__name__)

DEFAULT_GAP_SECONDS = 1800


class EventKind(str, Enum):
    QUERY = "query"
    CLICK = "click"


@dataclass(frozen=True)
class RawEvent:
    user_id: str
    timestamp: int
    kind: EventKind
    text: str

    def __post_init__(self):
        object.__setattr__(self, "kind", EventKind(self.kind))
        object.__setattr__(self, "text", normalize(self.text))
        if not self.text:
            raise ValueError("event text is empty after normalization")
        if self.timestamp < 0:
            raise ValueError(f"negative timestamp {self.timestamp}")

    def to_line(self) -> str:
        return f"{self.user_id}\t{self.timestamp}\t{self.kind.value}\t{self.text}"


@dataclass(frozen=True)
class Interaction:
    query: str
    clicks: tuple[str, ...] = ()
    query_time: int = 0


@dataclass(frozen=True)
class SessionRecord:
    session_id: str
    interactions: tuple[Interaction, ...]
    ground_truth: str | None = None

    @property
    def queries(self) -> list[str]:
        return [it.query for it in self.interactions]

    @property
    def n_queries(self) -> int:
        """Queries in the session, counting a held-out ground truth."""
        return len(self.interactions) + (1 if self.ground_truth else 0)

    @property
    def start_time(self) -> int:
        return self.interactions[0].query_time if self.interactions else 0

    def to_dict(self) -> dict:
        return {
            "session_id": self.session_id,
            "interactions": [
                {"query": it.query, "clicks": list(it.clicks), "query_time": it.query_time}
                for it in self.interactions
            ],
            "ground_truth": self.ground_truth,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SessionRecord":
        return cls(
            session_id=d["session_id"],
            interactions=tuple(
                Interaction(it["query"], tuple(it.get("clicks", ())), int(it.get("query_time", 0)))
                for it in d["interactions"]
            ),
            ground_truth=d.get("ground_truth"),
        )


@dataclass
class FilterStats:
    """Per-rule counters; the session-level ones partition the input."""

    input_sessions: int = 0
    removed_too_few_queries: int = 0
    removed_too_long: int = 0
    surviving: int = 0
    queries_removed: int = 0

    @property
    def sessions_removed(self) -> int:
        return self.removed_too_few_queries + self.removed_too_long

    def to_report(self) -> str:
        return "".join(f"{k}={v}\n" for k, v in asdict(self).items())


@dataclass
class CorpusSplit:
    train: list[SessionRecord] = field(default_factory=list)
    dev: list[SessionRecord] = field(default_factory=list)
    test: list[SessionRecord] = field(default_factory=list)
    query_frequency: dict[str, int] = field(default_factory=dict)
    stats: FilterStats = field(default_factory=FilterStats)

    def all_sessions(self) -> list[SessionRecord]:
        return self.train + self.dev + self.test


# ---------------------------------------------------------------------------
# parsing


def parse_event_line(line: str, lineno: int = 0) -> RawEvent:
    parts = line.rstrip("\n").split("\t", 3)
    if len(parts) != 4:
        raise ValueError(f"line {lineno}: expected 4 tab-separated fields, got {len(parts)}")
    user_id, ts, kind, text = parts
    try:
        return RawEvent(user_id, int(ts), EventKind(kind), text)
    except ValueError as exc:
        raise ValueError(f"line {lineno}: {exc}") from exc


def read_events(path: str | Path) -> list[RawEvent]:
    events = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if line.strip():
                events.append(parse_event_line(line, lineno))
    return events


def write_events(events: Iterable[RawEvent], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for ev in events:
            fh.write(ev.to_line() + "\n")


def read_sessions(path: str | Path) -> list[SessionRecord]:
    with open(path, encoding="utf-8") as fh:
        return [SessionRecord.from_dict(json.loads(line)) for line in fh if line.strip()]


def write_sessions(sessions: Iterable[SessionRecord], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for s in sessions:
            fh.write(json.dumps(s.to_dict(), ensure_ascii=False, sort_keys=True) + "\n")


# ---------------------------------------------------------------------------
# segmentation


def _event_sort_key(ev: RawEvent):
    return (ev.user_id, ev.timestamp, 0 if ev.kind is EventKind.QUERY else 1, ev.text)


def segment_sessions(
    events: Iterable[RawEvent],
    gap_seconds: int = DEFAULT_GAP_SECONDS,
    stats: Counter | None = None,
) -> list[SessionRecord]:
    """Split per-user event streams into sessions.

    A new session starts whenever two consecutive events of one user are
    ``gap_seconds`` or more apart. Clicks attach to the latest query of the
    same session; a click with no such query is dropped and counted under
    ``stats["dropped_clicks"]``. A query sharing its timestamp with the
    previous query of the session is dropped as ``dropped_same_time_queries``.

    Events are re-sorted by (user, time, queries-before-clicks, text), so the
    output does not depend on input order.
    """
    if gap_seconds <= 0:
        raise PreconditionError("gap_seconds must be positive")
    if stats is None:
        stats = Counter()
    stats.setdefault("dropped_clicks", 0)
    stats.setdefault("dropped_same_time_queries", 0)

    sessions: list[SessionRecord] = []
    user = None
    last_ts = 0
    current: list[list] = []  # [query, clicks list, query_time]
    per_user_index = 0

    def flush():
        if current:
            inter = tuple(Interaction(q, tuple(c), t) for q, c, t in current)
            sessions.append(SessionRecord(f"{user}#{per_user_index}", inter))

    for ev in sorted(events, key=_event_sort_key):
        if ev.user_id != user:
            flush()
            user = ev.user_id
            per_user_index = 0
            current = []
        elif ev.timestamp - last_ts >= gap_seconds:
            if current:
                flush()
                per_user_index += 1
            current = []
        last_ts = ev.timestamp

        if ev.kind is EventKind.QUERY:
            if current and current[-1][2] == ev.timestamp:
                stats["dropped_same_time_queries"] += 1
                continue
            current.append([ev.text, [], ev.timestamp])
        else:
            if not current:
                stats["dropped_clicks"] += 1
                continue
            clicks = current[-1][1]
            if ev.text not in clicks:
                clicks.append(ev.text)
    flush()
    return sessions


# ---------------------------------------------------------------------------
# holdout and filtering


def holdout_ground_truth(session: SessionRecord) -> SessionRecord:
    """Hold out the final query; its clicks are discarded."""
    if len(session.interactions) < 2:
        raise PreconditionError(
            f"session {session.session_id} has {len(session.interactions)} queries; need >= 2"
        )
    return SessionRecord(
        session.session_id,
        session.interactions[:-1],
        ground_truth=session.interactions[-1].query,
    )


def query_frequencies(sessions: Iterable[SessionRecord]) -> Counter:
    """Counts every query submission (not distinct sessions)."""
    freq: Counter = Counter()
    for s in sessions:
        freq.update(it.query for it in s.interactions)
        if s.ground_truth:
            freq[s.ground_truth] += 1
    return freq


def longest_encoding(session: SessionRecord, tokenizer) -> int:
    """Token length of the longest model input view of a held-out session."""
    from .hypotheses import build_views

    return max(len(tokenizer.encode_items(h.texts)) for h in build_views(session))


def apply_filters(
    sessions: Sequence[SessionRecord],
    min_query_freq: int,
    max_tokens: int,
    tokenizer,
    *,
    test_fraction: float = 0.2,
    dev_size: int = 0,
    seed: int = 0,
) -> CorpusSplit:
    """Filter raw sessions, hold out ground truth and split by start time.

    Query frequencies are counted over the whole input before splitting.
    The latest ``test_fraction`` of sessions by start time form the test
    split; ``dev_size`` sessions are sampled (seeded) from the remainder.
    """
    if min_query_freq < 0:
        raise PreconditionError("min_query_freq must be >= 0")
    if max_tokens <= 0:
        raise PreconditionError("max_tokens must be positive")
    if tokenizer is None or not getattr(tokenizer, "trained", False):
        raise ConfigurationError("apply_filters needs a trained tokenizer")

    stats = FilterStats(input_sessions=len(sessions))
    freq = query_frequencies(sessions)

    kept: list[SessionRecord] = []
    for s in sessions:
        inter = tuple(it for it in s.interactions if freq[it.query] > min_query_freq)
        stats.queries_removed += len(s.interactions) - len(inter)
        if len(inter) < 2:
            stats.removed_too_few_queries += 1
            continue
        held = holdout_ground_truth(SessionRecord(s.session_id, inter))
        if longest_encoding(held, tokenizer) > max_tokens:
            stats.removed_too_long += 1
            continue
        kept.append(held)
    stats.surviving = len(kept)

    kept.sort(key=lambda s: (s.start_time, s.session_id))
    n_test = int(round(len(kept) * test_fraction))
    early, test = kept[: len(kept) - n_test], kept[len(kept) - n_test :]
    dev_ids: set[str] = set()
    if dev_size > 0 and early:
        rng = random.Random(seed)
        dev_ids = {s.session_id for s in rng.sample(early, min(dev_size, len(early)))}
    train = [s for s in early if s.session_id not in dev_ids]
    dev = [s for s in early if s.session_id in dev_ids]

    surviving_queries = query_frequencies(kept)
    split = CorpusSplit(
        train=train,
        dev=dev,
        test=test,
        query_frequency={q: freq[q] for q in sorted(surviving_queries)},
        stats=stats,
    )
    log.info("filters: %s", stats)
    return split


def write_split(split: CorpusSplit, out_dir: str | Path) -> None:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_sessions(split.train, out / "train.jsonl")
    write_sessions(split.dev, out / "dev.jsonl")
    write_sessions(split.test, out / "test.jsonl")
    (out / "filter_stats.txt").write_text(split.stats.to_report(), encoding="utf-8")
    with open(out / "query_frequency.tsv", "w", encoding="utf-8") as fh:
        for q, c in split.query_frequency.items():
            fh.write(f"{q}\t{c}\n")


def read_split(corpus_dir: str | Path) -> CorpusSplit:
    d = Path(corpus_dir)
    split = CorpusSplit(
        train=read_sessions(d / "train.jsonl"),
        dev=read_sessions(d / "dev.jsonl") if (d / "dev.jsonl").exists() else [],
        test=read_sessions(d / "test.jsonl") if (d / "test.jsonl").exists() else [],
    )
    qf = d / "query_frequency.tsv"
    if qf.exists():
        for line in qf.read_text(encoding="utf-8").splitlines():
            q, c = line.rsplit("\t", 1)
            split.query_frequency[q] = int(c)
    return split
