"""Most Popular Suggestion baseline: rank by co-occurrence with the last query."""

from __future__ import annotations

from collections import Counter, defaultdict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable

from .decoder import SuggestionList
from .errors import PreconditionError

POOL_HEADER = "#meshqs-mps v1"


@dataclass
class CandidatePool:
    cooccurrence: dict[str, Counter] = field(default_factory=lambda: defaultdict(Counter))
    global_freq: Counter = field(default_factory=Counter)

    def candidates(self, query: str) -> Counter:
        return self.cooccurrence.get(query, Counter())

    def __contains__(self, query: str) -> bool:
        return query in self.cooccurrence

    def dumps(self) -> str:
        lines = [POOL_HEADER]
        for q in sorted(self.global_freq):
            lines.append(f"F\t{q}\t{self.global_freq[q]}")
        for a in sorted(self.cooccurrence):
            for b in sorted(self.cooccurrence[a]):
                lines.append(f"C\t{a}\t{b}\t{self.cooccurrence[a][b]}")
        return "\n".join(lines) + "\n"

    @classmethod
    def loads(cls, text: str) -> "CandidatePool":
        lines = text.splitlines()
        if not lines or lines[0] != POOL_HEADER:
            raise ValueError("not a meshqs MPS pool")
        pool = cls()
        for ln in lines[1:]:
            parts = ln.split("\t")
            if parts[0] == "F":
                pool.global_freq[parts[1]] = int(parts[2])
            elif parts[0] == "C":
                pool.cooccurrence[parts[1]][parts[2]] = int(parts[3])
        return pool

    def save(self, path: str | Path) -> None:
        Path(path).write_text(self.dumps(), encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> "CandidatePool":
        return cls.loads(Path(path).read_text(encoding="utf-8"))


def build_pool(train: Iterable) -> CandidatePool:
    """Count adjacent query pairs (held-out ground truth included as last)."""
    pool = CandidatePool()
    for s in train:
        queries = s.queries + ([s.ground_truth] if s.ground_truth else [])
        pool.global_freq.update(queries)
        for a, b in zip(queries, queries[1:]):
            pool.cooccurrence[a][b] += 1
    return pool


def suggest_mps(last_query: str, pool: CandidatePool, k: int) -> list[str]:
    if k < 1:
        raise PreconditionError("k must be >= 1")
    cands = pool.candidates(last_query)
    ranked = sorted(cands, key=lambda q: (-cands[q], -pool.global_freq[q], q))
    return ranked[:k]


def suggest_sessions(sessions, pool: CandidatePool, k: int) -> tuple[list[SuggestionList], float]:
    """MPS lists for held-out sessions plus pool coverage of their last queries."""
    out = []
    covered = 0
    for s in sessions:
        last = s.interactions[-1].query
        covered += last in pool
        texts = suggest_mps(last, pool, k)
        cands = pool.candidates(last)
        out.append(SuggestionList(s.session_id, [(t, float(cands[t])) for t in texts], beam_width=0, k=k))
    coverage = covered / len(sessions) if sessions else 0.0
    return out, coverage
