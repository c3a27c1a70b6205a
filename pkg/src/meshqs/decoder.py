"""Beam-search generation of ranked query suggestions."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np
import torch

from .errors import PreconditionError
from .tokenizer import BOS, EOS

StepFn = Callable[[Sequence[tuple[int, ...]]], np.ndarray]


@dataclass(frozen=True)
class Candidate:
    ids: tuple[int, ...]  # starts with BOS; ends with EOS when finished
    logprob: float
    finished: bool

    @property
    def n_generated(self) -> int:
        return len(self.ids) - 1

    @property
    def score(self) -> float:
        """Total log-probability divided by generated token count."""
        return self.logprob / max(self.n_generated, 1)


@dataclass
class SuggestionList:
    session_id: str
    suggestions: list[tuple[str, float]] = field(default_factory=list)
    beam_width: int = 8
    k: int = 5
    unfinished: bool = False

    @property
    def texts(self) -> list[str]:
        return [t for t, _ in self.suggestions]


def _rank_key(c: Candidate):
    return (-c.score, c.ids)


def beam_search_ids(
    step_logprobs: StepFn,
    width: int,
    max_len: int,
    bos: int = BOS,
    eos: int = EOS,
) -> tuple[list[Candidate], bool]:
    """Fixed-width beam search over token ids.

    Every step keeps the ``width`` best expansions by cumulative
    log-probability (ties: lower id sequence first); expansions ending in
    ``eos`` leave the beam as finished hypotheses. ``max_len`` bounds the
    total length including BOS. Returns candidates ranked by length-normalised
    score and whether the list had to fall back to unfinished prefixes.
    """
    if width < 1:
        raise PreconditionError("beam width must be >= 1")
    if max_len < 2:
        raise PreconditionError("max_len must be >= 2")
    live: list[Candidate] = [Candidate((bos,), 0.0, False)]
    finished: list[Candidate] = []

    for _ in range(max_len - 1):
        if not live:
            break
        lp = np.asarray(step_logprobs([c.ids for c in live]), dtype=np.float64)
        total = lp + np.array([c.logprob for c in live])[:, None]
        flat = total.ravel()
        if flat.size > width:
            # everything tied with the width-th best survives to the exact sort
            threshold = np.partition(flat, flat.size - width)[flat.size - width]
            picks = np.flatnonzero(flat >= threshold)
        else:
            picks = np.arange(flat.size)
        V = lp.shape[1]
        expansions = [
            Candidate(live[p // V].ids + (int(p % V),), float(flat[p]), int(p % V) == eos) for p in picks
        ]
        expansions.sort(key=lambda c: (-c.logprob, c.ids))
        live = []
        for c in expansions[:width]:
            (finished if c.finished else live).append(c)

    if finished:
        return sorted(finished, key=_rank_key), False
    return sorted(live, key=_rank_key), True


def greedy_ids(step_logprobs: StepFn, max_len: int, bos: int = BOS, eos: int = EOS) -> Candidate:
    ids = (bos,)
    total = 0.0
    for _ in range(max_len - 1):
        lp = np.asarray(step_logprobs([ids]), dtype=np.float64)[0]
        v = int(np.argmax(lp))  # first maximum = lowest id on ties
        ids += (v,)
        total += float(lp[v])
        if v == eos:
            return Candidate(ids, total, True)
    return Candidate(ids, total, False)


def to_suggestions(
    candidates: Sequence[Candidate], decode: Callable[[Sequence[int]], str], k: int
) -> list[tuple[str, float]]:
    """Detokenize ranked candidates, keep the best-scoring copy of each text."""
    out: list[tuple[str, float]] = []
    seen: set[str] = set()
    for c in candidates:
        text = decode(c.ids)
        if not text or text in seen:
            continue
        seen.add(text)
        out.append((text, c.score))
        if len(out) == k:
            break
    return out


def model_step_fn(model, memory) -> StepFn:
    """Step function over one session's decoder memory (batch size 1)."""

    def step(prefixes):
        prefix = torch.tensor(prefixes, dtype=torch.long)
        n = prefix.shape[0]
        mem = type(memory)(
            memory.fused.expand(n, -1, -1),
            memory.union_mask.expand(n, -1),
        )
        with torch.no_grad():
            logits = model.decode_step(mem, prefix)
        return logits.log_softmax(-1).double().numpy()

    return step


def beam_search(meshed, model, tokenizer, width: int = 8, max_len: int = 32, k: int = 5, session_id: str = "") -> SuggestionList:
    """Decode suggestions for one session's memory (``fused`` shaped ``[1, T, d]``)."""
    if not 1 <= k <= width:
        raise PreconditionError("need width >= k >= 1")
    cands, unfinished = beam_search_ids(model_step_fn(model, meshed), width, max_len)
    return SuggestionList(
        session_id,
        to_suggestions(cands, tokenizer.decode, k),
        beam_width=width,
        k=k,
        unfinished=unfinished,
    )


def suggest(model, tokenizer, sessions, k: int = 5, width: int = 8, max_len: int = 32, batch_size: int = 32) -> list[SuggestionList]:
    from .model import collate

    model.eval()
    out = []
    for start in range(0, len(sessions), batch_size):
        chunk = sessions[start : start + batch_size]
        batch = collate(chunk, tokenizer, model.config, with_targets=False)
        with torch.no_grad():
            memory = model.memory(batch.enc_ids, batch.enc_mask)
        for b, s in enumerate(chunk):
            mem = memory.select(slice(b, b + 1))
            out.append(beam_search(mem, model, tokenizer, width, max_len, k, s.session_id))
    return out


def write_suggestions(lists: Sequence[SuggestionList], path: str | Path) -> None:
    """Tab-separated ``session_id, rank, text, score`` lines (rank from 1)."""
    with open(path, "w", encoding="utf-8") as fh:
        for sl in lists:
            for rank, (text, score) in enumerate(sl.suggestions, 1):
                fh.write(f"{sl.session_id}\t{rank}\t{text}\t{score:.6f}\n")


def read_suggestions(path: str | Path) -> dict[str, list[str]]:
    out: dict[str, list[tuple[int, str]]] = {}
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if not line.strip():
                continue
            sid, rank, text, _ = line.rstrip("\n").split("\t")
            out.setdefault(sid, []).append((int(rank), text))
    return {sid: [t for _, t in sorted(v)] for sid, v in out.items()}


def suggestions_to_json(sl: SuggestionList) -> str:
    return json.dumps(
        {"session_id": sl.session_id, "suggestions": sl.suggestions, "unfinished": sl.unfinished},
        sort_keys=True,
    )
