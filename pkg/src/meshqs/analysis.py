"""Breakdowns of evaluation results: session-length buckets, attention
profiles, win/tie/loss against a baseline, novelty and click contingency."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np
import torch

from .errors import PreconditionError, UnsupportedModeError
from .hypotheses import MESH_KINDS
from .metrics import METRIC_DIRECTION, MetricReport
from .model import collate


def bucket_of(value: int, edges: Sequence[int]) -> int:
    """Largest edge not above ``value`` (values below the first edge go there)."""
    chosen = edges[0]
    for e in edges:
        if value >= e:
            chosen = e
    return chosen


def bucket_label(edge: int, edges: Sequence[int]) -> str:
    return f"{edge}+" if edge == edges[-1] else str(edge)


# ---------------------------------------------------------------------------
# minimum session length


@dataclass
class LengthBucketRow:
    method: str
    min_length: int
    n_sessions: int
    values: dict[str, float]


def bucket_by_min_session_length(
    reports: Mapping[str, MetricReport],
    metrics: Sequence[str] = ("wer@3", "mrr@3"),
    max_length: int | None = None,
) -> tuple[list[LengthBucketRow], list[str]]:
    """Aggregates over sessions with at least X queries, X = 2..max.

    Session length counts the held-out query. Returns rows and notes about
    omitted (empty) buckets.
    """
    rows: list[LengthBucketRow] = []
    notes: list[str] = []
    for method in sorted(reports):
        rep = reports[method]
        longest = max((r.n_queries for r in rep.rows), default=1)
        top = longest if max_length is None else max_length
        for x in range(2, top + 1):
            members = [r for r in rep.rows if r.n_queries >= x]
            if not members:
                notes.append(f"{method}: bucket >= {x} is empty, omitted")
                continue
            agg = rep.aggregate(members)
            rows.append(LengthBucketRow(method, x, len(members), {m: agg[m] for m in metrics}))
    return rows, notes


# ---------------------------------------------------------------------------
# attention profile


@dataclass
class GroupStats:
    n: int
    mean: np.ndarray  # [4]
    stderr: np.ndarray  # [4]


@dataclass
class AttentionProfile:
    session_ids: list[str]
    n_queries: list[int]
    last_clicks: list[int]
    means: np.ndarray  # [N, 4] per-session mean alpha
    by_length: dict[int, GroupStats] = field(default_factory=dict)
    by_last_clicks: dict[int, GroupStats] = field(default_factory=dict)


def _group(means: np.ndarray, keys: Sequence[int]) -> dict[int, GroupStats]:
    out = {}
    keys = np.asarray(keys)
    for key in sorted(set(keys.tolist())):
        block = means[keys == key]
        n = len(block)
        se = block.std(axis=0, ddof=1) / math.sqrt(n) if n > 1 else np.zeros(block.shape[1])
        out[key] = GroupStats(n, block.mean(axis=0), se)
    return out


def session_attention_means(attn_weights: torch.Tensor, masks: torch.Tensor) -> np.ndarray:
    """Per-session mean alpha over positions where >= 2 hypotheses are valid.

    ``attn_weights`` and ``masks`` are ``[B, 4, T]``. Sessions without such a
    position get NaN rows.
    """
    multi = masks.sum(dim=1) >= 2  # [B, T]
    w = attn_weights.double() * multi[:, None, :]
    counts = multi.sum(dim=1).double()  # [B]
    means = w.sum(dim=2) / counts[:, None]
    return means.numpy()


def attention_profile(
    model,
    tokenizer,
    sessions,
    length_edges: Sequence[int] = (2, 3, 4, 5, 6),
    click_edges: Sequence[int] = (0, 1, 2, 3, 4),
    batch_size: int = 64,
) -> AttentionProfile:
    if model.mode != "mesh":
        raise UnsupportedModeError("attention profiles need a mesh-mode model")
    model.eval()
    chunks = []
    for start in range(0, len(sessions), batch_size):
        part = sessions[start : start + batch_size]
        batch = collate(part, tokenizer, model.config, with_targets=False)
        with torch.no_grad():
            mem = model.memory(batch.enc_ids, batch.enc_mask)
        chunks.append(session_attention_means(mem.attn_weights, batch.enc_mask))
    means = np.concatenate(chunks) if chunks else np.zeros((0, len(MESH_KINDS)))
    n_q = [s.n_queries for s in sessions]
    clicks = [len(s.interactions[-1].clicks) for s in sessions]
    return AttentionProfile(
        [s.session_id for s in sessions],
        n_q,
        clicks,
        means,
        by_length=_group(means, [bucket_of(v, length_edges) for v in n_q]) if len(means) else {},
        by_last_clicks=_group(means, [bucket_of(v, click_edges) for v in clicks]) if len(means) else {},
    )


# ---------------------------------------------------------------------------
# win / tie / loss


def win_tie_loss(a: MetricReport, b: MetricReport, metric: str) -> tuple[Fraction, Fraction, Fraction]:
    """Percentages of sessions where ``a`` beats, ties or loses to ``b``."""
    ra, rb = a.by_session(), b.by_session()
    if set(ra) != set(rb):
        raise PreconditionError("reports cover different session sets")
    if not ra:
        raise PreconditionError("reports are empty")
    sign = METRIC_DIRECTION[metric.split("@")[0]]
    win = tie = loss = 0
    for sid in ra:
        diff = sign * (ra[sid].values[metric] - rb[sid].values[metric])
        if diff > 0:
            win += 1
        elif diff < 0:
            loss += 1
        else:
            tie += 1
    n = len(ra)
    return Fraction(100 * win, n), Fraction(100 * tie, n), Fraction(100 * loss, n)


# ---------------------------------------------------------------------------
# novelty


def novelty_rate(
    suggestions: Mapping[str, Sequence[str]],
    sessions,
    pool,
    only_single_query: bool = False,
) -> float:
    """Fraction of sessions with at least one suggestion outside the pool's
    candidates for the session's last query."""
    considered = 0
    novel = 0
    for s in sessions:
        if only_single_query and len(s.interactions) != 1:
            continue
        considered += 1
        cands = pool.candidates(s.interactions[-1].query)
        if any(t not in cands for t in suggestions.get(s.session_id, ())):
            novel += 1
    return novel / considered if considered else 0.0


# ---------------------------------------------------------------------------
# click contingency


@dataclass
class Contingency:
    row_edges: tuple[int, ...]  # last-query clicks
    col_edges: tuple[int, ...]  # total clicks
    counts: np.ndarray  # [rows, cols]

    @property
    def normalized(self) -> np.ndarray:
        col = self.counts.sum(axis=0, keepdims=True)
        return np.divide(self.counts, col, out=np.zeros_like(self.counts, dtype=float), where=col > 0)

    def nonempty_columns(self) -> list[int]:
        return [c for c in range(self.counts.shape[1]) if self.counts[:, c].sum() > 0]


def click_contingency(
    sessions,
    total_edges: Sequence[int] = (0, 1, 2, 3, 4, 5, 6),
    last_edges: Sequence[int] = (0, 1, 2, 3, 4, 5, 6),
) -> Contingency:
    counts = np.zeros((len(last_edges), len(total_edges)), dtype=float)
    for s in sessions:
        total = sum(len(it.clicks) for it in s.interactions)
        last = len(s.interactions[-1].clicks)
        counts[list(last_edges).index(bucket_of(last, last_edges)), list(total_edges).index(bucket_of(total, total_edges))] += 1
    return Contingency(tuple(last_edges), tuple(total_edges), counts)


# ---------------------------------------------------------------------------
# writers


def write_length_buckets(rows: Sequence[LengthBucketRow], notes: Sequence[str], path: str | Path) -> None:
    metrics = list(rows[0].values) if rows else []
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\t".join(["method", "min_length", "n_sessions", *metrics]) + "\n")
        for r in rows:
            fh.write("\t".join([r.method, str(r.min_length), str(r.n_sessions)] + [f"{r.values[m]:.6f}" for m in metrics]) + "\n")
        for note in notes:
            fh.write(f"# {note}\n")


def write_attention_profile(profile: AttentionProfile, out_dir: str | Path) -> None:
    out = Path(out_dir)
    kinds = [k.value for k in MESH_KINDS]
    with open(out / "attention_sessions.tsv", "w", encoding="utf-8") as fh:
        fh.write("\t".join(["session_id", "n_queries", "last_clicks", *kinds]) + "\n")
        for sid, nq, lc, row in zip(profile.session_ids, profile.n_queries, profile.last_clicks, profile.means):
            fh.write("\t".join([sid, str(nq), str(lc)] + [f"{v:.6f}" for v in row]) + "\n")
    for name, groups in (("attention_by_length.tsv", profile.by_length), ("attention_by_last_clicks.tsv", profile.by_last_clicks)):
        with open(out / name, "w", encoding="utf-8") as fh:
            fh.write("\t".join(["bucket", "n"] + [f"{k}_mean" for k in kinds] + [f"{k}_se" for k in kinds]) + "\n")
            for key, g in groups.items():
                fh.write("\t".join([str(key), str(g.n)] + [f"{v:.6f}" for v in g.mean] + [f"{v:.6f}" for v in g.stderr]) + "\n")


def write_contingency(table: Contingency, path: str | Path) -> None:
    norm = table.normalized
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("last_clicks\\total_clicks\t" + "\t".join(bucket_label(e, table.col_edges) for e in table.col_edges) + "\n")
        for r, e in enumerate(table.row_edges):
            fh.write(bucket_label(e, table.row_edges) + "\t" + "\t".join(f"{v:.6f}" for v in norm[r]) + "\n")
