"""Top-k generation and ranking metrics, plus a paired significance test."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Protocol, Sequence

import numpy as np

from . import kernels
from .errors import PreconditionError
from .text import normalize, words

METRICS = ("wer", "bertf1", "mrr", "s")
# +1 when larger is better
METRIC_DIRECTION = {"wer": -1, "bertf1": 1, "mrr": 1, "s": 1}


def word_edit_distance(ref: str, hyp: str) -> int:
    return kernels.edit_distance(words(ref), words(hyp))


def wer_at_k(ref: str, hyps: Sequence[str], k: int) -> float:
    """Min over the first ``k`` hypotheses of word edit distance / |ref|.

    An empty hypothesis list scores 1.0 (the caller records it as a miss).
    """
    ref_words = words(ref)
    if not ref_words:
        raise PreconditionError("reference must be non-empty")
    top = list(hyps[:k])
    if not top:
        return 1.0
    return min(kernels.edit_distance(ref_words, words(h)) for h in top) / len(ref_words)


class Embedder(Protocol):
    def __call__(self, tokens: Sequence[str]) -> np.ndarray: ...


class OneHotEmbedder:
    """Distinct tokens map to orthogonal unit vectors."""

    def __init__(self):
        self.index: dict[str, int] = {}

    def __call__(self, tokens):
        for t in tokens:
            self.index.setdefault(t, len(self.index))
        out = np.zeros((len(tokens), max(len(self.index), 1)))
        for r, t in enumerate(tokens):
            out[r, self.index[t]] = 1.0
        return out


class ModelEmbedder:
    """Word vector = normalized mean of the model's BPE token embeddings."""

    def __init__(self, model, tokenizer):
        self.table = model.embed.weight.detach().double().numpy()
        self.vocab = tokenizer.vocab
        self._cache: dict[str, np.ndarray] = {}

    def _word(self, w: str) -> np.ndarray:
        vec = self._cache.get(w)
        if vec is None:
            ids = self.vocab.encode_text(w)
            vec = self.table[ids].mean(axis=0)
            vec = vec / (np.linalg.norm(vec) or 1.0)
            self._cache[w] = vec
        return vec

    def __call__(self, tokens):
        if not tokens:
            return np.zeros((0, self.table.shape[1]))
        return np.stack([self._word(t) for t in tokens])


def greedy_f1(ref_vecs: np.ndarray, hyp_vecs: np.ndarray) -> float:
    if len(ref_vecs) == 0 or len(hyp_vecs) == 0:
        return 0.0
    # a growing one-hot space may hand back different widths; zero-pad
    d = max(ref_vecs.shape[1], hyp_vecs.shape[1])
    ref_vecs = np.pad(ref_vecs, ((0, 0), (0, d - ref_vecs.shape[1])))
    hyp_vecs = np.pad(hyp_vecs, ((0, 0), (0, d - hyp_vecs.shape[1])))
    sim = ref_vecs @ hyp_vecs.T
    recall = float(sim.max(axis=1).mean())
    precision = float(sim.max(axis=0).mean())
    if precision + recall <= 0:
        return 0.0
    return min(max(2 * precision * recall / (precision + recall), 0.0), 1.0)


def bertf1_at_k(ref: str, hyps: Sequence[str], k: int, embedder: Embedder) -> float:
    ref_words = words(ref)
    if not ref_words:
        raise PreconditionError("reference must be non-empty")
    ref_vecs = embedder(ref_words)
    best = 0.0
    for h in hyps[:k]:
        best = max(best, greedy_f1(ref_vecs, embedder(words(h))))
    return best


def mrr_at_k(ref: str, hyps: Sequence[str], k: int) -> float:
    target = normalize(ref)
    for rank, h in enumerate(hyps[:k], 1):
        if normalize(h) == target:
            return 1.0 / rank
    return 0.0


def success_at_k(ref: str, hyps: Sequence[str], k: int) -> int:
    target = normalize(ref)
    return int(any(normalize(h) == target for h in hyps[:k]))


# ---------------------------------------------------------------------------
# reports


@dataclass
class SessionScores:
    session_id: str
    n_queries: int
    last_clicks: int
    n_suggestions: int
    values: dict[str, float] = field(default_factory=dict)  # "wer@3" -> value


@dataclass
class MetricReport:
    ks: tuple[int, ...]
    rows: list[SessionScores] = field(default_factory=list)
    method: str = ""

    def keys(self) -> list[str]:
        return [f"{m}@{k}" for k in self.ks for m in METRICS]

    def by_session(self) -> dict[str, SessionScores]:
        return {r.session_id: r for r in self.rows}

    def aggregate(self, rows: Sequence[SessionScores] | None = None) -> dict[str, float]:
        rows = self.rows if rows is None else rows
        if not rows:
            return {}
        return {key: sum(r.values[key] for r in rows) / len(rows) for key in self.keys()}

    def write(self, out_dir: str | Path) -> None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        agg = self.aggregate()
        lines = [f"method={self.method}", f"sessions={len(self.rows)}"]
        lines += [f"empty_suggestion_lists={sum(r.n_suggestions == 0 for r in self.rows)}"]
        lines += [f"{key}={agg[key]:.6f}" for key in self.keys() if key in agg]
        (out / "aggregate.txt").write_text("\n".join(lines) + "\n", encoding="utf-8")
        header = ["session_id", "n_queries", "last_clicks", "n_suggestions"] + self.keys()
        with open(out / "sessions.tsv", "w", encoding="utf-8") as fh:
            fh.write("\t".join(header) + "\n")
            for r in self.rows:
                cells = [r.session_id, str(r.n_queries), str(r.last_clicks), str(r.n_suggestions)]
                cells += [f"{r.values[key]:.6f}" for key in self.keys()]
                fh.write("\t".join(cells) + "\n")

    @classmethod
    def read(cls, out_dir: str | Path) -> "MetricReport":
        d = Path(out_dir)
        method = ""
        for line in (d / "aggregate.txt").read_text(encoding="utf-8").splitlines():
            if line.startswith("method="):
                method = line.split("=", 1)[1]
        lines = (d / "sessions.tsv").read_text(encoding="utf-8").splitlines()
        header = lines[0].split("\t")
        metric_keys = header[4:]
        ks = tuple(sorted({int(key.split("@")[1]) for key in metric_keys}))
        report = cls(ks, method=method)
        for line in lines[1:]:
            cells = line.split("\t")
            report.rows.append(
                SessionScores(
                    cells[0], int(cells[1]), int(cells[2]), int(cells[3]),
                    {key: float(v) for key, v in zip(metric_keys, cells[4:])},
                )
            )
        return report


def evaluate(
    sessions,
    suggestions: Mapping[str, Sequence[str]],
    ks: Sequence[int] = (1, 3, 5),
    embedder: Embedder | None = None,
    method: str = "",
) -> MetricReport:
    """Score ranked suggestion texts against each held-out session's ground truth."""
    embedder = embedder or OneHotEmbedder()
    report = MetricReport(tuple(sorted(set(ks))), method=method)
    for s in sessions:
        hyps = list(suggestions.get(s.session_id, ()))
        row = SessionScores(s.session_id, s.n_queries, len(s.interactions[-1].clicks), len(hyps))
        for k in report.ks:
            row.values[f"wer@{k}"] = wer_at_k(s.ground_truth, hyps, k)
            row.values[f"bertf1@{k}"] = bertf1_at_k(s.ground_truth, hyps, k, embedder)
            row.values[f"mrr@{k}"] = mrr_at_k(s.ground_truth, hyps, k)
            row.values[f"s@{k}"] = float(success_at_k(s.ground_truth, hyps, k))
        report.rows.append(row)
    return report


# ---------------------------------------------------------------------------
# Wilcoxon signed-rank


@dataclass(frozen=True)
class WilcoxonResult:
    statistic: float  # W+ (sum of ranks of positive differences)
    p_value: float
    n: int  # non-zero differences
    exact: bool


def _midranks(values: Sequence[float]) -> list[float]:
    order = sorted(range(len(values)), key=lambda i: values[i])
    ranks = [0.0] * len(values)
    i = 0
    while i < len(order):
        j = i
        while j + 1 < len(order) and values[order[j + 1]] == values[order[i]]:
            j += 1
        for t in range(i, j + 1):
            ranks[order[t]] = (i + j) / 2 + 1
        i = j + 1
    return ranks


def wilcoxon_signed_rank(
    x: Sequence[float], y: Sequence[float] | None = None, exact_max_n: int = 50
) -> WilcoxonResult:
    """Two-sided paired test; zero differences are dropped.

    Exact null distribution (with midranks for tied magnitudes) for up to
    ``exact_max_n`` non-zero pairs, normal approximation with tie correction
    above that.
    """
    d = np.asarray(x, dtype=float) - (np.asarray(y, dtype=float) if y is not None else 0.0)
    d = d[d != 0]
    n = len(d)
    if n == 0:
        return WilcoxonResult(0.0, 1.0, 0, True)
    ranks = _midranks(np.abs(d).tolist())
    w_plus = sum(r for r, v in zip(ranks, d) if v > 0)

    if n <= exact_max_n:
        doubled = [int(round(2 * r)) for r in ranks]
        total = sum(doubled)
        counts = [0] * (total + 1)
        counts[0] = 1
        for r in doubled:
            for s in range(total, r - 1, -1):
                counts[s] += counts[s - r]
        obs = int(round(2 * w_plus))
        n_assign = 2**n
        lower = sum(counts[: obs + 1])
        upper = sum(counts[obs:])
        p = min(1.0, 2 * min(lower, upper) / n_assign)
        return WilcoxonResult(w_plus, p, n, True)

    mean = n * (n + 1) / 4
    _, tie_counts = np.unique(np.abs(d), return_counts=True)
    var = n * (n + 1) * (2 * n + 1) / 24 - float((tie_counts**3 - tie_counts).sum()) / 48
    z = (w_plus - mean) / math.sqrt(var) if var > 0 else 0.0
    p = math.erfc(abs(z) / math.sqrt(2))
    return WilcoxonResult(w_plus, min(1.0, p), n, False)
