"""The four behavioral hypotheses over a held-out session.

With queries ``Q_1..Q_n`` and clicked-title lists ``C_1..C_n``:

* K1: every query, in order.
* K2: titles clicked under ``Q_1..Q_{n-1}``, then ``Q_n``.
* K3: for each query that drew clicks, the query followed by its titles;
  then ``Q_n`` (so ``Q_n`` repeats when ``C_n`` is non-empty).
* K4: ``Q_n`` followed by its own titles.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

from .ingest import SessionRecord


class HypothesisKind(str, Enum):
    K1 = "K1"
    K2 = "K2"
    K3 = "K3"
    K4 = "K4"
    # full interleaved search context; model input for the vanilla baseline
    CONTEXT = "CONTEXT"


class ItemKind(str, Enum):
    QUERY = "query"
    TITLE = "title"


MESH_KINDS = (HypothesisKind.K1, HypothesisKind.K2, HypothesisKind.K3, HypothesisKind.K4)


@dataclass(frozen=True)
class Hypothesis:
    kind: HypothesisKind
    items: tuple[tuple[str, ItemKind], ...]
    session_id: str = ""

    @property
    def texts(self) -> list[str]:
        return [t for t, _ in self.items]

    def to_dict(self) -> dict:
        return {"kind": self.kind.value, "items": [[t, k.value] for t, k in self.items]}


def _q(text):
    return (text, ItemKind.QUERY)


def _t(text):
    return (text, ItemKind.TITLE)


def build_hypothesis(session: SessionRecord, kind) -> Hypothesis:
    kind = HypothesisKind(kind)
    inter = session.interactions
    assert inter, "held-out session must keep at least one interaction"
    last = inter[-1]

    if kind is HypothesisKind.K1:
        items = [_q(it.query) for it in inter]
    elif kind is HypothesisKind.K2:
        items = [_t(t) for it in inter[:-1] for t in it.clicks]
        items.append(_q(last.query))
    elif kind is HypothesisKind.K3:
        items = []
        for it in inter:
            if it.clicks:
                items.append(_q(it.query))
                items.extend(_t(t) for t in it.clicks)
        items.append(_q(last.query))
    elif kind is HypothesisKind.K4:
        items = [_q(last.query)] + [_t(t) for t in last.clicks]
    else:
        items = []
        for it in inter:
            items.append(_q(it.query))
            items.extend(_t(t) for t in it.clicks)
    return Hypothesis(kind, tuple(items), session.session_id)


def build_all(session: SessionRecord) -> list[Hypothesis]:
    """K1..K4 in fixed order; list position is the mesh attention index."""
    return [build_hypothesis(session, k) for k in MESH_KINDS]


def build_views(session: SessionRecord) -> list[Hypothesis]:
    """Every input view any model may consume (K1..K4 plus full context)."""
    return build_all(session) + [build_hypothesis(session, HypothesisKind.CONTEXT)]
