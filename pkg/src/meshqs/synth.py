"""Deterministic job-search session generator with planted next-query rules.

Each generated session ends with a final query produced by one rule:

``k1``    refine the last query with a term already used earlier in the
          session (or a location when there is none);
``k4``    reuse the role phrase of the title last clicked under the last
          query (the last query always gets at least one click);
``noise`` an unrelated fresh query.

Every session belongs to its own user, so ingest yields session ids
``<user>#0``; labels are keyed that way.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

from .errors import PreconditionError
from .ingest import EventKind, RawEvent

RULES = ("k1", "k4", "noise")

ROLE_FAMILIES = (
    ("data engineer", "data analyst", "data scientist", "database administrator"),
    ("software developer", "software engineer", "web developer", "devops engineer"),
    ("registered nurse", "aged care worker", "nurse educator", "midwife"),
    ("accountant", "payroll officer", "bookkeeper", "financial analyst"),
    ("project manager", "project coordinator", "business analyst", "program manager"),
    ("chef", "cook", "kitchen hand", "barista"),
    ("electrician", "plumber", "carpenter", "mechanic"),
    ("teacher", "teacher aide", "tutor", "early childhood educator"),
    ("graphic designer", "ux designer", "marketing coordinator", "digital marketing specialist"),
    ("sales representative", "account manager", "retail assistant", "store manager"),
)
SKILLS = ("python", "sql", "excel", "java", "aws", "tableau", "sap", "xero", "autocad", "react")
LOCATIONS = ("sydney", "melbourne", "brisbane", "perth", "adelaide", "canberra", "hobart", "darwin")
COMPANIES = ("acme", "globex", "initech", "umbrella", "hooli", "vandelay", "wonka", "soylent")
MODIFIERS = ("senior", "junior", "lead", "graduate", "part time", "casual", "contract", "remote")


@dataclass
class Profile:
    role_families: Sequence[Sequence[str]] = ROLE_FAMILIES
    skills: Sequence[str] = SKILLS
    locations: Sequence[str] = LOCATIONS
    companies: Sequence[str] = COMPANIES
    modifiers: Sequence[str] = MODIFIERS
    rule_probs: dict[str, float] = field(default_factory=lambda: {"k1": 0.15, "k4": 0.7, "noise": 0.15})
    min_prev_queries: int = 1
    max_prev_queries: int = 4
    # P(number of clicks = i) for earlier queries and for the last query
    click_weights: Sequence[float] = (0.55, 0.3, 0.1, 0.05)
    last_click_weights: Sequence[float] = (0.3, 0.3, 0.25, 0.15)
    start_time_span: int = 28 * 24 * 3600

    def validate(self):
        if not self.role_families or not any(self.role_families):
            raise PreconditionError("profile vocabulary has no roles")
        if not (self.locations and self.companies and self.modifiers and self.skills):
            raise PreconditionError("profile vocabulary is empty")
        if set(self.rule_probs) - set(RULES) or sum(self.rule_probs.values()) <= 0:
            raise PreconditionError(f"rule_probs must weight a subset of {RULES}")
        if not 1 <= self.min_prev_queries <= self.max_prev_queries:
            raise PreconditionError("need 1 <= min_prev_queries <= max_prev_queries")


@dataclass(frozen=True)
class SessionLabel:
    session_id: str
    rule: str
    ground_truth: str


class _SessionBuilder:
    def __init__(self, rng: random.Random, profile: Profile):
        self.rng = rng
        self.p = profile
        self.families = [list(f) for f in profile.role_families if f]

    def family_of(self, role: str) -> list[str]:
        for f in self.families:
            if role in f:
                return f
        return [role]

    def query(self) -> tuple[str, str]:
        rng = self.rng
        role = rng.choice(rng.choice(self.families))
        shape = rng.random()
        if shape < 0.35:
            q = role
        elif shape < 0.7:
            q = f"{role} {rng.choice(self.p.locations)}"
        else:
            q = f"{rng.choice(self.p.skills)} {role}"
        return q, role

    def title(self, role: str) -> tuple[str, str]:
        """(title text, role phrase the title advertises)."""
        rng = self.rng
        phrase = f"{rng.choice(self.p.modifiers)} {rng.choice(self.family_of(role))}"
        return f"{phrase} {rng.choice(self.p.companies)}", phrase

    def clicks(self, role: str, weights: Sequence[float], at_least_one: bool = False):
        n = self.rng.choices(range(len(weights)), weights=weights)[0]
        if at_least_one:
            n = max(n, 1)
        titles, phrases = [], []
        for _ in range(n):
            t, ph = self.title(role)
            if t not in titles:
                titles.append(t)
                phrases.append(ph)
        return titles, phrases


def _weighted_rule(rng: random.Random, probs: dict[str, float]) -> str:
    rules = [r for r in RULES if probs.get(r, 0) > 0]
    return rng.choices(rules, weights=[probs[r] for r in rules])[0]


def generate_session(seed, index: int, profile: Profile) -> tuple[list[RawEvent], SessionLabel]:
    rng = random.Random(f"{seed}:{index}")
    b = _SessionBuilder(rng, profile)
    user = f"u{index:06d}"
    rule = _weighted_rule(rng, profile.rule_probs)
    n_prev = rng.randint(profile.min_prev_queries, profile.max_prev_queries)

    queries: list[str] = []
    roles: list[str] = []
    clicks: list[list[str]] = []
    last_phrases: list[str] = []
    for i in range(n_prev):
        q, role = b.query()
        while queries and q == queries[-1]:
            q, role = b.query()
        last = i == n_prev - 1
        weights = profile.last_click_weights if last else profile.click_weights
        titles, phrases = b.clicks(role, weights, at_least_one=last and rule == "k4")
        queries.append(q)
        roles.append(role)
        clicks.append(titles)
        if last:
            last_phrases = phrases

    last_q = queries[-1]
    if rule == "k4":
        target = last_phrases[-1]
    elif rule == "k1":
        earlier_terms = [w for q in queries[:-1] for w in q.split() if w not in last_q.split()]
        extra = rng.choice(earlier_terms) if earlier_terms else rng.choice(list(profile.locations))
        target = f"{last_q} {extra}"
    else:
        target, _ = b.query()
    if target == last_q:
        target = f"{target} {rng.choice(list(profile.locations))}"

    events = []
    t = rng.randrange(profile.start_time_span)
    for q, titles in zip(queries, clicks):
        events.append(RawEvent(user, t, EventKind.QUERY, q))
        for title in titles:
            t += rng.randint(5, 120)
            events.append(RawEvent(user, t, EventKind.CLICK, title))
        t += rng.randint(10, 600)
    events.append(RawEvent(user, t, EventKind.QUERY, target))
    return events, SessionLabel(f"{user}#0", rule, events[-1].text)


def generate(seed, n_sessions: int, profile: Profile | None = None) -> tuple[list[RawEvent], list[SessionLabel]]:
    """Events (sorted by user then time) and one planted-rule label per session."""
    profile = profile or Profile()
    profile.validate()
    if n_sessions < 0:
        raise PreconditionError("n_sessions must be >= 0")
    events: list[RawEvent] = []
    labels: list[SessionLabel] = []
    for i in range(n_sessions):
        ev, label = generate_session(seed, i, profile)
        events.extend(ev)
        labels.append(label)
    return events, labels


def write_labels(labels: Sequence[SessionLabel], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for lab in labels:
            fh.write(f"{lab.session_id}\t{lab.rule}\t{lab.ground_truth}\n")


def read_labels(path: str | Path) -> dict[str, SessionLabel]:
    out = {}
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        if line.strip():
            sid, rule, gt = line.split("\t")
            out[sid] = SessionLabel(sid, rule, gt)
    return out
