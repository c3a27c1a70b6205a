import sys
from pathlib import Path

import pytest
import torch

from meshqs.ingest import Interaction, SessionRecord
from meshqs.tokenizer import Tokenizer

DATA = Path(__file__).parent / "data"

torch.set_num_threads(1)


def make_session(history, ground_truth=None, session_id="s"):
    """``history`` is a list of (query, [titles]) pairs."""
    inter = tuple(Interaction(q, tuple(c), t) for t, (q, c) in enumerate(history))
    return SessionRecord(session_id, inter, ground_truth)


@pytest.fixture(scope="session")
def data_dir():
    return DATA


@pytest.fixture(scope="session")
def small_tokenizer():
    corpus = [
        "data engineer", "data analyst sydney", "senior data engineer acme",
        "registered nurse", "nurse melbourne", "chef", "head chef perth",
        "software developer", "junior software developer hooli",
    ] * 3
    return Tokenizer().train(corpus, 320)


TINY_MODEL = [
    "model.d_model=16", "model.n_heads=2", "model.n_enc_layers=1", "model.n_dec_layers=1",
    "model.d_ff=32", "model.dropout_rate=0.0",
]


def run_pipeline(workdir, steps=20, seed=0, n_sessions=200):
    """synth -> ingest -> train -> suggest -> evaluate through the CLI entry point."""
    from meshqs.cli import main

    common = ["--workdir", str(workdir), "--set", f"seed={seed}"]
    small = common + ["--set", "ingest.dev_size=5", "--set", "ingest.vocab_size=300"]
    steps_list = [
        ["synth", "--n-sessions", str(n_sessions), "--out", "synth"] + common,
        ["ingest", "--events", "synth/events.tsv", "--min-query-freq", "0", "--out", "corpus"] + small,
        ["train", "--corpus", "corpus", "--max-steps", str(steps), "--out", "run"] + small
        + sum((["--set", s] for s in TINY_MODEL + ["train.eval_interval=10", "train.beam_width=2", "train.eval_k=1", "train.max_decode_len=8"]), []),
        ["suggest", "--model", "run/best.pt", "--sessions", "corpus/test.jsonl", "--k", "2", "--width", "2",
         "--max-len", "8", "--out", "sugg.tsv", "--attention", "attention.tsv"] + common,
        ["evaluate", "--refs", "corpus/test.jsonl", "--suggestions", "sugg.tsv", "--method", "mesh", "--out", "reports/mesh"] + common,
    ]
    for argv in steps_list:
        code = main(argv)
        assert code == 0, (argv, code)
    return workdir


_ACCEPTANCE: dict[int, str] = {}


def record_acceptance(n: int, ok: bool, detail: str) -> None:
    line = f"ACCEPTANCE criterion {n}: {'PASS' if ok else 'FAIL'} - {detail}"
    _ACCEPTANCE[n] = line
    print("\n" + line, file=sys.__stdout__, flush=True)


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_ACCEPTANCE):
        terminalreporter.write_line(_ACCEPTANCE[n])
