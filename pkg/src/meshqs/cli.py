"""Command-line entry point.

Exit codes: 0 success, 1 runtime error, 2 usage error (bad flags, bad
config, missing input). Errors print ``meshqs: error category=<name>: ...``
on stderr.
"""

from __future__ import annotations

import argparse
import logging
import sys
from collections import Counter
from pathlib import Path

from . import config as config_mod
from .errors import ConfigurationError, MeshqsError

log = logging.getLogger("meshqs")


class UsageError(Exception):
    category = "usage"


class _Context:
    def __init__(self, args):
        self.args = args
        self.workdir = Path(args.workdir)
        cfg = config_mod.load(self.path(args.config, must_exist=True) if args.config else None)
        self.config = config_mod.apply_overrides(cfg, args.set or [])

    def path(self, p, must_exist=False) -> Path:
        if p is None:
            return None
        path = Path(p)
        if not path.is_absolute():
            path = self.workdir / path
        if must_exist and not path.exists():
            raise UsageError(f"input not found: {path}")
        return path

    def out_dir(self, p) -> Path:
        path = self.path(p)
        path.mkdir(parents=True, exist_ok=True)
        return path

    def log_config(self, out: Path | None = None):
        text = self.config.dumps()
        log.info("resolved config:\n%s", text)
        if out is not None:
            (out / "resolved_config.yaml").write_text(text, encoding="utf-8")


# ---------------------------------------------------------------------------
# subcommands


def cmd_synth(ctx: _Context) -> int:
    from .synth import Profile, generate, write_labels
    from .ingest import write_events

    a, c = ctx.args, ctx.config
    if a.n_sessions is not None:
        c.synth.n_sessions = a.n_sessions
    if a.seed is not None:
        c.seed = a.seed
    out = ctx.out_dir(a.out)
    ctx.log_config(out)
    profile = Profile(
        rule_probs=c.synth.rule_probs,
        min_prev_queries=c.synth.min_prev_queries,
        max_prev_queries=c.synth.max_prev_queries,
    )
    events, labels = generate(c.seed, c.synth.n_sessions, profile)
    write_events(events, out / "events.tsv")
    write_labels(labels, out / "labels.tsv")
    return 0


def cmd_ingest(ctx: _Context) -> int:
    from .ingest import apply_filters, read_events, segment_sessions, write_split
    from .tokenizer import Tokenizer

    a, c = ctx.args, ctx.config
    for flag, key in (("gap_seconds", "gap_seconds"), ("min_query_freq", "min_query_freq"), ("max_tokens", "max_tokens"), ("vocab_size", "vocab_size")):
        if getattr(a, flag) is not None:
            setattr(c.ingest, key, getattr(a, flag))
    events = read_events(ctx.path(a.events, must_exist=True))
    out = ctx.out_dir(a.out)
    ctx.log_config(out)
    seg_stats: Counter = Counter()
    sessions = segment_sessions(events, c.ingest.gap_seconds, seg_stats)
    if a.vocab:
        tok = Tokenizer.load(ctx.path(a.vocab, must_exist=True))
    else:
        corpus = [t for s in sessions for it in s.interactions for t in (it.query, *it.clicks)]
        tok = Tokenizer().train(corpus, c.ingest.vocab_size)
    tok.save(out / "vocab.txt")
    split = apply_filters(
        sessions,
        c.ingest.min_query_freq,
        c.ingest.max_tokens,
        tok,
        test_fraction=c.ingest.test_fraction,
        dev_size=c.ingest.dev_size,
        seed=c.seed,
    )
    write_split(split, out)
    with open(out / "filter_stats.txt", "a", encoding="utf-8") as fh:
        for key in sorted(seg_stats):
            fh.write(f"{key}={seg_stats[key]}\n")
    return 0


def cmd_tokenizer(ctx: _Context) -> int:
    from .tokenizer import Tokenizer

    a, c = ctx.args, ctx.config
    if a.tok_cmd == "train":
        lines = ctx.path(a.corpus, must_exist=True).read_text(encoding="utf-8").splitlines()
        tok = Tokenizer().train([ln for ln in lines if ln.strip()], a.vocab_size or c.ingest.vocab_size)
        tok.save(ctx.path(a.out))
    else:
        tok = Tokenizer.load(ctx.path(a.vocab, must_exist=True))
        seq = tok.encode_items(a.items)
        print(" ".join(map(str, seq.ids)))
    return 0


def cmd_hypotheses(ctx: _Context) -> int:
    import json

    from .hypotheses import build_all
    from .ingest import read_sessions

    a = ctx.args
    sessions = read_sessions(ctx.path(a.sessions, must_exist=True))
    out = ctx.path(a.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    with open(out, "w", encoding="utf-8") as fh:
        for s in sessions:
            record = {"session_id": s.session_id, "hypotheses": [h.to_dict() for h in build_all(s)]}
            fh.write(json.dumps(record, ensure_ascii=False, sort_keys=True) + "\n")
    return 0


def cmd_train(ctx: _Context) -> int:
    import torch

    from .ingest import read_split
    from .tokenizer import Tokenizer
    from .trainer import build_model, train

    a, c = ctx.args, ctx.config
    torch.set_num_threads(1)
    corpus_dir = ctx.path(a.corpus, must_exist=True)
    vocab_path = ctx.path(a.vocab or corpus_dir / "vocab.txt", must_exist=True)
    tok = Tokenizer.load(vocab_path)
    split = read_split(corpus_dir)
    out = ctx.out_dir(a.out)
    c.train.seed = c.seed if a.seed is None else a.seed
    if a.max_steps is not None:
        c.train.max_steps = a.max_steps
    ctx.log_config(out)
    model = build_model(c.model_config(tok.vocab_size), c.train.seed, c.train.float64)
    resume = ctx.path(a.resume, must_exist=True) if a.resume else None
    train(c.train, split, model, tok, out_dir=out, resume_from=resume)
    return 0


def cmd_suggest(ctx: _Context) -> int:
    import torch

    from .decoder import suggest, write_suggestions
    from .ingest import read_sessions
    from .model import collate, export_attention, load_checkpoint

    a, c = ctx.args, ctx.config
    torch.set_num_threads(1)
    model, tok, _ = load_checkpoint(ctx.path(a.model, must_exist=True))
    sessions = read_sessions(ctx.path(a.sessions, must_exist=True))
    k = a.k or c.decode.k
    width = a.width or c.decode.width
    if not 1 <= k <= width:
        raise UsageError("need width >= k >= 1")
    lists = suggest(model, tok, sessions, k=k, width=width, max_len=a.max_len or c.decode.max_len)
    out = ctx.path(a.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    write_suggestions(lists, out)
    if a.attention:
        if model.mode != "mesh":
            raise UsageError("--attention needs a mesh-mode model")
        batch = collate(sessions, tok, model.config, with_targets=False)
        with torch.no_grad():
            mem = model.memory(batch.enc_ids, batch.enc_mask)
        export_attention(mem, batch.session_ids, ctx.path(a.attention))
    return 0


def cmd_mps(ctx: _Context) -> int:
    from .decoder import write_suggestions
    from .ingest import read_sessions
    from .mps import CandidatePool, build_pool, suggest_sessions

    a, c = ctx.args, ctx.config
    if a.mps_cmd == "build":
        pool = build_pool(read_sessions(ctx.path(a.train, must_exist=True)))
        out = ctx.path(a.out)
        out.parent.mkdir(parents=True, exist_ok=True)
        pool.save(out)
    else:
        pool = CandidatePool.load(ctx.path(a.pool, must_exist=True))
        sessions = read_sessions(ctx.path(a.sessions, must_exist=True))
        lists, coverage = suggest_sessions(sessions, pool, a.k or c.decode.k)
        out = ctx.path(a.out)
        out.parent.mkdir(parents=True, exist_ok=True)
        write_suggestions(lists, out)
        log.info("pool coverage %.4f", coverage)
    return 0


def _parse_ks(text: str) -> list[int]:
    try:
        ks = [int(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise UsageError(f"bad --k list {text!r}") from None
    if not ks or min(ks) < 1:
        raise UsageError("--k values must be >= 1")
    return ks


def cmd_evaluate(ctx: _Context) -> int:
    from .decoder import read_suggestions
    from .ingest import read_sessions
    from .metrics import ModelEmbedder, evaluate

    a, c = ctx.args, ctx.config
    sessions = read_sessions(ctx.path(a.refs, must_exist=True))
    sugg = read_suggestions(ctx.path(a.suggestions, must_exist=True))
    ks = _parse_ks(a.k) if a.k else list(c.evaluate.ks)
    embedder = None
    if a.model:
        from .model import load_checkpoint

        model, tok, _ = load_checkpoint(ctx.path(a.model, must_exist=True))
        embedder = ModelEmbedder(model, tok)
    report = evaluate(sessions, sugg, ks, embedder, method=a.method or "")
    report.write(ctx.out_dir(a.out))
    return 0


def cmd_analyze(ctx: _Context) -> int:
    from . import analysis
    from .metrics import MetricReport

    a = ctx.args
    reports_dir = ctx.path(a.reports, must_exist=True)
    out = ctx.out_dir(a.out)
    reports = {}
    for d in sorted(p for p in reports_dir.iterdir() if (p / "sessions.tsv").exists()):
        rep = MetricReport.read(d)
        reports[rep.method or d.name] = rep
    if not reports:
        raise UsageError(f"no reports (sessions.tsv) under {reports_dir}")

    rows, notes = analysis.bucket_by_min_session_length(reports)
    analysis.write_length_buckets(rows, notes, out / "length_buckets.tsv")
    for metric in ("wer@3", "mrr@3"):
        with open(out / f"plot_length_{metric.replace('@', '')}.tsv", "w", encoding="utf-8") as fh:
            fh.write("method\tx\ty\n")
            for r in rows:
                fh.write(f"{r.method}\t{r.min_length}\t{r.values[metric]:.6f}\n")

    baseline = a.baseline if a.baseline in reports else None
    if baseline:
        with open(out / "win_tie_loss.tsv", "w", encoding="utf-8") as fh:
            fh.write("method\tbaseline\tmetric\twin_pct\ttie_pct\tloss_pct\n")
            for method in sorted(reports):
                if method == baseline:
                    continue
                for metric in ("mrr@3", "wer@3"):
                    w, t, l = analysis.win_tie_loss(reports[method], reports[baseline], metric)
                    fh.write(f"{method}\t{baseline}\t{metric}\t{float(w):.4f}\t{float(t):.4f}\t{float(l):.4f}\n")

    if a.sessions:
        from .ingest import read_sessions

        sessions = read_sessions(ctx.path(a.sessions, must_exist=True))
        analysis.write_contingency(analysis.click_contingency(sessions), out / "click_contingency.tsv")
        if a.model:
            from .model import load_checkpoint

            model, tok, _ = load_checkpoint(ctx.path(a.model, must_exist=True))
            if model.mode == "mesh":
                analysis.write_attention_profile(analysis.attention_profile(model, tok, sessions), out)
        if a.pool and a.suggestions:
            from .decoder import read_suggestions
            from .mps import CandidatePool

            pool = CandidatePool.load(ctx.path(a.pool, must_exist=True))
            sugg = read_suggestions(ctx.path(a.suggestions, must_exist=True))
            rate_all = analysis.novelty_rate(sugg, sessions, pool)
            rate_single = analysis.novelty_rate(sugg, sessions, pool, only_single_query=True)
            (out / "novelty.txt").write_text(
                f"novelty_rate={rate_all:.6f}\nnovelty_rate_single_query={rate_single:.6f}\n", encoding="utf-8"
            )
    return 0


# ---------------------------------------------------------------------------
# parser


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--workdir", default=".", help="base directory for relative paths")
    common.add_argument("--config", help="YAML run config")
    common.add_argument("--set", action="append", metavar="SECTION.KEY=VALUE", help="config override (repeatable)")
    common.add_argument("--log-level", default="WARNING")

    parser = argparse.ArgumentParser(prog="meshqs", description="Behavioral-hypothesis query suggestion toolkit.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", parents=[common], help="generate a synthetic event log")
    p.add_argument("--n-sessions", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("ingest", parents=[common], help="segment, filter and split an event log")
    p.add_argument("--events", required=True)
    p.add_argument("--gap-seconds", type=int)
    p.add_argument("--min-query-freq", type=int)
    p.add_argument("--max-tokens", type=int)
    p.add_argument("--vocab", help="existing vocabulary; trained on the log when absent")
    p.add_argument("--vocab-size", type=int)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("tokenizer", help="train or apply the BPE tokenizer")
    tsub = p.add_subparsers(dest="tok_cmd", required=True)
    t = tsub.add_parser("train", parents=[common])
    t.add_argument("--corpus", required=True, help="text file, one string per line")
    t.add_argument("--vocab-size", type=int)
    t.add_argument("--out", required=True)
    t.set_defaults(func=cmd_tokenizer)
    t = tsub.add_parser("encode", parents=[common])
    t.add_argument("--vocab", required=True)
    t.add_argument("items", nargs="+")
    t.set_defaults(func=cmd_tokenizer)

    p = sub.add_parser("hypotheses", parents=[common], help="materialize K1-K4 per session")
    p.add_argument("--sessions", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_hypotheses)

    p = sub.add_parser("train", parents=[common], help="train a vanilla or mesh model")
    p.add_argument("--corpus", required=True, help="ingest output directory")
    p.add_argument("--vocab")
    p.add_argument("--seed", type=int)
    p.add_argument("--max-steps", type=int)
    p.add_argument("--resume")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("suggest", parents=[common], help="beam-search suggestions from a checkpoint")
    p.add_argument("--model", required=True)
    p.add_argument("--sessions", required=True)
    p.add_argument("--k", type=int)
    p.add_argument("--width", type=int)
    p.add_argument("--max-len", type=int)
    p.add_argument("--attention", help="also export 4xT mesh attention tables here")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_suggest)

    p = sub.add_parser("mps", help="most-popular-suggestion baseline")
    msub = p.add_subparsers(dest="mps_cmd", required=True)
    m = msub.add_parser("build", parents=[common])
    m.add_argument("--train", required=True)
    m.add_argument("--out", required=True)
    m.set_defaults(func=cmd_mps)
    m = msub.add_parser("suggest", parents=[common])
    m.add_argument("--pool", required=True)
    m.add_argument("--sessions", required=True)
    m.add_argument("--k", type=int)
    m.add_argument("--out", required=True)
    m.set_defaults(func=cmd_mps)

    p = sub.add_parser("evaluate", parents=[common], help="score suggestions against held-out queries")
    p.add_argument("--refs", required=True, help="held-out sessions (jsonl)")
    p.add_argument("--suggestions", required=True)
    p.add_argument("--k", help="comma-separated cutoffs, e.g. 1,3,5")
    p.add_argument("--model", help="checkpoint whose embeddings drive BertF1 (one-hot otherwise)")
    p.add_argument("--method", help="label stored in the report")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("analyze", parents=[common], help="breakdowns over evaluation reports")
    p.add_argument("--reports", required=True, help="directory of report directories")
    p.add_argument("--baseline", default="mps")
    p.add_argument("--sessions")
    p.add_argument("--model")
    p.add_argument("--pool")
    p.add_argument("--suggestions")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_analyze)
    return parser


def _fail(category: str, message: str, code: int) -> int:
    print(f"meshqs: error category={category}: {message}", file=sys.stderr)
    return code


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=getattr(logging, str(args.log_level).upper(), logging.WARNING), format="%(levelname)s %(name)s: %(message)s")
    try:
        ctx = _Context(args)
        return args.func(ctx) or 0
    except (UsageError, ConfigurationError) as exc:
        return _fail(exc.category, str(exc), 2)
    except MeshqsError as exc:
        return _fail(exc.category, str(exc), 1)
    except Exception as exc:  # noqa: BLE001 - surface as runtime error
        log.debug("unhandled", exc_info=True)
        return _fail("runtime", f"{type(exc).__name__}: {exc}", 1)


if __name__ == "__main__":
    sys.exit(main())
