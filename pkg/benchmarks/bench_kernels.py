"""Compare the compiled and pure-Python kernel backends.

    python3 benchmarks/bench_kernels.py [--repeat 5]

Workloads mirror real use: word-level edit distance over suggestion lists,
and one BPE training/encoding pass over a synthetic session corpus.
"""

from __future__ import annotations

import argparse
import random
import statistics
import time

from meshqs import kernels
from meshqs.synth import generate


def edit_distance_workload(rng: random.Random, n: int = 20000):
    words = [f"w{i}" for i in range(50)]
    return [
        ([rng.choice(words) for _ in range(rng.randint(1, 8))], [rng.choice(words) for _ in range(rng.randint(1, 8))])
        for _ in range(n)
    ]


def bpe_corpus():
    events, _ = generate(0, 1000)
    byte_words = {}
    for ev in events:
        for k, w in enumerate(ev.text.split(" ")):
            key = tuple(((" " if k else "") + w).encode())
            byte_words[key] = byte_words.get(key, 0) + 1
    return [list(w) for w in byte_words], list(byte_words.values())


def bench_edit(mod, pairs):
    t = time.perf_counter()
    for a, b in pairs:
        mod.edit_distance(a, b)
    return time.perf_counter() - t


def bench_bpe(mod, raw_words, freqs, n_merges=200):
    words = [list(w) for w in raw_words]
    t = time.perf_counter()
    ranks = {}
    next_id = 261
    for r in range(n_merges):
        counts = mod.count_pairs(words, freqs)
        if not counts:
            break
        best = max(counts.items(), key=lambda kv: (kv[1], -kv[0][0], -kv[0][1]))[0]
        mod.merge_pair(words, best[0], best[1], next_id)
        ranks[best] = (r, next_id)
        next_id += 1
    train_s = time.perf_counter() - t
    t = time.perf_counter()
    for w in raw_words * 5:
        mod.apply_merges(list(w), ranks)
    return train_s, time.perf_counter() - t


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args(argv)

    backends = kernels.backends()
    pairs = edit_distance_workload(random.Random(0))
    words, freqs = bpe_corpus()
    print(f"backends available: {', '.join(sorted(backends))} (default: {kernels.BACKEND})")
    results = {}
    for name, mod in sorted(backends.items()):
        ed = statistics.median(bench_edit(mod, pairs) for _ in range(args.repeat))
        runs = [bench_bpe(mod, words, freqs) for _ in range(args.repeat)]
        results[name] = (ed, statistics.median(r[0] for r in runs), statistics.median(r[1] for r in runs))

    print(f"{'backend':<8} {'edit_distance x20k':>20} {'bpe train 200 merges':>22} {'apply_merges':>14}")
    for name, (ed, tr, ap_) in results.items():
        print(f"{name:<8} {ed:>19.3f}s {tr:>21.3f}s {ap_:>13.3f}s")
    if {"cython", "python"} <= results.keys():
        c, p = results["cython"], results["python"]
        print("speedup  " + "  ".join(f"{label} {pv / cv:.1f}x" for label, pv, cv in zip(("edit", "train", "apply"), p, c)))


if __name__ == "__main__":
    main()
