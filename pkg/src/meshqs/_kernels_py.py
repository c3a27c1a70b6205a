"""Pure-Python reference versions of the hot kernels.

These mirror ``_ckernels.pyx`` function for function and are used when the
compiled extension is unavailable (or ``MESHQS_PURE_PYTHON=1``).
"""

from __future__ import annotations


def edit_distance(a, b):
    """Levenshtein distance between two sequences (unit costs)."""
    n, m = len(a), len(b)
    if n == 0:
        return m
    if m == 0:
        return n
    prev = list(range(m + 1))
    for i in range(1, n + 1):
        cur = [i] + [0] * m
        ai = a[i - 1]
        for j in range(1, m + 1):
            cost = 0 if ai == b[j - 1] else 1
            cur[j] = min(prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + cost)
        prev = cur
    return prev[m]


def count_pairs(words, freqs):
    """Frequency-weighted counts of adjacent symbol pairs over all words."""
    counts = {}
    for word, f in zip(words, freqs):
        for k in range(len(word) - 1):
            pair = (word[k], word[k + 1])
            counts[pair] = counts.get(pair, 0) + f
    return counts


def merge_pair(words, left, right, new_id):
    """Replace every non-overlapping (left, right) occurrence in place.

    Scans left to right, so ``aaa`` merged on ``(a, a)`` becomes ``[aa, a]``.
    Returns the number of words that changed.
    """
    changed = 0
    for w, word in enumerate(words):
        n = len(word)
        if n < 2:
            continue
        out = []
        k = 0
        hit = False
        while k < n:
            if k < n - 1 and word[k] == left and word[k + 1] == right:
                out.append(new_id)
                k += 2
                hit = True
            else:
                out.append(word[k])
                k += 1
        if hit:
            words[w] = out
            changed += 1
    return changed


def apply_merges(symbols, ranks):
    """Greedily apply ranked merges to one word's symbol list.

    ``ranks`` maps ``(left, right)`` to ``(rank, new_id)``; the lowest-rank
    pair present is merged first, repeatedly, until none applies.
    """
    word = list(symbols)
    while len(word) > 1:
        best = None
        best_rank = None
        for k in range(len(word) - 1):
            entry = ranks.get((word[k], word[k + 1]))
            if entry is not None and (best_rank is None or entry[0] < best_rank):
                best_rank = entry[0]
                best = (word[k], word[k + 1], entry[1])
        if best is None:
            break
        left, right, new_id = best
        out = []
        k = 0
        n = len(word)
        while k < n:
            if k < n - 1 and word[k] == left and word[k + 1] == right:
                out.append(new_id)
                k += 2
            else:
                out.append(word[k])
                k += 1
        word = out
    return word
