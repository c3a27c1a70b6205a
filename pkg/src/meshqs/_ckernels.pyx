# cython: language_level=3, boundscheck=False, wraparound=False
"""Compiled hot kernels: sequence edit distance and BPE pair bookkeeping.

Semantics match ``_kernels_py`` exactly; the test-suite runs both.
"""

from libc.stdlib cimport malloc, free


def edit_distance(a, b):
    cdef list la = list(a)
    cdef list lb = list(b)
    cdef Py_ssize_t n = len(la), m = len(lb)
    cdef Py_ssize_t i, j
    cdef int cost, best, x
    cdef int *prev
    cdef int *cur
    cdef int *tmp
    cdef object ai
    if n == 0:
        return m
    if m == 0:
        return n
    prev = <int *> malloc((m + 1) * sizeof(int))
    cur = <int *> malloc((m + 1) * sizeof(int))
    if prev == NULL or cur == NULL:
        free(prev)
        free(cur)
        raise MemoryError()
    try:
        for j in range(m + 1):
            prev[j] = <int> j
        for i in range(1, n + 1):
            cur[0] = <int> i
            ai = la[i - 1]
            for j in range(1, m + 1):
                cost = 0 if ai == lb[j - 1] else 1
                best = prev[j] + 1
                x = cur[j - 1] + 1
                if x < best:
                    best = x
                x = prev[j - 1] + cost
                if x < best:
                    best = x
                cur[j] = best
            tmp = prev
            prev = cur
            cur = tmp
        return prev[m]
    finally:
        free(prev)
        free(cur)


def count_pairs(list words, list freqs):
    cdef dict counts = {}
    cdef list word
    cdef Py_ssize_t w, k, n
    cdef long f
    cdef object pair
    for w in range(len(words)):
        word = <list> words[w]
        f = freqs[w]
        n = len(word)
        for k in range(n - 1):
            pair = (word[k], word[k + 1])
            counts[pair] = counts.get(pair, 0) + f
    return counts


def merge_pair(list words, long left, long right, long new_id):
    cdef Py_ssize_t w, k, n
    cdef list word, out
    cdef bint hit
    cdef long changed = 0
    for w in range(len(words)):
        word = <list> words[w]
        n = len(word)
        if n < 2:
            continue
        hit = False
        for k in range(n - 1):
            if word[k] == left and word[k + 1] == right:
                hit = True
                break
        if not hit:
            continue
        out = []
        k = 0
        while k < n:
            if k < n - 1 and word[k] == left and word[k + 1] == right:
                out.append(new_id)
                k += 2
            else:
                out.append(word[k])
                k += 1
        words[w] = out
        changed += 1
    return changed


def apply_merges(symbols, dict ranks):
    cdef list word = list(symbols)
    cdef list out
    cdef Py_ssize_t k, n
    cdef long best_rank, left = 0, right = 0, new_id = 0
    cdef bint found
    cdef object entry
    while len(word) > 1:
        found = False
        best_rank = 0
        n = len(word)
        for k in range(n - 1):
            entry = ranks.get((word[k], word[k + 1]))
            if entry is not None and (not found or entry[0] < best_rank):
                found = True
                best_rank = entry[0]
                left = word[k]
                right = word[k + 1]
                new_id = entry[1]
        if not found:
            break
        out = []
        k = 0
        while k < n:
            if k < n - 1 and word[k] == left and word[k + 1] == right:
                out.append(new_id)
                k += 2
            else:
                out.append(word[k])
                k += 1
        word = out
    return word
