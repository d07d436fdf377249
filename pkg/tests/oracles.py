"""Independent slow reference implementations used as test oracles."""

from __future__ import annotations

import itertools
import math
from collections import Counter

from clickipi.encode import tokenize


def toks(s):
    return tokenize(s) if isinstance(s, str) else tuple(s)


def levenshtein(src, dst, w_del, w_ins, w_sub):
    """Weighted edit cost turning ``src`` into ``dst``; textbook full-matrix DP."""
    m, n = len(src), len(dst)
    d = [[0.0] * (n + 1) for _ in range(m + 1)]
    for i in range(1, m + 1):
        d[i][0] = i * w_del
    for j in range(1, n + 1):
        d[0][j] = j * w_ins
    for i in range(1, m + 1):
        for j in range(1, n + 1):
            d[i][j] = min(
                d[i - 1][j] + w_del,
                d[i][j - 1] + w_ins,
                d[i - 1][j - 1] + (0.0 if src[i - 1] == dst[j - 1] else w_sub),
            )
    return d[m][n]


def brute_window_distance(stream, pattern, w_del=0.1, w_ins=1.0, w_sub=1.0):
    s, p = toks(stream), toks(pattern)
    best = levenshtein((), p, w_del, w_ins, w_sub)
    for i in range(len(s) + 1):
        for j in range(i, len(s) + 1):
            best = min(best, levenshtein(s[i:j], p, w_del, w_ins, w_sub))
    return best


def brute_cosine(pattern, stream, n=4):
    def grams(t):
        return Counter(tuple(t[i : i + n]) for i in range(len(t) - n + 1))

    a, b = grams(toks(pattern)), grams(toks(stream))
    keys = set(a) | set(b)
    dot = sum(a[k] * b[k] for k in keys)
    na = math.sqrt(sum(v * v for v in a.values()))
    nb = math.sqrt(sum(v * v for v in b.values()))
    return 0.0 if na == 0 or nb == 0 else dot / (na * nb)


def brute_weight(pattern, stream, n=4, w_del=0.1, w_ins=1.0, w_sub=1.0):
    p = toks(pattern)
    return brute_cosine(p, stream, n) + 1.0 - brute_window_distance(stream, p, w_del, w_ins, w_sub) / len(p)


def all_level_vectors(k=7):
    return list(itertools.product(("High", "Low"), repeat=k))
