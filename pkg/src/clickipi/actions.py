"""Behavioral actions: n-gram mining, fuzzy pattern weights and High/Low levels.

A pattern's weight against a click stream is the cosine similarity of their
n-gram count vectors plus ``1 - d / len(pattern)``, where ``d`` is the cheapest
weighted edit turning some contiguous window of the stream into the pattern.
Category weights sum their patterns' weights; levels come from a median split
of each category over a corpus of sessions.
"""

from __future__ import annotations

import math
from collections import Counter, defaultdict
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

from . import kernels
from .binning import SplitError, level_for, median_threshold
from .encode import SYMBOL_CODE, SymbolSequence, as_tokens
from .tables import read_json, write_csv

CATEGORIES = (
    "Rewatch",
    "Skipping",
    "FastWatching",
    "SlowWatching",
    "ClearConcept",
    "CheckbackReference",
    "PlayrateTransition",
)

# output column stem per category
COLUMN_KEYS = {
    "Rewatch": "rewatch",
    "Skipping": "skipping",
    "FastWatching": "fastwatch",
    "SlowWatching": "slowwatch",
    "ClearConcept": "clearconcept",
    "CheckbackReference": "checkback",
    "PlayrateTransition": "playratetrans",
}

DEFAULT_PATTERNS = {
    "Rewatch": ("PlPaSbPl", "PlSbPaPl", "PaSbPlSb", "SbSbPaPl", "SbPaPlPa", "PaPlSbPa"),
    "Skipping": (
        "SfSfSfSf", "PaPlSfSf", "PlSfSfSf", "SfSfSfPa", "SfSfPaPl",
        "SfSfSfSSf", "SfSfSSfSf", "SfPaPlPa", "PlPaPlSf",
    ),
    "FastWatching": ("PaPlRfRf", "RfPaPlPa", "RfRfPaPl", "RsPaPlRf", "PlPaPlRf"),
    "SlowWatching": ("RsRsPaPl", "RsPaPlPa", "PaPlRsRs", "PlPaPlRs", "PaPlRsPa", "PlRsPaPl"),
    "ClearConcept": ("PaSbPlSSb", "SSbSbPaPl", "PaPlSSbSb", "PlSSbSbPa"),
    "CheckbackReference": ("SbSbSbSb", "PlSbSbSb", "SbSbSbPa", "SbSbSbSf", "SfSbSbSb", "SbPlSbSb", "SSbSbSbSb"),
    "PlayrateTransition": ("RfRfRsRs", "RfRfRfRs", "RfRsRsRs", "RsRsRsRf", "RsRsRfRf", "RfRfRfRf"),
}

DEFAULT_N = 4
DEFAULT_K = 100


class ActionsError(ValueError):
    pass


@dataclass(frozen=True)
class MatchCosts:
    w_del: float = 0.1
    w_ins: float = 1.0
    w_sub: float = 1.0

    def __post_init__(self):
        for name in ("w_del", "w_ins", "w_sub"):
            if getattr(self, name) < 0:
                raise ActionsError(f"{name} must be non-negative")


DEFAULT_COSTS = MatchCosts()


class Taxonomy:
    """Category -> patterns, pre-packed for the batched edit distance kernel."""

    def __init__(self, patterns: Mapping[str, Iterable] | None = None):
        merged = dict(DEFAULT_PATTERNS)
        for name, pats in (patterns or {}).items():
            if name not in CATEGORIES:
                raise ActionsError(f"unknown behavioral category {name!r}")
            merged[name] = pats
        self.patterns: dict[str, tuple[tuple[str, ...], ...]] = {}
        owner: dict[tuple[str, ...], str] = {}
        for name in CATEGORIES:
            toks = tuple(as_tokens(p) for p in merged[name])
            if not toks:
                raise ActionsError(f"category {name} has no patterns")
            for t in toks:
                if not t:
                    raise ActionsError(f"category {name} has an empty pattern")
                if t in owner and owner[t] != name:
                    raise ActionsError(f"pattern {''.join(t)} appears in both {owner[t]} and {name}")
                owner[t] = name
            self.patterns[name] = toks

        flat = [(name, t) for name in CATEGORIES for t in self.patterns[name]]
        self.flat_patterns = [t for _, t in flat]
        self.category_index = np.array([CATEGORIES.index(name) for name, _ in flat], dtype=np.int64)
        self.lengths = np.array([len(t) for t in self.flat_patterns], dtype=np.int64)
        self.codes = np.full((len(flat), int(self.lengths.max())), -1, dtype=np.int64)
        for i, t in enumerate(self.flat_patterns):
            self.codes[i, : len(t)] = [SYMBOL_CODE[s] for s in t]

    @classmethod
    def from_file(cls, path) -> "Taxonomy":
        payload = read_json(path)
        if not isinstance(payload, dict):
            raise ActionsError(f"{path}: expected an object mapping category -> pattern list")
        return cls(payload)

    def to_dict(self) -> dict[str, list[str]]:
        return {name: ["".join(t) for t in self.patterns[name]] for name in CATEGORIES}


DEFAULT_TAXONOMY = Taxonomy()


@dataclass
class ActionVector:
    session_id: str
    weights: dict[str, float]
    levels: dict[str, str] = field(default_factory=dict)


@dataclass
class Dichotomy:
    thresholds: dict[str, float]
    levels: dict[str, dict[str, str]]


# --------------------------------------------------------------------------
# n-grams


def ngrams(tokens: Sequence[str], n: int) -> list[tuple[str, ...]]:
    return [tuple(tokens[i : i + n]) for i in range(len(tokens) - n + 1)]


def mine_ngrams(sequences: Iterable, n: int = DEFAULT_N, k: int = DEFAULT_K) -> list[tuple[str, int]]:
    """Top-``k`` contiguous ``n``-grams over a corpus, by count then lexicographically."""
    if n < 1 or k < 1:
        raise ActionsError("n and k must be >= 1")
    counts: Counter = Counter()
    for seq in sequences:
        counts.update(ngrams(as_tokens(seq), n))
    ranked = sorted((("".join(g), c) for g, c in counts.items()), key=lambda gc: (-gc[1], gc[0]))
    return ranked[:k]


def _cosine(dot: float, sq_pattern: float, sq_stream: float) -> float:
    if dot == 0 or sq_pattern == 0 or sq_stream == 0:
        return 0.0
    return dot / (math.sqrt(sq_pattern) * math.sqrt(sq_stream))


def ngram_cosine(pattern, stream, n: int = DEFAULT_N) -> float:
    p_counts = Counter(ngrams(as_tokens(pattern), n))
    s_counts = Counter(ngrams(as_tokens(stream), n))
    dot = sum(c * s_counts[g] for g, c in p_counts.items())
    return _cosine(
        float(dot),
        float(sum(c * c for c in p_counts.values())),
        float(sum(c * c for c in s_counts.values())),
    )


# --------------------------------------------------------------------------
# edit distance and weights


def window_edit_distance(stream, pattern, costs: MatchCosts = DEFAULT_COSTS, *, use_numba=None) -> float:
    """Cheapest weighted edit of any contiguous stream window (possibly empty) into ``pattern``.

    Dropping a stream token costs ``w_del``, adding a pattern token costs
    ``w_ins``, swapping one costs ``w_sub``. Tokens are whole symbols.
    """
    p_codes = [SYMBOL_CODE[s] for s in as_tokens(pattern)]
    if not p_codes:
        raise ActionsError("pattern must be non-empty")
    s_codes = np.array([SYMBOL_CODE[s] for s in as_tokens(stream)], dtype=np.int64)
    dist = kernels.window_distances(
        s_codes,
        np.array([p_codes], dtype=np.int64),
        np.array([len(p_codes)], dtype=np.int64),
        costs.w_del,
        costs.w_ins,
        costs.w_sub,
        use_numba=use_numba,
    )
    return float(dist[0])


def pattern_weight(pattern, stream, n: int = DEFAULT_N, costs: MatchCosts = DEFAULT_COSTS) -> float:
    p = as_tokens(pattern)
    return ngram_cosine(p, stream, n) + (1.0 - window_edit_distance(stream, p, costs) / len(p))


def category_weight(
    category,
    stream,
    n: int = DEFAULT_N,
    costs: MatchCosts = DEFAULT_COSTS,
    taxonomy: Taxonomy = DEFAULT_TAXONOMY,
) -> float:
    """Sum of pattern weights for a category name or an explicit pattern list."""
    patterns = taxonomy.patterns[category] if isinstance(category, str) else [as_tokens(p) for p in category]
    if not patterns:
        raise ActionsError("category has no patterns")
    return math.fsum(pattern_weight(p, stream, n, costs) for p in patterns)


class _GramIndex:
    """Pattern n-gram vectors keyed by gram, for incremental cosine updates."""

    def __init__(self, taxonomy: Taxonomy, n: int):
        self.by_gram: dict[tuple[str, ...], list[tuple[int, int]]] = defaultdict(list)
        self.sq = np.zeros(len(taxonomy.flat_patterns))
        for i, toks in enumerate(taxonomy.flat_patterns):
            counts = Counter(ngrams(toks, n))
            self.sq[i] = float(sum(c * c for c in counts.values()))
            for g, c in counts.items():
                self.by_gram[g].append((i, c))


_gram_cache: dict[tuple[int, int], _GramIndex] = {}


def _gram_index(taxonomy: Taxonomy, n: int) -> _GramIndex:
    key = (id(taxonomy), n)
    if key not in _gram_cache:
        _gram_cache[key] = _GramIndex(taxonomy, n)
    return _gram_cache[key]


def _sum_by_category(taxonomy: Taxonomy, pattern_weights: Sequence[float]) -> dict[str, float]:
    buckets: list[list[float]] = [[] for _ in CATEGORIES]
    for cat, w in zip(taxonomy.category_index, pattern_weights):
        buckets[cat].append(w)
    return {name: math.fsum(buckets[i]) for i, name in enumerate(CATEGORIES)}


def score_prefixes(
    stream,
    taxonomy: Taxonomy = DEFAULT_TAXONOMY,
    n: int = DEFAULT_N,
    costs: MatchCosts = DEFAULT_COSTS,
    prefixes: Sequence[int] | None = None,
) -> list[dict[str, float]]:
    """Category weights of ``stream[:i]`` for each ``i`` in ``prefixes`` (default: full stream only).

    One DP pass serves every prefix: the prefix distance is the running
    minimum of the final DP row.
    """
    tokens = as_tokens(stream)
    if prefixes is None:
        prefixes = [len(tokens)]
    codes = np.array([SYMBOL_CODE[s] for s in tokens], dtype=np.int64)
    rows = kernels.window_last_rows(
        codes, taxonomy.codes, taxonomy.lengths, costs.w_del, costs.w_ins, costs.w_sub
    )
    best = np.minimum.accumulate(rows, axis=1)
    index = _gram_index(taxonomy, n)
    lengths = taxonomy.lengths

    wanted = sorted(set(prefixes))
    by_prefix: dict[int, dict[str, float]] = {}
    dot = np.zeros(len(lengths))
    counts: Counter = Counter()
    sq_stream = 0
    added = 0  # number of stream n-grams folded into the counts so far
    for i in wanted:
        while added + n <= i:
            g = tuple(tokens[added : added + n])
            sq_stream += 2 * counts[g] + 1
            counts[g] += 1
            for p, c in index.by_gram.get(g, ()):
                dot[p] += c
            added += 1
        weights = [
            _cosine(float(dot[p]), float(index.sq[p]), float(sq_stream))
            + (1.0 - float(best[p, i]) / int(lengths[p]))
            for p in range(len(lengths))
        ]
        by_prefix[i] = _sum_by_category(taxonomy, weights)
    return [by_prefix[i] for i in prefixes]


def score_stream(
    stream,
    taxonomy: Taxonomy = DEFAULT_TAXONOMY,
    n: int = DEFAULT_N,
    costs: MatchCosts = DEFAULT_COSTS,
) -> dict[str, float]:
    """Raw weight of every category for one stream."""
    return score_prefixes(stream, taxonomy, n, costs)[0]


# --------------------------------------------------------------------------
# corpus-level levels


def dichotomize(corpus_weights: Mapping[str, Sequence[tuple[str, float]]]) -> Dichotomy:
    """Median split per category; values equal to the median go Low."""
    thresholds: dict[str, float] = {}
    levels: dict[str, dict[str, str]] = defaultdict(dict)
    for category, pairs in corpus_weights.items():
        if len(pairs) < 2:
            raise SplitError(f"category {category}: need at least 2 sessions to dichotomize, got {len(pairs)}")
        thresholds[category] = median_threshold(w for _, w in pairs)
        for sid, w in pairs:
            levels[sid][category] = level_for(w, thresholds[category])
    return Dichotomy(thresholds, dict(levels))


def apply_levels(weights: Mapping[str, float], thresholds: Mapping[str, float]) -> dict[str, str]:
    return {cat: level_for(weights[cat], thresholds[cat]) for cat in CATEGORIES}


def score_corpus(
    sequences: Sequence[SymbolSequence],
    taxonomy: Taxonomy = DEFAULT_TAXONOMY,
    n: int = DEFAULT_N,
    costs: MatchCosts = DEFAULT_COSTS,
    reference: Iterable[str] | None = None,
) -> tuple[list[ActionVector], dict[str, float]]:
    """Weights and levels for every sequence.

    Medians are fitted on the sessions whose ids are in ``reference`` (all of
    them by default) and then applied to every sequence.
    """
    vectors = [ActionVector(q.session_id, score_stream(q, taxonomy, n, costs)) for q in sequences]
    ref = set(reference) if reference is not None else None
    fit = [v for v in vectors if ref is None or v.session_id in ref]
    if len(fit) < 2:
        fit = vectors
    split = dichotomize({cat: [(v.session_id, v.weights[cat]) for v in fit] for cat in CATEGORIES})
    for v in vectors:
        v.levels = apply_levels(v.weights, split.thresholds)
    return vectors, split.thresholds


def actions_header() -> list[str]:
    header = ["session_id"]
    for cat in CATEGORIES:
        header += [f"{COLUMN_KEYS[cat]}_w", COLUMN_KEYS[cat]]
    return header


def write_actions(path, vectors: Sequence[ActionVector]):
    rows = []
    for v in vectors:
        row: list = [v.session_id]
        for cat in CATEGORIES:
            row += [v.weights[cat], v.levels.get(cat, "")]
        rows.append(row)
    return write_csv(path, actions_header(), rows)


def read_actions(path) -> list[ActionVector]:
    from .tables import read_csv

    out = []
    for row in read_csv(path):
        out.append(
            ActionVector(
                row["session_id"],
                {cat: float(row[f"{COLUMN_KEYS[cat]}_w"]) for cat in CATEGORIES},
                {cat: row[COLUMN_KEYS[cat]] for cat in CATEGORIES if row[COLUMN_KEYS[cat]]},
            )
        )
    return out
