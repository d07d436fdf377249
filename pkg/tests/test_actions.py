from __future__ import annotations

import json
import math
import random

import pytest
from hypothesis import given
from hypothesis import strategies as st

from clickipi.actions import (
    CATEGORIES,
    DEFAULT_TAXONOMY,
    ActionsError,
    MatchCosts,
    Taxonomy,
    actions_header,
    category_weight,
    dichotomize,
    mine_ngrams,
    ngram_cosine,
    pattern_weight,
    read_actions,
    score_corpus,
    score_prefixes,
    score_stream,
    window_edit_distance,
    write_actions,
)
from clickipi.binning import SplitError
from clickipi.encode import SYMBOLS, SymbolSequence

from oracles import brute_cosine, brute_weight, brute_window_distance

P = "PlSfPaSf"
A = "PlPaPlSfPaSfSbSbPl"
B2 = "PlPaPlSfPaSfSbSbPlPlSfPaSf"

def seq(sid, symbols):
    symbols = tuple(symbols)
    return SymbolSequence(sid, symbols, (0.0,) * len(symbols), (1.0,) * len(symbols))


symbol_lists = st.lists(st.sampled_from(SYMBOLS), min_size=0, max_size=10)


def test_mine_ngrams_examples():
    assert mine_ngrams(["PlPaPlPa"], n=4, k=10) == [("PlPaPlPa", 1)]
    assert mine_ngrams(["PlPaPlPaPl"], n=4) == [("PaPlPaPl", 1), ("PlPaPlPa", 1)]
    assert mine_ngrams(["SfSfSfSfSf"] * 3, n=4) == [("SfSfSfSf", 6)]
    assert mine_ngrams([]) == []


def test_mine_ngrams_top_k_truncates():
    got = mine_ngrams(["PlPaSfSbRfRs"], n=2, k=3)
    assert [c for _, c in got] == [1, 1, 1] and len(got) == 3
    assert [g for g, _ in got] == sorted(g for g, _ in got)


def test_cosine_examples():
    assert ngram_cosine(P, A) == pytest.approx(1 / math.sqrt(6), abs=1e-12)
    assert ngram_cosine(P, P) == pytest.approx(1.0)
    assert ngram_cosine(P, "RfSbSbRs") == 0.0
    # shorter than n: no grams, cosine defined as 0
    assert ngram_cosine(P, "PlSf") == 0.0


@pytest.mark.parametrize("stream, expected", [
    (A, 0.0),
    ("RfSbSbRsPlSbPaSb", 2.0),
    ("RfSbSbRs", 4.0),
])
def test_edit_distance_examples(stream, expected):
    assert window_edit_distance(stream, P) == pytest.approx(expected)
    assert brute_window_distance(stream, P) == pytest.approx(expected)


def test_edit_distance_absent_pattern_cost_is_independent_of_costs_but_insertion():
    for w_del in (0.0, 0.1, 0.7):
        assert window_edit_distance("RfSbSbRs", P, MatchCosts(w_del, 1.0, 1.0)) == 4.0


def test_pattern_weight_examples():
    assert pattern_weight(P, A) == pytest.approx(1 / math.sqrt(6) + 1, abs=1e-12)
    assert pattern_weight(P, B2) == pytest.approx(2 / math.sqrt(12) + 1, abs=1e-12)
    assert pattern_weight(P, B2) > pattern_weight(P, A)
    assert pattern_weight(P, "RfSbSbRs") == 0.0


def test_category_weight_examples():
    assert category_weight([P], A) == pytest.approx(1.4082, abs=1e-4)
    stream = "SfSfSfSfSfSf"
    oracle = math.fsum(brute_weight(p, stream) for p in DEFAULT_TAXONOMY.to_dict()["Skipping"])
    assert category_weight("Skipping", stream) == pytest.approx(oracle, abs=1e-12)


def test_category_weight_on_foreign_stream_is_sum_of_floors():
    stream = "RfRfRfRf"
    for cat, pats in DEFAULT_TAXONOMY.to_dict().items():
        floors = [brute_weight(p, stream) for p in pats if "Rf" not in p]
        if len(floors) == len(pats):
            assert category_weight(cat, stream) == pytest.approx(math.fsum(floors), abs=1e-12)
            assert all(f <= 0 for f in floors)


def test_score_stream_matches_direct_category_sums():
    rng = random.Random(3)
    for _ in range(20):
        stream = [rng.choice(SYMBOLS) for _ in range(rng.randint(1, 25))]
        got = score_stream(stream)
        for cat in CATEGORIES:
            assert got[cat] == pytest.approx(category_weight(cat, stream), abs=1e-12)


def test_score_prefixes_match_scoring_each_prefix():
    rng = random.Random(5)
    stream = [rng.choice(SYMBOLS) for _ in range(30)]
    cuts = [0, 1, 4, 7, 12, 30]
    for cut, got in zip(cuts, score_prefixes(stream, prefixes=cuts)):
        direct = {cat: math.fsum(pattern_weight(p, stream[:cut]) for p in DEFAULT_TAXONOMY.patterns[cat])
                  for cat in CATEGORIES}
        for cat in CATEGORIES:
            assert got[cat] == pytest.approx(direct[cat], abs=1e-12)


@given(symbol_lists, st.lists(st.sampled_from(SYMBOLS), min_size=1, max_size=4))
def test_edit_distance_matches_brute_force(stream, pattern):
    assert window_edit_distance(stream, pattern) == pytest.approx(brute_window_distance(stream, pattern), abs=1e-9)


@given(symbol_lists, st.lists(st.sampled_from(SYMBOLS), min_size=1, max_size=5))
def test_weight_bounds_and_exact_occurrence(stream, pattern):
    w = pattern_weight(pattern, stream)
    # the empty window caps the distance at len(pattern) insertions
    assert -1e-12 <= w <= 2.0 + 1e-12
    contains = any(tuple(stream[i : i + len(pattern)]) == tuple(pattern) for i in range(len(stream) - len(pattern) + 1))
    assert (window_edit_distance(stream, pattern) == 0.0) == contains
    assert ngram_cosine(pattern, stream) == pytest.approx(brute_cosine(pattern, stream), abs=1e-12)


@given(st.lists(st.sampled_from(SYMBOLS), min_size=4, max_size=12), st.sampled_from(SYMBOLS))
def test_appending_an_occurrence_does_not_raise_distance(stream, extra):
    pattern = tuple(stream[:4])
    assert window_edit_distance(list(stream) + [extra], pattern) == 0.0


def test_dichotomize_examples():
    split = dichotomize({"Rewatch": [("a", 1), ("b", 2), ("c", 3), ("d", 4)]})
    assert {k: v["Rewatch"] for k, v in split.levels.items()} == {"a": "Low", "b": "Low", "c": "High", "d": "High"}
    split = dichotomize({"Rewatch": [(k, 5) for k in "abcd"]})
    assert all(v["Rewatch"] == "Low" for v in split.levels.values())
    split = dichotomize({"Rewatch": [("a", -3), ("b", 0), ("c", 0), ("d", 7)]})
    assert [split.levels[k]["Rewatch"] for k in "abcd"] == ["Low", "Low", "Low", "High"]
    with pytest.raises(SplitError):
        dichotomize({"Rewatch": [("a", 1)]})


@given(st.lists(st.floats(-100, 100, allow_nan=False), min_size=2, max_size=60, unique=True))
def test_dichotomize_balance_and_monotonicity(values):
    split = dichotomize({"Skipping": [(str(i), v) for i, v in enumerate(values)]})
    levels = [split.levels[str(i)]["Skipping"] for i in range(len(values))]
    highs = levels.count("High")
    assert abs(highs - (len(values) - highs)) <= 1
    for v, lv in zip(values, levels):
        for u, lu in zip(values, levels):
            if v > u and lu == "High":
                assert lv == "High"


def test_score_corpus_is_permutation_invariant():
    rng = random.Random(11)
    seqs = [
        seq(f"s{i}", [rng.choice(SYMBOLS) for _ in range(rng.randint(2, 20))])
        for i in range(30)
    ]
    vec1, thr1 = score_corpus(seqs)
    shuffled = seqs[:]
    rng.shuffle(shuffled)
    vec2, thr2 = score_corpus(shuffled)
    assert thr1 == thr2
    assert {v.session_id: v.levels for v in vec1} == {v.session_id: v.levels for v in vec2}


def test_score_corpus_reference_subset_fits_medians():
    seqs = [seq(f"s{i}", ("Sf",) * (i + 4)) for i in range(6)]
    _, thr_all = score_corpus(seqs)
    _, thr_ref = score_corpus(seqs, reference=["s0", "s1"])
    assert thr_ref["Skipping"] <= thr_all["Skipping"]


def test_taxonomy_rejects_shared_pattern_and_unknown_category():
    with pytest.raises(ActionsError, match="both"):
        Taxonomy({"Rewatch": ["SfSfSfSf"]})
    with pytest.raises(ActionsError, match="unknown"):
        Taxonomy({"Dozing": ["PlPlPlPl"]})
    with pytest.raises(ActionsError):
        MatchCosts(-0.1, 1, 1)


def test_default_taxonomy_is_disjoint():
    seen = [p for pats in DEFAULT_TAXONOMY.patterns.values() for p in pats]
    assert len(seen) == len(set(seen)) == 43


def test_taxonomy_override_file(tmp_path):
    path = tmp_path / "tax.json"
    path.write_text(json.dumps({"Rewatch": ["SbSbSbPl"], "CheckbackReference": ["SbSbSbSb"]}))
    tax = Taxonomy.from_file(path)
    assert tax.to_dict()["Rewatch"] == ["SbSbSbPl"]
    assert score_stream("PlSbSbSbPl", tax)["Rewatch"] == pytest.approx(brute_weight("SbSbSbPl", "PlSbSbSbPl"))


def test_actions_table_round_trip(tmp_path):
    seqs = [seq("a", ("Pl", "Sb", "Pa", "Pl")), seq("b", ("Sf", "Sf", "Sf", "Sf"))]
    vectors, _ = score_corpus(seqs)
    write_actions(tmp_path / "a.csv", vectors)
    assert (tmp_path / "a.csv").read_text().splitlines()[0] == ",".join(actions_header())
    back = read_actions(tmp_path / "a.csv")
    assert [v.levels for v in back] == [v.levels for v in vectors]
    for v, w in zip(back, vectors):
        for cat in CATEGORIES:
            assert v.weights[cat] == pytest.approx(w.weights[cat], abs=1e-9)
