from __future__ import annotations

import pytest
from hypothesis import given
from hypothesis import strategies as st

from clickipi.encode import (
    SYMBOLS,
    EncodeError,
    classify_ratechange,
    encode_session,
    read_sequences,
    tokenize,
    write_dwell,
    write_sequences,
)
from clickipi.ingest import ClickEvent, VideoSession
from clickipi.tables import read_csv

from conftest import encode, ev, seek


def test_ratechange_direction():
    assert classify_ratechange(1.0, 1.5) == "Rf"
    assert classify_ratechange(1.5, 1.0) == "Rs"
    assert classify_ratechange(1.25, 1.25) is None


def test_fast_seeks_merge_into_scroll():
    q = encode([seek(5.0, 10, 20), seek(5.5, 20, 30)])
    assert q.symbols == ("SSf",)


def test_slow_seeks_stay_separate():
    q = encode([seek(5.0, 10, 20), seek(7.0, 20, 30)])
    assert q.symbols == ("Sf", "Sf")


def test_exactly_one_second_apart_does_not_merge():
    assert encode([seek(5.0, 10, 20), seek(6.0, 20, 30)]).symbols == ("Sf", "Sf")


def test_mixed_fixture():
    events = [
        ev(0, "play", 0.0),
        ev(10, "pause", 10.0),
        seek(12, 10, 8),
        seek(12.4, 8, 6),
        seek(12.8, 6, 4),
        ev(15, "play", 4.0),
        ev(20, "ratechange", 9.0, rate=2.0),
    ]
    q = encode(events)
    assert q.symbols == ("Pl", "Pa", "SSb", "Pl", "Rf")
    # dwell: gaps between symbol stamps; the scroll is stamped at its first seek
    assert q.dwell == (10.0, 2.0, 3.0, 5.0, 0.0)


def test_direction_change_breaks_scroll():
    assert encode([seek(1, 10, 20), seek(1.2, 20, 5), seek(1.4, 5, 2)]).symbols == ("Sf", "SSb")


def test_chained_window_is_pairwise():
    # each seek is within 1 s of the previous one, though the run spans 2.4 s
    q = encode([seek(1.0, 0, 10), seek(1.8, 10, 20), seek(2.6, 20, 30), seek(3.4, 30, 40)])
    assert q.symbols == ("SSf",)


def test_rate_baseline_and_previous_event_rate():
    events = [ev(0, "play", 0.0, rate=1.0), ev(1, "ratechange", 1.0, rate=0.75), ev(2, "ratechange", 2.0, rate=0.75),
              ev(3, "ratechange", 3.0, rate=1.5)]
    assert encode(events).symbols == ("Pl", "Rs", "Rf")
    # first event already at a non-default rate: compared against the 1.0 baseline
    assert encode([ev(0, "ratechange", 0.0, rate=1.25)]).symbols == ("Rf",)


def test_zero_length_seek_emits_nothing():
    assert encode([ev(0, "play", 0.0), seek(1, 5, 5), ev(2, "pause", 2.0)]).symbols == ("Pl", "Pa")


def test_empty_sequence_error():
    with pytest.raises(EncodeError, match="empty sequence"):
        encode([seek(1, 5, 5)])


def test_end_pause_is_final_pa():
    q = encode([ev(0, "play", 0.0), ev(100, "pause", 100.0)], length=100.0)
    assert q.symbols == ("Pl", "Pa") and q.auto_end_pause
    assert q.clicks().symbols == ("Pl",)
    q2 = encode([ev(0, "play", 0.0), ev(50, "pause", 50.0)], length=100.0)
    assert not q2.auto_end_pause and q2.clicks().symbols == ("Pl", "Pa")


def test_tokenize():
    assert tokenize("PlPaSSbPlRf") == ("Pl", "Pa", "SSb", "Pl", "Rf")
    with pytest.raises(EncodeError):
        tokenize("PlXx")


def test_tables_round_trip(tmp_path):
    q = encode([ev(0, "play", 0.0), seek(3, 3, 50), seek(3.5, 50, 60), ev(9, "pause", 66.0)])
    write_sequences(tmp_path / "seq.csv", [q])
    write_dwell(tmp_path / "dwell.csv", [q])
    assert read_csv(tmp_path / "seq.csv")[0]["sequence"] == "PlSSfPa"
    (back,) = read_sequences(tmp_path / "seq.csv")
    assert back.symbols == q.symbols and back.session_id == q.session_id
    rows = read_csv(tmp_path / "dwell.csv")
    assert [(r["symbol"], float(r["dwell_seconds"])) for r in rows] == [("Pl", 3.0), ("SSf", 6.0), ("Pa", 0.0)]


def _random_session(draw_events):
    return VideoSession("s:v:0", "s", "v", tuple(draw_events), False, None)


@st.composite
def sessions(draw):
    n = draw(st.integers(1, 30))
    t = 0.0
    rate = 1.0
    events = []
    for _ in range(n):
        t += draw(st.floats(0.0, 3.0))
        kind = draw(st.sampled_from(["play", "pause", "seek", "ratechange"]))
        if kind == "seek":
            a, b = draw(st.floats(0, 100)), draw(st.floats(0, 100))
            events.append(ClickEvent("s", "v", t, kind, a, b, rate))
        elif kind == "ratechange":
            rate = draw(st.sampled_from([0.5, 0.75, 1.0, 1.25, 1.5, 2.0]))
            events.append(ClickEvent("s", "v", t, kind, None, 0.0, rate))
        else:
            events.append(ClickEvent("s", "v", t, kind, None, 0.0, rate))
    return _random_session(events)


@given(sessions(), st.floats(0.1, 3.0))
def test_encoding_invariants(session, window):
    try:
        q = encode_session(session, window)
    except EncodeError:
        # only legal when nothing in the session produces a symbol
        assert all(e.kind in ("seek", "ratechange") for e in session.events)
        return
    assert set(q.symbols) <= set(SYMBOLS)
    assert len(q.symbols) <= len(session.events)
    assert len(q.dwell) == len(q.symbols) and all(d >= 0 for d in q.dwell)
    assert encode_session(session, window) == q
    # merge maximality: a seek within the window of a same-direction seek never stands alone
    evs = session.events
    for a, b in zip(evs, evs[1:]):
        if a.kind != "seek" or b.kind != "seek" or a.position_to == a.position_from or b.position_to == b.position_from:
            continue
        same_dir = (a.position_to > a.position_from) == (b.position_to > b.position_from)
        if same_dir and b.timestamp - a.timestamp < window:
            assert any(s.startswith("SS") for s in q.symbols)


def test_merge_maximality_on_stamps():
    # Sf at 0, SSf run 2.0-2.5, Sf at 4.0: every same-direction neighbour pair is >= 1 s apart
    events = [seek(0, 0, 10), seek(2.0, 10, 20), seek(2.5, 20, 30), seek(4.0, 30, 40)]
    q = encode(events)
    assert q.symbols == ("Sf", "SSf", "Sf")
    assert q.dwell[:2] == (2.0, 2.0)
