"""Click-level encoding of a viewing session into the 8-symbol alphabet."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

from .ingest import VideoSession
from .tables import read_csv, write_csv

SYMBOLS = ("Pl", "Pa", "Sf", "Sb", "SSf", "SSb", "Rf", "Rs")
SYMBOL_CODE = {s: i for i, s in enumerate(SYMBOLS)}
SEEK_SYMBOLS = frozenset({"Sf", "Sb", "SSf", "SSb"})

DEFAULT_SCROLL_WINDOW = 1.0


class EncodeError(ValueError):
    pass


def tokenize(text: str) -> tuple[str, ...]:
    """Split a concatenated symbol string such as ``"PlSSbPaRs"`` into tokens."""
    tokens = []
    i = 0
    while i < len(text):
        width = 3 if text.startswith("SS", i) else 2
        tok = text[i : i + width]
        if tok not in SYMBOL_CODE:
            raise EncodeError(f"unknown symbol {tok!r} at offset {i} in {text!r}")
        tokens.append(tok)
        i += width
    return tuple(tokens)


def as_tokens(seq) -> tuple[str, ...]:
    if isinstance(seq, str):
        return tokenize(seq)
    if isinstance(seq, SymbolSequence):
        return seq.symbols
    return tuple(seq)


def to_codes(seq) -> list[int]:
    return [SYMBOL_CODE[s] for s in as_tokens(seq)]


@dataclass(frozen=True)
class SymbolSequence:
    session_id: str
    symbols: tuple[str, ...]
    dwell: tuple[float, ...]
    # player rate in effect after each symbol
    rates: tuple[float, ...]
    student_id: str = ""
    video_id: str = ""
    auto_end_pause: bool = False

    def __post_init__(self):
        if not (len(self.symbols) == len(self.dwell) == len(self.rates)):
            raise EncodeError("symbols, dwell and rates must have equal length")

    def __len__(self) -> int:
        return len(self.symbols)

    @property
    def text(self) -> str:
        return "".join(self.symbols)

    def clicks(self) -> "SymbolSequence":
        """The sequence without its automatic end pause (user clicks only)."""
        if not self.auto_end_pause:
            return self
        return self.prefix(len(self.symbols) - 1)

    def prefix(self, i: int) -> "SymbolSequence":
        return SymbolSequence(
            self.session_id,
            self.symbols[:i],
            self.dwell[:i],
            self.rates[:i],
            self.student_id,
            self.video_id,
            False,
        )


def classify_ratechange(prev_rate: float, new_rate: float) -> str | None:
    """``Rf`` for a speed-up, ``Rs`` for a slow-down, ``None`` when unchanged."""
    if prev_rate <= 0 or new_rate <= 0:
        raise EncodeError(f"playrates must be positive, got {prev_rate} -> {new_rate}")
    if new_rate > prev_rate:
        return "Rf"
    if new_rate < prev_rate:
        return "Rs"
    return None


def encode_session(session: VideoSession, scroll_window: float = DEFAULT_SCROLL_WINDOW) -> SymbolSequence:
    """Encode one time-ordered session.

    Runs of two or more same-direction seeks, each less than ``scroll_window``
    seconds after the previous seek, collapse into one scroll symbol stamped
    with the first seek's time. A direction change or any other symbol breaks
    the run.
    """
    # items: [symbol, timestamp, rate_after, run_length, last_seek_time]
    items: list[list] = []
    prev_rate = 1.0
    for event in session.events:
        symbol = None
        if event.kind == "play":
            symbol = "Pl"
        elif event.kind == "pause":
            symbol = "Pa"
        elif event.kind == "ratechange":
            symbol = classify_ratechange(prev_rate, event.playrate)
        elif event.kind == "seek":
            if event.position_to > event.position_from:
                symbol = "Sf"
            elif event.position_to < event.position_from:
                symbol = "Sb"
        prev_rate = event.playrate
        if symbol is None:
            continue
        if symbol in ("Sf", "Sb") and items:
            last = items[-1]
            if last[0] == symbol and event.timestamp - last[4] < scroll_window:
                last[2] = event.playrate
                last[3] += 1
                last[4] = event.timestamp
                continue
        items.append([symbol, event.timestamp, event.playrate, 1, event.timestamp])

    if not items:
        raise EncodeError(f"session {session.session_id}: empty sequence")

    symbols = []
    for sym, _, _, run, _ in items:
        if run >= 2:
            sym = "S" + sym
        symbols.append(sym)
    stamps = [it[1] for it in items]
    dwell = [b - a for a, b in zip(stamps, stamps[1:])] + [0.0]
    # a completing session whose final event is a pause ends on the automatic end pause
    end_pause = session.has_end_pause and session.events[-1].kind == "pause" and symbols[-1] == "Pa"
    return SymbolSequence(
        session_id=session.session_id,
        symbols=tuple(symbols),
        dwell=tuple(dwell),
        rates=tuple(it[2] for it in items),
        student_id=session.student_id,
        video_id=session.video_id,
        auto_end_pause=end_pause,
    )


def encode_sessions(sessions: Iterable[VideoSession], scroll_window: float = DEFAULT_SCROLL_WINDOW) -> list[SymbolSequence]:
    return [encode_session(s, scroll_window) for s in sessions]


def write_sequences(path, sequences: Sequence[SymbolSequence]):
    rows = [(q.session_id, q.student_id, q.video_id, q.text) for q in sequences]
    return write_csv(path, ("session_id", "student_id", "video_id", "sequence"), rows)


def write_dwell(path, sequences: Sequence[SymbolSequence]):
    rows = (
        (q.session_id, i, sym, d)
        for q in sequences
        for i, (sym, d) in enumerate(zip(q.symbols, q.dwell))
    )
    return write_csv(path, ("session_id", "index", "symbol", "dwell_seconds"), rows)


def read_sequences(path) -> list[SymbolSequence]:
    """Sequences from a ``write_sequences`` table.

    The table carries symbols only, so dwell times come back as 0 and rates
    as 1; use them for pattern scoring, not for engagement.
    """
    out = []
    for row in read_csv(path):
        symbols = tokenize(row["sequence"])
        out.append(
            SymbolSequence(
                row["session_id"], symbols, (0.0,) * len(symbols), (1.0,) * len(symbols),
                row["student_id"], row["video_id"],
            )
        )
    return out
