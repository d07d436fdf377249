"""Synthetic cohorts with known archetypes, for end-to-end checks.

Each archetype is a Markov chain over the 8 click symbols with exponential
dwell times. A session starts with a play, walks the chain, and either
reaches the end of the video (emitting the automatic end pause) or is
abandoned. Students drop out of the course with a per-week hazard.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .encode import SYMBOLS
from .ingest import ClickEvent, VideoMeta
from .tables import read_json, write_csv

WEEK_SECONDS = 7 * 86400.0
SEEK_GUARD = 1.5  # minimum gap after a seek so separate seeks never merge
SCROLL_STEP = 0.3  # spacing of the seeks inside a scroll
END_MARGIN = 2.0  # user clicks stay this far from the video end
MIN_PLAY_DWELL = 0.5


class SimulationError(ValueError):
    pass


def _row(**probs: float) -> dict[str, float]:
    return {s: float(probs.get(s, 0.0)) for s in SYMBOLS}


DEEP_PROCESSOR = {
    "name": "deep-processor",
    "transitions": {
        "Pl": _row(Pa=0.44, Sb=0.22, SSb=0.10, Rs=0.10, Sf=0.04, SSf=0.02, Rf=0.04, Pl=0.04),
        "Pa": _row(Pl=0.62, Sb=0.22, SSb=0.06, Rs=0.05, Sf=0.03, Rf=0.02),
        "Sf": _row(Pl=0.50, Pa=0.30, Sb=0.20),
        "Sb": _row(Pl=0.35, Pa=0.25, Sb=0.25, SSb=0.10, Sf=0.05),
        "SSf": _row(Pl=0.50, Pa=0.30, Sb=0.20),
        "SSb": _row(Sb=0.45, Pl=0.25, Pa=0.25, Sf=0.05),
        "Rf": _row(Pl=0.30, Pa=0.40, Rs=0.30),
        "Rs": _row(Rs=0.25, Pa=0.45, Pl=0.30),
    },
    "dwell_means": {"Pl": 40.0, "Pa": 25.0, "Sf": 3.0, "Sb": 3.0, "SSf": 3.0, "SSb": 3.0, "Rf": 8.0, "Rs": 8.0},
    "start_rate": 1.0,
    "quit_per_click": 0.004,
    "weekly_dropout": 0.06,
    "watch_prob": 0.95,
    "repeat_prob": 0.15,
}

SKIMMER = {
    "name": "skimmer",
    "transitions": {
        "Pl": _row(Sf=0.35, SSf=0.15, Pa=0.25, Rf=0.15, Sb=0.04, Rs=0.02, SSb=0.02, Pl=0.02),
        "Pa": _row(Pl=0.75, Sf=0.10, Rf=0.10, Sb=0.05),
        "Sf": _row(Sf=0.40, SSf=0.15, Pa=0.20, Pl=0.20, Rf=0.05),
        "Sb": _row(Pl=0.60, Sf=0.30, Pa=0.10),
        "SSf": _row(Sf=0.40, Pl=0.35, Pa=0.25),
        "SSb": _row(Pl=0.60, Sf=0.40),
        "Rf": _row(Rf=0.35, Pa=0.30, Pl=0.35),
        "Rs": _row(Rf=0.30, Pl=0.40, Pa=0.30),
    },
    "dwell_means": {"Pl": 30.0, "Pa": 8.0, "Sf": 2.0, "Sb": 2.0, "SSf": 2.0, "SSb": 2.0, "Rf": 5.0, "Rs": 5.0},
    "start_rate": 1.25,
    "quit_per_click": 0.02,
    "weekly_dropout": 0.35,
    "watch_prob": 0.75,
    "repeat_prob": 0.03,
}


@dataclass(frozen=True)
class ArchetypeConfig:
    name: str
    transitions: np.ndarray  # (8, 8) row-stochastic, SYMBOLS order
    dwell_means: np.ndarray  # (8,) seconds
    start_rate: float = 1.0
    quit_per_click: float = 0.01
    weekly_dropout: float = 0.1
    watch_prob: float = 0.9
    repeat_prob: float = 0.0
    max_clicks: int = 400

    def __post_init__(self):
        T = np.asarray(self.transitions, dtype=np.float64)
        if T.shape != (len(SYMBOLS), len(SYMBOLS)):
            raise SimulationError(f"{self.name}: transition matrix must be 8x8, got {T.shape}")
        if (T < 0).any() or np.abs(T.sum(axis=1) - 1.0).max() > 1e-9:
            raise SimulationError(f"{self.name}: transition rows must be non-negative and sum to 1")
        if (np.asarray(self.dwell_means) <= 0).any():
            raise SimulationError(f"{self.name}: dwell means must be positive")
        for name in ("quit_per_click", "weekly_dropout", "watch_prob", "repeat_prob"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise SimulationError(f"{self.name}: {name} must lie in [0, 1]")
        if self.start_rate <= 0:
            raise SimulationError(f"{self.name}: start_rate must be positive")

    @classmethod
    def from_dict(cls, payload: Mapping) -> "ArchetypeConfig":
        rows = payload["transitions"]
        T = np.array([[float(rows[a].get(b, 0.0)) for b in SYMBOLS] for a in SYMBOLS])
        dwell = np.array([float(payload["dwell_means"][s]) for s in SYMBOLS])
        scalars = {
            k: payload[k]
            for k in ("start_rate", "quit_per_click", "weekly_dropout", "watch_prob", "repeat_prob", "max_clicks")
            if k in payload
        }
        return cls(payload["name"], T, dwell, **scalars)

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "transitions": {a: dict(zip(SYMBOLS, map(float, row))) for a, row in zip(SYMBOLS, self.transitions)},
            "dwell_means": dict(zip(SYMBOLS, map(float, self.dwell_means))),
            "start_rate": self.start_rate,
            "quit_per_click": self.quit_per_click,
            "weekly_dropout": self.weekly_dropout,
            "watch_prob": self.watch_prob,
            "repeat_prob": self.repeat_prob,
            "max_clicks": self.max_clicks,
        }


@dataclass(frozen=True)
class CohortConfig:
    archetypes: tuple[ArchetypeConfig, ...]
    mix: tuple[float, ...]
    n_students: int = 1000
    n_weeks: int = 6
    videos_per_week: int = 3
    video_length_range: tuple[float, float] = (300.0, 900.0)
    seed: int = 0

    def __post_init__(self):
        if self.n_students < 1:
            raise SimulationError("n_students must be >= 1")
        if len(self.mix) != len(self.archetypes) or abs(sum(self.mix) - 1.0) > 1e-9 or min(self.mix) < 0:
            raise SimulationError("mix must give one non-negative proportion per archetype, summing to 1")
        if self.n_weeks < 1 or self.videos_per_week < 1:
            raise SimulationError("course needs at least one week and one video per week")
        lo, hi = self.video_length_range
        if not 0 < lo <= hi or lo <= 2 * END_MARGIN:
            raise SimulationError("video lengths must be positive and longer than the end margin")

    @classmethod
    def from_dict(cls, payload: Mapping) -> "CohortConfig":
        archetypes = tuple(ArchetypeConfig.from_dict(a) for a in payload["archetypes"])
        mix = payload.get("mix", {})
        return cls(
            archetypes=archetypes,
            mix=tuple(float(mix[a.name]) for a in archetypes),
            n_students=int(payload.get("n_students", 1000)),
            n_weeks=int(payload.get("n_weeks", 6)),
            videos_per_week=int(payload.get("videos_per_week", 3)),
            video_length_range=tuple(payload.get("video_length_range", (300.0, 900.0))),
            seed=int(payload.get("seed", 0)),
        )

    @classmethod
    def from_file(cls, path) -> "CohortConfig":
        return cls.from_dict(read_json(path))

    def to_dict(self) -> dict:
        return {
            "archetypes": [a.to_dict() for a in self.archetypes],
            "mix": {a.name: m for a, m in zip(self.archetypes, self.mix)},
            "n_students": self.n_students,
            "n_weeks": self.n_weeks,
            "videos_per_week": self.videos_per_week,
            "video_length_range": list(self.video_length_range),
            "seed": self.seed,
        }


def default_cohort(n_students: int = 1000, seed: int = 0) -> CohortConfig:
    return CohortConfig(
        archetypes=(ArchetypeConfig.from_dict(DEEP_PROCESSOR), ArchetypeConfig.from_dict(SKIMMER)),
        mix=(0.5, 0.5),
        n_students=n_students,
        seed=seed,
    )


@dataclass
class TruthRow:
    student_id: str
    archetype: str
    true_dropout_week: int | None


@dataclass
class SimulatedCohort:
    events: list[ClickEvent]
    videos: list[VideoMeta]
    truth: list[TruthRow]
    # chain symbols per (student, video, k): what the encoder should recover
    planned: dict[tuple[str, str, int], list[str]] = field(default_factory=dict)
    completed: dict[tuple[str, str, int], bool] = field(default_factory=dict)


def _ms(t: float) -> float:
    return round(t, 3)


def _simulate_session(rng, arch: ArchetypeConfig, student: str, video: VideoMeta, t0: float):
    events: list[ClickEvent] = []
    symbols: list[str] = []
    length = video.video_length
    limit = length - END_MARGIN
    cumulative = np.cumsum(arch.transitions, axis=1)
    pos, rate, playing = 0.0, arch.start_rate, False
    t = t0
    state = 0  # Pl

    def emit(kind, ts, pos_from=None, pos_to=None):
        events.append(ClickEvent(student, video.video_id, _ms(ts), kind, pos_from, pos_to, rate))

    while True:
        sym = SYMBOLS[state]
        symbols.append(sym)
        mean = arch.dwell_means[state]
        if sym == "Pl":
            playing = True
            emit("play", t, None, pos)
            dwell = MIN_PLAY_DWELL + rng.exponential(mean)
        elif sym == "Pa":
            playing = False
            emit("pause", t, None, pos)
            dwell = rng.exponential(mean)
        elif sym in ("Rf", "Rs"):
            new = (rate + 2.0) / 2.0 if sym == "Rf" else (rate + 0.5) / 2.0
            if new == rate:
                new = rate * 1.25 if sym == "Rf" else rate / 1.25
            rate = new
            emit("ratechange", t, None, pos)
            dwell = rng.exponential(mean)
        else:
            forward = sym in ("Sf", "SSf")
            n_seeks = 1 if sym in ("Sf", "Sb") else int(rng.integers(2, 4))
            ts = t
            for k in range(n_seeks):
                u = rng.uniform(0.05, 0.5)
                target = pos + u * (limit - pos) if forward else pos - u * pos
                emit("seek", ts, pos, target)
                pos = target
                if k < n_seeks - 1:
                    ts += SCROLL_STEP
            t = ts
            dwell = SEEK_GUARD + rng.exponential(mean)

        if playing and pos + dwell * rate >= limit:
            t_end = t + (length - pos) / rate
            pos = length
            emit("pause", t_end, None, length)
            return events, symbols, True
        if playing:
            pos += dwell * rate
        t += dwell
        if rng.random() < arch.quit_per_click or len(symbols) >= arch.max_clicks:
            return events, symbols, False
        state = min(int(np.searchsorted(cumulative[state], rng.random(), side="right")), len(SYMBOLS) - 1)


def simulate_cohort(config: CohortConfig) -> SimulatedCohort:
    """Event log, video table and ground truth; deterministic given ``config.seed``."""
    root = np.random.SeedSequence(config.seed)
    course_seq, mix_seq, *student_seqs = root.spawn(2 + config.n_students)
    course_rng = np.random.default_rng(course_seq)
    lo, hi = config.video_length_range
    videos = []
    for w in range(1, config.n_weeks + 1):
        for j in range(config.videos_per_week):
            order = (w - 1) * config.videos_per_week + j + 1
            videos.append(VideoMeta(f"v{order:03d}", round(float(course_rng.uniform(lo, hi)), 1), w, order))
    by_week = {w: [v for v in videos if v.week_index == w] for w in range(1, config.n_weeks + 1)}

    mix_rng = np.random.default_rng(mix_seq)
    which = mix_rng.choice(len(config.archetypes), size=config.n_students, p=np.asarray(config.mix))
    width = len(str(config.n_students))
    cohort = SimulatedCohort([], videos, [])
    for idx in range(config.n_students):
        rng = np.random.default_rng(student_seqs[idx])
        arch = config.archetypes[int(which[idx])]
        student = f"s{idx + 1:0{width}d}"
        dropout_week = None
        for w in range(1, config.n_weeks + 1):
            week_videos = [v for v in by_week[w] if rng.random() < arch.watch_prob] or by_week[w][:1]
            for v in week_videos:
                day = v.order_in_course - by_week[w][0].order_in_course
                t0 = (w - 1) * WEEK_SECONDS + day * 86400.0 + float(rng.uniform(0.0, 36000.0))
                n_sessions = 2 if rng.random() < arch.repeat_prob else 1
                for k in range(n_sessions):
                    events, symbols, done = _simulate_session(rng, arch, student, v, t0 + k * 43200.0)
                    cohort.events.extend(events)
                    cohort.planned[(student, v.video_id, k)] = symbols
                    cohort.completed[(student, v.video_id, k)] = done
            if w < config.n_weeks and rng.random() < arch.weekly_dropout:
                dropout_week = w
                break
        cohort.truth.append(TruthRow(student, arch.name, dropout_week))
    return cohort


def write_truth(path, truth: Sequence[TruthRow]):
    rows = [(t.student_id, t.archetype, t.true_dropout_week) for t in truth]
    return write_csv(path, ("student_id", "archetype", "true_dropout_week"), rows)


def simulate_weekly_hazard(
    n_person_weeks: int,
    beta: float,
    base_hazard: float = 0.2,
    n_weeks: int = 10,
    seed: int = 0,
    exact_times: bool = True,
):
    """Person-week arrays for a single time-varying covariate.

    Each week a student draws ``z ~ N(0, 1)`` and carries the hazard rate
    ``base_hazard * exp(beta * z)`` through that week, so the week's dropout
    probability is ``1 - exp(-rate)``. With ``exact_times`` the dropout is
    stamped at its continuous time inside the week; otherwise at the week's
    end (grouped, heavily tied data). Students are added until
    ``n_person_weeks`` rows exist; the last one is censored at the cut.
    Returns ``(X, start, stop, event, student)``.
    """
    rng = np.random.default_rng(seed)
    z, start, stop, event, student = [], [], [], [], []
    sid = 0
    while len(z) < n_person_weeks:
        for week in range(1, n_weeks + 1):
            zi = rng.standard_normal()
            tau = rng.exponential(1.0 / (base_hazard * np.exp(beta * zi)))
            dead = tau < 1.0
            z.append(zi)
            start.append(week - 1.0)
            stop.append(week - 1.0 + tau if dead and exact_times else float(week))
            event.append(int(dead))
            student.append(sid)
            if dead or len(z) == n_person_weeks:
                break
        sid += 1
    return np.array(z)[:, None], np.array(start), np.array(stop), np.array(event), np.array(student)
