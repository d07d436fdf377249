"""Information Processing Index, engagement, play proportion and trajectories."""

from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

from .actions import CATEGORIES, DEFAULT_TAXONOMY, MatchCosts, Taxonomy, apply_levels, score_stream
from .binning import HIGH, LOW, equal_frequency_split, level_for, median_threshold
from .encode import SEEK_SYMBOLS, SymbolSequence, encode_session
from .ingest import VideoMeta, VideoSession
from .tables import read_json, write_csv

DEFAULT_IPI_WEIGHTS = {
    "ClearConcept": 3.0,
    "Rewatch": 2.0,
    "SlowWatching": 1.0,
    "CheckbackReference": 0.0,
    "PlayrateTransition": -1.0,
    "FastWatching": -2.0,
    "Skipping": -3.0,
}

BIN_SYMBOLS = {"VeryLow": "VL", "Low": "L", "High": "H", "VeryHigh": "VH"}
LEVEL_SYMBOLS = {HIGH: "H", LOW: "L"}
VPP_EDGES = (50.0, 100.0, 150.0)


class MetricsError(ValueError):
    pass


@dataclass(frozen=True)
class IpiConfig:
    weights: Mapping[str, float] = field(default_factory=lambda: dict(DEFAULT_IPI_WEIGHTS))
    # VeryLow < low_edge <= Low <= mid_edge < High <= high_edge < VeryHigh
    low_edge: float = -1.0
    mid_edge: float = 1.0
    high_edge: float = 3.0

    def __post_init__(self):
        missing = set(CATEGORIES) - set(self.weights)
        extra = set(self.weights) - set(CATEGORIES)
        if missing or extra:
            raise MetricsError(f"IPI weights must cover exactly the 7 categories (missing {sorted(missing)}, extra {sorted(extra)})")
        if not self.weights["Skipping"] < 0 < self.weights["ClearConcept"]:
            raise MetricsError("Skipping weight must be negative and ClearConcept weight positive")
        if not self.low_edge <= self.mid_edge <= self.high_edge:
            raise MetricsError("IPI bin edges must be non-decreasing")

    @classmethod
    def from_file(cls, path) -> "IpiConfig":
        payload = read_json(path)
        weights = dict(DEFAULT_IPI_WEIGHTS)
        weights.update({k: float(v) for k, v in payload.get("weights", {}).items()})
        edges = payload.get("edges", [-1.0, 1.0, 3.0])
        return cls(weights, *map(float, edges))

    def to_dict(self) -> dict:
        return {
            "weights": {c: self.weights[c] for c in CATEGORIES},
            "edges": [self.low_edge, self.mid_edge, self.high_edge],
        }


DEFAULT_IPI = IpiConfig()


def compute_ipi(levels, config: IpiConfig = DEFAULT_IPI) -> float:
    """Signed weight sum: a category adds its weight when High and subtracts it when Low."""
    levels = getattr(levels, "levels", levels)
    total = 0.0
    for cat in CATEGORIES:
        level = levels.get(cat)
        if level == HIGH:
            total += config.weights[cat]
        elif level == LOW:
            total -= config.weights[cat]
        else:
            raise MetricsError(f"category {cat} has no High/Low level")
    return total


def bin_ipi(ipi: float, config: IpiConfig = DEFAULT_IPI) -> str:
    if ipi < config.low_edge:
        return "VeryLow"
    if ipi <= config.mid_edge:
        return "Low"
    if ipi <= config.high_edge:
        return "High"
    return "VeryHigh"


def bin_vpp(pct: float) -> str:
    lo, mid, hi = VPP_EDGES
    if pct < lo:
        return "VeryLow"
    if pct < mid:
        return "Low"
    if pct < hi:
        return "High"
    return "VeryHigh"


@dataclass(frozen=True)
class PlayStats:
    play_seconds: float
    pause_seconds: float
    seek_seconds: float
    mean_rate: float  # duration-weighted over play intervals; 0 when nothing played

    @property
    def engagement(self) -> float:
        if self.play_seconds <= 0:
            return 0.0
        return (self.play_seconds + self.pause_seconds + self.seek_seconds) * self.mean_rate


def play_stats(seq: SymbolSequence) -> PlayStats:
    """Split the session's wall time into play, pause and post-seek intervals.

    The interval after a seek symbol is seek dwell whatever the player state;
    otherwise it is play time after a Pl (until the next Pa) and pause time
    before the first Pl or after a Pa.
    """
    play = pause = seek = weighted = 0.0
    playing = False
    for sym, dwell, rate in zip(seq.symbols, seq.dwell, seq.rates):
        if sym == "Pl":
            playing = True
        elif sym == "Pa":
            playing = False
        if sym in SEEK_SYMBOLS:
            seek += dwell
        elif playing:
            play += dwell
            weighted += dwell * rate
        else:
            pause += dwell
    mean_rate = weighted / play if play > 0 else 0.0
    return PlayStats(play, pause, seek, mean_rate)


def _as_sequence(obj) -> SymbolSequence:
    if isinstance(obj, VideoSession):
        return encode_session(obj)
    return obj


def engagement(session) -> float:
    """(play + pause + post-seek dwell seconds) x duration-weighted mean playrate."""
    return play_stats(_as_sequence(session)).engagement


def video_play_proportion(session, video_length: float) -> float:
    """Percent of the video length played, scaled by the mean playrate."""
    if video_length is None or video_length <= 0:
        raise MetricsError(f"video_length must be positive, got {video_length}")
    stats = play_stats(_as_sequence(session))
    if stats.play_seconds <= 0:
        return 0.0
    return stats.play_seconds / video_length * 100.0 * stats.mean_rate


# --------------------------------------------------------------------------
# per (student, video) records and trajectories


@dataclass
class EngagementRecord:
    session_id: str
    student_id: str
    video_id: str
    engagement_seconds: float
    play_proportion_pct: float
    ipi: float
    levels: dict[str, str]
    engagement_level: str = ""
    vpp_bin: str = ""
    ipi_bin: str = ""


def _concat(sequences: Sequence[SymbolSequence]) -> SymbolSequence:
    if len(sequences) == 1:
        return sequences[0]
    first = sequences[0]
    return SymbolSequence(
        "+".join(q.session_id for q in sequences),
        tuple(s for q in sequences for s in q.symbols),
        tuple(d for q in sequences for d in q.dwell),
        tuple(r for q in sequences for r in q.rates),
        first.student_id,
        first.video_id,
        False,
    )


def assign_engagement_levels(records: Sequence[EngagementRecord], reference: Iterable[str] | None = None) -> None:
    """Per-video median split of engagement seconds (in place).

    Medians are fitted on records whose session ids are in ``reference`` when
    given; a video with a single fitted record keeps it Low.
    """
    ref = set(reference) if reference is not None else None
    by_video: dict[str, list[EngagementRecord]] = defaultdict(list)
    for r in records:
        by_video[r.video_id].append(r)
    for video_records in by_video.values():
        fit = [r for r in video_records if ref is None or r.session_id in ref] or video_records
        threshold = median_threshold(r.engagement_seconds for r in fit)
        for r in video_records:
            r.engagement_level = level_for(r.engagement_seconds, threshold)


def session_records(
    sequences: Sequence[SymbolSequence],
    vectors,
    lengths: Mapping[str, float | None],
    config: IpiConfig = DEFAULT_IPI,
    reference: Iterable[str] | None = None,
) -> list[EngagementRecord]:
    """One record per session, from encoded sequences and their action vectors."""
    levels = {v.session_id: v.levels for v in vectors}
    records = []
    for q in sequences:
        stats = play_stats(q)
        length = lengths.get(q.video_id)
        vpp = 0.0 if not length or stats.play_seconds <= 0 else stats.play_seconds / length * 100.0 * stats.mean_rate
        ipi = compute_ipi(levels[q.session_id], config)
        records.append(
            EngagementRecord(q.session_id, q.student_id, q.video_id, stats.engagement, vpp, ipi,
                             dict(levels[q.session_id]), vpp_bin=bin_vpp(vpp), ipi_bin=bin_ipi(ipi, config))
        )
    assign_engagement_levels(records, reference)
    return records


def video_records(
    sequences: Sequence[SymbolSequence],
    thresholds: Mapping[str, float],
    lengths: Mapping[str, float | None],
    config: IpiConfig = DEFAULT_IPI,
    taxonomy: Taxonomy = DEFAULT_TAXONOMY,
    n: int = 4,
    costs: MatchCosts = MatchCosts(),
    session_levels: Mapping[str, Mapping[str, str]] | None = None,
) -> list[EngagementRecord]:
    """One record per (student, video), merging repeat sessions.

    Engagement seconds add up, play proportion is recomputed over the summed
    play time, and the IPI is recomputed on the concatenated sequence using
    the corpus thresholds. Single-session pairs reuse ``session_levels`` when
    supplied.
    """
    grouped: dict[tuple[str, str], list[SymbolSequence]] = defaultdict(list)
    for q in sequences:
        grouped[(q.student_id, q.video_id)].append(q)
    records = []
    for (student, video), seqs in sorted(grouped.items()):
        stats = [play_stats(q) for q in seqs]
        eng = sum(s.engagement for s in stats)
        play = sum(s.play_seconds for s in stats)
        weighted = sum(s.play_seconds * s.mean_rate for s in stats)
        length = lengths.get(video)
        vpp = 0.0 if not length or play <= 0 else play / length * 100.0 * (weighted / play)
        merged = _concat(seqs)
        if len(seqs) == 1 and session_levels is not None and merged.session_id in session_levels:
            levels = dict(session_levels[merged.session_id])
        else:
            levels = apply_levels(score_stream(merged, taxonomy, n, costs), thresholds)
        ipi = compute_ipi(levels, config)
        records.append(
            EngagementRecord(merged.session_id, student, video, eng, vpp, ipi, levels,
                             vpp_bin=bin_vpp(vpp), ipi_bin=bin_ipi(ipi, config))
        )
    assign_engagement_levels(records)
    return records


@dataclass(frozen=True)
class Trajectory:
    student_id: str
    video_ids: tuple[str, ...]
    engagement: tuple[str, ...]
    vpp: tuple[str, ...]
    ipi: tuple[str, ...]

    def __post_init__(self):
        if not (len(self.video_ids) == len(self.engagement) == len(self.vpp) == len(self.ipi)):
            raise MetricsError(f"trajectory strings of {self.student_id} are misaligned")

    def __len__(self) -> int:
        return len(self.video_ids)


def build_trajectories(records: Sequence[EngagementRecord], meta: Sequence[VideoMeta]) -> list[Trajectory]:
    """Per-student H/L, VL/L/H/VH strings in course order (one symbol per watched video)."""
    order = {m.video_id: m.order_in_course for m in meta}
    by_student: dict[str, dict[str, EngagementRecord]] = defaultdict(dict)
    for r in records:
        if r.video_id in by_student[r.student_id]:
            raise MetricsError(f"student {r.student_id} has two records for video {r.video_id}; aggregate first")
        by_student[r.student_id][r.video_id] = r
    out = []
    for student in sorted(by_student):
        recs = sorted(by_student[student].values(), key=lambda r: (order.get(r.video_id, float("inf")), r.video_id))
        out.append(
            Trajectory(
                student,
                tuple(r.video_id for r in recs),
                tuple(LEVEL_SYMBOLS[r.engagement_level] for r in recs),
                tuple(BIN_SYMBOLS[r.vpp_bin] for r in recs),
                tuple(BIN_SYMBOLS[r.ipi_bin] for r in recs),
            )
        )
    return out


def write_metrics(path, records: Sequence[EngagementRecord]):
    header = ("session_id", "engagement_seconds", "engagement_level", "vpp_pct", "vpp_bin", "ipi", "ipi_bin")
    rows = [
        (r.session_id, r.engagement_seconds, r.engagement_level, r.play_proportion_pct, r.vpp_bin, r.ipi, r.ipi_bin)
        for r in records
    ]
    return write_csv(path, header, rows)


def write_trajectories(path, trajectories: Sequence[Trajectory]):
    rows = [
        (t.student_id, len(t), " ".join(t.engagement), " ".join(t.vpp), " ".join(t.ipi))
        for t in trajectories
    ]
    return write_csv(path, ("student_id", "n_videos", "eng_traj", "vpp_traj", "ipi_traj"), rows)
