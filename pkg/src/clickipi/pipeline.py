"""Stage orchestration shared by the CLI subcommands.

``prepare`` runs ingest -> encode -> actions -> metrics in memory; the
``write_*`` helpers and ``run_pipeline`` turn a prepared corpus into the
on-disk artifacts.
"""

from __future__ import annotations

import logging
from collections import defaultdict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from . import actions, encode, ingest, metrics, survival
from .actions import DEFAULT_COSTS, DEFAULT_K, DEFAULT_N, DEFAULT_TAXONOMY, MatchCosts, Taxonomy
from .ingest import ClickEvent, VideoMeta
from .learn import features as feats
from .learn.tasks import TASK_DEFAULTS, TaskResult, run_task, task_config, write_task_reports
from .metrics import DEFAULT_IPI, EngagementRecord, IpiConfig
from .tables import read_csv, write_csv, write_json

log = logging.getLogger(__name__)

DEFAULT_NEXTCLICK_SESSIONS = 100
HIST_RANGE = (-12.0, 12.0)
HIST_WIDTH = 1.0


class PipelineError(ValueError):
    pass


@dataclass(frozen=True)
class Settings:
    """Every tunable of a run; defaults are the published values where one exists."""

    gap: float = ingest.DEFAULT_GAP
    end_tolerance: float = ingest.DEFAULT_END_TOLERANCE
    scroll_window: float = encode.DEFAULT_SCROLL_WINDOW
    n: int = DEFAULT_N
    k: int = DEFAULT_K
    costs: MatchCosts = DEFAULT_COSTS
    taxonomy: Taxonomy = DEFAULT_TAXONOMY
    ipi: IpiConfig = DEFAULT_IPI
    lam: float | None = None
    folds: int | None = None
    rare_threshold: int | None = None
    class_costs: object = None  # None keeps each task's default
    nextclick_cap: int = feats.DEFAULT_NEXTCLICK_CAP
    nextclick_sessions: int = DEFAULT_NEXTCLICK_SESSIONS
    seed: int = 0
    tasks: tuple[str, ...] = feats.TASKS
    modes: tuple[str, ...] = feats.MODES

    def task_config(self, task: str):
        overrides = dict(k_folds=self.folds, rare_threshold=self.rare_threshold, lam=self.lam, seed=self.seed)
        if self.class_costs is not None:
            overrides["class_costs"] = None if self.class_costs == "none" else self.class_costs
        return task_config(task, **overrides)

    def to_dict(self) -> dict:
        tasks = {}
        for t in feats.TASKS:
            c = self.task_config(t)
            tasks[t] = {
                "k_folds": c.k_folds,
                "rare_threshold": c.rare_threshold,
                "lambda": c.lam,
                "class_costs": c.class_costs,
                "positive_class": c.positive_class,
                "top_k": c.top_k,
            }
        return {
            "ingest": {"gap_seconds": self.gap, "end_pause_tolerance": self.end_tolerance},
            "encode": {"scroll_window": self.scroll_window},
            "actions": {
                "n": self.n,
                "k": self.k,
                "w_del": self.costs.w_del,
                "w_ins": self.costs.w_ins,
                "w_sub": self.costs.w_sub,
                "patterns": self.taxonomy.to_dict(),
            },
            "metrics": {
                **self.ipi.to_dict(),
                "vpp_edges": list(metrics.VPP_EDGES),
            },
            "learn": {
                "tasks": tasks,
                "ngram_sizes": list(feats.NGRAM_SIZES),
                "nextclick_cap": self.nextclick_cap,
                "nextclick_sessions": self.nextclick_sessions,
                "optimizer": {"gtol": 1e-6, "max_iter": 500},
            },
            "survival": {
                "covariates": list(survival.DEFAULT_COVARIATES),
                "newton_tol": survival.NEWTON_TOL,
                "newton_max_iter": survival.NEWTON_MAX_ITER,
            },
            "report": {"histogram_range": list(HIST_RANGE), "bin_width": HIST_WIDTH},
            "seed": self.seed,
        }


@dataclass
class Corpus:
    """Everything derived from one event log, before any model is fit."""

    meta: list[VideoMeta]
    sessions: list[ingest.VideoSession]
    sequences: list[encode.SymbolSequence]
    complete_ids: set[str]
    vectors: list[actions.ActionVector]
    thresholds: dict[str, float]
    session_records: list[EngagementRecord]
    video_records: list[EngagementRecord]  # complete sessions, one per (student, video)
    activity_records: list[EngagementRecord]  # every session, one per (student, video)
    trajectories: list[metrics.Trajectory]
    course_dropout: dict[str, bool]
    final_week: int
    dropped_duplicates: int = 0
    ngrams: list[tuple[str, int]] = field(default_factory=list)

    @property
    def lengths(self) -> dict[str, float | None]:
        return {s.video_id: s.video_length for s in self.sessions}

    def complete_sequences(self) -> list[encode.SymbolSequence]:
        return [q for q in self.sequences if q.session_id in self.complete_ids]


def course_dropouts(sessions: Sequence[ingest.VideoSession], meta: Sequence[VideoMeta], final_week: int) -> dict[str, bool]:
    """True for students with no viewing activity in the final course week."""
    week_of = {m.video_id: m.week_index for m in meta}
    active_last = {s.student_id for s in sessions if week_of.get(s.video_id) == final_week}
    return {student: student not in active_last for student in sorted({s.student_id for s in sessions})}


def prepare(events: Sequence[ClickEvent], meta: Sequence[VideoMeta], settings: Settings = Settings()) -> Corpus:
    if not events:
        raise PipelineError("event log is empty")
    if not meta:
        raise PipelineError("video metadata is required (lengths, weeks, course order)")
    events, dropped = ingest.drop_exact_duplicates(events)
    sessions = ingest.build_sessions(events, meta, settings.gap, settings.end_tolerance)
    complete, _ = ingest.filter_complete(sessions)
    complete_ids = {s.session_id for s in complete}
    if len(complete_ids) < 2:
        raise PipelineError("need at least 2 complete sessions to fit the High/Low medians")
    sequences = encode.encode_sessions(sessions, settings.scroll_window)
    vectors, thresholds = actions.score_corpus(sequences, settings.taxonomy, settings.n, settings.costs, complete_ids)
    lengths = {s.video_id: s.video_length for s in sessions}
    records = metrics.session_records(sequences, vectors, lengths, settings.ipi, complete_ids)

    levels = {v.session_id: v.levels for v in vectors}
    complete_seqs = [q for q in sequences if q.session_id in complete_ids]
    common = dict(config=settings.ipi, taxonomy=settings.taxonomy, n=settings.n, costs=settings.costs, session_levels=levels)
    video_recs = metrics.video_records(complete_seqs, thresholds, lengths, **common)
    activity_recs = metrics.video_records(sequences, thresholds, lengths, **common)
    final_week = max(m.week_index for m in meta)
    return Corpus(
        meta=list(meta),
        sessions=sessions,
        sequences=sequences,
        complete_ids=complete_ids,
        vectors=vectors,
        thresholds=thresholds,
        session_records=records,
        video_records=video_recs,
        activity_records=activity_recs,
        trajectories=metrics.build_trajectories(video_recs, meta),
        course_dropout=course_dropouts(sessions, meta, final_week),
        final_week=final_week,
        dropped_duplicates=dropped,
        ngrams=actions.mine_ngrams(complete_seqs, settings.n, settings.k),
    )


# --------------------------------------------------------------------------
# learning tasks


def task_instances(corpus: Corpus, task: str, mode: str, settings: Settings) -> list[feats.FeatureVector]:
    levels = {v.session_id: v.levels for v in corpus.vectors}
    eng = {r.session_id: r.engagement_level for r in corpus.session_records}
    if task == "engagement":
        return feats.extract_features(
            task, mode, sequences=corpus.complete_sequences(), engagement_levels=eng, action_levels=levels
        )
    if task == "nextclick":
        pool = corpus.complete_sequences()
        if len(pool) > settings.nextclick_sessions:
            rng = np.random.default_rng(settings.seed)
            keep = np.sort(rng.choice(len(pool), size=settings.nextclick_sessions, replace=False))
            pool = [pool[i] for i in keep]
        return feats.extract_features(
            task, mode, sequences=pool, cap=settings.nextclick_cap, thresholds=corpus.thresholds,
            taxonomy=settings.taxonomy, n=settings.n, costs=settings.costs,
        )
    if task == "invideo":
        dropout = {s.session_id: not s.has_end_pause for s in corpus.sessions}
        return feats.extract_features(
            task, mode, sequences=corpus.sequences, dropout=dropout, engagement_levels=eng, action_levels=levels
        )
    if task == "course":
        per_student = defaultdict(list)
        for q in corpus.complete_sequences():
            per_student[q.student_id].append(levels[q.session_id])
        student_levels = {s: feats.majority_levels(rows) for s, rows in per_student.items()}
        return feats.extract_features(
            task, mode, trajectories=corpus.trajectories, dropout=corpus.course_dropout, student_levels=student_levels
        )
    raise PipelineError(f"unknown task {task!r}")


def run_learning(corpus: Corpus, settings: Settings) -> list[TaskResult]:
    results = []
    for task in settings.tasks:
        for mode in settings.modes:
            instances = task_instances(corpus, task, mode, settings)
            log.info("task %s/%s: %d instances", task, mode, len(instances))
            results.append(run_task(task, instances, mode, settings.task_config(task)))
    return results


# --------------------------------------------------------------------------
# survival and report


def person_weeks(corpus: Corpus) -> list[survival.PersonWeek]:
    return survival.build_person_weeks(corpus.activity_records, corpus.meta, corpus.final_week)


def partitions(corpus: Corpus, activity: Mapping[str, str] | None = None) -> dict[str, dict[str, list[float]]]:
    """IPI values per comparison group; first listed group is the 'a' side of the z-test."""
    out: dict[str, dict[str, list[float]]] = {}
    eng = {"High": [], "Low": []}
    for r in corpus.session_records:
        if r.session_id in corpus.complete_ids:
            eng[r.engagement_level].append(r.ipi)
    out["engagement"] = eng
    invideo = {"non_dropout": [], "dropout": []}
    for r in corpus.session_records:
        invideo["non_dropout" if r.session_id in corpus.complete_ids else "dropout"].append(r.ipi)
    out["invideo"] = invideo
    course = {"non_dropout": [], "dropout": []}
    for r in corpus.activity_records:
        course["dropout" if corpus.course_dropout[r.student_id] else "non_dropout"].append(r.ipi)
    out["course"] = course
    if activity is not None:
        groups = {"Active": [], "Viewers": []}
        for r in corpus.activity_records:
            if r.student_id in activity:
                groups[activity[r.student_id]].append(r.ipi)
        out["viewers"] = groups
    return out


def read_activity(path) -> dict[str, str]:
    """``student_id,exercises`` table: more than 0 exercises -> Active, else Viewers."""
    out = {}
    for row in read_csv(path):
        try:
            out[row["student_id"]] = "Active" if float(row["exercises"]) > 0 else "Viewers"
        except (KeyError, ValueError) as exc:
            raise PipelineError(f"{path}: activity rows need student_id and numeric exercises ({exc})") from None
    return out


def histogram_rows(groups: Mapping[str, Mapping[str, Sequence[float]]], lo=HIST_RANGE[0], hi=HIST_RANGE[1], width=HIST_WIDTH):
    n_bins = int(round((hi - lo) / width))
    if n_bins < 1 or not np.isclose(lo + n_bins * width, hi):
        raise PipelineError("histogram range must be a whole number of bins")
    edges = lo + width * np.arange(n_bins + 1)
    hist, summary = [], []
    for part, by_group in groups.items():
        for group, values in by_group.items():
            values = np.asarray(values, dtype=np.float64)
            counts, _ = np.histogram(values, bins=edges)
            total = len(values)
            for a, b, c in zip(edges, edges[1:], counts):
                hist.append((part, group, float(a), float(b), int(c), c / total if total else 0.0))
            outside = int(((values < lo) | (values > hi)).sum())
            mean = float(values.mean()) if total else None
            std = float(values.std(ddof=1)) if total > 1 else None
            summary.append((part, group, total, mean, std, outside))
    return hist, summary


def ztests(groups: Mapping[str, Mapping[str, Sequence[float]]]) -> list[tuple[str, str, survival.ZTest]]:
    out = []
    for part, by_group in groups.items():
        (name_a, a), (name_b, b) = list(by_group.items())
        if len(a) < 2 or len(b) < 2:
            log.warning("z-test %s skipped: a group has fewer than 2 values", part)
            continue
        out.append((f"{part}:{name_a}", f"{part}:{name_b}", survival.two_sample_z(a, b)))
    return out


def write_report(out_dir, groups, lo=HIST_RANGE[0], hi=HIST_RANGE[1], width=HIST_WIDTH) -> None:
    out_dir = Path(out_dir)
    hist, summary = histogram_rows(groups, lo, hi, width)
    write_csv(out_dir / "ipi_histogram.csv", ("partition", "group", "bin_lo", "bin_hi", "count", "fraction"), hist)
    write_csv(out_dir / "ipi_summary.csv", ("partition", "group", "n", "mean", "std", "n_outside"), summary)
    survival.write_ztests(out_dir / "ztests.csv", ztests(groups))


def read_partitions(run_dir, activity: Mapping[str, str] | None = None) -> dict[str, dict[str, list[float]]]:
    """Rebuild the report groups from a pipeline output directory."""
    run_dir = Path(run_dir)
    complete = {r["session_id"] for r in read_csv(run_dir / "sessions.csv") if r["has_end_pause"] == "true"}
    session_rows = read_csv(run_dir / "metrics.csv")
    eng = {"High": [], "Low": []}
    invideo = {"non_dropout": [], "dropout": []}
    for r in session_rows:
        if r["session_id"] in complete:
            eng[r["engagement_level"]].append(float(r["ipi"]))
        invideo["non_dropout" if r["session_id"] in complete else "dropout"].append(float(r["ipi"]))
    dropout = {r["student_id"]: r["dropout"] == "true" for r in read_csv(run_dir / "course_labels.csv")}
    course = {"non_dropout": [], "dropout": []}
    viewers = {"Active": [], "Viewers": []}
    for r in read_csv(run_dir / "video_activity.csv"):
        course["dropout" if dropout[r["student_id"]] else "non_dropout"].append(float(r["ipi"]))
        if activity is not None and r["student_id"] in activity:
            viewers[activity[r["student_id"]]].append(float(r["ipi"]))
    out = {"engagement": eng, "invideo": invideo, "course": course}
    if activity is not None:
        out["viewers"] = viewers
    return out


# --------------------------------------------------------------------------
# artifacts

VIDEO_HEADER = ("student_id", "video_id", "engagement_seconds", "engagement_level", "vpp_pct", "vpp_bin", "ipi", "ipi_bin")


def write_video_records(path, records: Sequence[EngagementRecord]):
    rows = [
        (r.student_id, r.video_id, r.engagement_seconds, r.engagement_level, r.play_proportion_pct, r.vpp_bin, r.ipi, r.ipi_bin)
        for r in records
    ]
    return write_csv(path, VIDEO_HEADER, rows)


def write_corpus(out_dir, corpus: Corpus) -> None:
    out = Path(out_dir)
    ingest.write_sessions(out / "sessions.csv", corpus.sessions)
    encode.write_sequences(out / "sequences.csv", corpus.sequences)
    encode.write_dwell(out / "dwell.csv", corpus.sequences)
    write_csv(out / "ngrams.csv", ("rank", "ngram", "count"), [(i, g, c) for i, (g, c) in enumerate(corpus.ngrams, 1)])
    actions.write_actions(out / "actions.csv", corpus.vectors)
    write_json(out / "thresholds.json", corpus.thresholds)
    metrics.write_metrics(out / "metrics.csv", corpus.session_records)
    write_video_records(out / "video_metrics.csv", corpus.video_records)
    write_video_records(out / "video_activity.csv", corpus.activity_records)
    metrics.write_trajectories(out / "trajectories.csv", corpus.trajectories)
    write_csv(out / "course_labels.csv", ("student_id", "dropout"), sorted(corpus.course_dropout.items()))


def run_pipeline(
    events: Sequence[ClickEvent],
    meta: Sequence[VideoMeta],
    out_dir,
    settings: Settings = Settings(),
    activity: Mapping[str, str] | None = None,
) -> tuple[Corpus, list[TaskResult], survival.CoxModel]:
    out = Path(out_dir)
    corpus = prepare(events, meta, settings)
    write_corpus(out, corpus)

    rows = person_weeks(corpus)
    survival.write_person_weeks(out / "person_weeks.csv", rows)
    cox = survival.fit_cox(rows)
    survival.write_hazards(out / "hazards.csv", cox)

    write_report(out / "report", partitions(corpus, activity))

    results = run_learning(corpus, settings) if settings.tasks else []
    if results:
        write_task_reports(out / "learn", results)
    write_json(out / "config.json", settings.to_dict())
    return corpus, results, cox


__all__ = [
    "Corpus",
    "PipelineError",
    "Settings",
    "TASK_DEFAULTS",
    "course_dropouts",
    "histogram_rows",
    "partitions",
    "person_weeks",
    "prepare",
    "read_activity",
    "read_partitions",
    "run_learning",
    "run_pipeline",
    "task_instances",
    "write_corpus",
    "write_report",
    "ztests",
]
