"""Sparse feature extraction for the four prediction tasks."""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np
from scipy import sparse

from ..actions import (
    CATEGORIES,
    COLUMN_KEYS,
    DEFAULT_COSTS,
    DEFAULT_TAXONOMY,
    MatchCosts,
    Taxonomy,
    apply_levels,
    ngrams,
    score_prefixes,
)
from ..binning import HIGH, LOW, level_for, median_threshold
from ..encode import SYMBOLS, SymbolSequence, as_tokens
from ..metrics import Trajectory, play_stats

TASKS = ("engagement", "nextclick", "invideo", "course")
MODES = ("raw", "summarized")
NGRAM_SIZES = (4, 5)
DEFAULT_NEXTCLICK_CAP = 200


class FeatureError(ValueError):
    pass


@dataclass
class FeatureVector:
    instance_id: str
    group_id: str
    features: dict[str, float]
    label: str

    def __post_init__(self):
        if not self.group_id:
            raise FeatureError(f"instance {self.instance_id} has an empty group id")
        for name, value in self.features.items():
            if not np.isfinite(value):
                raise FeatureError(f"instance {self.instance_id}: feature {name} is not finite")


# --------------------------------------------------------------------------
# feature families


def sequence_features(tokens: Sequence[str], prefix: str = "") -> dict[str, float]:
    """n-gram (4 and 5) counts plus sequence length."""
    feats: dict[str, float] = {}
    for n in NGRAM_SIZES:
        for gram, count in Counter(ngrams(tokens, n)).items():
            feats[f"{prefix}ng{n}={''.join(gram)}"] = float(count)
    feats[f"{prefix}length"] = float(len(tokens))
    return feats


def proportion_features(tokens: Sequence[str], alphabet: Sequence[str] = SYMBOLS, prefix: str = "") -> dict[str, float]:
    if not tokens:
        return {}
    counts = Counter(tokens)
    return {f"{prefix}prop_{s}": counts[s] / len(tokens) for s in alphabet if counts[s]}


def summarized_features(levels: Mapping[str, str]) -> dict[str, float]:
    """One indicator per category, e.g. ``rewatch=High``."""
    return {f"{COLUMN_KEYS[c]}={levels[c]}": 1.0 for c in CATEGORIES}


def _clicks(seq: SymbolSequence) -> SymbolSequence:
    return seq.clicks() if isinstance(seq, SymbolSequence) else seq


# --------------------------------------------------------------------------
# per task instances


def engagement_instances(
    sequences: Sequence[SymbolSequence],
    engagement_levels: Mapping[str, str],
    mode: str = "raw",
    action_levels: Mapping[str, Mapping[str, str]] | None = None,
) -> list[FeatureVector]:
    """One instance per session; label is the session's High/Low engagement."""
    out = []
    for q in sequences:
        if mode == "raw":
            feats = sequence_features(_clicks(q).symbols)
        else:
            feats = summarized_features(action_levels[q.session_id])
        out.append(FeatureVector(q.session_id, q.student_id, feats, engagement_levels[q.session_id]))
    return out


def _prefix_engagement(seq: SymbolSequence, i: int) -> float:
    # interval after the last prefix symbol ends at instant i, so it is excluded
    if i <= 1:
        return 0.0
    return play_stats(seq.prefix(i - 1)).engagement


def nextclick_instances(
    sequences: Sequence[SymbolSequence],
    mode: str = "raw",
    cap: int = DEFAULT_NEXTCLICK_CAP,
    thresholds: Mapping[str, float] | None = None,
    taxonomy: Taxonomy = DEFAULT_TAXONOMY,
    n: int = 4,
    costs: MatchCosts = DEFAULT_COSTS,
) -> list[FeatureVector]:
    """One instance per position ``i >= 1``: features of ``symbols[:i]``, label ``symbols[i]``.

    Prefix engagement is measured up to instant ``i - 1`` and split at its
    median over all instances. Summarized mode scores each prefix against the
    corpus thresholds.
    """
    if mode == "summarized" and thresholds is None:
        raise FeatureError("summarized next-click features need corpus thresholds")
    raw = []
    for q in sequences:
        clicks = _clicks(q)
        positions = list(range(1, min(len(clicks), cap + 1)))
        if not positions:
            continue
        prefix_levels = None
        if mode == "summarized":
            prefix_levels = score_prefixes(clicks, taxonomy, n, costs, positions)
        for k, i in enumerate(positions):
            prefix = clicks.symbols[:i]
            feats = proportion_features(prefix)
            if mode == "raw":
                feats.update(sequence_features(prefix))
            else:
                feats.update(summarized_features(apply_levels(prefix_levels[k], thresholds)))
            raw.append((f"{q.session_id}@{i}", q.student_id, feats, clicks.symbols[i], _prefix_engagement(clicks, i)))
    if not raw:
        return []
    threshold = median_threshold(r[4] for r in raw)
    out = []
    for iid, gid, feats, label, eng in raw:
        feats[f"engagement={level_for(eng, threshold)}"] = 1.0
        out.append(FeatureVector(iid, gid, feats, label))
    return out


def last_click_dwell(seq: SymbolSequence) -> float:
    """Seconds between the last user click and the end of the session.

    For a completing session this is the time until the automatic end pause;
    a session that was abandoned has no logged end and yields 0.
    """
    if seq.auto_end_pause and len(seq) >= 2:
        return seq.dwell[-2]
    return 0.0


def invideo_instances(
    sequences: Sequence[SymbolSequence],
    dropout: Mapping[str, bool],
    engagement_levels: Mapping[str, str],
    mode: str = "raw",
    action_levels: Mapping[str, Mapping[str, str]] | None = None,
) -> list[FeatureVector]:
    """One instance per session; label ``"1"`` when the session has no end pause."""
    dwell = {q.session_id: last_click_dwell(q) for q in sequences}
    threshold = median_threshold(dwell.values()) if dwell else 0.0
    out = []
    for q in sequences:
        clicks = _clicks(q).symbols
        if not clicks:
            continue
        feats = proportion_features(clicks)
        if mode == "raw":
            feats.update(sequence_features(clicks))
        else:
            feats.update(summarized_features(action_levels[q.session_id]))
        feats[f"engagement={engagement_levels[q.session_id]}"] = 1.0
        feats[f"last_click={clicks[-1]}"] = 1.0
        feats[f"dwell={level_for(dwell[q.session_id], threshold)}"] = 1.0
        out.append(FeatureVector(q.session_id, q.student_id, feats, "1" if dropout[q.session_id] else "0"))
    return out


TRAJECTORY_ALPHABETS = {"eng": ("H", "L"), "vpp": ("VL", "L", "H", "VH"), "ipi": ("VL", "L", "H", "VH")}


def trajectory_features(traj: Trajectory, mode: str = "raw") -> dict[str, float]:
    """Features of one student's three trajectories.

    n-grams and length use the videos before the last one watched; the last
    video contributes its own bins; proportions cover the whole trajectory.
    """
    feats: dict[str, float] = {}
    for key, symbols in (("eng", traj.engagement), ("vpp", traj.vpp), ("ipi", traj.ipi)):
        if mode == "raw":
            head = symbols[:-1]
            for n in NGRAM_SIZES:
                for gram, count in Counter(ngrams(head, n)).items():
                    feats[f"{key}_ng{n}={' '.join(gram)}"] = float(count)
        feats[f"{key}_last={symbols[-1]}"] = 1.0
        feats.update(proportion_features(symbols, TRAJECTORY_ALPHABETS[key], prefix=f"{key}_"))
    if mode == "raw":
        feats["traj_length"] = float(len(traj) - 1)
    return feats


def majority_levels(level_rows: Iterable[Mapping[str, str]]) -> dict[str, str]:
    """Per category: High when more than half of the rows are High."""
    rows = list(level_rows)
    return {c: HIGH if sum(r[c] == HIGH for r in rows) * 2 > len(rows) else LOW for c in CATEGORIES}


def course_instances(
    trajectories: Sequence[Trajectory],
    dropout: Mapping[str, bool],
    mode: str = "raw",
    student_levels: Mapping[str, Mapping[str, str]] | None = None,
) -> list[FeatureVector]:
    """One instance per student; label ``"1"`` for a course dropout."""
    out = []
    for t in trajectories:
        if not len(t):
            continue
        feats = trajectory_features(t, mode)
        if mode == "summarized":
            feats.update(summarized_features(student_levels[t.student_id]))
        out.append(FeatureVector(t.student_id, t.student_id, feats, "1" if dropout[t.student_id] else "0"))
    return out


def extract_features(task: str, mode: str = "raw", **inputs) -> list[FeatureVector]:
    """Dispatch to the task's instance builder."""
    if task not in TASKS:
        raise FeatureError(f"unknown task {task!r}; expected one of {TASKS}")
    if mode not in MODES:
        raise FeatureError(f"unknown mode {mode!r}; expected one of {MODES}")
    builder = {
        "engagement": engagement_instances,
        "nextclick": nextclick_instances,
        "invideo": invideo_instances,
        "course": course_instances,
    }[task]
    return builder(mode=mode, **inputs)


# --------------------------------------------------------------------------
# vectorization


def document_frequency(vectors: Iterable[FeatureVector]) -> Counter:
    df: Counter = Counter()
    for v in vectors:
        df.update(name for name, value in v.features.items() if value != 0)
    return df


def prune_rare(train: Sequence[FeatureVector], threshold: int) -> list[str]:
    """Feature names seen in at least ``threshold`` training instances, sorted."""
    if threshold < 1:
        raise FeatureError("rare-feature threshold must be >= 1")
    df = document_frequency(train)
    return sorted(name for name, count in df.items() if count >= threshold)


@dataclass
class FeatureSpace:
    names: list[str]
    index: dict[str, int] = field(init=False)

    def __post_init__(self):
        self.index = {name: i for i, name in enumerate(self.names)}

    def __len__(self) -> int:
        return len(self.names)

    def transform(self, vectors: Sequence[FeatureVector]) -> sparse.csr_matrix:
        """Rows of ``vectors`` over this space; unknown features are dropped."""
        indptr = [0]
        indices: list[int] = []
        data: list[float] = []
        for v in vectors:
            for name in sorted(v.features):
                j = self.index.get(name)
                if j is not None:
                    indices.append(j)
                    data.append(v.features[name])
            indptr.append(len(indices))
        return sparse.csr_matrix(
            (np.asarray(data, dtype=np.float64), np.asarray(indices, dtype=np.int64), np.asarray(indptr)),
            shape=(len(vectors), len(self.names)),
        )
