"""Cross-validated runs of the prediction tasks."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from ..tables import write_csv
from .evaluation import EvalReport, evaluate, grouped_cv
from .features import FeatureSpace, FeatureVector, prune_rare
from .logreg import DEFAULT_LAMBDA, LogRegModel, train_logreg

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class TaskConfig:
    k_folds: int
    rare_threshold: int
    lam: float = DEFAULT_LAMBDA
    class_costs: object = None  # None, "balanced" or {class: cost}
    positive_class: str | None = None
    seed: int = 0
    top_k: int = 10


TASK_DEFAULTS = {
    "engagement": TaskConfig(k_folds=10, rare_threshold=2, positive_class="Low"),
    "nextclick": TaskConfig(k_folds=5, rare_threshold=5),
    "invideo": TaskConfig(k_folds=10, rare_threshold=2, class_costs="balanced", positive_class="1"),
    "course": TaskConfig(k_folds=5, rare_threshold=5, class_costs="balanced", positive_class="1"),
}


def task_config(task: str, **overrides) -> TaskConfig:
    overrides = {k: v for k, v in overrides.items() if v is not None}
    return replace(TASK_DEFAULTS[task], **overrides)


@dataclass
class FoldResult:
    fold: int
    report: EvalReport
    n_train: int
    n_features: int


@dataclass
class TaskResult:
    task: str
    mode: str
    folds: list[FoldResult]
    mean: dict[str, float | None]
    model: LogRegModel
    top_features: list[tuple[str, int, str, float]] = field(default_factory=list)
    majority_accuracy: float = float("nan")


def _fit(train: Sequence[FeatureVector], config: TaskConfig) -> tuple[FeatureSpace, LogRegModel]:
    space = FeatureSpace(prune_rare(train, config.rare_threshold))
    X = space.transform(train)
    model = train_logreg(
        X,
        [v.label for v in train],
        lam=config.lam,
        class_costs=config.class_costs,
        seed=config.seed,
        feature_names=space.names,
    )
    return space, model


def _mean(values: list) -> float | None:
    values = [v for v in values if v is not None]
    return float(np.mean(values)) if values else None


def run_task(task: str, instances: Sequence[FeatureVector], mode: str, config: TaskConfig) -> TaskResult:
    """Grouped CV (prune -> train -> evaluate per fold), then a full-data fit for top features."""
    if not instances:
        raise ValueError(f"task {task}: no instances")
    folds = grouped_cv([v.group_id for v in instances], config.k_folds, config.seed)
    results = []
    for f in range(config.k_folds):
        train = [v for v, k in zip(instances, folds) if k != f]
        test = [v for v, k in zip(instances, folds) if k == f]
        train_groups = {v.group_id for v in train}
        if train_groups & {v.group_id for v in test}:
            raise AssertionError(f"fold {f}: student leaked between train and test")
        if len({v.label for v in train}) < 2:
            log.warning("task %s fold %d: single-class training fold skipped", task, f)
            continue
        space, model = _fit(train, config)
        pred = model.predict(space.transform(test))
        report = evaluate(pred, [v.label for v in test], config.positive_class)
        results.append(FoldResult(f, report, len(train), len(space)))
    if not results:
        raise ValueError(f"task {task}: every fold had a single-class training set")

    mean = {
        "accuracy": _mean([r.report.accuracy for r in results]),
        "kappa": _mean([r.report.kappa for r in results]),
        "fnr": _mean([r.report.false_negative_rate for r in results]),
    }
    _, model = _fit(instances, config)
    top = [
        (cls, rank, name, weight)
        for cls in model.classes
        for rank, (name, weight) in enumerate(model.top_features(cls, config.top_k), start=1)
    ]
    labels = [v.label for v in instances]
    majority = max(labels.count(c) for c in set(labels)) / len(labels)
    return TaskResult(task, mode, results, mean, model, top, majority)


METRICS_HEADER = ("task", "mode", "fold", "accuracy", "kappa", "fnr")


def metrics_rows(result: TaskResult) -> list[tuple]:
    rows = [
        (result.task, result.mode, r.fold, r.report.accuracy, r.report.kappa, r.report.false_negative_rate)
        for r in result.folds
    ]
    rows.append((result.task, result.mode, "mean", result.mean["accuracy"], result.mean["kappa"], result.mean["fnr"]))
    return rows


def write_task_reports(out_dir, results: Sequence[TaskResult]) -> None:
    from pathlib import Path

    out_dir = Path(out_dir)
    write_csv(out_dir / "metrics.csv", METRICS_HEADER, [row for r in results for row in metrics_rows(r)])
    for r in results:
        write_csv(out_dir / f"{r.task}_{r.mode}_top_features.csv", ("class", "rank", "feature", "weight"), r.top_features)
        r.model.save(out_dir / f"{r.task}_{r.mode}_model.json")
