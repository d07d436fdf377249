"""Student-grouped folds and the accuracy / kappa / false-negative-rate report."""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass
from typing import Hashable, Sequence

import numpy as np


class EvaluationError(ValueError):
    pass


@dataclass(frozen=True)
class EvalReport:
    accuracy: float
    kappa: float
    false_negative_rate: float | None
    n: int
    kappa_undefined: bool = False


def evaluate(predictions: Sequence, labels: Sequence, positive_class=None) -> EvalReport:
    """Accuracy, Cohen's kappa, and FN / (FN + TP) for ``positive_class``.

    Kappa is reported as 0 (with ``kappa_undefined`` set) when chance
    agreement is 1.
    """
    if len(predictions) != len(labels):
        raise EvaluationError("predictions and labels differ in length")
    n = len(labels)
    if n == 0:
        raise EvaluationError("nothing to evaluate")
    agree = sum(p == y for p, y in zip(predictions, labels))
    pred_counts, label_counts = Counter(predictions), Counter(labels)
    chance = sum(pred_counts[c] * label_counts[c] for c in label_counts)
    # integer form of (p_o - p_e) / (1 - p_e): one rounding step only
    undefined = chance == n * n
    kappa = 0.0 if undefined else (n * agree - chance) / (n * n - chance)
    p_o = agree / n
    fnr = None
    if positive_class is not None:
        tp = sum(p == positive_class and y == positive_class for p, y in zip(predictions, labels))
        fn = sum(p != positive_class and y == positive_class for p, y in zip(predictions, labels))
        fnr = fn / (fn + tp) if fn + tp else 0.0
    return EvalReport(p_o, kappa, fnr, n, undefined)


def grouped_cv(groups: Sequence[Hashable], k_folds: int, seed: int = 0) -> np.ndarray:
    """Fold index per instance; every group lands wholly inside one fold.

    Groups are shuffled with ``seed``, ordered by size (largest first) and
    each is placed in the currently lightest fold, so the heaviest and lightest
    folds differ by at most the largest group's size.
    """
    if k_folds < 2:
        raise EvaluationError("need at least 2 folds")
    sizes = Counter(groups)
    if len(sizes) < k_folds:
        raise EvaluationError(f"{len(sizes)} groups cannot fill {k_folds} folds")
    rng = np.random.default_rng(seed)
    order = sorted(sizes, key=str)
    order = [order[i] for i in rng.permutation(len(order))]
    order.sort(key=lambda g: -sizes[g])  # stable: shuffled order breaks size ties
    load = np.zeros(k_folds, dtype=np.int64)
    fold_of = {}
    for g in order:
        f = int(np.argmin(load))
        fold_of[g] = f
        load[f] += sizes[g]
    return np.array([fold_of[g] for g in groups], dtype=np.int64)
