"""Median (equal-frequency) High/Low splits shared by actions and metrics.

Values strictly above the median are High; everything else, including values
equal to the median, is Low.
"""

from __future__ import annotations

import statistics
from typing import Hashable, Iterable, Mapping

HIGH = "High"
LOW = "Low"


class SplitError(ValueError):
    pass


def median_threshold(values: Iterable[float]) -> float:
    values = list(values)
    if not values:
        raise SplitError("cannot split an empty population")
    mid = float(statistics.median(values))
    if len(values) % 2 == 0:
        ordered = sorted(values)
        lo, hi = ordered[len(values) // 2 - 1], ordered[len(values) // 2]
        # the midpoint of two adjacent floats can round onto the upper one
        if lo < hi and mid >= hi:
            mid = float(lo)
    return mid


def level_for(value: float, threshold: float) -> str:
    return HIGH if value > threshold else LOW


def equal_frequency_split(values: Iterable[tuple[Hashable, float]]) -> dict[Hashable, str]:
    """Split ``(id, value)`` pairs at their median into High/Low."""
    pairs = list(values)
    if len(pairs) < 2:
        raise SplitError(f"need at least 2 values to split, got {len(pairs)}")
    threshold = median_threshold(v for _, v in pairs)
    return {key: level_for(v, threshold) for key, v in pairs}


def split_with(values: Mapping[Hashable, float], threshold: float) -> dict[Hashable, str]:
    return {key: level_for(v, threshold) for key, v in values.items()}
