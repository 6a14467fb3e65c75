"""Accuracy metrics against ground truth."""

from __future__ import annotations

import math
from collections.abc import Iterable, Mapping

FLOOR = 1e-6
CERTAIN = 1 - 1e-12


def cover_divergence(truth: Iterable[int], predicted: Mapping[int, float], floor: float = FLOOR) -> float:
    """Information lost describing the true result set by the predicted probabilities.

    Each true object contributes ``-ln Q``, with Q its predicted probability
    clipped to [floor, 1]; predicted objects outside the truth cost nothing.
    Probabilities within rounding of 1 count as certain.
    """
    total = 0.0
    for o in truth:
        q = float(predicted.get(o, 0.0))
        if q < CERTAIN:
            total -= math.log(max(floor, q))
    return total + 0.0


def hit_rate(truth: Iterable[int], predicted: Iterable[int]) -> float:
    truth = set(truth)
    if not truth:
        raise ValueError("hit rate needs a non-empty true result")
    return len(truth & set(predicted)) / len(truth)
