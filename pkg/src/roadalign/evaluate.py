"""Pixel-wise evaluation of transferred road masks against ground truth.

Road is the positive class. Ratios with a zero denominator are reported
as None and excluded from aggregation, frame by frame and measure by
measure.
"""

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

MEASURES = ("quality", "accuracy", "sensitivity", "specificity")


@dataclass(frozen=True)
class ContingencyTable:
    tp: int
    tn: int
    fp: int
    fn: int

    def __post_init__(self):
        for v in (self.tp, self.tn, self.fp, self.fn):
            if v < 0:
                raise ValueError("counts must be non-negative")

    @property
    def total(self):
        return self.tp + self.tn + self.fp + self.fn


def contingency(result, truth):
    """Pixel counts of a result mask against a truth mask."""
    result = np.asarray(result, dtype=bool)
    truth = np.asarray(truth, dtype=bool)
    if result.shape != truth.shape:
        raise ValueError("mask shapes differ")
    tp = int(np.count_nonzero(result & truth))
    tn = int(np.count_nonzero(~result & ~truth))
    fp = int(np.count_nonzero(result & ~truth))
    fn = int(np.count_nonzero(~result & truth))
    return ContingencyTable(tp=tp, tn=tn, fp=fp, fn=fn)


@dataclass(frozen=True)
class MetricSet:
    quality: Optional[float]
    accuracy: Optional[float]
    sensitivity: Optional[float]
    specificity: Optional[float]


def _ratio(num, den):
    return num / den if den > 0 else None


def metrics(table):
    """Quality (Jaccard on road), accuracy, sensitivity, specificity."""
    t = table
    return MetricSet(
        quality=_ratio(t.tp, t.tp + t.fp + t.fn),
        accuracy=_ratio(t.tp + t.tn, t.total),
        sensitivity=_ratio(t.tp, t.tp + t.fn),
        specificity=_ratio(t.tn, t.tn + t.fp),
    )


def aggregate(metric_sets):
    """Per-measure (mean, population std) over the defined entries.

    A measure with no defined entries aggregates to (nan, nan). An empty
    input list is an error.
    """
    metric_sets = list(metric_sets)
    if not metric_sets:
        raise ValueError("no frames to aggregate")
    out = {}
    for name in MEASURES:
        values = [getattr(m, name) for m in metric_sets
                  if getattr(m, name) is not None]
        if values:
            arr = np.asarray(values, dtype=np.float64)
            out[name] = (float(arr.mean()), float(arr.std()))
        else:
            out[name] = (math.nan, math.nan)
    return out


def format_mean_std(mean, std):
    return f"{mean:.4f}±{std:.4f}"


def format_aggregate(agg):
    """Render an aggregate dict as measure -> "mean±std" strings."""
    return {name: format_mean_std(*agg[name]) for name in agg}
