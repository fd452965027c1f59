"""Interval-based undercount/overcount scoring of predicted step times.

Three scoring rules, all counting events per segment slice against the
ground-truth strike times T_1..T_N over a span [start, end]:

* strike-split: intervals cut exactly at the strikes;
* midpoint-split: intervals cut halfway between consecutive strikes, with the
  first and last interval extended to the span edges so the intervals tile
  the span;
* count-diff: per-slice totals only, |predicted| vs N.

For the two interval rules, an interval holding zero predictions is one
undercount event and an interval holding k >= 2 predictions is k-1 overcount
events. Rates are event sums divided by the total ground-truth step count.

Interval conventions (the sources of ambiguity are pinned down here):
intervals are half-open [lo, hi) except the last, which closes at the span
end. For the strike-split rule the default "extend" boundary mode scores
predictions before T_1 as overcounts and adds a closing interval [T_N, end];
the "strict" mode scores only the N-1 intervals between strikes and ignores
predictions outside [T_1, T_N).
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Iterable, Literal, Sequence

import numpy as np

log = logging.getLogger(__name__)

METRIC_NAMES = ("metric1", "metric2", "metric3")

BoundaryMode = Literal["extend", "strict"]


class MetricsError(Exception):
    pass


class EmptyGroundTruth(MetricsError):
    pass


class NoValidSegments(MetricsError):
    pass


@dataclass(frozen=True)
class SegmentEval:
    """Ground-truth and predicted strike times for one scored slice."""

    segment_id: str
    ground_truth: np.ndarray  # ordered strike times
    predicted: np.ndarray     # ordered predicted times
    span: tuple[float, float]

    def __post_init__(self) -> None:
        gt = np.asarray(self.ground_truth, dtype=np.float64)
        pred = np.asarray(self.predicted, dtype=np.float64)
        object.__setattr__(self, "ground_truth", gt)
        object.__setattr__(self, "predicted", pred)
        lo, hi = self.span
        if not lo < hi:
            raise ValueError(f"{self.segment_id}: span {self.span} is empty")
        for name, arr in (("ground_truth", gt), ("predicted", pred)):
            if len(arr) > 1 and np.any(np.diff(arr) < 0):
                raise ValueError(f"{self.segment_id}: {name} times must be ordered")
            if len(arr) and (arr[0] < lo or arr[-1] > hi):
                raise ValueError(f"{self.segment_id}: {name} times fall outside span {self.span}")


def _count_in(pred: np.ndarray, lo: float, hi: float, closed: bool) -> int:
    """Number of predicted times in [lo, hi) or, when closed, [lo, hi]."""
    right = np.searchsorted(pred, hi, side="right" if closed else "left")
    left = np.searchsorted(pred, lo, side="left")
    return int(right - left)


def _events_from_counts(counts: Iterable[int]) -> tuple[int, int]:
    under = 0
    over = 0
    for k in counts:
        if k == 0:
            under += 1
        elif k >= 2:
            over += k - 1
    return under, over


def strike_split_events(ev: SegmentEval, boundary: BoundaryMode = "extend") -> tuple[int, int]:
    """Undercount/overcount events with intervals cut at the strike times.

    Scores [T_i, T_{i+1}) for i = 1..N-1. In "extend" mode a closing interval
    [T_N, span.end] is scored too and every prediction before T_1 counts as
    one overcount; "strict" mode ignores everything outside [T_1, T_N).
    """
    gt = ev.ground_truth
    n = len(gt)
    if n == 0:
        raise EmptyGroundTruth(f"{ev.segment_id}: no ground-truth steps")
    pred = ev.predicted

    counts = [_count_in(pred, gt[i], gt[i + 1], closed=False) for i in range(n - 1)]
    if boundary == "extend":
        counts.append(_count_in(pred, gt[n - 1], ev.span[1], closed=True))
        under, over = _events_from_counts(counts)
        before_first = _count_in(pred, ev.span[0], gt[0], closed=False)
        if before_first:
            log.debug("%s: %d predictions before the first strike", ev.segment_id, before_first)
        return under, over + before_first
    if boundary == "strict":
        return _events_from_counts(counts)
    raise ValueError(f"unknown boundary mode {boundary!r}")


def midpoint_split_events(ev: SegmentEval) -> tuple[int, int]:
    """Undercount/overcount events with intervals cut between strikes.

    Strike T_i owns [(T_{i-1}+T_i)/2, (T_i+T_{i+1})/2); the first interval
    starts at the span start and the last closes at the span end, so the
    intervals tile the span and every prediction is scored exactly once.
    """
    gt = ev.ground_truth
    n = len(gt)
    if n == 0:
        raise EmptyGroundTruth(f"{ev.segment_id}: no ground-truth steps")
    pred = ev.predicted

    edges = np.empty(n + 1, dtype=np.float64)
    edges[0] = ev.span[0]
    edges[1:n] = (gt[:-1] + gt[1:]) / 2.0
    edges[n] = ev.span[1]
    counts = [
        _count_in(pred, edges[i], edges[i + 1], closed=(i == n - 1)) for i in range(n)
    ]
    return _events_from_counts(counts)


def count_diff_events(ev: SegmentEval) -> tuple[int, int]:
    """Per-slice total comparison: (N - P, 0) if under, (0, P - N) if over."""
    n = len(ev.ground_truth)
    p = len(ev.predicted)
    if n > p:
        return n - p, 0
    return 0, p - n


def segment_events(ev: SegmentEval, boundary: BoundaryMode = "extend") -> dict[str, tuple[int, int]]:
    """All three event counts for one slice, keyed metric1/metric2/metric3."""
    return {
        "metric1": strike_split_events(ev, boundary),
        "metric2": midpoint_split_events(ev),
        "metric3": count_diff_events(ev),
    }


@dataclass(frozen=True)
class StepErrorReport:
    """Aggregated event counts and rates over a set of scored slices.

    Rates are fractions of the total ground-truth step count; rendering to
    percentages happens in report output only.
    """

    events: dict[str, tuple[int, int]]  # metric name -> (undercount, overcount)
    total_steps: int
    signal_accuracy: float
    n_segments: int

    def undercount_rate(self, metric: str) -> float:
        return self.events[metric][0] / self.total_steps

    def overcount_rate(self, metric: str) -> float:
        return self.events[metric][1] / self.total_steps

    def combined_rate(self, metric: str) -> float:
        under, over = self.events[metric]
        return (under + over) / self.total_steps

    def to_dict(self) -> dict:
        out: dict = {
            "total_steps": self.total_steps,
            "segments": self.n_segments,
            "signal_accuracy": self.signal_accuracy,
        }
        for metric in METRIC_NAMES:
            under, over = self.events[metric]
            out[metric] = {
                "undercount_events": under,
                "overcount_events": over,
                "undercount_rate": under / self.total_steps,
                "overcount_rate": over / self.total_steps,
            }
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "StepErrorReport":
        events = {
            m: (int(data[m]["undercount_events"]), int(data[m]["overcount_events"]))
            for m in METRIC_NAMES
        }
        return cls(
            events=events,
            total_steps=int(data["total_steps"]),
            signal_accuracy=float(data["signal_accuracy"]),
            n_segments=int(data["segments"]),
        )


def aggregate(
    evals: Sequence[SegmentEval],
    accuracies: Sequence[tuple[float, float]] = (),
    boundary: BoundaryMode = "extend",
) -> StepErrorReport:
    """Sum events across slices and divide by the total ground-truth steps.

    Slices with zero ground-truth steps are skipped (logged) and excluded
    from the denominator. ``accuracies`` holds (accuracy, weight) pairs,
    typically per-slice sample counts, averaged into one signal accuracy.
    """
    totals = {m: [0, 0] for m in METRIC_NAMES}
    total_steps = 0
    n_used = 0
    for ev in evals:
        if len(ev.ground_truth) == 0:
            log.info("%s: zero ground-truth steps, excluded from metrics", ev.segment_id)
            continue
        for metric, (under, over) in segment_events(ev, boundary).items():
            totals[metric][0] += under
            totals[metric][1] += over
        total_steps += len(ev.ground_truth)
        n_used += 1
    if n_used == 0 or total_steps == 0:
        raise NoValidSegments("no slice with ground-truth steps to score")

    if accuracies:
        weight = sum(w for _, w in accuracies)
        accuracy = sum(a * w for a, w in accuracies) / weight if weight > 0 else math.nan
    else:
        accuracy = math.nan
    return StepErrorReport(
        events={m: (u, o) for m, (u, o) in totals.items()},
        total_steps=total_steps,
        signal_accuracy=float(accuracy),
        n_segments=n_used,
    )
