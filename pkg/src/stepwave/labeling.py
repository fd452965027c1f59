"""Square-wave step labels: heel strikes -> binary per-sample signal and back.

The label for a sensor slice is a square wave that is 1 after a left strike
and 0 after a right strike (0 before any strike). A step is a wave
transition, so counting predicted steps reduces to counting value changes.
"""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .ingest import Foot, StepEvent

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class StrideSignal:
    """Binary per-sample signal aligned 1:1 with a sensor slice."""

    times: np.ndarray   # (n,) seconds, strictly increasing
    values: np.ndarray  # (n,) int8 in {0, 1}

    def __post_init__(self) -> None:
        if len(self.times) != len(self.values):
            raise ValueError("times and values must have equal length")
        if len(self.times) > 1 and np.any(np.diff(self.times) <= 0):
            raise ValueError("times must strictly increase")
        if not np.all((self.values == 0) | (self.values == 1)):
            raise ValueError("signal values must be 0 or 1")

    def __len__(self) -> int:
        return len(self.times)


def build_square_wave(steps: Sequence[StepEvent], sample_times: np.ndarray) -> StrideSignal:
    """Encode heel strikes as a square wave sampled at ``sample_times``.

    The value at a sample is 1 if the most recent strike at or before it was
    a left step, 0 if it was a right step, and 0 if no strike has happened
    yet; a strike takes effect at the first sample whose time is >= the
    strike time. Consecutive same-foot strikes produce no transition and
    strikes closer together than one sample collapse to a single transition;
    both are logged because such steps cannot be recovered from the wave.
    """
    sample_times = np.asarray(sample_times, dtype=np.float64)
    if len(sample_times) > 1 and np.any(np.diff(sample_times) <= 0):
        raise ValueError("sample_times must strictly increase")
    values = np.zeros(len(sample_times), dtype=np.int8)
    if not steps:
        return StrideSignal(times=sample_times, values=values)

    step_times = np.array([s.t for s in steps], dtype=np.float64)
    if np.any(np.diff(step_times) < 0):
        raise ValueError("steps must be ordered by time")
    states = np.array([1 if s.foot is Foot.LEFT else 0 for s in steps], dtype=np.int8)

    for i in range(1, len(steps)):
        if states[i] == states[i - 1]:
            log.warning(
                "consecutive %s strikes at %.4fs and %.4fs: second produces no wave transition",
                steps[i].foot.value, step_times[i - 1], step_times[i],
            )
    first_sample = np.searchsorted(sample_times, step_times, side="left")
    for i in range(1, len(steps)):
        if first_sample[i] == first_sample[i - 1] and states[i] != states[i - 1]:
            log.warning(
                "strikes at %.4fs and %.4fs fall within one sample: transitions collapse",
                step_times[i - 1], step_times[i],
            )

    # State after the most recent strike at or before each sample; -1 = none yet.
    last = np.searchsorted(step_times, sample_times, side="right") - 1
    hit = last >= 0
    values[hit] = states[last[hit]]
    return StrideSignal(times=sample_times, values=values)


def signal_to_steps(sig: StrideSignal) -> np.ndarray:
    """Times of every value change (both 0->1 and 1->0); first sample never counts."""
    if len(sig) < 2:
        return np.empty(0, dtype=np.float64)
    changed = sig.values[1:] != sig.values[:-1]
    return sig.times[1:][changed].copy()


def write_signal_csv(sig: StrideSignal, path: Path | str) -> None:
    """Debug dump of (time, value) pairs for plot tooling."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["t", "value"])
        for t, v in zip(sig.times, sig.values):
            writer.writerow([repr(float(t)), int(v)])
