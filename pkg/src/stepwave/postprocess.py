"""Turn the model's real-valued output signal into a binary wave and step times."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .labeling import StrideSignal, signal_to_steps


class LengthMismatch(ValueError):
    pass


@dataclass(frozen=True)
class PostprocessConfig:
    """Binarization settings.

    ``threshold``: values strictly above it become 1, everything else 0
    (the boundary value maps to 0). ``min_dwell_s`` > 0 enables an optional
    debounce that removes binary runs shorter than the dwell; it is off by
    default and excluded from acceptance runs so the raw failure modes of
    thresholding stay visible.
    """

    threshold: float = 0.5
    min_dwell_s: float = 0.0

    def __post_init__(self) -> None:
        if not 0.0 < self.threshold < 1.0:
            raise ValueError(f"threshold must be in (0, 1), got {self.threshold}")
        if self.min_dwell_s < 0:
            raise ValueError("min_dwell_s must be >= 0")


def binarize(values: np.ndarray, config: PostprocessConfig = PostprocessConfig()) -> np.ndarray:
    """value > threshold -> 1, value <= threshold -> 0."""
    values = np.asarray(values, dtype=np.float64)
    if not np.all(np.isfinite(values)):
        raise ValueError("cannot binarize non-finite values")
    return (values > config.threshold).astype(np.int8)


def apply_min_dwell(bits: np.ndarray, times: np.ndarray, min_dwell_s: float) -> np.ndarray:
    """Merge binary runs shorter than ``min_dwell_s`` into the preceding run."""
    if min_dwell_s <= 0 or len(bits) == 0:
        return bits
    out = bits.copy()
    i = 0
    n = len(out)
    while i < n:
        j = i
        while j + 1 < n and out[j + 1] == out[i]:
            j += 1
        duration = times[j] - times[i]
        if i > 0 and duration < min_dwell_s:
            out[i : j + 1] = out[i - 1]
        i = j + 1
    return out


def predicted_steps(
    times: np.ndarray,
    values: np.ndarray,
    config: PostprocessConfig = PostprocessConfig(),
) -> np.ndarray:
    """Predicted heel-strike times: binarize, then take the wave's change times."""
    times = np.asarray(times, dtype=np.float64)
    bits = binarize(values, config)
    if config.min_dwell_s > 0:
        bits = apply_min_dwell(bits, times, config.min_dwell_s)
    return signal_to_steps(StrideSignal(times=times, values=bits))


def signal_accuracy(predicted: np.ndarray, truth: np.ndarray) -> float:
    """Fraction of positions where the binary signals agree."""
    predicted = np.asarray(predicted)
    truth = np.asarray(truth)
    if predicted.shape != truth.shape:
        raise LengthMismatch(f"shapes differ: {predicted.shape} vs {truth.shape}")
    if predicted.size == 0:
        raise LengthMismatch("cannot score empty signals")
    return float(np.mean(predicted == truth))


def write_postprocess_csv(
    path: Path | str,
    times: np.ndarray,
    raw: np.ndarray,
    bits: np.ndarray,
    truth: np.ndarray,
) -> None:
    """Debug dump (t, raw, binary, truth), one row per sample, for plot tooling."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["t", "raw", "binary", "truth"])
        for row in zip(times, raw, bits, truth):
            writer.writerow([repr(float(row[0])), repr(float(row[1])), int(row[2]), int(row[3])])
