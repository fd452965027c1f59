"""Windowing of labeled sensor slices and train/test split construction."""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Iterator, Sequence

import numpy as np

from .ingest import UsableSlice
from .labeling import StrideSignal, build_square_wave

log = logging.getLogger(__name__)

STD_FLOOR = 1e-8


class DatasetError(Exception):
    pass


class SliceTooShort(DatasetError):
    pass


class TooFewExamples(DatasetError):
    pass


class UnknownParticipant(DatasetError):
    pass


class SingleParticipant(DatasetError):
    pass


class EmptyTrainSet(DatasetError):
    pass


@dataclass(frozen=True)
class WindowExample:
    """One training example: ``timesteps`` consecutive samples and their labels.

    ``end_index`` is the position of the window's last sample within its
    slice; the window covers slice samples [end_index - timesteps + 1,
    end_index].
    """

    inputs: np.ndarray      # (timesteps, 6)
    target_seq: np.ndarray  # (timesteps,)
    slice_id: str
    end_index: int

    def __post_init__(self) -> None:
        if self.inputs.shape[0] != self.target_seq.shape[0]:
            raise ValueError("inputs and target_seq must cover the same timesteps")
        if not np.all(np.isfinite(self.inputs)):
            raise ValueError("window inputs must be finite")

    @property
    def ref(self) -> str:
        return f"{self.slice_id}:{self.end_index}"


class WindowSet:
    """All windows of a cohort, stored as dense arrays for batched training.

    ``inputs`` is (n, timesteps, 6); ``targets`` is (n, timesteps) of 0/1
    floats. Per-window metadata (slice id, end index, participant) supports
    split construction and stable example refs.
    """

    def __init__(
        self,
        inputs: np.ndarray,
        targets: np.ndarray,
        slice_ids: Sequence[str],
        end_indices: np.ndarray,
        participants: Sequence[str],
    ) -> None:
        if not (len(inputs) == len(targets) == len(slice_ids) == len(end_indices) == len(participants)):
            raise ValueError("window arrays and metadata must have equal length")
        self.inputs = inputs
        self.targets = targets
        self.slice_ids = list(slice_ids)
        self.end_indices = np.asarray(end_indices, dtype=np.int64)
        self.participants = list(participants)

    def __len__(self) -> int:
        return len(self.inputs)

    @property
    def timesteps(self) -> int:
        return self.inputs.shape[1]

    def example(self, i: int) -> WindowExample:
        return WindowExample(
            inputs=self.inputs[i],
            target_seq=self.targets[i],
            slice_id=self.slice_ids[i],
            end_index=int(self.end_indices[i]),
        )

    def ref(self, i: int) -> str:
        return f"{self.slice_ids[i]}:{int(self.end_indices[i])}"


def make_windows(slc: UsableSlice, sig: StrideSignal, timesteps: int) -> list[WindowExample]:
    """Stride-1 windows over one labeled slice, one per end position.

    Raises SliceTooShort when the slice holds fewer than ``timesteps``
    samples.
    """
    n = len(slc)
    if len(sig) != n:
        raise ValueError(f"{slc.slice_id}: label signal length {len(sig)} != slice length {n}")
    if n < timesteps:
        raise SliceTooShort(f"{slc.slice_id}: {n} samples < {timesteps} timesteps")
    windows = []
    for end in range(timesteps - 1, n):
        lo = end - timesteps + 1
        windows.append(
            WindowExample(
                inputs=slc.channels[lo : end + 1],
                target_seq=sig.values[lo : end + 1].astype(np.float64),
                slice_id=slc.slice_id,
                end_index=end,
            )
        )
    return windows


def label_slice(slc: UsableSlice) -> StrideSignal:
    """Square-wave labels for one usable slice (state starts at 0 per slice)."""
    return build_square_wave(slc.steps, slc.times)


def build_window_set(slices: Sequence[UsableSlice], timesteps: int) -> WindowSet:
    """Window every slice long enough and stack the results into one WindowSet.

    Slices shorter than ``timesteps`` are skipped with a log message; raises
    TooFewExamples when nothing remains.
    """
    chunks_x: list[np.ndarray] = []
    chunks_y: list[np.ndarray] = []
    slice_ids: list[str] = []
    end_indices: list[int] = []
    participants: list[str] = []
    for slc in slices:
        n = len(slc)
        if n < timesteps:
            log.info("%s: %d samples < %d timesteps, not windowed", slc.slice_id, n, timesteps)
            continue
        sig = label_slice(slc)
        x = np.lib.stride_tricks.sliding_window_view(slc.channels, timesteps, axis=0)
        chunks_x.append(np.ascontiguousarray(x.transpose(0, 2, 1)))
        y = np.lib.stride_tricks.sliding_window_view(sig.values.astype(np.float64), timesteps)
        chunks_y.append(np.ascontiguousarray(y))
        count = n - timesteps + 1
        slice_ids.extend([slc.slice_id] * count)
        end_indices.extend(range(timesteps - 1, n))
        participants.extend([slc.participant_id] * count)
    if not chunks_x:
        raise TooFewExamples(f"no slice holds at least {timesteps} samples")
    return WindowSet(
        inputs=np.concatenate(chunks_x, axis=0),
        targets=np.concatenate(chunks_y, axis=0),
        slice_ids=slice_ids,
        end_indices=np.array(end_indices, dtype=np.int64),
        participants=participants,
    )


@dataclass(frozen=True)
class SplitPlan:
    """Disjoint train/test (and optional validation) example indices."""

    name: str
    train: np.ndarray
    test: np.ndarray
    validation: np.ndarray | None = None

    def __post_init__(self) -> None:
        train = set(np.asarray(self.train).tolist())
        test = set(np.asarray(self.test).tolist())
        if train & test:
            raise ValueError(f"plan {self.name}: train and test overlap")
        if self.validation is not None:
            valid = set(np.asarray(self.validation).tolist())
            if valid & (train | test):
                raise ValueError(f"plan {self.name}: validation overlaps train or test")


def split_mixed_kfold(windows: WindowSet, k: int, seed: int) -> list[SplitPlan]:
    """Shuffle all windows with ``seed`` and cut k near-equal folds.

    Plan i tests on fold i and trains on the others. Windows from the same
    slice may land in different folds; that is the mixed protocol.
    """
    n = len(windows)
    if k < 2:
        raise ValueError(f"k must be >= 2, got {k}")
    if n < k:
        raise TooFewExamples(f"{n} examples cannot fill {k} folds")
    order = np.random.default_rng(seed).permutation(n)
    folds = np.array_split(order, k)
    plans = []
    for i, fold in enumerate(folds):
        train = np.sort(np.concatenate([f for j, f in enumerate(folds) if j != i]))
        plans.append(SplitPlan(name=f"cv{i}", train=train, test=np.sort(fold)))
    return plans


def split_leave_one_out(
    windows: WindowSet,
    held_participant: str,
    validation_participant: str | None = None,
) -> SplitPlan:
    """Hold every window of one participant out as the test set.

    Optionally holds a second participant out of the training set as a
    validation set (the rotation used by the leave-one-out protocol).
    """
    participants = np.asarray(windows.participants)
    known = set(participants.tolist())
    if len(known) < 2:
        raise SingleParticipant("leave-one-out needs at least 2 participants")
    if held_participant not in known:
        raise UnknownParticipant(f"no windows for participant {held_participant!r}")
    if validation_participant is not None:
        if validation_participant not in known:
            raise UnknownParticipant(f"no windows for participant {validation_participant!r}")
        if validation_participant == held_participant:
            raise ValueError("validation participant must differ from the held-out one")

    test = np.flatnonzero(participants == held_participant)
    if validation_participant is None:
        train = np.flatnonzero(participants != held_participant)
        validation = None
    else:
        validation = np.flatnonzero(participants == validation_participant)
        train = np.flatnonzero(
            (participants != held_participant) & (participants != validation_participant)
        )
        if len(train) == 0:
            raise SingleParticipant("no participants left to train on after holding out test and validation")
    name = f"test={held_participant}" + (
        f",valid={validation_participant}" if validation_participant else ""
    )
    return SplitPlan(name=name, train=train, test=test, validation=validation)


@dataclass(frozen=True)
class NormStats:
    """Per-channel standardization statistics, fitted on training data only."""

    mean: np.ndarray  # (6,)
    std: np.ndarray   # (6,), floored at STD_FLOOR

    def __post_init__(self) -> None:
        if not np.all(self.std > 0):
            raise ValueError("std components must be positive")


def fit_norm_stats(inputs: np.ndarray) -> NormStats:
    """Fit per-channel mean/std over the training windows (population std)."""
    inputs = np.asarray(inputs, dtype=np.float64)
    if inputs.size == 0:
        raise EmptyTrainSet("cannot fit normalization on an empty train set")
    flat = inputs.reshape(-1, inputs.shape[-1])
    mean = flat.mean(axis=0)
    std = np.maximum(flat.std(axis=0), STD_FLOOR)
    return NormStats(mean=mean, std=std)


def normalize_inputs(inputs: np.ndarray, stats: NormStats) -> np.ndarray:
    return (inputs - stats.mean) / stats.std


def apply_norm(example: WindowExample, stats: NormStats) -> WindowExample:
    return WindowExample(
        inputs=normalize_inputs(example.inputs, stats),
        target_seq=example.target_seq,
        slice_id=example.slice_id,
        end_index=example.end_index,
    )


def epoch_order(n: int, seed: int, epoch: int) -> np.ndarray:
    """Deterministic shuffle of n example indices keyed by (seed, epoch)."""
    return np.random.default_rng([seed, epoch]).permutation(n)


def make_batches(
    n_examples: int,
    batch_size: int,
    seed: int,
    epochs: int | None = 1,
) -> Iterator[np.ndarray]:
    """Yield index batches, reshuffling per epoch; the final short batch is kept.

    ``epochs=None`` streams forever (training consumes as many batches as it
    has steps). The order is fully determined by (seed, epoch).
    """
    if batch_size < 1:
        raise ValueError("batch_size must be >= 1")
    if n_examples < 1:
        raise TooFewExamples("need at least 1 example to batch")
    epoch = 0
    while epochs is None or epoch < epochs:
        order = epoch_order(n_examples, seed, epoch)
        for lo in range(0, n_examples, batch_size):
            yield order[lo : lo + batch_size]
        epoch += 1


def save_split_plans(plans: Sequence[SplitPlan], windows: WindowSet, path: Path | str) -> None:
    """Serialize split plans as example refs for reproducibility."""
    payload = []
    for plan in plans:
        entry = {
            "name": plan.name,
            "train": [windows.ref(i) for i in plan.train],
            "test": [windows.ref(i) for i in plan.test],
        }
        if plan.validation is not None:
            entry["validation"] = [windows.ref(i) for i in plan.validation]
        payload.append(entry)
    Path(path).write_text(json.dumps(payload, indent=2))
