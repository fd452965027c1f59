"""Synthetic labeled walks so the pipeline can be exercised without recordings.

Each walk gets an alternating left/right strike process from a jittered
cadence, and six sensor channels built from per-strike decaying-sinusoid
bursts plus cadence harmonics plus white noise. Left and right strikes excite
complementary channel mixtures (the asymmetry factor), which is what makes
the square-wave label learnable from the signal.
"""

from __future__ import annotations

import csv
import json
import logging
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from .ingest import (
    SENSOR_CHANNELS,
    AnnotatedWalk,
    FeatureInterval,
    Foot,
    Segment,
    SegmentKind,
    SensorSequence,
    StepEvent,
    WalkerGroup,
    walk_to_xml,
)

log = logging.getLogger(__name__)

MIN_STRIKE_GAP_S = 0.2
DEFAULT_SAMPLE_RATE = 25.0

# Which channels a left strike drives harder (+1) or softer (-1); right
# strikes get the mirrored mixture.
_SIDE_SIGNS = np.array([1.0, -1.0, 1.0, -1.0, 1.0, -1.0])


class InvalidProfile(ValueError):
    pass


@dataclass(frozen=True)
class GaitProfile:
    """Walker model for the generator.

    ``cadence_mean`` is in steps per second; ``cadence_jitter`` is the
    relative std of the inter-strike gap. ``amplitudes`` and ``noise_std``
    are per-channel scales, ``asymmetry`` in [0, 1) controls how differently
    left and right strikes excite the channels, and ``pause_prob_per_s``
    injects occasional standing pauses.
    """

    cadence_mean: float = 2.0
    cadence_jitter: float = 0.03
    walker_group: WalkerGroup = WalkerGroup.SIGHTED
    amplitudes: tuple[float, ...] = (1.0, 0.8, 0.6, 0.5, 0.7, 0.4)
    harmonic_count: int = 2
    noise_std: tuple[float, ...] = (0.05, 0.05, 0.05, 0.03, 0.03, 0.03)
    pause_prob_per_s: float = 0.0
    asymmetry: float = 0.6
    burst_decay_s: float = 0.18
    burst_freq_hz: float = 5.0

    def __post_init__(self) -> None:
        if self.cadence_mean <= 0:
            raise InvalidProfile("cadence_mean must be positive")
        if self.cadence_jitter < 0 or any(s < 0 for s in self.noise_std):
            raise InvalidProfile("jitter and noise std must be non-negative")
        if len(self.amplitudes) != 6 or len(self.noise_std) != 6:
            raise InvalidProfile("amplitudes and noise_std need one entry per channel")
        if not 0.0 <= self.asymmetry < 1.0:
            raise InvalidProfile("asymmetry must be in [0, 1)")
        if self.harmonic_count < 0 or self.burst_decay_s <= 0 or self.burst_freq_hz <= 0:
            raise InvalidProfile("harmonic_count, burst_decay_s, burst_freq_hz must be positive")


def sighted_profile(**overrides) -> GaitProfile:
    return replace(GaitProfile(), **overrides)


def long_cane_profile(**overrides) -> GaitProfile:
    base = GaitProfile(
        cadence_mean=1.7,
        cadence_jitter=0.08,
        walker_group=WalkerGroup.LONG_CANE,
        pause_prob_per_s=0.02,
    )
    return replace(base, **overrides)


def guide_dog_profile(**overrides) -> GaitProfile:
    base = GaitProfile(
        cadence_mean=1.9,
        cadence_jitter=0.05,
        walker_group=WalkerGroup.GUIDE_DOG,
        pause_prob_per_s=0.01,
    )
    return replace(base, **overrides)


GROUP_PROFILES = {
    WalkerGroup.SIGHTED: sighted_profile,
    WalkerGroup.LONG_CANE: long_cane_profile,
    WalkerGroup.GUIDE_DOG: guide_dog_profile,
}


def _strike_times(
    profile: GaitProfile, start: float, end: float, rng: np.random.Generator
) -> list[float]:
    """Alternating strike process: first strike half a gap after ``start``.

    With zero jitter and no pauses this is exactly periodic, which pins the
    strike count for a given duration.
    """
    gap_mean = 1.0 / profile.cadence_mean
    t = start + gap_mean * (0.5 + profile.cadence_jitter * rng.uniform(0.0, 2.0))
    times: list[float] = []
    while t < end:
        times.append(t)
        gap = gap_mean * (1.0 + profile.cadence_jitter * rng.standard_normal())
        gap = max(MIN_STRIKE_GAP_S, gap)
        if profile.pause_prob_per_s > 0 and rng.random() < profile.pause_prob_per_s * gap:
            gap += rng.uniform(0.5, 1.5)
        t += gap
    return times


def _render_channels(
    profile: GaitProfile,
    times: np.ndarray,
    steps: Sequence[StepEvent],
    rng: np.random.Generator,
) -> np.ndarray:
    n = len(times)
    amps = np.asarray(profile.amplitudes, dtype=np.float64)
    channels = np.zeros((n, 6))

    # Quasi-periodic background locked to the nominal cadence.
    for j in range(1, profile.harmonic_count + 1):
        phases = rng.uniform(0.0, 2.0 * math.pi, size=6)
        weight = 0.3 / j
        channels += (
            amps * weight * np.sin(2.0 * math.pi * j * profile.cadence_mean * times[:, None] + phases)
        )

    # Per-strike burst: decaying sinusoid, mixture set by the striking foot.
    if n > 1:
        dt = float(times[1] - times[0])
        kernel_len = max(2, int(round(4.0 * profile.burst_decay_s / dt)))
        tau = np.arange(kernel_len) * dt
        kernel = np.exp(-tau / profile.burst_decay_s) * np.sin(
            2.0 * math.pi * profile.burst_freq_hz * tau + 0.4
        )
        for step in steps:
            side = 1.0 if step.foot is Foot.LEFT else -1.0
            gains = amps * (1.0 + profile.asymmetry * side * _SIDE_SIGNS)
            gains = gains * (1.0 + 0.1 * rng.standard_normal())
            i0 = int(np.searchsorted(times, step.t, side="left"))
            if i0 >= n:
                continue
            seg = min(kernel_len, n - i0)
            channels[i0 : i0 + seg] += kernel[:seg, None] * gains[None, :]

    noise = np.asarray(profile.noise_std, dtype=np.float64)
    if np.any(noise > 0):
        channels += rng.standard_normal((n, 6)) * noise
    return channels


def generate_walk(
    profile: GaitProfile,
    duration: float,
    sample_rate: float = DEFAULT_SAMPLE_RATE,
    seed: int | Sequence[int] = 0,
    participant_id: str = "p0",
    path_id: str = "w0",
    inject_turn: bool = False,
    inject_feature: bool = False,
) -> tuple[SensorSequence, AnnotatedWalk]:
    """Generate one labeled walk.

    By default the walk is a single straight segment spanning the whole
    duration. ``inject_turn`` carves out a middle turn segment and
    ``inject_feature`` adds a feature interval inside the first straight
    segment, both for exercising the usable-span filtering.
    """
    if duration <= 0 or sample_rate <= 0:
        raise InvalidProfile("duration and sample_rate must be positive")
    rng = np.random.default_rng(seed)

    n = int(round(duration * sample_rate))
    if n < 2:
        raise InvalidProfile("duration too short for the sample rate")
    times = np.arange(n, dtype=np.float64) / sample_rate

    strike_times = _strike_times(profile, 0.0, duration, rng)
    steps = tuple(
        StepEvent(t=t, foot=Foot.LEFT if k % 2 == 0 else Foot.RIGHT)
        for k, t in enumerate(strike_times)
    )

    channels = _render_channels(profile, times, steps, rng)
    seq = SensorSequence(
        participant_id=participant_id,
        path_id=path_id,
        times=times,
        channels=channels,
        sample_period=1.0 / sample_rate,
    )

    if inject_turn:
        cut0, cut1 = 0.55 * duration, 0.65 * duration
        bounds = [(0.0, cut0, SegmentKind.STRAIGHT), (cut0, cut1, SegmentKind.TURN),
                  (cut1, duration, SegmentKind.STRAIGHT)]
    else:
        bounds = [(0.0, duration, SegmentKind.STRAIGHT)]

    segments = []
    for idx, (lo, hi, kind) in enumerate(bounds):
        seg_steps = tuple(s for s in steps if lo <= s.t <= hi and (idx == 0 or s.t > lo))
        features: tuple[FeatureInterval, ...] = ()
        if inject_feature and idx == 0 and kind is SegmentKind.STRAIGHT:
            mid = (lo + hi) / 2.0
            features = (FeatureInterval(start=mid, end=mid + 1.0, description="synthetic anomaly"),)
        segments.append(
            Segment(
                id=f"s{idx}",
                kind=kind,
                start=lo,
                end=hi,
                direction="east",
                steps=seg_steps,
                features=features,
            )
        )
    walk = AnnotatedWalk(
        participant_id=participant_id,
        path_id=path_id,
        walker_group=profile.walker_group,
        segments=tuple(segments),
    )
    return seq, walk


def write_walk_files(seq: SensorSequence, walk: AnnotatedWalk, out_dir: Path | str) -> tuple[Path, Path]:
    """Write one walk as the canonical CSV/XML pair."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    stem = f"{walk.participant_id}_{walk.path_id}"
    csv_path = out_dir / f"{stem}.csv"
    xml_path = out_dir / f"{stem}.xml"

    with open(csv_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        # A couple of unused columns so ingest's column selection is exercised.
        writer.writerow(["timestamp", *SENSOR_CHANNELS, "attitudeYaw", "magneticFieldX"])
        for i in range(len(seq)):
            row = [repr(float(seq.times[i]))]
            row += [repr(float(v)) for v in seq.channels[i]]
            row += ["0.0", "0.0"]
            writer.writerow(row)
    xml_path.write_bytes(walk_to_xml(walk))
    return csv_path, xml_path


@dataclass(frozen=True)
class CohortSpec:
    """Participants (id -> profile), paths per participant, and walk geometry."""

    profiles: dict[str, GaitProfile]
    paths_per_participant: int = 6
    duration_s: float = 60.0
    sample_rate_hz: float = DEFAULT_SAMPLE_RATE
    seed: int = 0

    def __post_init__(self) -> None:
        if len(self.profiles) < 2:
            raise InvalidProfile("a cohort needs at least 2 participants")
        if self.paths_per_participant < 1:
            raise InvalidProfile("paths_per_participant must be >= 1")


def default_cohort_spec(
    group: WalkerGroup = WalkerGroup.SIGHTED,
    n_participants: int = 5,
    paths_per_participant: int = 6,
    duration_s: float = 60.0,
    sample_rate_hz: float = DEFAULT_SAMPLE_RATE,
    seed: int = 0,
) -> CohortSpec:
    """Group preset cohort with a small deterministic cadence spread per person."""
    make = GROUP_PROFILES[group]
    profiles = {}
    for i in range(n_participants):
        base = make()
        cadence = base.cadence_mean * (1.0 + 0.05 * (i - (n_participants - 1) / 2.0))
        profiles[f"p{i + 1}"] = replace(base, cadence_mean=cadence)
    return CohortSpec(
        profiles=profiles,
        paths_per_participant=paths_per_participant,
        duration_s=duration_s,
        sample_rate_hz=sample_rate_hz,
        seed=seed,
    )


def generate_cohort(spec: CohortSpec, out_dir: Path | str) -> list[tuple[Path, Path]]:
    """Write the whole cohort as canonical CSV/XML pairs; returns the file pairs.

    Every walk draws from its own seed stream derived from (cohort seed,
    participant index, path index), so walks are independent and the cohort
    is reproducible as a whole.
    """
    out_dir = Path(out_dir)
    pairs = []
    for p_idx, (participant, profile) in enumerate(sorted(spec.profiles.items())):
        for path_idx in range(spec.paths_per_participant):
            seq, walk = generate_walk(
                profile,
                duration=spec.duration_s,
                sample_rate=spec.sample_rate_hz,
                seed=[spec.seed, p_idx, path_idx],
                participant_id=participant,
                path_id=f"t{path_idx}",
            )
            pairs.append(write_walk_files(seq, walk, out_dir))
    log.info("wrote %d synthetic walks to %s", len(pairs), out_dir)
    return pairs


def load_cohort_spec(path: Path | str) -> CohortSpec:
    """Read a cohort spec from JSON (profile fields mirror GaitProfile)."""
    data = json.loads(Path(path).read_text())
    profiles = {}
    for pid, fields in data["profiles"].items():
        fields = dict(fields)
        if "walker_group" in fields:
            fields["walker_group"] = WalkerGroup(fields["walker_group"])
        for key in ("amplitudes", "noise_std"):
            if key in fields:
                fields[key] = tuple(fields[key])
        profiles[pid] = GaitProfile(**fields)
    return CohortSpec(
        profiles=profiles,
        paths_per_participant=int(data.get("paths_per_participant", 6)),
        duration_s=float(data.get("duration_s", 60.0)),
        sample_rate_hz=float(data.get("sample_rate_hz", DEFAULT_SAMPLE_RATE)),
        seed=int(data.get("seed", 0)),
    )
