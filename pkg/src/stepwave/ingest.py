"""Parsers for walk recordings: sensor CSV, annotation XML, straight-segment filtering.

A walk is one (participant, path) recording. It comes in two files:

* a sensor CSV with a ``timestamp`` column and the six inertial channels
  (``rotationRateX/Y/Z``, ``userAccelerationX/Y/Z``); extra columns are ignored;
* an annotation XML with the segment layout (straight/turn), the heel-strike
  events (time + foot), and "feature" intervals marking anomalies whose
  samples must be excluded.

Only straight segments are usable downstream, and within a straight segment
only data from the first heel strike onward, minus feature intervals.
"""

from __future__ import annotations

import csv
import io
import logging
import math
import xml.etree.ElementTree as ET
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import IO, Iterator

import numpy as np

log = logging.getLogger(__name__)

SENSOR_CHANNELS = (
    "rotationRateX",
    "rotationRateY",
    "rotationRateZ",
    "userAccelerationX",
    "userAccelerationY",
    "userAccelerationZ",
)
DEFAULT_TIMESTAMP_COLUMN = "timestamp"


class IngestError(Exception):
    """Base class for all parsing / filtering failures."""


class MissingColumn(IngestError):
    pass


class NonMonotoneTime(IngestError):
    pass


class MalformedRow(IngestError):
    pass


class TooFewSamples(IngestError):
    pass


class SchemaViolation(IngestError):
    pass


class OrderViolation(IngestError):
    pass


class EmptyWalk(IngestError):
    pass


class NoUsableData(IngestError):
    pass


class Foot(Enum):
    LEFT = "left"
    RIGHT = "right"


class SegmentKind(Enum):
    STRAIGHT = "straight"
    TURN = "turn"


class WalkerGroup(Enum):
    SIGHTED = "sighted"
    LONG_CANE = "long_cane"
    GUIDE_DOG = "guide_dog"


@dataclass(frozen=True)
class SensorSample:
    """One timestamped 6-channel inertial sample (rad/s and g units)."""

    t: float
    rotation_rate: tuple[float, float, float]
    user_acceleration: tuple[float, float, float]


@dataclass(frozen=True)
class SensorSequence:
    """Time-ordered inertial samples for one (participant, path) walk.

    ``times`` is strictly increasing, ``channels`` holds the six columns in
    SENSOR_CHANNELS order, and ``sample_period`` is the median inter-sample
    gap derived at parse time (the recordings carry no nominal rate).
    """

    participant_id: str
    path_id: str
    times: np.ndarray     # (n,) seconds
    channels: np.ndarray  # (n, 6)
    sample_period: float

    def __post_init__(self) -> None:
        if len(self.times) < 2:
            raise TooFewSamples("a sensor sequence needs at least 2 samples")
        if self.channels.shape != (len(self.times), 6):
            raise ValueError(f"channel array shape {self.channels.shape} does not match times")
        if not np.all(np.isfinite(self.times)) or not np.all(np.isfinite(self.channels)):
            raise MalformedRow("non-finite values in sensor sequence")
        if self.times[0] < 0:
            raise MalformedRow("negative timestamp")
        if np.any(np.diff(self.times) <= 0):
            raise NonMonotoneTime("timestamps must strictly increase")
        if not self.sample_period > 0:
            raise ValueError("sample_period must be positive")

    def __len__(self) -> int:
        return len(self.times)

    def sample(self, i: int) -> SensorSample:
        row = self.channels[i]
        return SensorSample(
            t=float(self.times[i]),
            rotation_rate=(float(row[0]), float(row[1]), float(row[2])),
            user_acceleration=(float(row[3]), float(row[4]), float(row[5])),
        )

    def __iter__(self) -> Iterator[SensorSample]:
        return (self.sample(i) for i in range(len(self)))


@dataclass(frozen=True)
class StepEvent:
    """A heel strike: the instant a foot contacts the ground."""

    t: float
    foot: Foot


@dataclass(frozen=True)
class FeatureInterval:
    """An annotated anomaly (obstacle avoidance etc.) whose samples are dropped."""

    start: float
    end: float
    description: str = ""

    def __post_init__(self) -> None:
        if not self.start < self.end:
            raise SchemaViolation(f"feature interval start {self.start} must precede end {self.end}")


@dataclass(frozen=True)
class Segment:
    id: str
    kind: SegmentKind
    start: float
    end: float
    direction: str = ""
    steps: tuple[StepEvent, ...] = ()
    features: tuple[FeatureInterval, ...] = ()

    def __post_init__(self) -> None:
        if not self.start < self.end:
            raise SchemaViolation(f"segment {self.id}: start {self.start} must precede end {self.end}")
        prev = -math.inf
        for step in self.steps:
            if step.t < prev:
                raise OrderViolation(f"segment {self.id}: steps are not ordered by time")
            if not (self.start <= step.t <= self.end):
                raise SchemaViolation(
                    f"segment {self.id}: step at {step.t} outside [{self.start}, {self.end}]"
                )
            prev = step.t


@dataclass(frozen=True)
class AnnotatedWalk:
    """Ground-truth annotation for one walk: segments, strikes, features."""

    participant_id: str
    path_id: str
    walker_group: WalkerGroup
    segments: tuple[Segment, ...]

    def __post_init__(self) -> None:
        if not self.segments:
            raise EmptyWalk(f"walk {self.participant_id}/{self.path_id} has no segments")
        for a, b in zip(self.segments, self.segments[1:]):
            if b.start < a.end:
                raise OrderViolation(
                    f"segments {a.id} and {b.id} overlap or are out of order"
                )


@dataclass(frozen=True)
class UsableSlice:
    """A contiguous run of usable straight-segment samples.

    ``span`` is the time interval the slice was cut from (first-strike time or
    feature end, up to the next feature start or segment end); every retained
    sample and every paired step falls inside it. Metrics score predictions
    over this span.
    """

    slice_id: str
    participant_id: str
    path_id: str
    segment: Segment
    times: np.ndarray     # (m,)
    channels: np.ndarray  # (m, 6)
    steps: tuple[StepEvent, ...]
    span: tuple[float, float]

    def __len__(self) -> int:
        return len(self.times)

    @property
    def step_times(self) -> np.ndarray:
        return np.array([s.t for s in self.steps], dtype=np.float64)


def parse_sensor_csv(
    source: bytes | IO[bytes],
    participant_id: str,
    path_id: str,
    timestamp_column: str = DEFAULT_TIMESTAMP_COLUMN,
) -> SensorSequence:
    """Parse a sensor CSV, keeping the timestamp and the six inertial channels.

    Raises MissingColumn if a required header is absent, MalformedRow for
    non-numeric or non-finite cells, NonMonotoneTime if timestamps do not
    strictly increase.
    """
    if isinstance(source, bytes):
        text = source.decode("utf-8")
    else:
        text = source.read().decode("utf-8")
    reader = csv.reader(io.StringIO(text))
    try:
        header = next(reader)
    except StopIteration:
        raise MissingColumn("empty CSV: no header row") from None
    header = [h.strip() for h in header]

    wanted = (timestamp_column,) + SENSOR_CHANNELS
    indices = []
    for name in wanted:
        try:
            indices.append(header.index(name))
        except ValueError:
            raise MissingColumn(f"required column {name!r} not in CSV header") from None

    times: list[float] = []
    rows: list[list[float]] = []
    for lineno, row in enumerate(reader, start=2):
        if not row or (len(row) == 1 and not row[0].strip()):
            continue  # trailing blank line
        if len(row) < len(header):
            raise MalformedRow(f"line {lineno}: expected {len(header)} cells, got {len(row)}")
        try:
            values = [float(row[i]) for i in indices]
        except ValueError as exc:
            raise MalformedRow(f"line {lineno}: {exc}") from None
        if not all(math.isfinite(v) for v in values):
            raise MalformedRow(f"line {lineno}: non-finite value")
        if values[0] < 0:
            raise MalformedRow(f"line {lineno}: negative timestamp {values[0]}")
        times.append(values[0])
        rows.append(values[1:])

    if len(times) < 2:
        raise TooFewSamples(f"CSV for {participant_id}/{path_id} has {len(times)} data rows; need >= 2")

    t = np.asarray(times, dtype=np.float64)
    if np.any(np.diff(t) <= 0):
        bad = int(np.argmax(np.diff(t) <= 0))
        raise NonMonotoneTime(f"timestamp does not increase at row {bad + 1} -> {bad + 2}")
    period = float(np.median(np.diff(t)))
    return SensorSequence(
        participant_id=participant_id,
        path_id=path_id,
        times=t,
        channels=np.asarray(rows, dtype=np.float64),
        sample_period=period,
    )


def _require_attr(elem: ET.Element, name: str) -> str:
    value = elem.get(name)
    if value is None:
        raise SchemaViolation(f"<{elem.tag}> is missing required attribute {name!r}")
    return value


def _parse_time(elem: ET.Element, name: str) -> float:
    raw = _require_attr(elem, name)
    try:
        value = float(raw)
    except ValueError:
        raise SchemaViolation(f"<{elem.tag}> attribute {name}={raw!r} is not a number") from None
    if not math.isfinite(value):
        raise SchemaViolation(f"<{elem.tag}> attribute {name}={raw!r} is not finite")
    return value


def parse_ground_truth_xml(source: bytes | IO[bytes]) -> AnnotatedWalk:
    """Parse a canonical annotation XML into an AnnotatedWalk.

    Expected shape::

        <walk participant="p1" path="t1" group="sighted|long_cane|guide_dog">
          <segment id="s0" kind="straight|turn" start="2.0" end="34.0" direction="east">
            <step t="5.4761" foot="left"/>
            <feature start="9.0418" end="10.0418" desc="moved to the wall"/>
          </segment>
        </walk>
    """
    data = source if isinstance(source, bytes) else source.read()
    try:
        root = ET.fromstring(data)
    except ET.ParseError as exc:
        raise SchemaViolation(f"not well-formed XML: {exc}") from None
    if root.tag != "walk":
        raise SchemaViolation(f"root element must be <walk>, got <{root.tag}>")

    participant = _require_attr(root, "participant")
    path = _require_attr(root, "path")
    group_raw = _require_attr(root, "group")
    try:
        group = WalkerGroup(group_raw)
    except ValueError:
        raise SchemaViolation(f"unknown walker group {group_raw!r}") from None

    segments: list[Segment] = []
    for seg_elem in root:
        if seg_elem.tag != "segment":
            log.debug("ignoring unknown element <%s> under <walk>", seg_elem.tag)
            continue
        seg_id = _require_attr(seg_elem, "id")
        kind_raw = _require_attr(seg_elem, "kind")
        try:
            kind = SegmentKind(kind_raw)
        except ValueError:
            raise SchemaViolation(f"segment {seg_id}: unknown kind {kind_raw!r}") from None
        start = _parse_time(seg_elem, "start")
        end = _parse_time(seg_elem, "end")
        direction = seg_elem.get("direction", "")

        steps: list[StepEvent] = []
        features: list[FeatureInterval] = []
        for child in seg_elem:
            if child.tag == "step":
                foot_raw = _require_attr(child, "foot")
                try:
                    foot = Foot(foot_raw)
                except ValueError:
                    raise SchemaViolation(f"segment {seg_id}: unknown foot {foot_raw!r}") from None
                steps.append(StepEvent(t=_parse_time(child, "t"), foot=foot))
            elif child.tag == "feature":
                features.append(
                    FeatureInterval(
                        start=_parse_time(child, "start"),
                        end=_parse_time(child, "end"),
                        description=child.get("desc", ""),
                    )
                )
            else:
                log.debug("ignoring unknown element <%s> in segment %s", child.tag, seg_id)
        segments.append(
            Segment(
                id=seg_id,
                kind=kind,
                start=start,
                end=end,
                direction=direction,
                steps=tuple(steps),
                features=tuple(features),
            )
        )

    return AnnotatedWalk(
        participant_id=participant,
        path_id=path,
        walker_group=group,
        segments=tuple(segments),
    )


def walk_to_xml(walk: AnnotatedWalk) -> bytes:
    """Serialize an AnnotatedWalk back to the canonical XML (round-trip safe).

    Times are written with repr-precision so re-parsing recovers identical
    float values.
    """
    root = ET.Element(
        "walk",
        participant=walk.participant_id,
        path=walk.path_id,
        group=walk.walker_group.value,
    )
    for seg in walk.segments:
        seg_elem = ET.SubElement(
            root,
            "segment",
            id=seg.id,
            kind=seg.kind.value,
            start=repr(seg.start),
            end=repr(seg.end),
            direction=seg.direction,
        )
        for step in seg.steps:
            ET.SubElement(seg_elem, "step", t=repr(step.t), foot=step.foot.value)
        for feat in seg.features:
            ET.SubElement(
                seg_elem, "feature", start=repr(feat.start), end=repr(feat.end), desc=feat.description
            )
    ET.indent(root)
    return ET.tostring(root, encoding="utf-8", xml_declaration=True)


def _usable_intervals(segment: Segment) -> list[tuple[float, float]]:
    """Time intervals of a straight segment kept for training.

    Starts at the segment's first heel strike, ends at the segment end, and
    has every feature interval [start, end) subtracted.
    """
    if not segment.steps:
        return []
    lo = segment.steps[0].t
    hi = segment.end
    if lo >= hi:
        return []
    intervals = [(lo, hi)]
    for feat in sorted(segment.features, key=lambda f: f.start):
        cut: list[tuple[float, float]] = []
        for a, b in intervals:
            if feat.end <= a or feat.start >= b:
                cut.append((a, b))
                continue
            if feat.start > a:
                cut.append((a, feat.start))
            if feat.end < b:
                cut.append((feat.end, b))
        intervals = cut
    return intervals


def extract_usable_spans(walk: AnnotatedWalk, seq: SensorSequence) -> list[UsableSlice]:
    """Cut the usable sensor slices out of one walk.

    Keeps straight segments only, drops everything before each segment's first
    heel strike, and removes feature intervals (a sample is dropped iff its
    time lies in some [feature.start, feature.end)). Feature removal may split
    a segment into several slices; each slice is paired with the step events
    falling inside its span. Slices that end up shorter than 2 samples are
    dropped with a log message.

    Raises NoUsableData if nothing survives.
    """
    if (walk.participant_id, walk.path_id) != (seq.participant_id, seq.path_id):
        raise ValueError(
            f"walk {walk.participant_id}/{walk.path_id} does not match "
            f"sequence {seq.participant_id}/{seq.path_id}"
        )

    slices: list[UsableSlice] = []
    for segment in walk.segments:
        if segment.kind is not SegmentKind.STRAIGHT:
            continue
        intervals = _usable_intervals(segment)
        if not intervals and segment.steps:
            log.info("segment %s: nothing usable after feature removal", segment.id)
        step_times = np.array([s.t for s in segment.steps], dtype=np.float64)
        for j, (lo, hi) in enumerate(intervals):
            # Last interval of the segment is closed at the segment end.
            closed = hi == segment.end
            i0 = int(np.searchsorted(seq.times, lo, side="left"))
            i1 = int(np.searchsorted(seq.times, hi, side="right" if closed else "left"))
            if i1 - i0 < 2:
                log.info(
                    "segment %s interval [%g, %g): only %d samples, dropped",
                    segment.id, lo, hi, i1 - i0,
                )
                continue
            s0 = int(np.searchsorted(step_times, lo, side="left"))
            s1 = int(np.searchsorted(step_times, hi, side="right" if closed else "left"))
            slices.append(
                UsableSlice(
                    slice_id=f"{walk.participant_id}/{walk.path_id}/{segment.id}/{j}",
                    participant_id=walk.participant_id,
                    path_id=walk.path_id,
                    segment=segment,
                    times=seq.times[i0:i1].copy(),
                    channels=seq.channels[i0:i1].copy(),
                    steps=segment.steps[s0:s1],
                    span=(lo, hi),
                )
            )
    if not slices:
        raise NoUsableData(
            f"walk {walk.participant_id}/{walk.path_id}: no straight-segment data survives filtering"
        )
    return slices


def load_walk_pair(
    csv_path: Path | str,
    xml_path: Path | str,
    timestamp_column: str = DEFAULT_TIMESTAMP_COLUMN,
) -> tuple[SensorSequence, AnnotatedWalk]:
    """Load one walk from its CSV/XML file pair; identities come from the XML."""
    xml_path = Path(xml_path)
    csv_path = Path(csv_path)
    walk = parse_ground_truth_xml(xml_path.read_bytes())
    seq = parse_sensor_csv(
        csv_path.read_bytes(),
        participant_id=walk.participant_id,
        path_id=walk.path_id,
        timestamp_column=timestamp_column,
    )
    return seq, walk


def load_dataset_dir(
    root: Path | str,
    timestamp_column: str = DEFAULT_TIMESTAMP_COLUMN,
) -> list[tuple[SensorSequence, AnnotatedWalk]]:
    """Load every CSV/XML stem pair under a dataset directory, sorted by stem."""
    root = Path(root)
    pairs = []
    for xml_path in sorted(root.glob("*.xml")):
        csv_path = xml_path.with_suffix(".csv")
        if not csv_path.exists():
            log.warning("no CSV next to %s, skipping", xml_path.name)
            continue
        pairs.append(load_walk_pair(csv_path, xml_path, timestamp_column))
    if not pairs:
        raise NoUsableData(f"no walk file pairs under {root}")
    return pairs
