import numpy as np
import pytest

from stepwave import ingest, synth
from stepwave.ingest import (
    AnnotatedWalk,
    FeatureInterval,
    Foot,
    MalformedRow,
    MissingColumn,
    NoUsableData,
    NonMonotoneTime,
    OrderViolation,
    SchemaViolation,
    Segment,
    SegmentKind,
    StepEvent,
    TooFewSamples,
    WalkerGroup,
    extract_usable_spans,
    parse_ground_truth_xml,
    parse_sensor_csv,
    walk_to_xml,
)

CHANNELS = ",".join(ingest.SENSOR_CHANNELS)


def make_csv(rows, header=f"timestamp,{CHANNELS},extraColumn"):
    lines = [header]
    for row in rows:
        lines.append(",".join(str(v) for v in row))
    return ("\n".join(lines) + "\n").encode()


def full_row(t, value=0.1):
    return [t] + [value] * 6 + [99.0]


WALK_XML = b"""<?xml version='1.0' encoding='utf-8'?>
<walk participant="p1" path="t1" group="long_cane">
  <segment id="s0" kind="straight" start="2.0" end="34.0" direction="east">
    <step t="5.4761" foot="left"/>
    <step t="6.1" foot="right"/>
    <step t="6.9" foot="left"/>
    <feature start="9.041862" end="10.041862" desc="moved to the wall"/>
  </segment>
  <segment id="s1" kind="turn" start="34.0" end="40.0" direction="south">
    <step t="35.0" foot="right"/>
  </segment>
</walk>
"""


class TestParseSensorCsv:
    def test_keeps_six_channels_and_discards_the_rest(self):
        data = make_csv([full_row(0.0), full_row(0.04), full_row(0.08)])
        seq = parse_sensor_csv(data, "p1", "t1")
        assert len(seq) == 3
        assert seq.channels.shape == (3, 6)
        assert seq.sample(0).rotation_rate == (0.1, 0.1, 0.1)

    def test_zero_channels_parse_without_error(self):
        data = make_csv([full_row(0.0, 0.0), full_row(0.04, 0.0)])
        seq = parse_sensor_csv(data, "p1", "t1")
        assert np.all(seq.channels == 0.0)

    def test_sample_period_is_median_gap(self):
        # gaps {0.04, 0.04, 0.08} -> median 0.04
        data = make_csv([full_row(t) for t in (0.00, 0.04, 0.08, 0.16)])
        seq = parse_sensor_csv(data, "p1", "t1")
        assert seq.sample_period == pytest.approx(0.04)

    def test_missing_column(self):
        header = "timestamp," + ",".join(c for c in ingest.SENSOR_CHANNELS if c != "rotationRateZ")
        data = make_csv([[0.0] + [0.1] * 5, [0.04] + [0.1] * 5], header=header)
        with pytest.raises(MissingColumn, match="rotationRateZ"):
            parse_sensor_csv(data, "p1", "t1")

    def test_non_monotone_time(self):
        data = make_csv([full_row(0.0), full_row(0.08), full_row(0.04)])
        with pytest.raises(NonMonotoneTime):
            parse_sensor_csv(data, "p1", "t1")

    def test_malformed_cell(self):
        data = make_csv([full_row(0.0), [0.04, "oops", 0.1, 0.1, 0.1, 0.1, 0.1, 0.0]])
        with pytest.raises(MalformedRow):
            parse_sensor_csv(data, "p1", "t1")

    def test_non_finite_cell_rejected(self):
        data = make_csv([full_row(0.0), [0.04, "nan", 0.1, 0.1, 0.1, 0.1, 0.1, 0.0]])
        with pytest.raises(MalformedRow):
            parse_sensor_csv(data, "p1", "t1")

    def test_single_row_rejected(self):
        with pytest.raises(TooFewSamples):
            parse_sensor_csv(make_csv([full_row(0.0)]), "p1", "t1")

    def test_custom_timestamp_column(self):
        header = f"clock,{CHANNELS}"
        data = make_csv([[0.0] + [0.1] * 6, [0.04] + [0.1] * 6], header=header)
        seq = parse_sensor_csv(data, "p1", "t1", timestamp_column="clock")
        assert len(seq) == 2

    def test_deterministic(self):
        data = make_csv([full_row(t) for t in (0.0, 0.04, 0.08)])
        a = parse_sensor_csv(data, "p1", "t1")
        b = parse_sensor_csv(data, "p1", "t1")
        assert np.array_equal(a.times, b.times)
        assert np.array_equal(a.channels, b.channels)


class TestParseGroundTruthXml:
    def test_first_step_parsed(self):
        walk = parse_ground_truth_xml(WALK_XML)
        first = walk.segments[0].steps[0]
        assert first.t == pytest.approx(5.4761)
        assert first.foot is Foot.LEFT
        assert walk.walker_group is WalkerGroup.LONG_CANE

    def test_feature_interval_verbatim(self):
        walk = parse_ground_truth_xml(WALK_XML)
        feat = walk.segments[0].features[0]
        assert feat.start == pytest.approx(9.041862)
        assert feat.end == pytest.approx(10.041862)
        assert feat.description == "moved to the wall"

    def test_segment_without_steps_parses(self):
        xml = (
            b'<walk participant="p" path="t" group="sighted">'
            b'<segment id="s0" kind="straight" start="0" end="5" direction=""/></walk>'
        )
        walk = parse_ground_truth_xml(xml)
        assert walk.segments[0].steps == ()

    def test_missing_attribute(self):
        xml = b'<walk participant="p" path="t"><segment id="s" kind="straight" start="0" end="5"/></walk>'
        with pytest.raises(SchemaViolation, match="group"):
            parse_ground_truth_xml(xml)

    def test_unknown_group(self):
        xml = b'<walk participant="p" path="t" group="cyclist"/>'
        with pytest.raises(SchemaViolation):
            parse_ground_truth_xml(xml)

    def test_empty_walk(self):
        with pytest.raises(ingest.EmptyWalk):
            parse_ground_truth_xml(b'<walk participant="p" path="t" group="sighted"/>')

    def test_unordered_steps(self):
        xml = (
            b'<walk participant="p" path="t" group="sighted">'
            b'<segment id="s" kind="straight" start="0" end="5" direction="">'
            b'<step t="2.0" foot="left"/><step t="1.0" foot="right"/>'
            b"</segment></walk>"
        )
        with pytest.raises(OrderViolation):
            parse_ground_truth_xml(xml)

    def test_overlapping_segments(self):
        xml = (
            b'<walk participant="p" path="t" group="sighted">'
            b'<segment id="a" kind="straight" start="0" end="5" direction=""/>'
            b'<segment id="b" kind="turn" start="4" end="8" direction=""/>'
            b"</walk>"
        )
        with pytest.raises(OrderViolation):
            parse_ground_truth_xml(xml)

    def test_step_outside_segment(self):
        xml = (
            b'<walk participant="p" path="t" group="sighted">'
            b'<segment id="s" kind="straight" start="0" end="5" direction="">'
            b'<step t="6.0" foot="left"/></segment></walk>'
        )
        with pytest.raises(SchemaViolation):
            parse_ground_truth_xml(xml)

    def test_roundtrip_identity(self):
        walk = parse_ground_truth_xml(WALK_XML)
        again = parse_ground_truth_xml(walk_to_xml(walk))
        assert again == walk


def build_walk(segments):
    return AnnotatedWalk("p1", "t1", WalkerGroup.SIGHTED, tuple(segments))


def make_seq(times):
    times = np.asarray(times, dtype=np.float64)
    return ingest.SensorSequence(
        participant_id="p1",
        path_id="t1",
        times=times,
        channels=np.ones((len(times), 6)),
        sample_period=float(np.median(np.diff(times))),
    )


class TestExtractUsableSpans:
    def test_drops_data_before_first_step(self):
        seg = Segment(
            id="s0", kind=SegmentKind.STRAIGHT, start=2.0, end=34.0,
            steps=(StepEvent(5.4761, Foot.LEFT), StepEvent(6.2, Foot.RIGHT)),
        )
        seq = make_seq(np.arange(2.0, 34.0, 0.04))
        slices = extract_usable_spans(build_walk([seg]), seq)
        assert len(slices) == 1
        assert slices[0].times[0] >= 5.4761
        assert slices[0].span == (5.4761, 34.0)

    def test_only_turns_is_no_usable_data(self):
        seg = Segment(
            id="s0", kind=SegmentKind.TURN, start=0.0, end=10.0,
            steps=(StepEvent(1.0, Foot.LEFT),),
        )
        with pytest.raises(NoUsableData):
            extract_usable_spans(build_walk([seg]), make_seq(np.arange(0.0, 10.0, 0.04)))

    def test_feature_splits_segment(self):
        # segment 2..34 s, feature 9.04..10.04 s, first step 5.4761 s
        seg = Segment(
            id="s0", kind=SegmentKind.STRAIGHT, start=2.0, end=34.0,
            steps=(StepEvent(5.4761, Foot.LEFT), StepEvent(12.0, Foot.RIGHT)),
            features=(FeatureInterval(9.04, 10.04, "wall"),),
        )
        seq = make_seq(np.arange(2.0, 34.04, 0.04))
        slices = extract_usable_spans(build_walk([seg]), seq)
        assert [s.span for s in slices] == [(5.4761, 9.04), (10.04, 34.0)]
        # sample-boundary rule: in [start, end) of a feature -> dropped
        assert all(t < 9.04 for t in slices[0].times)
        assert all(t >= 10.04 for t in slices[1].times)
        # the step at 12.0 belongs to the second slice
        assert [s.t for s in slices[1].steps] == [12.0]

    def test_zero_step_straight_segment_is_dropped(self):
        seg = Segment(id="s0", kind=SegmentKind.STRAIGHT, start=0.0, end=10.0)
        with pytest.raises(NoUsableData):
            extract_usable_spans(build_walk([seg]), make_seq(np.arange(0.0, 10.0, 0.04)))

    def test_identity_mismatch_rejected(self):
        seg = Segment(
            id="s0", kind=SegmentKind.STRAIGHT, start=0.0, end=10.0,
            steps=(StepEvent(1.0, Foot.LEFT),),
        )
        seq = make_seq(np.arange(0.0, 10.0, 0.04))
        walk = AnnotatedWalk("other", "t1", WalkerGroup.SIGHTED, (seg,))
        with pytest.raises(ValueError):
            extract_usable_spans(walk, seq)

    def test_samples_inside_straight_segments_and_outside_features(self):
        seq, walk = synth.generate_walk(
            synth.sighted_profile(), duration=30.0, seed=5,
            inject_turn=True, inject_feature=True,
        )
        slices = extract_usable_spans(walk, seq)
        straight = [s for s in walk.segments if s.kind is SegmentKind.STRAIGHT]
        features = [f for s in walk.segments for f in s.features]
        for slc in slices:
            inside = [
                sum(1 for seg in straight if seg.start <= t <= seg.end) for t in slc.times
            ]
            assert all(c == 1 for c in inside)
            for feat in features:
                assert not np.any((slc.times >= feat.start) & (slc.times < feat.end))

    def test_slice_durations_bounded_by_straight_durations(self):
        seq, walk = synth.generate_walk(
            synth.sighted_profile(), duration=30.0, seed=6, inject_turn=True,
        )
        slices = extract_usable_spans(walk, seq)
        total = sum(s.span[1] - s.span[0] for s in slices)
        straight = sum(
            seg.end - seg.start for seg in walk.segments if seg.kind is SegmentKind.STRAIGHT
        )
        assert total <= straight + 1e-9


def test_load_dataset_dir_roundtrip(tiny_cohort):
    pairs = ingest.load_dataset_dir(tiny_cohort)
    assert len(pairs) == 6
    for seq, walk in pairs:
        assert (seq.participant_id, seq.path_id) == (walk.participant_id, walk.path_id)
        assert len(seq) >= 2
