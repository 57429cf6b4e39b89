import itertools

import pytest

from spectra.detio import DetectionRecord
from spectra.geometry import BBox, FrameDims, iou
from spectra.synth import ObjectSpec, ScenarioSpec, generate
from spectra.tracker import (
    ACTIVE,
    LOST,
    TENTATIVE,
    IouTracker,
    Track,
    TrackerConfig,
    associate,
)


def det(box, cls="drone", conf=0.9, frame=0):
    return DetectionRecord(frame, "RGB", 0, cls, conf, BBox(*box))


def track_at(track_id, box, cls="drone"):
    t = Track(track_id, cls, history_length=32)
    t.observe(0, BBox(*box), 0.9)
    return t


class TestAssociate:
    def test_clear_match(self):
        t = track_at(1, (0, 0, 10, 10))
        matches, ut, ud = associate([t], [det((0, 1, 10, 11))], 0.3)
        assert matches == [(t, 0)]
        assert ut == [] and ud == []

    def test_low_iou_unmatched(self):
        t = track_at(1, (0, 0, 10, 10))
        matches, ut, ud = associate([t], [det((9, 9, 19, 19))], 0.3)
        assert matches == []
        assert ut == [t] and ud == [0]

    def test_class_mismatch_never_matches(self):
        t = track_at(1, (0, 0, 10, 10), cls="drone")
        matches, _, ud = associate([t], [det((0, 0, 10, 10), cls="bird")], 0.3)
        assert matches == [] and ud == [0]

    def test_crossing_pair_matches_optimal_assignment(self):
        # Two tracks and two detections in a crossing layout where the
        # greedy pairing coincides with the IoU-sum-maximizing assignment
        # found by exhaustive enumeration.
        t1 = track_at(1, (0, 0, 10, 10))
        t2 = track_at(2, (8, 0, 18, 10))
        dets = [det((1, 0, 11, 10)), det((9, 0, 19, 10))]
        matches, _, _ = associate([t1, t2], dets, 0.1)

        tracks = [t1, t2]
        best_sum, best_pairing = -1.0, None
        for perm in itertools.permutations(range(2)):
            s = sum(iou(tracks[i].bbox, dets[perm[i]].bbox) for i in range(2))
            if s > best_sum:
                best_sum, best_pairing = s, {(tracks[i].id, perm[i]) for i in range(2)}
        assert {(t.id, di) for t, di in matches} == best_pairing

    def test_match_count_bounded(self):
        tracks = [track_at(i + 1, (i * 5, 0, i * 5 + 10, 10)) for i in range(4)]
        dets = [det((i * 5 + 1, 0, i * 5 + 11, 10)) for i in range(6)]
        matches, _, _ = associate(tracks, dets, 0.1)
        assert len(matches) <= min(len(tracks), len(dets))
        assert len({t.id for t, _ in matches}) == len(matches)
        assert len({di for _, di in matches}) == len(matches)


class TestStep:
    def test_empty_stream_no_tracks(self):
        tr = IouTracker()
        for f in range(5):
            assert tr.step(f, []) == []
        assert tr.tracks == []

    def test_first_detection_spawns_active_with_min_hits_1(self):
        tr = IouTracker(TrackerConfig(min_hits=1))
        snaps = tr.step(0, [det((0, 0, 10, 10))])
        assert len(snaps) == 1
        assert snaps[0].state == ACTIVE
        assert [t.id for t in tr.active_tracks()] == [1]

    def test_min_hits_2_requires_consecutive_matches(self):
        tr = IouTracker(TrackerConfig(min_hits=2))
        s0 = tr.step(0, [det((0, 0, 10, 10))])
        assert s0[0].state == TENTATIVE
        s1 = tr.step(1, [det((0, 0, 10, 10))])
        assert s1[0].state == ACTIVE

    def test_out_of_order_frame_rejected(self):
        tr = IouTracker()
        tr.step(3, [])
        with pytest.raises(ValueError, match="frame index"):
            tr.step(3, [])

    def test_gap_within_tolerance_keeps_id(self):
        tr = IouTracker(TrackerConfig(max_gap=15))
        d = det((100, 100, 120, 120))
        ids = set()
        for f in range(43):
            dets = [] if 5 <= f <= 16 else [d]  # 12-frame dropout
            for s in tr.step(f, dets):
                ids.add(s.track_id)
        assert ids == {1}

    def test_gap_beyond_tolerance_forces_new_id(self):
        tr = IouTracker(TrackerConfig(max_gap=15))
        d = det((100, 100, 120, 120))
        seen = []
        for f in range(43):
            dets = [] if 5 <= f <= 20 else [d]  # 16-frame dropout = max_gap + 1
            for s in tr.step(f, dets):
                seen.append((f, s.track_id))
        assert {tid for f, tid in seen if f < 5} == {1}
        assert {tid for f, tid in seen if f > 20} == {2}
        lost = [t for t in tr.tracks if t.state == LOST]
        assert [t.id for t in lost] == [1]

    def test_lost_track_never_revived_even_without_empty_steps(self):
        tr = IouTracker(TrackerConfig(max_gap=15))
        d = det((100, 100, 120, 120))
        tr.step(0, [d])
        snaps = tr.step(17, [d])  # 16 missed frames, stepped sparsely
        assert snaps[0].track_id == 2

    def test_held_box_used_during_gap(self):
        tr = IouTracker(TrackerConfig(max_gap=15, iou_match_threshold=0.3))
        tr.step(0, [det((100, 100, 120, 120))])
        tr.step(1, [])
        snaps = tr.step(2, [det((102, 100, 122, 120))])
        assert snaps[0].track_id == 1

    def test_ids_unique_and_never_reused(self):
        tr = IouTracker(TrackerConfig(max_gap=1))
        issued = []
        for f in range(30):
            dets = [det((100, 100, 120, 120))] if f % 6 < 2 else []
            for s in tr.step(f, dets):
                issued.append(s.track_id)
        assert sorted(set(issued)) == sorted({t.id for t in tr.tracks})
        assert len({t.id for t in tr.tracks}) == len(tr.tracks)
        assert tr.tracks_created == len(tr.tracks)

    def test_snapshots_only_tracks_seen_this_frame(self):
        tr = IouTracker()
        tr.step(0, [det((0, 0, 10, 10)), det((100, 0, 110, 10))])
        snaps = tr.step(1, [det((0, 0, 10, 10))])
        assert [s.track_id for s in snaps] == [1]

    def test_history_bounded(self):
        cfg = TrackerConfig(history_length=4)
        tr = IouTracker(cfg)
        for f in range(20):
            tr.step(f, [det((0, 0, 10, 10))])
        (t,) = tr.active_tracks()
        assert len(t.boxes) == 4
        frames = [fi for fi, _, _ in t.boxes]
        assert frames == sorted(frames) == [16, 17, 18, 19]

    def test_misses_equals_frame_minus_last_seen(self):
        tr = IouTracker(TrackerConfig(max_gap=15))
        tr.step(0, [det((0, 0, 10, 10))])
        tr.step(1, [])
        tr.step(2, [])
        (t,) = tr.live_tracks()
        assert t.misses == 2 - t.last_seen == 2


class TestActiveTracks:
    def test_fresh_state_empty(self):
        assert IouTracker().active_tracks() == []

    def test_lost_excluded(self):
        tr = IouTracker(TrackerConfig(max_gap=2))
        tr.step(0, [det((0, 0, 10, 10))])
        for f in range(1, 5):
            tr.step(f, [])
        assert tr.active_tracks() == []
        assert tr.live_tracks() == []


def test_zero_noise_scenario_single_id_per_object():
    spec = ScenarioSpec(
        frame_count=120,
        dims=FrameDims(320, 256),
        objects=(
            ObjectSpec("drone", (40, 40), (2, 0), 400),
            ObjectSpec("drone", (40, 120), (2, 0.5), 400),
            ObjectSpec("bird", (280, 200), (-1.5, -1), 300),
        ),
        seed=5,
    )
    gt, frames = generate(spec)
    by_index = {fr.frame_index: fr for fr in frames}
    tr = IouTracker()
    object_ids: dict[int, set[int]] = {}
    for f in range(spec.frame_count):
        dets = by_index[f].rgb if f in by_index else []
        snaps = tr.step(f, dets)
        truth = [g for g in gt if g.frame_index == f]
        for s in snaps:
            best = max(truth, key=lambda g: iou(g.bbox, s.bbox))
            object_ids.setdefault(best.object_id, set()).add(s.track_id)
    assert tr.tracks_created == 3
    assert all(len(ids) == 1 for ids in object_ids.values())
