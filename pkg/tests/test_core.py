import numpy as np
import pytest
from hypothesis import given, strategies as st

from pstlguard.core import (BoundingBox, Detection, GrayImage, GreedyTracker, Track,
                            associate_tracks, box_mask, clamp_box, crop, iou)


def raster_iou(a, b, scale=1):
    """Count unit cells covered by each integer box."""
    def cells(box):
        return {(x, y) for x in range(int(box.x * scale), int(box.x2 * scale))
                for y in range(int(box.y * scale), int(box.y2 * scale))}
    ca, cb = cells(a), cells(b)
    return len(ca & cb) / len(ca | cb)


def test_iou_identical_and_disjoint():
    a = BoundingBox(3, 4, 10, 5)
    assert iou(a, a) == 1.0
    assert iou(a, BoundingBox(20, 20, 3, 3)) == 0.0
    # touching edges share no area
    assert iou(a, BoundingBox(13, 4, 2, 2)) == 0.0


def test_iou_offset_squares_match_raster_count():
    a, b = BoundingBox(0, 0, 2, 2), BoundingBox(1, 1, 2, 2)
    expected = raster_iou(a, b)
    assert expected == pytest.approx(1 / 7)
    assert iou(a, b) == pytest.approx(expected, abs=1e-12)


boxes = st.builds(BoundingBox, st.integers(0, 20), st.integers(0, 20),
                  st.integers(1, 12), st.integers(1, 12))


@given(boxes, boxes)
def test_iou_symmetric_and_matches_raster(a, b):
    assert iou(a, b) == iou(b, a)
    assert iou(a, b) == pytest.approx(raster_iou(a, b), abs=1e-12)
    assert iou(a, a) == 1.0


def test_box_rejects_degenerate():
    with pytest.raises(ValueError):
        BoundingBox(0, 0, 0, 3)
    with pytest.raises(ValueError):
        BoundingBox(0, 0, 3, -1)


def test_clamp_box():
    assert clamp_box(BoundingBox(-2, -3, 6, 6), 10, 10) == BoundingBox(0, 0, 4, 3)
    assert clamp_box(BoundingBox(8, 8, 5, 5), 10, 10) == BoundingBox(8, 8, 2, 2)
    with pytest.raises(ValueError):
        clamp_box(BoundingBox(11, 0, 2, 2), 10, 10)


def ramp_image(w=4, h=4):
    return GrayImage(np.arange(w * h, dtype=np.uint8).reshape(h, w))


def test_gray_image_validation():
    with pytest.raises(ValueError):
        GrayImage(np.array([[0, 256]]))
    with pytest.raises(ValueError):
        GrayImage.from_values(2, 2, [1, 2, 3])
    img = GrayImage.from_values(2, 2, [1, 2, 3, 4])
    assert img.width == 2 and img.height == 2
    with pytest.raises(ValueError):
        img.pixels[0, 0] = 9


def test_crop_full_image_is_identity():
    img = ramp_image()
    assert crop(img, BoundingBox(0, 0, 4, 4)) == img


def test_crop_single_pixel():
    img = ramp_image()
    for r in range(4):
        for c in range(4):
            assert crop(img, BoundingBox(c, r, 1, 1)).pixels.tolist() == [[4 * r + c]]


def test_crop_2x2_of_ramp():
    img = ramp_image()
    # value at (row, col) is 4*row + col
    got = crop(img, BoundingBox(1, 2, 2, 2)).pixels.tolist()
    assert got == [[4 * 2 + 1, 4 * 2 + 2], [4 * 3 + 1, 4 * 3 + 2]]


def test_crop_out_of_bounds():
    with pytest.raises(ValueError):
        crop(ramp_image(), BoundingBox(3, 3, 2, 2))


def test_box_mask_union():
    m = box_mask((4, 4), [BoundingBox(0, 0, 2, 2), BoundingBox(1, 1, 2, 2)])
    assert m.sum() == 7


def det(frame, x, y, w=10, h=10, cls=0):
    return Detection(frame, BoundingBox(x, y, w, h), cls, 0.9)


def test_tracker_single_moving_box():
    frames = [[det(t, 10 + t, 10)] for t in range(20)]
    tracks = associate_tracks(frames, 0.3)
    assert len(tracks) == 1
    assert tracks[0].frames() == list(range(20))


def test_tracker_two_static_boxes():
    frames = [[det(t, 0, 0), det(t, 50, 50)] for t in range(5)]
    tracks = associate_tracks(frames)
    assert len(tracks) == 2
    assert all(len(t.detections) == 5 for t in tracks)


def test_tracker_gap_starts_new_track():
    # frame 0: box, frame 1: nothing, frame 2: same box again
    frames = [[det(0, 5, 5)], [], [det(2, 5, 5)]]
    tracks = associate_tracks(frames)
    assert [t.frames() for t in tracks] == [[0], [2]]
    assert tracks[0].track_id != tracks[1].track_id


def test_tracker_class_gate():
    frames = [[det(0, 5, 5, cls=0)], [det(1, 5, 5, cls=1)]]
    assert len(associate_tracks(frames)) == 2


def test_tracker_prefers_highest_iou():
    tr = GreedyTracker(0.1)
    a, b = tr.update([det(0, 0, 0), det(0, 30, 0)])
    # both new boxes overlap the first old box; the closer one must win it
    n1, n2 = tr.update([det(1, 6, 0), det(1, 1, 0)])
    assert n2.track_id == a.track_id
    assert n1.track_id not in (a.track_id, b.track_id)


@given(st.lists(st.lists(st.tuples(st.integers(0, 60), st.integers(0, 60)), max_size=4),
                min_size=1, max_size=12))
def test_tracker_partitions_detections(spec):
    frames = [[det(t, x, y) for x, y in boxes] for t, boxes in enumerate(spec)]
    tracks = associate_tracks(frames)
    all_in = sorted((d.frame_index, d.bbox.x, d.bbox.y) for f in frames for d in f)
    all_out = sorted((d.frame_index, d.bbox.x, d.bbox.y) for t in tracks for d in t.detections)
    assert all_in == all_out
    ids = [t.track_id for t in tracks]
    assert len(ids) == len(set(ids))
    for t in tracks:
        fr = t.frames()
        assert all(b > a for a, b in zip(fr, fr[1:]))


def test_track_invariants():
    d0 = det(0, 0, 0).with_track(1)
    d1 = det(1, 0, 0).with_track(1)
    with pytest.raises(ValueError):
        Track(1, (d1, d0))
    with pytest.raises(ValueError):
        Track(2, (d0,))
    assert Track(1, (d0, d1)).upto(0).frames() == [0]


def test_detection_confidence_range():
    with pytest.raises(ValueError):
        Detection(0, BoundingBox(0, 0, 1, 1), 0, 1.5)
