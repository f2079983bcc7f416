import json
from pathlib import Path

import numpy as np
import pytest
from scipy.special import expit

from pstlguard.adaptation import DesiredTargets, apply_contrast
from pstlguard.calibration import AxiomSpec
from pstlguard.core import BoundingBox, Detection, GrayImage, Track, crop, iou
from pstlguard.probes import michelson_contrast
from pstlguard.pstl import AxiomFormula
from pstlguard.sim import (ADAPTIVE, BASELINE, HIST_EQ, METHODS, DetectorModel, SceneConfig,
                           equalize_histogram, evaluate, gain_ramp, generate_scene, gt_by_frame,
                           ramp_scenario, roc_dominates, run_closed_loop, synthetic_detect)
from pstlguard.sim.metrics import CSV_HEADER, DEFAULT_SWEEP, match_frame
from pstlguard.sim.scene import analytic_contrast

GOLDEN = Path(__file__).parent / "golden" / "reference_report.json"


def small_scene(**kw):
    base = dict(frame_count=30, rng_seed=7)
    base.update(kw)
    return SceneConfig(**base)


def test_scene_is_deterministic():
    a_frames, a_gt = generate_scene(small_scene())
    b_frames, b_gt = generate_scene(small_scene())
    assert a_frames == b_frames and a_gt == b_gt
    c_frames, _ = generate_scene(small_scene(rng_seed=8))
    assert c_frames != a_frames


def test_scene_ground_truth_layout():
    cfg = small_scene(object_count=4, frame_size=(200, 140))
    frames, tracks = generate_scene(cfg)
    assert [t.track_id for t in tracks] == [1, 2, 3, 4]
    per_frame = gt_by_frame(tracks, cfg.frame_count)
    for t, gts in enumerate(per_frame):
        assert len(gts) == 4
        for g in gts:
            assert g.frame_index == t
            assert 0 <= g.bbox.x and g.bbox.x2 <= 200 and 0 <= g.bbox.y and g.bbox.y2 <= 140
        assert all(iou(a.bbox, b.bbox) == 0 for i, a in enumerate(gts) for b in gts[i + 1:])


def test_noiseless_crop_contrast_matches_analytic_gain():
    gains = (1.0, 0.7, 0.4)
    cfg = small_scene(frame_count=3, noise_std=0.0, degradation_schedule=gains,
                      object_intensity_range=(150, 150), background_intensity=60)
    frames, tracks = generate_scene(cfg)
    for t, g in enumerate(gains):
        for tr in tracks:
            got = michelson_contrast(crop(frames[t], tr.at(t).bbox))
            # the object level is rounded to an integer intensity
            assert got == pytest.approx(analytic_contrast(150, 60, g), abs=1 / 120)


def test_scene_validation():
    with pytest.raises(ValueError):
        SceneConfig(frame_count=3, degradation_schedule=(1.0, 0.5))
    with pytest.raises(ValueError):
        SceneConfig(frame_count=2, degradation_schedule=(1.0, 0.0))
    with pytest.raises(ValueError):
        SceneConfig(object_count=10)
    assert gain_ramp(1.0, 0.4, 4) == pytest.approx((1.0, 0.8, 0.6, 0.4))


def test_detector_logistic():
    m = DetectorModel(contrast_midpoint=0.3, contrast_slope=0.05)
    assert m.p_detect(0.3) == pytest.approx(0.5)
    assert m.p_detect(0.4) == pytest.approx(expit(2.0))
    with pytest.raises(ValueError):
        DetectorModel(contrast_slope=0)


def test_detector_perfect_regime_reproduces_ground_truth():
    frames, tracks = generate_scene(small_scene())
    gt = gt_by_frame(tracks, 30)
    m = DetectorModel(contrast_midpoint=0.0, contrast_slope=1e-4, base_fp_rate=0.0,
                      bbox_jitter_std=0.0, confidence_noise_std=0.0)
    for t in range(30):
        dets = synthetic_detect(frames[t], gt[t], m, t)
        assert [d.bbox for d in dets] == [g.bbox for g in gt[t]]
        assert all(d.confidence == 1.0 for d in dets)


def test_detector_draws_are_paired_per_frame():
    frames, tracks = generate_scene(small_scene())
    gt = gt_by_frame(tracks, 30)
    m = DetectorModel(base_fp_rate=2.0, rng_seed=3)
    assert synthetic_detect(frames[5], gt[5], m, 5) == synthetic_detect(frames[5], gt[5], m, 5)
    # the spurious boxes do not depend on the image content
    brighter = apply_contrast(frames[5], 10, 140, 70)
    spurious = lambda ds: [d for d in ds if d.confidence <= 0.5]
    a, b = synthetic_detect(frames[5], gt[5], m, 5), synthetic_detect(brighter, gt[5], m, 5)
    assert [d.bbox for d in a[-len(spurious(a)):]] == [d.bbox for d in b[-len(spurious(b)):]]


def test_spurious_boxes_low_confidence():
    img = GrayImage(np.full((120, 160), 70, dtype=np.uint8))
    m = DetectorModel(base_fp_rate=5.0)
    confs = [d.confidence for t in range(50) for d in synthetic_detect(img, [], m, t)]
    assert len(confs) > 150
    assert all(0.05 <= c <= 0.5 for c in confs)
    with pytest.raises(ValueError):
        synthetic_detect(img, [], m)


def gt_tracks(boxes_per_frame):
    tracks = {}
    for t, boxes in enumerate(boxes_per_frame):
        for i, b in enumerate(boxes):
            tracks.setdefault(i + 1, []).append(Detection(t, b, 0, 1.0, i + 1))
    return [Track(k, tuple(v)) for k, v in tracks.items()]


B1, B2, B3 = BoundingBox(0, 0, 10, 10), BoundingBox(30, 0, 10, 10), BoundingBox(60, 0, 10, 10)


def test_metrics_counting_examples():
    gt = gt_tracks([[B1, B2, B3]])
    exact = [[Detection(0, b, 0, 0.9) for b in (B1, B2, B3)]]
    r = evaluate(gt, exact)
    assert (r.tp, r.fp, r.fn, r.precision, r.recall) == (3, 0, 0, 1.0, 1.0)
    r = evaluate(gt, [[]])
    assert (r.tp, r.fp, r.fn, r.recall) == (0, 0, 3, 0.0)
    mixed = [[Detection(0, B1, 0, 0.9), Detection(0, B2, 0, 0.9),
              Detection(0, BoundingBox(90, 50, 5, 5), 0, 0.9)]]
    r = evaluate(gt, mixed)
    assert (r.tp, r.fp, r.fn) == (2, 1, 1)
    assert r.tp_rate == pytest.approx(2 / 3)


def test_match_frame_greedy_highest_iou():
    g = [Detection(0, BoundingBox(0, 0, 10, 10), 0)]
    dets = [Detection(0, BoundingBox(2, 0, 10, 10), 0, 0.9),
            Detection(0, BoundingBox(1, 0, 10, 10), 0, 0.5)]
    assert match_frame(g, dets) == [(1, 0)]
    assert match_frame(g, [Detection(0, BoundingBox(0, 0, 10, 10), 1, 0.9)]) == []


def test_confidence_sweep_and_report_outputs():
    gt = gt_tracks([[B1, B2]] * 4)
    dets = [[Detection(t, B1, 0, 0.3), Detection(t, B2, 0, 0.8),
             Detection(t, BoundingBox(80, 40, 9, 9), 0, 0.2)] for t in range(4)]
    r = evaluate(gt, dets, confidence_sweep=(0.1, 0.25, 0.5, 0.9))
    assert [(p.recall, p.fp_rate) for p in r.curve] == [(1.0, 1.0), (1.0, 0.0), (0.5, 0.0),
                                                       (0.0, 0.0)]
    assert r.to_csv().splitlines()[0] == ",".join(CSV_HEADER)
    assert json.loads(r.to_json())["tp"] == 8
    assert "tp_rate" in r.to_table()
    assert r.precision_recall_curve[0] == (pytest.approx(8 / 12), 1.0)
    seg = evaluate(gt, dets, frame_range=(1, 3))
    assert seg.frames == 2 and seg.tp == 4
    assert DEFAULT_SWEEP[0] == 0.05 and DEFAULT_SWEEP[-1] == 0.95 and len(DEFAULT_SWEEP) == 19


def test_roc_dominance():
    gt = gt_tracks([[B1, B2]])
    good = evaluate(gt, [[Detection(0, B1, 0, 0.9), Detection(0, B2, 0, 0.9)]])
    weak = evaluate(gt, [[Detection(0, B1, 0, 0.9)]])
    assert roc_dominates(good, weak) and not roc_dominates(weak, good)
    assert roc_dominates(weak, weak)
    other = evaluate(gt, [[]], confidence_sweep=(0.5,))
    with pytest.raises(ValueError):
        roc_dominates(good, other)


def test_histogram_equalization():
    img = GrayImage.from_values(4, 1, [10, 10, 20, 20])
    assert equalize_histogram(img).pixels.tolist() == [[0, 0, 255, 255]]
    flat = GrayImage(np.full((3, 3), 9, dtype=np.uint8))
    assert equalize_histogram(flat) == flat


def floor_axiom(a=0.05):
    return [AxiomFormula.from_spec(AxiomSpec("contrast", a, float("inf"), 0.9, 10, 0.5))]


def test_noiseless_sanity_every_method_perfect():
    scene = small_scene(noise_std=0.0)
    det = DetectorModel(contrast_midpoint=0.0, contrast_slope=1e-3, base_fp_rate=0.0,
                        bbox_jitter_std=0.0, confidence_noise_std=0.0)
    res = run_closed_loop(scene, det, floor_axiom(), DesiredTargets(0.4))
    for m in METHODS:
        r = res.reports[m]
        assert (r.precision, r.recall) == (1.0, 1.0), m
    assert res.commands == []


def test_closed_loop_arguments():
    scene, det = small_scene(frame_count=3), DetectorModel()
    with pytest.raises(ValueError, match="unknown methods"):
        run_closed_loop(scene, det, floor_axiom(), DesiredTargets(0.4), methods=("clahe",))
    with pytest.raises(ValueError, match="axiom"):
        run_closed_loop(scene, det, [], DesiredTargets(0.4), methods=(ADAPTIVE,))
    with pytest.raises(ValueError, match="entropy_bits"):
        run_closed_loop(scene, det, floor_axiom(), DesiredTargets(0.4),
                        required_probes=("contrast", "entropy_bits"))
    res = run_closed_loop(scene, det, [], DesiredTargets(0.4), methods=(BASELINE, HIST_EQ))
    assert set(res.reports) == {BASELINE, HIST_EQ}


@pytest.fixture(scope="module")
def reference():
    sc = ramp_scenario()
    cal = sc.calibrate()
    return sc, cal, sc.run(cal, methods=METHODS)


def test_adaptation_raises_detection_probability_per_frame(reference):
    sc, cal, res = reference
    frames, tracks = generate_scene(sc.scene)
    gt = gt_by_frame(tracks, sc.scene.frame_count)
    assert res.commands
    for t, cmd in res.commands:
        assert cmd.delta_c > 0
        adapted = apply_contrast(frames[t], cmd.bound_B, cmd.i_max, cmd.i_min)
        for g in gt[t]:
            before = sc.detector.p_detect(michelson_contrast(crop(frames[t], g.bbox)))
            after = sc.detector.p_detect(michelson_contrast(crop(adapted, g.bbox)))
            assert after >= before


def test_adaptive_beats_baseline_on_degraded_segment(reference):
    sc, _, res = reference
    half = sc.scene.frame_count // 2
    assert (res.segment(ADAPTIVE, half, sc.scene.frame_count).recall >
            res.segment(BASELINE, half, sc.scene.frame_count).recall)


def test_reference_report_matches_golden_file(reference):
    _, _, res = reference
    assert res.report().to_json() == GOLDEN.read_text(encoding="utf-8")


def test_undegraded_stream_never_adapts(reference):
    sc, cal, _ = reference
    res = sc.undegraded().run(cal)
    assert res.commands == []
    assert res.reports[ADAPTIVE].to_json() == res.reports[BASELINE].to_json()
