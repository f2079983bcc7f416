"""Detection metrics: TP/FP/FN counts, precision-recall and ROC sweeps.

Two "TP rates" appear here. ``tp_rate`` is TP / (TP + FP), the table metric
reported per method (numerically the precision). ROC points pair the false
positives per frame with recall, TP / (TP + FN).
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from ..core import Detection, Track, iou

DEFAULT_SWEEP = tuple(round(float(t), 2) for t in np.arange(0.05, 1.0, 0.05))
CSV_HEADER = ("threshold", "precision", "recall", "fp_rate", "tp_rate")


def _ratio(num: int, den: int) -> float:
    return num / den if den else 0.0


@dataclass(frozen=True)
class CurvePoint:
    threshold: float
    precision: float
    recall: float
    fp_rate: float
    tp_rate: float


@dataclass
class EvalReport:
    tp: int
    fp: int
    fn: int
    frames: int
    threshold: float
    curve: list[CurvePoint] = field(default_factory=list)
    per_method: dict[str, "EvalReport"] = field(default_factory=dict)

    @property
    def precision(self) -> float:
        return _ratio(self.tp, self.tp + self.fp)

    @property
    def tp_rate(self) -> float:
        return _ratio(self.tp, self.tp + self.fp)

    @property
    def recall(self) -> float:
        return _ratio(self.tp, self.tp + self.fn)

    @property
    def precision_recall_curve(self) -> list[tuple[float, float]]:
        return [(p.precision, p.recall) for p in self.curve]

    @property
    def roc_points(self) -> list[tuple[float, float]]:
        return [(p.fp_rate, p.recall) for p in self.curve]

    def to_dict(self) -> dict:
        d = {"tp": self.tp, "fp": self.fp, "fn": self.fn, "frames": self.frames,
             "threshold": self.threshold, "precision": self.precision,
             "recall": self.recall, "tp_rate": self.tp_rate,
             "curve": [[p.threshold, p.precision, p.recall, p.fp_rate, p.tp_rate]
                       for p in self.curve]}
        if self.per_method:
            d["per_method"] = {k: v.to_dict() for k, v in self.per_method.items()}
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=1) + "\n"

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(CSV_HEADER)
        for p in self.curve:
            w.writerow([f"{p.threshold:.2f}", f"{p.precision:.6f}", f"{p.recall:.6f}",
                        f"{p.fp_rate:.6f}", f"{p.tp_rate:.6f}"])
        return buf.getvalue()

    def to_table(self) -> str:
        rows = self.per_method.items() if self.per_method else [("all", self)]
        lines = [f"{'method':<10} {'tp':>6} {'fp':>6} {'fn':>6} {'tp_rate':>8} "
                 f"{'recall':>8} {'frames':>7}"]
        for name, r in rows:
            lines.append(f"{name:<10} {r.tp:>6} {r.fp:>6} {r.fn:>6} {r.tp_rate:>8.4f} "
                         f"{r.recall:>8.4f} {r.frames:>7}")
        return "\n".join(lines) + "\n"


def match_frame(gt: Sequence[Detection], dets: Sequence[Detection],
                iou_thresh: float = 0.5) -> list[tuple[int, int]]:
    """Greedy one-to-one matching, highest IoU first. Returns (det, gt) index pairs."""
    pairs = []
    for i, d in enumerate(dets):
        for j, g in enumerate(gt):
            if d.class_id != g.class_id:
                continue
            s = iou(d.bbox, g.bbox)
            if s >= iou_thresh:
                pairs.append((s, i, j))
    pairs.sort(key=lambda p: (-p[0], p[1], p[2]))
    used_d, used_g, out = set(), set(), []
    for _, i, j in pairs:
        if i in used_d or j in used_g:
            continue
        used_d.add(i)
        used_g.add(j)
        out.append((i, j))
    return out


def _counts(gt_frames, det_frames, iou_thresh: float, conf: float) -> tuple[int, int, int]:
    tp = fp = fn = 0
    for gt, dets in zip(gt_frames, det_frames):
        kept = [d for d in dets if d.confidence >= conf]
        m = len(match_frame(gt, kept, iou_thresh))
        tp += m
        fp += len(kept) - m
        fn += len(gt) - m
    return tp, fp, fn


def evaluate(gt_tracks: Sequence[Track], detections: Sequence[Sequence[Detection]],
             iou_thresh: float = 0.5, confidence_sweep: Sequence[float] = DEFAULT_SWEEP,
             report_threshold: float = 0.1, frame_range: Optional[tuple[int, int]] = None
             ) -> EvalReport:
    """Score per-frame detections against ground-truth tracks.

    ``detections[t]`` is frame t's list. Counts are taken at ``report_threshold``;
    the curve sweeps ``confidence_sweep``. ``frame_range`` restricts scoring to
    frames ``[start, stop)``.
    """
    n = len(detections)
    gt_frames: list[list[Detection]] = [[] for _ in range(n)]
    for tr in gt_tracks:
        for d in tr.detections:
            if d.frame_index >= n:
                raise ValueError(f"ground truth at frame {d.frame_index} but only {n} frames")
            gt_frames[d.frame_index].append(d)
    start, stop = frame_range or (0, n)
    gt_frames, det_frames = gt_frames[start:stop], list(detections[start:stop])
    frames = len(det_frames)

    tp, fp, fn = _counts(gt_frames, det_frames, iou_thresh, report_threshold)
    curve = []
    for t in confidence_sweep:
        ctp, cfp, cfn = _counts(gt_frames, det_frames, iou_thresh, t)
        curve.append(CurvePoint(float(t), _ratio(ctp, ctp + cfp), _ratio(ctp, ctp + cfn),
                                _ratio(cfp, frames), _ratio(ctp, ctp + cfp)))
    return EvalReport(tp, fp, fn, frames, report_threshold, curve)


def roc_dominates(a: EvalReport, b: EvalReport) -> bool:
    """True when, at every swept threshold, ``a`` has recall >= and FP rate <= ``b``'s."""
    if [p.threshold for p in a.curve] != [p.threshold for p in b.curve]:
        raise ValueError("reports were swept over different thresholds")
    return all(pa.recall >= pb.recall and pa.fp_rate <= pb.fp_rate
               for pa, pb in zip(a.curve, b.curve))
