"""Frames, detections, tracks and the geometry shared by every other module."""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Iterable, Optional, Sequence

import numpy as np


@dataclass(frozen=True)
class BoundingBox:
    """Axis-aligned box in pixel units; (x, y) is the top-left corner."""

    x: float
    y: float
    w: float
    h: float

    def __post_init__(self):
        if not (self.w > 0 and self.h > 0):
            raise ValueError(f"box must have positive size, got w={self.w} h={self.h}")

    @property
    def x2(self) -> float:
        return self.x + self.w

    @property
    def y2(self) -> float:
        return self.y + self.h

    @property
    def area(self) -> float:
        return self.w * self.h

    @property
    def center(self) -> tuple[float, float]:
        return (self.x + self.w / 2.0, self.y + self.h / 2.0)

    @property
    def aspect(self) -> float:
        return self.w / self.h

    def pixel_bounds(self) -> tuple[int, int, int, int]:
        """Integer (col0, row0, col1, row1), half-open, after rounding each edge."""
        return (_round_half_up(self.x), _round_half_up(self.y),
                _round_half_up(self.x2), _round_half_up(self.y2))


def _round_half_up(v: float) -> int:
    return int(math.floor(v + 0.5))


def clamp_box(box: BoundingBox, width: int, height: int) -> BoundingBox:
    """Clip a box to the frame. Raises ValueError if nothing is left."""
    x0 = min(max(box.x, 0.0), float(width))
    y0 = min(max(box.y, 0.0), float(height))
    x1 = min(max(box.x2, 0.0), float(width))
    y1 = min(max(box.y2, 0.0), float(height))
    if x1 - x0 <= 0 or y1 - y0 <= 0:
        raise ValueError(f"box {box} lies outside the {width}x{height} frame")
    return BoundingBox(x0, y0, x1 - x0, y1 - y0)


def iou(a: BoundingBox, b: BoundingBox) -> float:
    iw = min(a.x2, b.x2) - max(a.x, b.x)
    ih = min(a.y2, b.y2) - max(a.y, b.y)
    if iw <= 0 or ih <= 0:
        return 0.0
    inter = iw * ih
    return inter / (a.area + b.area - inter)


@dataclass(frozen=True)
class Detection:
    frame_index: int
    bbox: BoundingBox
    class_id: int = 0
    confidence: float = 1.0
    track_id: Optional[int] = None

    def __post_init__(self):
        if self.frame_index < 0:
            raise ValueError("frame_index must be >= 0")
        if not 0.0 <= self.confidence <= 1.0:
            raise ValueError(f"confidence {self.confidence} outside [0, 1]")

    def with_track(self, track_id: int) -> "Detection":
        return replace(self, track_id=track_id)


@dataclass(frozen=True)
class Track:
    track_id: int
    detections: tuple[Detection, ...]
    class_id: int = 0

    def __post_init__(self):
        object.__setattr__(self, "detections", tuple(self.detections))
        frames = [d.frame_index for d in self.detections]
        if any(b <= a for a, b in zip(frames, frames[1:])):
            raise ValueError("track frame indices must be strictly increasing")
        if any(d.track_id != self.track_id for d in self.detections):
            raise ValueError("all detections of a track must carry its track_id")

    def at(self, frame_index: int) -> Optional[Detection]:
        for d in self.detections:
            if d.frame_index == frame_index:
                return d
        return None

    def frames(self) -> list[int]:
        return [d.frame_index for d in self.detections]

    def upto(self, frame_index: int) -> "Track":
        """The causal prefix: detections at frames <= frame_index."""
        return Track(self.track_id,
                     tuple(d for d in self.detections if d.frame_index <= frame_index),
                     self.class_id)


@dataclass(frozen=True, eq=False)
class GrayImage:
    """8-bit grayscale frame; ``pixels`` is a read-only (height, width) uint8 array."""

    pixels: np.ndarray = field(repr=False)

    def __post_init__(self):
        arr = np.asarray(self.pixels)
        if arr.ndim != 2 or arr.size == 0:
            raise ValueError(f"expected a non-empty 2-D intensity grid, got shape {arr.shape}")
        if arr.dtype != np.uint8:
            if np.any(arr < 0) or np.any(arr > 255):
                raise ValueError("intensities must lie in [0, 255]")
            arr = arr.astype(np.uint8)
        arr = np.array(arr, dtype=np.uint8, copy=True)
        arr.setflags(write=False)
        object.__setattr__(self, "pixels", arr)

    @classmethod
    def from_values(cls, width: int, height: int, values: Sequence[int]) -> "GrayImage":
        if len(values) != width * height:
            raise ValueError(f"{len(values)} intensities for a {width}x{height} image")
        return cls(np.asarray(values).reshape(height, width))

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    def __eq__(self, other):
        if not isinstance(other, GrayImage):
            return NotImplemented
        return np.array_equal(self.pixels, other.pixels)

    __hash__ = None


def crop(img: GrayImage, box: BoundingBox) -> GrayImage:
    c0, r0, c1, r1 = box.pixel_bounds()
    if c0 < 0 or r0 < 0 or c1 > img.width or r1 > img.height or c1 <= c0 or r1 <= r0:
        raise ValueError(f"box {box} is not inside the {img.width}x{img.height} image")
    return GrayImage(img.pixels[r0:r1, c0:c1])


def box_mask(shape: tuple[int, int], boxes: Iterable[BoundingBox]) -> np.ndarray:
    """Boolean mask of the union of ``boxes`` over an image of ``shape`` (rows, cols)."""
    mask = np.zeros(shape, dtype=bool)
    for b in boxes:
        c0, r0, c1, r1 = b.pixel_bounds()
        mask[max(r0, 0):max(r1, 0), max(c0, 0):max(c1, 0)] = True
    return mask


class GreedyTracker:
    """Frame-to-frame IoU tracker.

    Only tracks seen in the immediately preceding frame can be continued; a gap of
    one frame ends a track for good. Matching is greedy on descending IoU and only
    pairs boxes of the same class.
    """

    def __init__(self, iou_gate: float = 0.3, first_id: int = 1):
        self.iou_gate = iou_gate
        self._next_id = first_id
        self._last_frame: Optional[int] = None
        self._live: list[Detection] = []

    def update(self, detections: Sequence[Detection]) -> list[Detection]:
        """Assign track ids to one frame's detections; returns them in input order."""
        if not detections:
            return []
        frame = detections[0].frame_index
        if any(d.frame_index != frame for d in detections):
            raise ValueError("update() expects detections from a single frame")
        if self._last_frame is not None and frame <= self._last_frame:
            raise ValueError(f"frame {frame} is not after frame {self._last_frame}")

        prev = self._live if self._last_frame == frame - 1 else []
        pairs = []
        for i, det in enumerate(detections):
            for j, old in enumerate(prev):
                if old.class_id != det.class_id:
                    continue
                score = iou(det.bbox, old.bbox)
                if score >= self.iou_gate and score > 0:
                    pairs.append((score, i, j))
        # ties broken by input order so the result is deterministic
        pairs.sort(key=lambda p: (-p[0], p[1], p[2]))

        assigned: dict[int, int] = {}
        used_prev = set()
        for _, i, j in pairs:
            if i in assigned or j in used_prev:
                continue
            assigned[i] = prev[j].track_id
            used_prev.add(j)

        out = []
        for i, det in enumerate(detections):
            tid = assigned.get(i)
            if tid is None:
                tid = self._next_id
                self._next_id += 1
            out.append(det.with_track(tid))
        self._live = out
        self._last_frame = frame
        return out


def associate_tracks(frames: Sequence[Sequence[Detection]], iou_gate: float = 0.3) -> list[Track]:
    tracker = GreedyTracker(iou_gate)
    by_id: dict[int, list[Detection]] = {}
    for dets in frames:
        for d in tracker.update(list(dets)):
            by_id.setdefault(d.track_id, []).append(d)
    return [Track(tid, tuple(ds), ds[0].class_id) for tid, ds in sorted(by_id.items())]


def tracks_from_detections(detections: Iterable[Detection]) -> list[Track]:
    """Group detections that already carry track ids."""
    by_id: dict[int, list[Detection]] = {}
    for d in detections:
        if d.track_id is None:
            raise ValueError("detection without track_id")
        by_id.setdefault(d.track_id, []).append(d)
    return [Track(tid, tuple(sorted(ds, key=lambda d: d.frame_index)), ds[0].class_id)
            for tid, ds in sorted(by_id.items())]
