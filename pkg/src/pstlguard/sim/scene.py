"""Seeded synthetic scenes: bright rectangles drifting over a flat background.

Each object lives in its own horizontal lane, so ground-truth boxes never
overlap. The object body is inset by ``object_margin`` pixels inside its box, so
every ground-truth crop holds both object and background intensities.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from ..core import BoundingBox, Detection, GrayImage, Track


@dataclass(frozen=True)
class SceneConfig:
    frame_count: int = 100
    frame_size: tuple[int, int] = (160, 120)  # width, height
    object_count: int = 3
    object_intensity_range: tuple[int, int] = (110, 140)
    background_intensity: int = 70
    noise_std: float = 2.0
    # per-frame contrast gain; empty means 1.0 everywhere, a single value is broadcast
    degradation_schedule: tuple[float, ...] = ()
    rng_seed: int = 0
    object_width_range: tuple[int, int] = (16, 26)
    object_height_range: tuple[int, int] = (20, 32)
    speed_range: tuple[float, float] = (0.4, 1.6)
    object_margin: int = 2

    def __post_init__(self):
        object.__setattr__(self, "degradation_schedule",
                           tuple(float(g) for g in self.degradation_schedule))
        w, h = self.frame_size
        if self.frame_count < 0 or w < 1 or h < 1 or self.object_count < 0:
            raise ValueError("frame_count, frame_size and object_count must be non-negative")
        lo, hi = self.object_intensity_range
        if not (0 <= lo <= hi <= 255 and 0 <= self.background_intensity <= 255):
            raise ValueError("intensities must lie in [0, 255]")
        if self.noise_std < 0:
            raise ValueError("noise_std must be >= 0")
        sched = self.degradation_schedule
        if len(sched) not in (0, 1, self.frame_count):
            raise ValueError(f"degradation_schedule has {len(sched)} entries "
                             f"for {self.frame_count} frames")
        if any(not 0.0 < g <= 1.0 for g in sched):
            raise ValueError("contrast gains must lie in (0, 1]")
        if self.object_count:
            lane = h / self.object_count
            if self.object_height_range[1] > lane:
                raise ValueError(f"objects up to {self.object_height_range[1]} px tall do not "
                                 f"fit in {lane:.1f} px lanes")
            if self.object_width_range[1] > w:
                raise ValueError("objects wider than the frame")
            if min(self.object_width_range[0], self.object_height_range[0]) <= 2 * self.object_margin:
                raise ValueError("object_margin leaves no object body")

    def gains(self) -> np.ndarray:
        sched = self.degradation_schedule
        if not sched:
            return np.ones(self.frame_count)
        if len(sched) == 1:
            return np.full(self.frame_count, sched[0])
        return np.asarray(sched)


def gain_ramp(start: float, end: float, frame_count: int) -> tuple[float, ...]:
    """Linear contrast-gain schedule from ``start`` at frame 0 to ``end`` at the last frame."""
    return tuple(float(g) for g in np.linspace(start, end, frame_count))


def analytic_contrast(object_intensity: float, background: float, gain: float = 1.0) -> float:
    """Michelson contrast between an object and the background after the gain."""
    obj = background + gain * (object_intensity - background)
    return abs(obj - background) / (obj + background)


@dataclass
class _Mover:
    x: float
    y: float
    vx: float
    vy: float
    w: int
    h: int
    top: float
    bottom: float
    intensity: int


def _bounce(pos: float, vel: float, lo: float, hi: float) -> tuple[float, float]:
    pos += vel
    if pos < lo:
        pos, vel = 2 * lo - pos, -vel
    elif pos > hi:
        pos, vel = 2 * hi - pos, -vel
    return min(max(pos, lo), hi), vel


def generate_scene(cfg: SceneConfig) -> tuple[list[GrayImage], list[Track]]:
    rng = np.random.default_rng(cfg.rng_seed)
    W, H = cfg.frame_size
    movers = []
    for i in range(cfg.object_count):
        top = i * H / cfg.object_count
        bottom = (i + 1) * H / cfg.object_count
        w = int(rng.integers(cfg.object_width_range[0], cfg.object_width_range[1] + 1))
        h = int(rng.integers(cfg.object_height_range[0], cfg.object_height_range[1] + 1))
        x = float(rng.uniform(0, W - w))
        y = float(rng.uniform(top, bottom - h))
        speed = float(rng.uniform(*cfg.speed_range))
        angle = float(rng.uniform(-np.pi / 6, np.pi / 6)) + (np.pi if rng.random() < 0.5 else 0.0)
        intensity = int(rng.integers(cfg.object_intensity_range[0],
                                     cfg.object_intensity_range[1] + 1))
        movers.append(_Mover(x, y, speed * np.cos(angle), speed * np.sin(angle), w, h,
                             top, bottom, intensity))

    gains = cfg.gains()
    bg = float(cfg.background_intensity)
    m = cfg.object_margin
    frames: list[GrayImage] = []
    gt: list[list[Detection]] = [[] for _ in movers]
    for t in range(cfg.frame_count):
        canvas = np.full((H, W), bg)
        for k, mv in enumerate(movers):
            c0, r0 = int(round(mv.x)), int(round(mv.y))
            canvas[r0 + m:r0 + mv.h - m, c0 + m:c0 + mv.w - m] = mv.intensity
            gt[k].append(Detection(t, BoundingBox(c0, r0, mv.w, mv.h), 0, 1.0, k + 1))
        canvas = bg + gains[t] * (canvas - bg)
        if cfg.noise_std > 0:
            canvas = canvas + rng.normal(0.0, cfg.noise_std, size=(H, W))
        frames.append(GrayImage(np.clip(np.floor(canvas + 0.5), 0, 255).astype(np.uint8)))
        for mv in movers:
            mv.x, mv.vx = _bounce(mv.x, mv.vx, 0.0, W - mv.w)
            mv.y, mv.vy = _bounce(mv.y, mv.vy, mv.top, mv.bottom - mv.h)

    tracks = [Track(k + 1, tuple(dets), 0) for k, dets in enumerate(gt) if dets]
    return frames, tracks


def gt_by_frame(tracks: Sequence[Track], frame_count: int) -> list[list[Detection]]:
    frames: list[list[Detection]] = [[] for _ in range(frame_count)]
    for tr in tracks:
        for d in tr.detections:
            frames[d.frame_index].append(d)
    return frames
