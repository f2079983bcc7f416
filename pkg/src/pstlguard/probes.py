"""Scalar probe signals computed per detection from its crop and its track history.

Temporal probes (``loc_dev_px``, ``bbox_dev_rel``, ``id_consistency``) are ``None``
("undefined") until the track has enough history; axioms over an undefined value
give the detection the benefit of the doubt.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, fields
from typing import Optional

import numpy as np

from .core import Detection, GrayImage, Track, crop

PROBE_NAMES = ("size_px2", "aspect", "confidence", "contrast", "entropy_bits",
               "loc_dev_px", "bbox_dev_rel", "id_consistency")
TEMPORAL_PROBES = ("loc_dev_px", "bbox_dev_rel", "id_consistency")
DEVIATION_PROBES = ("loc_dev_px", "bbox_dev_rel")


@dataclass(frozen=True)
class WindowConfig:
    M: int = 10
    min_history: int = 3

    def __post_init__(self):
        if self.M < 2:
            raise ValueError("window length M must be >= 2")
        if not 1 <= self.min_history <= self.M:
            raise ValueError("min_history must be in [1, M]")


@dataclass(frozen=True)
class ProbeVector:
    size_px2: float
    aspect: float
    confidence: float
    contrast: float
    entropy_bits: float
    loc_dev_px: Optional[float] = None
    bbox_dev_rel: Optional[float] = None
    id_consistency: Optional[float] = None

    def get(self, name: str) -> Optional[float]:
        if name not in PROBE_NAMES:
            raise KeyError(f"unknown probe {name!r}")
        return getattr(self, name)

    def undefined(self) -> list[str]:
        return [f.name for f in fields(self) if getattr(self, f.name) is None]

    def to_record(self, **extra) -> dict:
        rec = {k: v for k, v in asdict(self).items()}
        rec["undefined"] = self.undefined()
        rec.update(extra)
        return rec

    @classmethod
    def from_record(cls, rec: dict) -> "ProbeVector":
        missing = [n for n in PROBE_NAMES if n not in rec]
        if missing:
            raise ValueError(f"probe record missing fields {missing}")
        undefined = set(rec.get("undefined", ()))
        vals = {n: (None if n in undefined or rec[n] is None else float(rec[n]))
                for n in PROBE_NAMES}
        return cls(**vals)


def michelson_contrast(img: GrayImage) -> float:
    lo = int(img.pixels.min())
    hi = int(img.pixels.max())
    if hi == lo:
        return 0.0
    return (hi - lo) / (hi + lo)


def shannon_entropy(img: GrayImage, bins: int = 256) -> float:
    if bins <= 0 or 256 % bins:
        raise ValueError("bins must divide 256")
    counts = np.bincount(img.pixels.ravel() // (256 // bins), minlength=bins)
    p = counts[counts > 0] / img.pixels.size
    h = float(-(p * np.log2(p)).sum())
    return max(h, 0.0)  # -0.0 for a single bin


def _history(track: Track, t_k: int, cfg: WindowConfig) -> list[Detection]:
    return [d for d in track.detections if t_k - cfg.M <= d.frame_index < t_k]


def _linear_predict(ts: np.ndarray, vs: np.ndarray, t: float) -> float:
    if len(ts) == 1:
        return float(vs[0])
    tm = ts.mean()
    var = ((ts - tm) ** 2).sum()
    slope = ((ts - tm) * (vs - vs.mean())).sum() / var
    return float(vs.mean() + slope * (t - tm))


def localization_deviation(track: Track, t_k: int, cfg: WindowConfig) -> Optional[float]:
    """Distance between the observed center at ``t_k`` and a least-squares line
    extrapolated from the window ``[t_k - M, t_k - 1]``. ``None`` if undefined."""
    current = track.at(t_k)
    hist = _history(track, t_k, cfg)
    if current is None or len(hist) < cfg.min_history:
        return None
    ts = np.array([d.frame_index for d in hist], dtype=float)
    cx = np.array([d.bbox.center[0] for d in hist])
    cy = np.array([d.bbox.center[1] for d in hist])
    px, py = _linear_predict(ts, cx, t_k), _linear_predict(ts, cy, t_k)
    ox, oy = current.bbox.center
    return math.hypot(ox - px, oy - py)


def bbox_size_deviation(track: Track, t_k: int, cfg: WindowConfig) -> Optional[float]:
    current = track.at(t_k)
    hist = _history(track, t_k, cfg)
    if current is None or len(hist) < cfg.min_history:
        return None
    desired = float(np.median([d.bbox.area for d in hist]))
    return abs(current.bbox.area - desired) / desired


def id_consistency(track: Track, t_k: int, cfg: WindowConfig) -> Optional[float]:
    # the window [t_k - M + 1, t_k] must lie inside the stream
    if t_k < cfg.M - 1:
        return None
    present = sum(1 for d in track.detections if t_k - cfg.M < d.frame_index <= t_k)
    return present / cfg.M


def compute_probe_vector(det: Detection, track: Track, img: GrayImage, t_k: int,
                         cfg: WindowConfig) -> ProbeVector:
    if det.frame_index != t_k:
        raise ValueError(f"detection is from frame {det.frame_index}, not {t_k}")
    if track.at(t_k) != det:
        raise ValueError(f"detection is not part of track {track.track_id} at frame {t_k}")
    patch = crop(img, det.bbox)
    return ProbeVector(
        size_px2=det.bbox.area,
        aspect=det.bbox.aspect,
        confidence=det.confidence,
        contrast=michelson_contrast(patch),
        entropy_bits=shannon_entropy(patch),
        loc_dev_px=localization_deviation(track, t_k, cfg),
        bbox_dev_rel=bbox_size_deviation(track, t_k, cfg),
        id_consistency=id_consistency(track, t_k, cfg),
    )
