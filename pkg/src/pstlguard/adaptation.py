"""Contrast correction: L1-optimal contrast offset, histogram bound, intensity remap."""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .core import GrayImage, box_mask, crop
from .probes import michelson_contrast

log = logging.getLogger(__name__)

FULL_FRAME = "full_frame"
ROI_ONLY = "roi_only"


@dataclass(frozen=True)
class DesiredTargets:
    c_D: float
    E_D: float = 0.0

    def __post_init__(self):
        if not 0.0 <= self.c_D <= 1.0:
            raise ValueError(f"c_D {self.c_D} outside [0, 1]")


@dataclass(frozen=True)
class AdaptationCommand:
    delta_c: float
    bound_B: float
    i_max: int
    i_min: int
    source_detections: int = 0
    flagged: int = 0
    mode: str = FULL_FRAME

    def __post_init__(self):
        if self.i_min > self.i_max:
            raise ValueError("i_min must not exceed i_max")

    @property
    def fired(self) -> bool:
        return self.flagged > 0

    def to_record(self, frame_index: int) -> dict:
        return {"frame": frame_index, "delta_c": self.delta_c, "B": self.bound_B,
                "i_max": self.i_max, "i_min": self.i_min, "mode": self.mode,
                "flagged": self.flagged, "detections": self.source_detections}


IDENTITY = AdaptationCommand(0.0, 0.0, 0, 0)


def contrast_objective(contrasts: Sequence[float], c_D: float, delta_c: float) -> float:
    return float(np.abs(np.asarray(contrasts, dtype=float) - c_D - delta_c).sum())


def optimal_contrast_delta(contrasts: Sequence[float], c_D: float) -> float:
    """argmin over d of sum |c_i - c_D - d|, i.e. median(c) - c_D.

    For an even count the optimum is flat between the two middle values; the
    midpoint is returned.
    """
    if len(contrasts) == 0:
        raise ValueError("no contrasts to adapt from")
    return float(np.median(np.asarray(contrasts, dtype=float))) - c_D


def histogram_bound(delta_c: float, i_max: float, i_min: float) -> float:
    if i_min > i_max:
        raise ValueError("i_min must not exceed i_max")
    return delta_c * (i_max + i_min) / 2.0


def _round_half_away(v: np.ndarray) -> np.ndarray:
    return np.sign(v) * np.floor(np.abs(v) + 0.5)


def apply_contrast(img: GrayImage, B: float, i_max: float, i_min: float,
                   mask: Optional[np.ndarray] = None) -> GrayImage:
    """Stretch intensities linearly so that i_min -> i_min - B and i_max -> i_max + B.

    The map is anchored at the midpoint of [i_min, i_max]; results are rounded
    half away from zero and clamped to [0, 255]. With ``mask`` only the masked
    pixels change. A B that would invert the range collapses it to the midpoint.
    """
    if i_max <= i_min:
        log.warning("uniform intensity range [%s, %s]; image left unchanged", i_min, i_max)
        return img
    if B == 0:
        return img
    mid = (i_max + i_min) / 2.0
    scale = max((i_max - i_min + 2.0 * B) / (i_max - i_min), 0.0)
    src = img.pixels.astype(np.float64)
    out = np.clip(_round_half_away((src - mid) * scale + mid), 0, 255).astype(np.uint8)
    if mask is not None:
        out = np.where(mask, out, img.pixels)
    return GrayImage(out)


def adapt_frame(img: GrayImage, verdicts, probes=None, targets: DesiredTargets = None,
                mode: str = FULL_FRAME) -> tuple[GrayImage, AdaptationCommand]:
    """One correction step for a frame.

    ``verdicts`` are the frame's DetectionVerdicts. Nothing happens unless at
    least one is erroneous. Contrasts come from every detection's crop (or from
    ``probes`` when given, aligned with ``verdicts``); the extremes are measured
    over the union of the boxes.
    """
    if mode not in (FULL_FRAME, ROI_ONLY):
        raise ValueError(f"unknown adaptation mode {mode!r}")
    if targets is None:
        raise ValueError("adapt_frame needs desired targets")
    flagged = sum(1 for v in verdicts if v.erroneous)
    if not verdicts or flagged == 0:
        return img, AdaptationCommand(0.0, 0.0, 0, 0, len(verdicts), 0, mode)

    boxes = [v.detection.bbox for v in verdicts]
    if probes is not None:
        contrasts = [p.contrast for p in probes]
    else:
        contrasts = [michelson_contrast(crop(img, b)) for b in boxes]
    # the control input is the correction toward c_D, the negated L1 offset
    delta_c = -optimal_contrast_delta(contrasts, targets.c_D)

    mask = box_mask((img.height, img.width), boxes)
    region = img.pixels[mask]
    i_max, i_min = int(region.max()), int(region.min())
    B = histogram_bound(delta_c, i_max, i_min)
    out = apply_contrast(img, B, i_max, i_min, mask if mode == ROI_ONLY else None)
    return out, AdaptationCommand(delta_c, B, i_max, i_min, len(verdicts), flagged, mode)
