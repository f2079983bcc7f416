"""Contrast-sensitive mock detector.

Recall follows a logistic curve in the crop's Michelson contrast. Box jitter is
``bbox_jitter_std / max(p_detect, JITTER_FLOOR)``: the less certain the
detection, the worse its localization.

All random draws for a frame come from ``default_rng([rng_seed, frame_index])``
and are consumed in a fixed order whatever the image content, so two images of
the same frame see the same random numbers. Comparisons between methods are
therefore paired.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from scipy.special import expit

from ..core import BoundingBox, Detection, GrayImage, clamp_box, crop
from ..probes import michelson_contrast

JITTER_FLOOR = 0.2


@dataclass(frozen=True)
class DetectorModel:
    contrast_midpoint: float = 0.15
    contrast_slope: float = 0.01
    base_fp_rate: float = 0.05
    bbox_jitter_std: float = 0.8
    confidence_noise_std: float = 0.05
    rng_seed: int = 0
    fp_confidence_range: tuple[float, float] = (0.05, 0.5)
    fp_width_range: tuple[int, int] = (10, 28)
    fp_height_range: tuple[int, int] = (12, 34)

    def __post_init__(self):
        if not self.contrast_slope > 0:
            raise ValueError("contrast_slope must be > 0")
        if self.base_fp_rate < 0 or self.bbox_jitter_std < 0 or self.confidence_noise_std < 0:
            raise ValueError("rates and noise levels must be >= 0")

    def p_detect(self, contrast: float) -> float:
        return float(expit((contrast - self.contrast_midpoint) / self.contrast_slope))


def synthetic_detect(frame: GrayImage, gt: Sequence[Detection], model: DetectorModel,
                     frame_index: Optional[int] = None) -> list[Detection]:
    if frame_index is None:
        if not gt:
            raise ValueError("frame_index is required when there is no ground truth")
        frame_index = gt[0].frame_index
    rng = np.random.default_rng([model.rng_seed, frame_index])
    W, H = frame.width, frame.height
    out = []
    for g in gt:
        u = rng.random()
        z = rng.standard_normal(4)
        cn = rng.standard_normal()
        p = model.p_detect(michelson_contrast(crop(frame, g.bbox)))
        if u >= p:
            continue
        sigma = model.bbox_jitter_std / max(p, JITTER_FLOOR)
        b = g.bbox
        box = BoundingBox(float(b.x + z[0] * sigma), float(b.y + z[1] * sigma),
                          float(max(b.w + z[2] * sigma, 1.0)), float(max(b.h + z[3] * sigma, 1.0)))
        try:
            box = clamp_box(box, W, H)
        except ValueError:
            continue
        if box.w < 1 or box.h < 1:
            continue
        conf = float(np.clip(p + cn * model.confidence_noise_std, 0.0, 1.0))
        out.append(Detection(frame_index, box, g.class_id, conf))

    for _ in range(int(rng.poisson(model.base_fp_rate))):
        w = int(rng.integers(model.fp_width_range[0], model.fp_width_range[1] + 1))
        h = int(rng.integers(model.fp_height_range[0], model.fp_height_range[1] + 1))
        w, h = min(w, W), min(h, H)
        x = int(rng.integers(0, W - w + 1))
        y = int(rng.integers(0, H - h + 1))
        conf = float(rng.uniform(*model.fp_confidence_range))
        out.append(Detection(frame_index, BoundingBox(x, y, w, h), 0, conf))
    return out
