"""The reference contrast-ramp scenario used by the closed-loop checks and the CLI demo.

A detector that works well at full contrast watches three objects while the
scene contrast gain falls linearly from 1.0 to 0.4. Axioms are trained on a
separate, undegraded 1000-frame scene from the same generator family.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Sequence

from ..calibration import CalibrationResult
from ..probes import WindowConfig
from ..pstl import AxiomFormula, MonitorConfig
from .detector import DetectorModel
from .loop import BASELINE, ADAPTIVE, ClosedLoopResult, calibrate_on_scene, run_closed_loop
from .scene import SceneConfig, gain_ramp

REFERENCE_SEED = 2
TRAIN_SEED = 101
TRAIN_DETECTOR_SEED = 8
DETECTOR_SEED_OFFSET = 50


@dataclass(frozen=True)
class Scenario:
    scene: SceneConfig
    train_scene: SceneConfig
    detector: DetectorModel
    train_detector: DetectorModel
    window: WindowConfig
    monitor: MonitorConfig
    epsilon: float

    def calibrate(self) -> CalibrationResult:
        return calibrate_on_scene(self.train_scene, self.train_detector, self.window,
                                  iou_gate=self.monitor.iou_gate, epsilon=self.epsilon)

    def run(self, calibration: CalibrationResult,
            methods: Sequence[str] = (BASELINE, ADAPTIVE), **kw) -> ClosedLoopResult:
        axioms = [AxiomFormula.from_spec(a) for a in calibration.axioms]
        return run_closed_loop(self.scene, self.detector, axioms, calibration.targets,
                               methods=methods, monitor=self.monitor, **kw)

    def undegraded(self) -> "Scenario":
        return replace(self, scene=replace(self.scene, degradation_schedule=()))


def ramp_scenario(seed: int = REFERENCE_SEED, frame_count: int = 300,
                  gain_start: float = 1.0, gain_end: float = 0.4) -> Scenario:
    """Scene, detector and monitor settings for the contrast-ramp comparison."""
    look = dict(background_intensity=60, object_intensity_range=(135, 150), noise_std=2.0)
    detector = DetectorModel(contrast_midpoint=0.30, contrast_slope=0.03, base_fp_rate=0.1,
                             bbox_jitter_std=1.25)
    scene = SceneConfig(frame_count=frame_count, object_count=3, rng_seed=seed,
                        degradation_schedule=gain_ramp(gain_start, gain_end, frame_count),
                        **look)
    window = WindowConfig(M=10, min_history=3)
    return Scenario(
        scene=scene,
        train_scene=SceneConfig(frame_count=1000, object_count=3, rng_seed=TRAIN_SEED, **look),
        detector=replace(detector, rng_seed=seed + DETECTOR_SEED_OFFSET),
        train_detector=replace(detector, rng_seed=TRAIN_DETECTOR_SEED),
        window=window,
        # a lone miss breaks a track and trips the identity axiom; requiring two
        # violations keeps that from firing adaptation on an undegraded stream
        monitor=MonitorConfig(window=window, k_min=2, iou_gate=0.1, min_confidence=0.5),
        epsilon=0.5,
    )
