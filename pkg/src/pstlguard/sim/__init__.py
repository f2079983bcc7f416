from .detector import DetectorModel, synthetic_detect
from .loop import (ADAPTIVE, BASELINE, CONSTRAINT_PROBES, HIST_EQ, METHODS, ClosedLoopResult,
                   calibrate_on_scene, collect_samples, equalize_histogram, run_closed_loop)
from .metrics import EvalReport, evaluate, roc_dominates
from .scenario import REFERENCE_SEED, Scenario, ramp_scenario
from .scene import SceneConfig, gain_ramp, generate_scene, gt_by_frame

__all__ = [
    "DetectorModel", "synthetic_detect", "CONSTRAINT_PROBES", "METHODS", "ClosedLoopResult",
    "calibrate_on_scene", "collect_samples", "equalize_histogram", "run_closed_loop",
    "EvalReport", "evaluate", "roc_dominates", "SceneConfig", "gain_ramp", "generate_scene",
    "gt_by_frame", "ADAPTIVE", "BASELINE", "HIST_EQ", "REFERENCE_SEED", "Scenario",
    "ramp_scenario",
]
