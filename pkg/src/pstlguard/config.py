"""INI run configuration.

Every key is optional; the defaults reproduce the reference contrast-ramp
scenario. Sections and keys::

    [scene]     frame_count width height object_count intensity_min intensity_max
                background noise_std gain_start gain_end rng_seed width_min width_max
                height_min height_max speed_min speed_max margin
    [detector]  contrast_midpoint contrast_slope base_fp_rate bbox_jitter_std
                confidence_noise_std rng_seed fp_conf_min fp_conf_max
    [train]     frame_count rng_seed detector_seed epsilon probes model_kind min_samples
    [monitor]   window_M min_history k_min iou_gate min_confidence
    [run]       methods mode iou_thresh report_threshold sweep

The contrast gain falls linearly from ``gain_start`` to ``gain_end`` over the
scene. ``[detector] rng_seed`` defaults to the scene seed plus 50. The training
scene shares the evaluation scene's look but is never degraded. ``epsilon = none``
keeps each axiom's calibrated threshold.
"""

from __future__ import annotations

import configparser
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Callable, Optional

from .adaptation import FULL_FRAME, ROI_ONLY
from .probes import PROBE_NAMES, WindowConfig
from .pstl import MonitorConfig
from .sim.detector import DetectorModel
from .sim.loop import CONSTRAINT_PROBES, METHODS
from .sim.metrics import DEFAULT_SWEEP
from .sim.scenario import DETECTOR_SEED_OFFSET, Scenario, ramp_scenario
from .sim.scene import SceneConfig, gain_ramp


class ConfigError(ValueError):
    pass


def _floats(text: str) -> tuple[float, ...]:
    return tuple(float(x) for x in text.split(",") if x.strip())


def _names(text: str) -> tuple[str, ...]:
    return tuple(x.strip() for x in text.split(",") if x.strip())


def _opt_float(text: str) -> Optional[float]:
    return None if text.strip().lower() == "none" else float(text)


KEYS: dict[str, dict[str, Callable[[str], object]]] = {
    "scene": {k: int for k in ("frame_count", "width", "height", "object_count", "intensity_min",
                               "intensity_max", "background", "rng_seed", "width_min",
                               "width_max", "height_min", "height_max", "margin")}
    | {k: float for k in ("noise_std", "gain_start", "gain_end", "speed_min", "speed_max")},
    "detector": {k: float for k in ("contrast_midpoint", "contrast_slope", "base_fp_rate",
                                    "bbox_jitter_std", "confidence_noise_std", "fp_conf_min",
                                    "fp_conf_max")} | {"rng_seed": int},
    "train": {"frame_count": int, "rng_seed": int, "detector_seed": int, "epsilon": _opt_float,
              "probes": _names, "model_kind": str, "min_samples": int},
    "monitor": {"window_M": int, "min_history": int, "k_min": int, "iou_gate": float,
                "min_confidence": float},
    "run": {"methods": _names, "mode": str, "iou_thresh": float, "report_threshold": float,
            "sweep": _floats},
}


@dataclass(frozen=True)
class RunConfig:
    scenario: Scenario
    probes: tuple[str, ...] = CONSTRAINT_PROBES
    model_kind: str = "auto"
    min_samples: int = 30
    methods: tuple[str, ...] = METHODS
    mode: str = FULL_FRAME
    iou_thresh: float = 0.5
    report_threshold: float = 0.1
    sweep: tuple[float, ...] = DEFAULT_SWEEP

    def __post_init__(self):
        bad = [p for p in self.probes if p not in PROBE_NAMES]
        if bad:
            raise ConfigError(f"train.probes: unknown probes {bad}")
        bad = [m for m in self.methods if m not in METHODS]
        if bad:
            raise ConfigError(f"run.methods: unknown methods {bad}; choose from {METHODS}")
        if self.mode not in (FULL_FRAME, ROI_ONLY):
            raise ConfigError(f"run.mode: expected {FULL_FRAME} or {ROI_ONLY}")
        if self.model_kind not in ("auto", "gaussian", "histogram"):
            raise ConfigError("train.model_kind: expected auto, gaussian or histogram")
        if not self.sweep:
            raise ConfigError("run.sweep: empty threshold sweep")

    def with_seed(self, seed: int) -> "RunConfig":
        sc = self.scenario
        return replace(self, scenario=replace(
            sc, scene=replace(sc.scene, rng_seed=seed),
            detector=replace(sc.detector, rng_seed=seed + DETECTOR_SEED_OFFSET)))


def default_config() -> RunConfig:
    return RunConfig(ramp_scenario())


def _read_values(parser: configparser.ConfigParser) -> dict[str, dict[str, object]]:
    out: dict[str, dict[str, object]] = {}
    for section in parser.sections():
        if section not in KEYS:
            raise ConfigError(f"unknown section [{section}]")
        out[section] = {}
        for key, raw in parser.items(section):
            conv = KEYS[section].get(key)
            if conv is None:
                raise ConfigError(f"unknown key {section}.{key}")
            try:
                out[section][key] = conv(raw)
            except ValueError as exc:
                raise ConfigError(f"bad value for {section}.{key}: {raw!r} ({exc})") from None
    return out


def _scene(base: SceneConfig, v: dict, frame_count: int, gains: tuple[float, ...],
           seed: int) -> SceneConfig:
    g = lambda k, d: v.get(k, d)
    return SceneConfig(
        frame_count=frame_count,
        frame_size=(g("width", base.frame_size[0]), g("height", base.frame_size[1])),
        object_count=g("object_count", base.object_count),
        object_intensity_range=(g("intensity_min", base.object_intensity_range[0]),
                                g("intensity_max", base.object_intensity_range[1])),
        background_intensity=g("background", base.background_intensity),
        noise_std=g("noise_std", base.noise_std),
        degradation_schedule=gains,
        rng_seed=seed,
        object_width_range=(g("width_min", base.object_width_range[0]),
                            g("width_max", base.object_width_range[1])),
        object_height_range=(g("height_min", base.object_height_range[0]),
                             g("height_max", base.object_height_range[1])),
        speed_range=(g("speed_min", base.speed_range[0]), g("speed_max", base.speed_range[1])),
        object_margin=g("margin", base.object_margin),
    )


def build_config(values: dict[str, dict[str, object]]) -> RunConfig:
    ref = ramp_scenario()
    s, d, t = values.get("scene", {}), values.get("detector", {}), values.get("train", {})
    m, r = values.get("monitor", {}), values.get("run", {})
    try:
        n = s.get("frame_count", ref.scene.frame_count)
        seed = s.get("rng_seed", ref.scene.rng_seed)
        gains = gain_ramp(s.get("gain_start", 1.0), s.get("gain_end", 0.4), n) if n else ()
        scene = _scene(ref.scene, s, n, gains, seed)
        train_scene = _scene(ref.scene, s, t.get("frame_count", ref.train_scene.frame_count),
                             (), t.get("rng_seed", ref.train_scene.rng_seed))
        det = ref.detector
        detector = DetectorModel(
            contrast_midpoint=d.get("contrast_midpoint", det.contrast_midpoint),
            contrast_slope=d.get("contrast_slope", det.contrast_slope),
            base_fp_rate=d.get("base_fp_rate", det.base_fp_rate),
            bbox_jitter_std=d.get("bbox_jitter_std", det.bbox_jitter_std),
            confidence_noise_std=d.get("confidence_noise_std", det.confidence_noise_std),
            rng_seed=d.get("rng_seed", seed + DETECTOR_SEED_OFFSET),
            fp_confidence_range=(d.get("fp_conf_min", det.fp_confidence_range[0]),
                                 d.get("fp_conf_max", det.fp_confidence_range[1])),
        )
        train_detector = replace(detector, rng_seed=t.get("detector_seed",
                                                          ref.train_detector.rng_seed))
        window = WindowConfig(M=m.get("window_M", ref.window.M),
                              min_history=m.get("min_history", ref.window.min_history))
        monitor = MonitorConfig(window=window, k_min=m.get("k_min", ref.monitor.k_min),
                                iou_gate=m.get("iou_gate", ref.monitor.iou_gate),
                                min_confidence=m.get("min_confidence",
                                                     ref.monitor.min_confidence))
        scenario = Scenario(scene, train_scene, detector, train_detector, window, monitor,
                            t.get("epsilon", ref.epsilon))
    except ValueError as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(str(exc)) from None
    return RunConfig(
        scenario,
        probes=t.get("probes", CONSTRAINT_PROBES),
        model_kind=t.get("model_kind", "auto"),
        min_samples=t.get("min_samples", 30),
        methods=r.get("methods", METHODS),
        mode=r.get("mode", FULL_FRAME),
        iou_thresh=r.get("iou_thresh", 0.5),
        report_threshold=r.get("report_threshold", 0.1),
        sweep=r.get("sweep", DEFAULT_SWEEP),
    )


def parse_config(text: str) -> RunConfig:
    parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=(";", "#"))
    parser.optionxform = str  # keys are case sensitive (window_M)
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"malformed config: {exc}") from None
    return build_config(_read_values(parser))


def load_config(path) -> RunConfig:
    return parse_config(Path(path).read_text(encoding="utf-8"))
