"""pstlguard command line.

    pstlguard simulate --out scene/                 frames, ground truth, detections, probes
    pstlguard simulate --split train --out train/   undegraded training scene
    pstlguard train --probes train/probes.jsonl --out axioms/
    pstlguard monitor --detections scene/detections.jsonl --frames scene \\
                      --axioms axioms/axioms.txt --out verdicts/
    pstlguard run --out report/                     closed-loop comparison
    pstlguard eval --gt scene/gt.jsonl --detections scene/detections.jsonl --out ev/

Exit status is 0 when every requested file was written, 1 on bad input data and
2 on a bad command line or config.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import shutil
import sys
import tempfile
from contextlib import contextmanager
from dataclasses import asdict
from pathlib import Path
from typing import Optional, Sequence

from .adaptation import DesiredTargets
from .calibration import CalibrationError, LabeledSample, calibrate
from .config import ConfigError, RunConfig, default_config, load_config
from .core import Track
from .formats import (FRAME_NAME, detection_to_record, group_by_frame, read_detections,
                      read_frames, read_jsonl, write_frames, write_jsonl)
from .probes import ProbeVector
from .pstl import AxiomFormula, AxiomSyntaxError, format_axioms, load_axioms, monitor_stream
from .sim.detector import synthetic_detect
from .sim.loop import ADAPTIVE, collect_samples, label_detections, run_closed_loop
from .sim.metrics import evaluate
from .sim.scene import generate_scene, gt_by_frame

log = logging.getLogger("pstlguard")

AXIOMS_FILE = "axioms.txt"


class UsageError(Exception):
    pass


@contextmanager
def staged_output(out: Path):
    """Write into a scratch directory; move the files into ``out`` only on success."""
    out.parent.mkdir(parents=True, exist_ok=True)
    tmp = Path(tempfile.mkdtemp(prefix=f".{out.name}.", dir=out.parent))
    try:
        yield tmp
        out.mkdir(exist_ok=True)
        for p in sorted(tmp.iterdir()):
            dest = out / p.name
            if dest.is_dir():
                shutil.rmtree(dest)
            p.replace(dest)
    finally:
        shutil.rmtree(tmp, ignore_errors=True)


def _write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, sort_keys=True, indent=1) + "\n", encoding="utf-8")


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _require(path: Optional[str], flag: str) -> Path:
    if path is None:
        raise UsageError(f"{flag} is required")
    p = Path(path)
    if not p.exists():
        raise FileNotFoundError(f"{flag}: {p} does not exist")
    return p


def _config(args) -> RunConfig:
    cfg = load_config(_require(args.config, "--config")) if args.config else default_config()
    return cfg.with_seed(args.seed) if args.seed is not None else cfg


def cmd_simulate(args, cfg: RunConfig) -> None:
    sc = cfg.scenario
    scene = sc.train_scene if args.split == "train" else sc.scene
    detector = sc.train_detector if args.split == "train" else sc.detector
    frames, gt_tracks = generate_scene(scene)
    gt_frames = gt_by_frame(gt_tracks, scene.frame_count)
    det_frames = [synthetic_detect(img, gt, detector, t)
                  for t, (img, gt) in enumerate(zip(frames, gt_frames))]
    labeled = label_detections(frames, gt_frames, det_frames, sc.window, cfg.iou_thresh,
                               sc.monitor.iou_gate)
    with staged_output(args.out) as tmp:
        write_frames(tmp, frames)
        write_jsonl(tmp / "gt.jsonl", (detection_to_record(d) for f in gt_frames for d in f))
        write_jsonl(tmp / "detections.jsonl",
                    (detection_to_record(d) for f in det_frames for d in f))
        write_jsonl(tmp / "probes.jsonl",
                    (pv.to_record(frame=d.frame_index, id=d.track_id, label=label)
                     for d, pv, label in labeled))
        files = sorted(p.name for p in tmp.iterdir())
        _write_json(tmp / "manifest.json", {
            "split": args.split, "frame_count": scene.frame_count,
            "frame_size": list(scene.frame_size), "scene": asdict(scene),
            "detector": asdict(detector), "frame_name": FRAME_NAME,
            "files": {name: _sha256(tmp / name) for name in files},
        })
    log.info("wrote %d frames, %d detections to %s", scene.frame_count,
             sum(map(len, det_frames)), args.out)


def _read_samples(path: Path) -> list[LabeledSample]:
    out = []
    for i, rec in enumerate(read_jsonl(path), 1):
        if "label" not in rec:
            raise ValueError(f"{path}: record {i} has no label")
        out.append(LabeledSample(ProbeVector.from_record(rec), rec["label"]))
    return out


def _write_axioms(directory: Path, result, epsilon) -> None:
    formulas = [AxiomFormula.from_spec(a) for a in result.axioms]
    header = f"calibrated axioms, epsilon={'p_tp' if epsilon is None else epsilon}"
    (directory / AXIOMS_FILE).write_text(format_axioms(formulas, header), encoding="latin-1")
    _write_json(directory / "axioms.json", result.sidecar())


def cmd_train(args, cfg: RunConfig) -> None:
    samples = _read_samples(_require(args.probes, "--probes"))
    if not samples:
        raise CalibrationError(f"{args.probes}: no labeled probe records")
    epsilon = args.epsilon if args.epsilon is not None else cfg.scenario.epsilon
    result = calibrate(samples, cfg.scenario.window, probes=cfg.probes,
                       model_kind=cfg.model_kind, min_samples=cfg.min_samples, epsilon=epsilon)
    for probe, why in result.skipped.items():
        log.warning("not calibrated: %s", why)
    with staged_output(args.out) as tmp:
        _write_axioms(tmp, result, epsilon)
    print(f"{len(result.axioms)} axioms written to {args.out / AXIOMS_FILE}")


def _load_targets(axioms_path: Path) -> DesiredTargets:
    sidecar = axioms_path.with_suffix(".json")
    if not sidecar.exists():
        raise FileNotFoundError(f"no sidecar {sidecar} with the desired contrast targets")
    t = json.loads(sidecar.read_text(encoding="utf-8"))["targets"]
    return DesiredTargets(float(t["c_D"]), float(t.get("E_D", 0.0)))


def _frame_count(frames_dir: Path, detections) -> int:
    manifest = frames_dir / "manifest.json"
    if manifest.exists():
        return int(json.loads(manifest.read_text(encoding="utf-8"))["frame_count"])
    return max((d.frame_index for d in detections), default=-1) + 1


def cmd_monitor(args, cfg: RunConfig) -> None:
    axioms = load_axioms(_require(args.axioms, "--axioms"))
    frames_dir = _require(args.frames, "--frames")
    dets = read_detections(_require(args.detections, "--detections"))
    n = _frame_count(frames_dir, dets)
    images = read_frames(frames_dir, n)
    size = (images[0].width, images[0].height) if images else None
    if size:
        dets = read_detections(args.detections, size)
    # detections are re-tracked by the monitor unless every one carries an id
    if any(d.track_id is None for d in dets):
        dets = [d.with_track(None) for d in dets]
    if cfg.scenario.monitor.k_min > len(axioms):
        log.warning("k_min=%d exceeds the %d axioms loaded; nothing can be flagged",
                    cfg.scenario.monitor.k_min, len(axioms))
    verdicts = monitor_stream(axioms, group_by_frame(dets, n), images, cfg.scenario.monitor)
    flagged = sum(v.erroneous for vs in verdicts for v in vs)
    with staged_output(args.out) as tmp:
        write_jsonl(tmp / "verdicts.jsonl", (v.to_record() for vs in verdicts for v in vs))
    print(f"{sum(map(len, verdicts))} detections monitored, {flagged} flagged")


def _write_report(directory: Path, report, curves: dict) -> None:
    (directory / "report.json").write_text(report.to_json(), encoding="utf-8")
    (directory / "report.txt").write_text(report.to_table(), encoding="utf-8")
    for name, r in curves.items():
        (directory / f"curve_{name}.csv").write_text(r.to_csv(), encoding="utf-8")


def cmd_run(args, cfg: RunConfig) -> None:
    sc = cfg.scenario
    methods = tuple(args.methods.split(",")) if args.methods else cfg.methods
    mode = args.mode or cfg.mode
    trained = None
    if args.axioms:
        path = _require(args.axioms, "--axioms")
        axioms, targets = load_axioms(path), _load_targets(path)
    elif ADAPTIVE in methods:
        trained = calibrate(_train_samples(cfg), sc.window, probes=cfg.probes,
                            model_kind=cfg.model_kind, min_samples=cfg.min_samples,
                            epsilon=sc.epsilon)
        axioms = [AxiomFormula.from_spec(a) for a in trained.axioms]
        targets = trained.targets
    else:
        axioms, targets = [], DesiredTargets(0.0)
    result = run_closed_loop(sc.scene, sc.detector, axioms, targets, methods=methods,
                             monitor=sc.monitor, mode=mode, iou_thresh=cfg.iou_thresh,
                             confidence_sweep=cfg.sweep, report_threshold=cfg.report_threshold)
    report = result.report()
    with staged_output(args.out) as tmp:
        _write_report(tmp, report, result.reports)
        write_jsonl(tmp / "commands.jsonl", (cmd.to_record(t) for t, cmd in result.commands))
        if trained is not None:
            _write_axioms(tmp, trained, sc.epsilon)
    sys.stdout.write(report.to_table())
    print(f"{len(result.commands)} adaptation commands")


def _train_samples(cfg: RunConfig) -> list[LabeledSample]:
    sc = cfg.scenario
    return collect_samples(sc.train_scene, sc.train_detector, sc.window, cfg.iou_thresh,
                           sc.monitor.iou_gate)


def cmd_eval(args, cfg: RunConfig) -> None:
    gt = read_detections(_require(args.gt, "--gt"))
    dets = read_detections(_require(args.detections, "--detections"))
    n = args.frames or max((d.frame_index for d in gt + dets), default=-1) + 1
    by_id: dict[int, list] = {}
    for d in gt:
        by_id.setdefault(d.track_id if d.track_id is not None else -1, []).append(d)
    tracks = [Track(tid, tuple(sorted(ds, key=lambda d: d.frame_index)))
              for tid, ds in sorted(by_id.items()) if tid >= 0]
    # untracked ground truth: one single-frame track per box
    untracked = by_id.get(-1, [])
    next_id = max([t.track_id for t in tracks], default=0) + 1
    tracks += [Track(next_id + i, (d.with_track(next_id + i),)) for i, d in enumerate(untracked)]
    report = evaluate(tracks, group_by_frame(dets, n), cfg.iou_thresh, cfg.sweep,
                      cfg.report_threshold)
    with staged_output(args.out) as tmp:
        _write_report(tmp, report, {"detections": report})
    sys.stdout.write(report.to_table())


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", default=argparse.SUPPRESS, help="INI run configuration")
    common.add_argument("--seed", type=int, default=argparse.SUPPRESS,
                        help="scene seed (the detector uses seed + 50)")
    common.add_argument("--out", type=Path, default=argparse.SUPPRESS, help="output directory")
    common.add_argument("--verbose", "-v", action="store_true", default=argparse.SUPPRESS)

    p = argparse.ArgumentParser(prog="pstlguard", parents=[common],
                                description="Probe-based detection monitoring and "
                                            "contrast adaptation on synthetic streams.")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", parents=[common], help="render a seeded scene")
    s.add_argument("--split", choices=("eval", "train"), default="eval")
    s.set_defaults(func=cmd_simulate)

    s = sub.add_parser("train", parents=[common], help="calibrate axioms from labeled probes")
    s.add_argument("--probes", help="labeled probe JSONL from simulate")
    s.add_argument("--epsilon", type=float, help="tolerance; threshold becomes 1 - epsilon")
    s.set_defaults(func=cmd_train)

    s = sub.add_parser("monitor", parents=[common], help="check a detection log against axioms")
    s.add_argument("--detections")
    s.add_argument("--frames", help="directory of frame_NNNNNN.pgm images")
    s.add_argument("--axioms")
    s.set_defaults(func=cmd_monitor)

    s = sub.add_parser("run", parents=[common], help="closed-loop comparison of methods")
    s.add_argument("--axioms", help="axiom file; trained on the training scene when omitted")
    s.add_argument("--methods", help="comma list of baseline, hist_eq, adaptive")
    s.add_argument("--mode", choices=("full_frame", "roi_only"))
    s.set_defaults(func=cmd_run)

    s = sub.add_parser("eval", parents=[common], help="score a detection log")
    s.add_argument("--gt")
    s.add_argument("--detections")
    s.add_argument("--frames", type=int, help="frame count (default: last frame seen + 1)")
    s.set_defaults(func=cmd_eval)
    return p


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    for name, default in (("config", None), ("seed", None), ("out", None), ("verbose", False)):
        if not hasattr(args, name):
            setattr(args, name, default)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.out is None:
            raise UsageError("--out is required")
        cfg = _config(args)
        args.func(args, cfg)
    except (UsageError, ConfigError) as exc:
        print(f"pstlguard {args.command}: {exc}", file=sys.stderr)
        return 2
    except (FileNotFoundError, CalibrationError, AxiomSyntaxError, ValueError, OSError) as exc:
        print(f"pstlguard {args.command}: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
