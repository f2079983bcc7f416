"""Axiom DSL and the sliding-window monitor.

Grammar, one axiom per line, ``#`` starts a comment::

    axiom   := "axiom" NAME ":" "Pr(" pred "," "window=" INT ")" ">=" FLOAT
    pred    := FLOAT "<=" PROBE "<=" FLOAT | PROBE "<=" FLOAT | PROBE ">=" FLOAT

An axiom holds for a detection when the fraction of defined probe values inside
the bounds, over the track's last ``window`` frames, is at least the threshold.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from typing import Mapping, Optional, Sequence

from .calibration import AxiomSpec
from .core import Detection, GrayImage, GreedyTracker, Track
from .probes import PROBE_NAMES, ProbeVector, WindowConfig, compute_probe_vector

TWO_SIDED = "two_sided"
UPPER_ONLY = "upper_only"
LOWER_ONLY = "lower_only"


class AxiomSyntaxError(ValueError):
    def __init__(self, message: str, line: int = 1, column: int = 1):
        super().__init__(f"line {line}, column {column}: {message}")
        self.line = line
        self.column = column


_TOKEN_RE = re.compile(r"""
    (?P<ws>\s+)
  | (?P<num>[+-]?(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)
  | (?P<name>[A-Za-z_][A-Za-z0-9_]*)
  | (?P<op><=|>=|[:(),=])
""", re.VERBOSE)


def _tokenize(text: str, line: int) -> list[tuple[str, str, int]]:
    tokens, pos = [], 0
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        if m is None:
            raise AxiomSyntaxError(f"unexpected character {text[pos]!r}", line, pos + 1)
        kind = m.lastgroup
        if kind != "ws":
            tokens.append((kind, m.group(), pos + 1))
        pos = m.end()
    return tokens


class _Parser:
    def __init__(self, text: str, line: int):
        self.text = text
        self.line = line
        self.tokens = _tokenize(text, line)
        self.i = 0

    def _col(self) -> int:
        if self.i < len(self.tokens):
            return self.tokens[self.i][2]
        return len(self.text.rstrip()) + 1

    def error(self, msg: str, col: Optional[int] = None):
        raise AxiomSyntaxError(msg, self.line, col or self._col())

    def peek(self) -> Optional[tuple[str, str, int]]:
        return self.tokens[self.i] if self.i < len(self.tokens) else None

    def expect(self, kind: str, value: Optional[str] = None) -> tuple[str, str, int]:
        tok = self.peek()
        want = value or kind
        if tok is None:
            self.error(f"expected {want!r}, found end of line")
        if tok[0] != kind or (value is not None and tok[1] != value):
            self.error(f"expected {want!r}, found {tok[1]!r}")
        self.i += 1
        return tok

    def number(self) -> float:
        return float(self.expect("num")[1])

    def probe(self) -> str:
        tok = self.expect("name")
        if tok[1] not in PROBE_NAMES:
            self.error(f"unknown probe {tok[1]!r}", tok[2])
        return tok[1]

    def parse(self) -> "AxiomFormula":
        kw = self.expect("name")
        if kw[1] != "axiom":
            self.error(f"expected 'axiom', found {kw[1]!r}", kw[2])
        name = self.expect("name")[1]
        self.expect("op", ":")
        pr = self.expect("name")
        if pr[1] != "Pr":
            self.error(f"expected 'Pr', found {pr[1]!r}", pr[2])
        self.expect("op", "(")

        pred_col = self._col()
        tok = self.peek()
        lo, hi = -math.inf, math.inf
        if tok is not None and tok[0] == "num":
            lo = self.number()
            self.expect("op", "<=")
            probe = self.probe()
            self.expect("op", "<=")
            hi = self.number()
            comparison = TWO_SIDED
        else:
            probe = self.probe()
            op = self.peek()
            if op is None or op[1] not in ("<=", ">="):
                self.error("expected '<=' or '>=' after probe name")
            self.i += 1
            if op[1] == "<=":
                hi, comparison = self.number(), UPPER_ONLY
            else:
                lo, comparison = self.number(), LOWER_ONLY
        if not lo < hi:
            self.error(f"lower bound {lo} must be below upper bound {hi}", pred_col)

        self.expect("op", ",")
        win = self.expect("name")
        if win[1] != "window":
            self.error(f"expected 'window', found {win[1]!r}", win[2])
        self.expect("op", "=")
        wtok = self.expect("num")
        if not re.fullmatch(r"\d+", wtok[1]) or int(wtok[1]) < 1:
            self.error(f"window must be a positive integer, found {wtok[1]!r}", wtok[2])
        self.expect("op", ")")
        self.expect("op", ">=")
        ttok = self.expect("num")
        threshold = float(ttok[1])
        if not 0.0 < threshold <= 1.0:
            self.error(f"probability threshold {threshold} outside (0, 1]", ttok[2])
        if self.peek() is not None:
            self.error(f"unexpected trailing {self.peek()[1]!r}")
        spec = AxiomSpec(probe, lo, hi, threshold, int(wtok[1]), threshold, name)
        return AxiomFormula(spec, comparison, self.text.strip())


@dataclass(frozen=True)
class AxiomFormula:
    spec: AxiomSpec
    comparison: str
    source_text: str = field(default="", compare=False)

    @classmethod
    def from_spec(cls, spec: AxiomSpec) -> "AxiomFormula":
        if math.isinf(spec.lower_a):
            comparison = UPPER_ONLY
        elif math.isinf(spec.upper_b):
            comparison = LOWER_ONLY
        else:
            comparison = TWO_SIDED
        f = cls(spec, comparison)
        return cls(spec, comparison, print_axiom(f))

    @property
    def name(self) -> str:
        return self.spec.name


def parse_axiom(text: str, line: int = 1) -> AxiomFormula:
    return _Parser(text, line).parse()


def print_axiom(f: AxiomFormula) -> str:
    s = f.spec
    if f.comparison == TWO_SIDED:
        pred = f"{s.lower_a!r} <= {s.probe_id} <= {s.upper_b!r}"
    elif f.comparison == UPPER_ONLY:
        pred = f"{s.probe_id} <= {s.upper_b!r}"
    else:
        pred = f"{s.probe_id} >= {s.lower_a!r}"
    return f"axiom {s.name}: Pr({pred}, window={s.window_M}) >= {s.threshold!r}"


def parse_axioms(text: str) -> list[AxiomFormula]:
    out, seen = [], set()
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0]
        if not line.strip():
            continue
        f = parse_axiom(line, lineno)
        if f.name in seen:
            raise AxiomSyntaxError(f"duplicate axiom name {f.name!r}", lineno, 1)
        seen.add(f.name)
        out.append(f)
    return out


def format_axioms(formulas: Sequence[AxiomFormula], header: str = "") -> str:
    lines = [f"# {h}" for h in header.splitlines()] if header else []
    lines += [print_axiom(f) for f in formulas]
    return "\n".join(lines) + "\n"


def load_axioms(path) -> list[AxiomFormula]:
    with open(path, encoding="latin-1") as fh:
        return parse_axioms(fh.read())


@dataclass(frozen=True)
class AxiomVerdict:
    axiom: str
    empirical_frequency: float
    passed: bool
    defined_samples: int


@dataclass(frozen=True)
class DetectionVerdict:
    detection: Detection
    per_axiom: tuple[AxiomVerdict, ...]
    erroneous: bool
    violation_count: int
    probes: Optional[ProbeVector] = None

    def to_record(self) -> dict:
        b = self.detection.bbox
        return {
            "frame": self.detection.frame_index, "id": self.detection.track_id,
            "x": b.x, "y": b.y, "w": b.w, "h": b.h, "conf": self.detection.confidence,
            "erroneous": self.erroneous, "violations": self.violation_count,
            "axioms": {v.axiom: {"frequency": v.empirical_frequency, "pass": v.passed,
                                 "defined": v.defined_samples} for v in self.per_axiom},
        }


def evaluate_axiom(f: AxiomFormula, window: Sequence[Optional[float]]) -> AxiomVerdict:
    values = [v for v in window if v is not None and not math.isnan(v)]
    if not values:
        return AxiomVerdict(f.name, 1.0, True, 0)
    inside = sum(1 for v in values if f.spec.contains(v))
    freq = inside / len(values)
    return AxiomVerdict(f.name, freq, freq >= f.spec.threshold, len(values))


def evaluate_detection(axioms: Sequence[AxiomFormula], track: Track, t_k: int,
                       probe_history: Mapping[int, ProbeVector], k_min: int = 1) -> DetectionVerdict:
    """Evaluate every axiom on the track's window ending at ``t_k``.

    ``probe_history`` maps frame index to the track's ProbeVector at that frame.
    """
    det = track.at(t_k)
    if det is None:
        raise ValueError(f"track {track.track_id} has no detection at frame {t_k}")
    verdicts = []
    for f in axioms:
        M = f.spec.window_M
        window = [probe_history[t].get(f.spec.probe_id)
                  for t in range(t_k - M + 1, t_k + 1) if t in probe_history]
        verdicts.append(evaluate_axiom(f, window))
    failed = sum(1 for v in verdicts if not v.passed)
    return DetectionVerdict(det, tuple(verdicts), failed >= k_min, failed, probe_history.get(t_k))


@dataclass(frozen=True)
class MonitorConfig:
    window: WindowConfig = field(default_factory=WindowConfig)
    k_min: int = 1
    iou_gate: float = 0.3
    # detections below this confidence are not part of the monitored stream
    min_confidence: float = 0.0

    def __post_init__(self):
        if self.k_min < 1:
            raise ValueError("k_min must be >= 1")


class StreamMonitor:
    """Causal monitor: feed frames in order, get verdicts for each frame's detections.

    Detections that arrive without track ids are tracked internally.
    """

    def __init__(self, axioms: Sequence[AxiomFormula], cfg: MonitorConfig = MonitorConfig()):
        self.axioms = list(axioms)
        self.cfg = cfg
        self._tracker = GreedyTracker(cfg.iou_gate)
        self._dets: dict[int, list[Detection]] = {}
        self._probes: dict[int, dict[int, ProbeVector]] = {}
        self._last_frame: Optional[int] = None
        self._horizon = max([cfg.window.M] + [f.spec.window_M for f in self.axioms]) + 1

    def _assign_ids(self, detections: list[Detection]) -> list[Detection]:
        with_id = [d.track_id is not None for d in detections]
        if all(with_id):
            return detections
        if any(with_id):
            raise ValueError("frame mixes detections with and without track ids")
        return self._tracker.update(detections)

    def step(self, frame_index: int, detections: Sequence[Detection],
             image: GrayImage) -> list[DetectionVerdict]:
        if self._last_frame is not None and frame_index <= self._last_frame:
            raise ValueError(f"frame {frame_index} is not after frame {self._last_frame}")
        if image is None:
            raise ValueError(f"no image for frame {frame_index}")
        self._last_frame = frame_index
        dets = [d for d in detections if d.confidence >= self.cfg.min_confidence]
        if any(d.frame_index != frame_index for d in dets):
            raise ValueError(f"detection frame index does not match frame {frame_index}")
        dets = self._assign_ids(dets)

        for d in dets:
            self._dets.setdefault(d.track_id, []).append(d)
        out = []
        for d in dets:
            hist = self._dets[d.track_id]
            track = Track(d.track_id, tuple(hist), d.class_id)
            pv = compute_probe_vector(d, track, image, frame_index, self.cfg.window)
            self._probes.setdefault(d.track_id, {})[frame_index] = pv
            out.append(evaluate_detection(self.axioms, track, frame_index,
                                          self._probes[d.track_id], self.cfg.k_min))
        self._prune(frame_index)
        return out

    def _prune(self, frame_index: int):
        oldest = frame_index - self._horizon
        for tid in list(self._dets):
            kept = [d for d in self._dets[tid] if d.frame_index >= oldest]
            if kept:
                self._dets[tid] = kept
                self._probes[tid] = {t: p for t, p in self._probes[tid].items() if t >= oldest}
            else:
                del self._dets[tid]
                self._probes.pop(tid, None)


def monitor_stream(axioms: Sequence[AxiomFormula], frames: Sequence[Sequence[Detection]],
                   images: Sequence[GrayImage], cfg: MonitorConfig = MonitorConfig()
                   ) -> list[list[DetectionVerdict]]:
    """Run the monitor over a whole stream; ``frames[t]`` holds frame t's detections."""
    if len(frames) != len(images):
        raise ValueError(f"{len(frames)} detection frames but {len(images)} images")
    mon = StreamMonitor(axioms, cfg)
    return [mon.step(t, dets, img) for t, (dets, img) in enumerate(zip(frames, images))]
