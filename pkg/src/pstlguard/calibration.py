"""Training phase: fit TP/FP probe distributions and turn their crossings into axioms."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

import numpy as np
from scipy import optimize, stats

from .adaptation import DesiredTargets
from .probes import DEVIATION_PROBES, PROBE_NAMES, ProbeVector, WindowConfig

log = logging.getLogger(__name__)

TRUE_POSITIVE = "true_positive"
FALSE_POSITIVE = "false_positive"

MIN_SAMPLES = 30
KURTOSIS_LIMIT = 2.0
GRID_POINTS = 512


class CalibrationError(ValueError):
    pass


@dataclass(frozen=True)
class LabeledSample:
    probe_vector: ProbeVector
    label: str

    def __post_init__(self):
        if self.label not in (TRUE_POSITIVE, FALSE_POSITIVE):
            raise ValueError(f"label must be {TRUE_POSITIVE!r} or {FALSE_POSITIVE!r}")


def _norm_cdf(x: float) -> float:
    if x == math.inf:
        return 1.0
    if x == -math.inf:
        return 0.0
    return 0.5 * math.erfc(-x / math.sqrt(2.0))


@dataclass(frozen=True)
class ProbeDistribution:
    """A 1-D density over one probe.

    ``kind`` is ``gaussian`` (params: mean, std), ``histogram`` (params: edges,
    densities) or ``mixture`` (params: components as (weight, mean, std) triples).
    ``support`` is the range crossings are searched over; fitted distributions use
    the observed sample range.
    """

    probe_id: str
    kind: str
    params: dict
    sample_count: int = 0
    support: tuple[float, float] = (-math.inf, math.inf)

    def __post_init__(self):
        if self.kind == "gaussian":
            if not self.params["std"] > 0:
                raise ValueError("gaussian std must be > 0")
            lo, hi = self.support
            if not (math.isfinite(lo) and math.isfinite(hi)):
                m, s = self.params["mean"], self.params["std"]
                object.__setattr__(self, "support", (m - 8 * s, m + 8 * s))
        elif self.kind == "histogram":
            edges = np.asarray(self.params["edges"], dtype=float)
            dens = np.asarray(self.params["densities"], dtype=float)
            if len(edges) != len(dens) + 1 or np.any(np.diff(edges) <= 0):
                raise ValueError("histogram edges must be increasing, one more than densities")
            if np.any(dens < 0) or not math.isclose(float((dens * np.diff(edges)).sum()), 1.0,
                                                    rel_tol=1e-9):
                raise ValueError("histogram densities must be non-negative and integrate to 1")
            if not all(map(math.isfinite, self.support)):
                object.__setattr__(self, "support", (float(edges[0]), float(edges[-1])))
        elif self.kind == "mixture":
            comps = self.params["components"]
            if not math.isclose(sum(w for w, _, _ in comps), 1.0, rel_tol=1e-9):
                raise ValueError("mixture weights must sum to 1")
            if not all(math.isfinite(v) for v in self.support):
                lo = min(m - 8 * s for _, m, s in comps)
                hi = max(m + 8 * s for _, m, s in comps)
                object.__setattr__(self, "support", (lo, hi))
        else:
            raise ValueError(f"unknown distribution kind {self.kind!r}")

    @classmethod
    def gaussian(cls, mean: float, std: float, probe_id: str = "", **kw) -> "ProbeDistribution":
        return cls(probe_id, "gaussian", {"mean": float(mean), "std": float(std)}, **kw)

    @classmethod
    def mixture(cls, components, probe_id: str = "", **kw) -> "ProbeDistribution":
        comps = [(float(w), float(m), float(s)) for w, m, s in components]
        return cls(probe_id, "mixture", {"components": comps}, **kw)

    def pdf(self, x):
        x = np.asarray(x, dtype=float)
        if self.kind == "gaussian":
            return stats.norm.pdf(x, self.params["mean"], self.params["std"])
        if self.kind == "mixture":
            return sum(w * stats.norm.pdf(x, m, s) for w, m, s in self.params["components"])
        edges = np.asarray(self.params["edges"], dtype=float)
        dens = np.asarray(self.params["densities"], dtype=float)
        idx = np.searchsorted(edges, x, side="right") - 1
        # the last edge belongs to the last bin
        idx = np.where(x == edges[-1], len(dens) - 1, idx)
        inside = (idx >= 0) & (idx < len(dens))
        return np.where(inside, dens[np.clip(idx, 0, len(dens) - 1)], 0.0)

    def cdf(self, x: float) -> float:
        if self.kind == "gaussian":
            return _norm_cdf((x - self.params["mean"]) / self.params["std"])
        if self.kind == "mixture":
            return sum(w * _norm_cdf((x - m) / s) for w, m, s in self.params["components"])
        edges = np.asarray(self.params["edges"], dtype=float)
        dens = np.asarray(self.params["densities"], dtype=float)
        widths = np.diff(edges)
        covered = np.clip(x - edges[:-1], 0.0, widths)
        return float((covered * dens).sum())

    def mass(self, a: float, b: float) -> float:
        """Probability of the closed interval [a, b]."""
        return max(0.0, self.cdf(b) - self.cdf(a))

    @property
    def mean(self) -> float:
        if self.kind == "gaussian":
            return self.params["mean"]
        if self.kind == "mixture":
            return sum(w * m for w, m, _ in self.params["components"])
        edges = np.asarray(self.params["edges"], dtype=float)
        dens = np.asarray(self.params["densities"], dtype=float)
        mids = (edges[:-1] + edges[1:]) / 2
        return float((mids * dens * np.diff(edges)).sum())

    def to_record(self) -> dict:
        params = {k: (np.asarray(v).tolist() if isinstance(v, np.ndarray) else v)
                  for k, v in self.params.items()}
        return {"probe": self.probe_id, "kind": self.kind, "params": params,
                "sample_count": self.sample_count, "support": list(self.support)}

    @classmethod
    def from_record(cls, rec: dict) -> "ProbeDistribution":
        params = dict(rec["params"])
        if rec["kind"] == "mixture":
            params["components"] = [tuple(c) for c in params["components"]]
        return cls(rec["probe"], rec["kind"], params, rec.get("sample_count", 0),
                   tuple(rec.get("support", (-math.inf, math.inf))))


def fit_distribution(samples: Iterable[Optional[float]], model_kind: str = "gaussian",
                     probe_id: str = "", min_samples: int = MIN_SAMPLES) -> ProbeDistribution:
    """Fit a gaussian (MLE, population std) or a Freedman-Diaconis histogram.

    ``model_kind="auto"`` fits a gaussian unless the excess kurtosis exceeds 2 in
    magnitude, in which case it falls back to the histogram. Undefined (``None``)
    samples are dropped first.
    """
    x = np.array([s for s in samples if s is not None], dtype=float)
    name = probe_id or "<unnamed>"
    if not np.all(np.isfinite(x)):
        raise CalibrationError(f"probe {name}: non-finite samples")
    if len(x) < min_samples:
        raise CalibrationError(f"probe {name}: {len(x)} samples, need at least {min_samples}")
    std = float(x.std())
    if np.ptp(x) == 0 or not std > 0:
        raise CalibrationError(f"probe {name}: zero variance, distribution is degenerate")
    support = (float(x.min()), float(x.max()))

    if model_kind == "auto":
        kurt = float(stats.kurtosis(x, fisher=True, bias=True))
        model_kind = "histogram" if abs(kurt) > KURTOSIS_LIMIT else "gaussian"
    if model_kind == "gaussian":
        return ProbeDistribution(probe_id, "gaussian", {"mean": float(x.mean()), "std": std},
                                 len(x), support)
    if model_kind == "histogram":
        edges = np.histogram_bin_edges(x, bins="fd")
        if len(edges) < 3:
            edges = np.histogram_bin_edges(x, bins="sturges")
        dens, edges = np.histogram(x, bins=edges, density=True)
        return ProbeDistribution(probe_id, "histogram",
                                 {"edges": edges.tolist(), "densities": dens.tolist()},
                                 len(x), support)
    raise ValueError(f"unknown model kind {model_kind!r}")


def _crossing(f, lo: float, hi: float, flo: float, fhi: float) -> float:
    if flo == 0:
        return lo
    if fhi == 0:
        return hi
    return optimize.brentq(f, lo, hi, xtol=1e-13, rtol=4 * np.finfo(float).eps, maxiter=200)


def intersect_bounds(tp: ProbeDistribution, fp: ProbeDistribution,
                     grid_points: int = GRID_POINTS) -> tuple[float, float, float]:
    """Density crossings bracketing the TP mode, and the TP mass between them.

    Returns ``(a, b, p_tp)``; a side with no crossing inside the searched range
    is open (-inf / +inf).
    """
    lo = min(tp.support[0], fp.support[0])
    hi = max(tp.support[1], fp.support[1])
    if not hi > lo:
        raise CalibrationError(f"probe {tp.probe_id}: empty search range")
    xs = np.linspace(lo, hi, grid_points)

    def diff(x):
        return float(tp.pdf(x) - fp.pdf(x))

    d = tp.pdf(xs) - fp.pdf(xs)
    scale = max(float(tp.pdf(xs).max()), float(fp.pdf(xs).max()), 1e-300)
    if np.all(np.abs(d) <= 1e-9 * scale):
        raise CalibrationError(f"probe {tp.probe_id}: TP and FP densities are identical")

    anchor = int(np.argmax(tp.pdf(xs)))
    if d[anchor] <= 0:
        anchor = int(np.argmax(d))
        if d[anchor] <= 0:
            raise CalibrationError(f"probe {tp.probe_id}: TP density never exceeds FP density")

    a = -math.inf
    for i in range(anchor - 1, -1, -1):
        if d[i] <= 0:
            a = _crossing(diff, xs[i], xs[i + 1], d[i], d[i + 1])
            break
    b = math.inf
    for i in range(anchor + 1, len(xs)):
        if d[i] <= 0:
            b = _crossing(diff, xs[i - 1], xs[i], d[i - 1], d[i])
            break
    return a, b, tp.mass(a, b)


@dataclass(frozen=True)
class AxiomSpec:
    """Pr(lower_a <= probe <= upper_b) over ``window_M`` frames must reach ``threshold``.

    ``p_tp`` is the calibrated TP mass inside the bounds. ``threshold`` is the
    monitoring level 1 - epsilon and defaults to ``p_tp``.
    """

    probe_id: str
    lower_a: float
    upper_b: float
    p_tp: float
    window_M: int = 10
    threshold: Optional[float] = None
    name: str = ""

    def __post_init__(self):
        object.__setattr__(self, "lower_a", float(self.lower_a))
        object.__setattr__(self, "upper_b", float(self.upper_b))
        object.__setattr__(self, "p_tp", float(self.p_tp))
        if self.threshold is not None:
            object.__setattr__(self, "threshold", float(self.threshold))
        if self.probe_id not in PROBE_NAMES:
            raise ValueError(f"unknown probe {self.probe_id!r}")
        if not self.lower_a < self.upper_b:
            raise ValueError(f"bounds out of order: {self.lower_a} >= {self.upper_b}")
        if math.isinf(self.lower_a) and math.isinf(self.upper_b):
            raise ValueError("axiom needs at least one finite bound")
        if not 0.0 < self.p_tp <= 1.0:
            raise ValueError(f"p_tp {self.p_tp} outside (0, 1]")
        if self.window_M < 1:
            raise ValueError("window must be >= 1")
        if self.threshold is None:
            object.__setattr__(self, "threshold", self.p_tp)
        if not 0.0 < self.threshold <= 1.0:
            raise ValueError(f"threshold {self.threshold} outside (0, 1]")
        if not self.name:
            object.__setattr__(self, "name", self.probe_id)

    @property
    def epsilon(self) -> float:
        return 1.0 - self.threshold

    def contains(self, value: float) -> bool:
        return self.lower_a <= value <= self.upper_b


@dataclass
class CalibrationResult:
    axioms: list[AxiomSpec]
    distributions: dict[str, tuple[ProbeDistribution, ProbeDistribution]]
    targets: DesiredTargets
    skipped: dict[str, str] = field(default_factory=dict)

    def sidecar(self) -> dict:
        return {
            "targets": {"c_D": self.targets.c_D, "E_D": self.targets.E_D},
            "axioms": [{"name": a.name, "probe": a.probe_id, "p_tp": a.p_tp,
                        "threshold": a.threshold} for a in self.axioms],
            "distributions": {p: {"tp": tp.to_record(), "fp": fp.to_record()}
                              for p, (tp, fp) in self.distributions.items()},
            "skipped": dict(self.skipped),
        }


def desired_targets(samples: Sequence[LabeledSample]) -> DesiredTargets:
    """Mean TP contrast and entropy: the operating point the adaptation steers to."""
    tps = [s.probe_vector for s in samples if s.label == TRUE_POSITIVE]
    if not tps:
        raise CalibrationError("no true-positive samples to derive targets from")
    return DesiredTargets(c_D=float(np.mean([p.contrast for p in tps])),
                          E_D=float(np.mean([p.entropy_bits for p in tps])))


def calibrate(samples: Sequence[LabeledSample], cfg: WindowConfig, *,
              probes: Sequence[str] = PROBE_NAMES, model_kind: str = "auto",
              min_samples: int = MIN_SAMPLES, min_separation: float = 0.0,
              epsilon: Optional[float] = None) -> CalibrationResult:
    """Fit every requested probe; skip (and log) the ones that cannot be calibrated.

    ``min_separation`` drops axioms whose bounds keep nearly as much FP mass as
    TP mass (p_tp - fp_mass < min_separation). ``epsilon`` overrides the default
    tolerance ``1 - p_tp`` for every axiom.
    """
    axioms, dists, skipped = [], {}, {}
    for probe in probes:
        if probe not in PROBE_NAMES:
            raise ValueError(f"unknown probe {probe!r}")
        tp_vals = [s.probe_vector.get(probe) for s in samples if s.label == TRUE_POSITIVE]
        fp_vals = [s.probe_vector.get(probe) for s in samples if s.label == FALSE_POSITIVE]
        try:
            stage = "true positives"
            tp = fit_distribution(tp_vals, model_kind, probe, min_samples)
            stage = "false positives"
            fp = fit_distribution(fp_vals, model_kind, probe, min_samples)
            stage = "bounds"
            a, b, p_tp = intersect_bounds(tp, fp)
        except CalibrationError as exc:
            skipped[probe] = f"{stage}: {exc}"
            log.info("skipping %s: %s", probe, skipped[probe])
            continue
        if probe in DEVIATION_PROBES:
            # non-negative probes: keep only the upper bound
            a = -math.inf
            p_tp = tp.mass(a, b)
        if math.isinf(a) and math.isinf(b):
            skipped[probe] = "no density crossing on either side of the TP mode"
            log.info("skipping %s: %s", probe, skipped[probe])
            continue
        separation = p_tp - fp.mass(a, b)
        if separation < min_separation:
            skipped[probe] = f"separation {separation:.3f} below {min_separation}"
            log.info("skipping %s: %s", probe, skipped[probe])
            continue
        if not p_tp > 0.0:
            skipped[probe] = "no TP mass inside the bounds"
            continue
        threshold = None if epsilon is None else 1.0 - epsilon
        axioms.append(AxiomSpec(probe, a, b, min(p_tp, 1.0), cfg.M, threshold))
        dists[probe] = (tp, fp)
    if not axioms:
        raise CalibrationError("no probe could be calibrated: " +
                               "; ".join(f"{k}: {v}" for k, v in skipped.items()))
    return CalibrationResult(axioms, dists, desired_targets(samples), skipped)


def build_axiom_set(samples: Sequence[LabeledSample], cfg: WindowConfig, **kw) -> list[AxiomSpec]:
    return calibrate(samples, cfg, **kw).axioms
