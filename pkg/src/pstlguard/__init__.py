"""Runtime verification of detection streams with probabilistic temporal axioms,
and contrast adaptation driven by the violations."""

from .adaptation import (AdaptationCommand, DesiredTargets, adapt_frame, apply_contrast,
                         histogram_bound, optimal_contrast_delta)
from .calibration import (AxiomSpec, LabeledSample, ProbeDistribution, build_axiom_set,
                          calibrate, fit_distribution, intersect_bounds)
from .core import BoundingBox, Detection, GrayImage, Track, associate_tracks, crop, iou
from .probes import ProbeVector, WindowConfig, compute_probe_vector, michelson_contrast, shannon_entropy
from .pstl import (AxiomFormula, MonitorConfig, StreamMonitor, evaluate_axiom, evaluate_detection,
                   monitor_stream, parse_axiom, parse_axioms, print_axiom)

__version__ = "0.1.0"
