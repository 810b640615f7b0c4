"""RFI detection and classification from C/N0 over received power.

Pipeline: :mod:`rfimap.ubx` (ingest) -> :mod:`rfimap.calibration` ->
:mod:`rfimap.nominal` -> :mod:`rfimap.threshold` -> :mod:`rfimap.regions`,
with :mod:`rfimap.simulate` and :mod:`rfimap.evaluate` for synthetic
validation.
"""

__version__ = "0.1.0"

from .calibration import CalibrationConfig, MetricPoint, calibrate_stream  # noqa: E402
from .evaluate import ConfusionMatrix, DetectionReport, score_detection  # noqa: E402
from .nominal import NominalModel, SiteOffset, fit_nominal, recenter  # noqa: E402
from .regions import Label, RegionConfig, RegionMap, ThresholdEllipse, build_regions, classify, classify_stream  # noqa: E402
from .simulate import Event, LabeledStream, ScenarioScript, ramp_crossing_time, render  # noqa: E402
from .threshold import FalsificationConfig, estimate_fpr, optimize_threshold  # noqa: E402

__all__ = [
    "CalibrationConfig", "MetricPoint", "calibrate_stream",
    "ConfusionMatrix", "DetectionReport", "score_detection",
    "NominalModel", "SiteOffset", "fit_nominal", "recenter",
    "Label", "RegionConfig", "RegionMap", "ThresholdEllipse", "build_regions", "classify", "classify_stream",
    "Event", "LabeledStream", "ScenarioScript", "ramp_crossing_time", "render",
    "FalsificationConfig", "estimate_fpr", "optimize_threshold",
]
