"""ActionSpotter: action spotting with a learned video browser.

The heavy lifting lives in the compiled ``_core`` module; this package re-exports it.
"""

from ._core import (
    AnnotationSet,
    CheckpointError,
    ClassReport,
    ConfigError,
    ContractViolation,
    CrossReferenceError,
    DetectionSegment,
    Error,
    GroundTruthSegment,
    LoadError,
    MapAccumulator,
    MapReport,
    RangeError,
    SpotPrediction,
    ValidationError,
    VideoAnnotation,
    discounted_return,
    dump_predictions,
    frame_label,
    parse_predictions,
    redraw_detections,
    reward,
    run_cli,
    skip_ratio,
    spotting_map,
    spotting_map_report,
    synth_generate,
)

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]
