"""rdsw: a workbench for finite random dynamical systems on the circle,
interval, and projective line: synchronization diagnostics, quenched limit
laws, Lyapunov and large-deviation estimates, matrix cocycles, and transfer
operator discretizations, all driven by reproducible counter-based streams.
"""

from __future__ import annotations

__version__ = "0.1.0"

from .gallery import gallery, gallery_facts, gallery_ids
from .geometry import (
    CIRCLE,
    INTERVAL,
    PROJECTIVE,
    CirclePoint,
    IntervalPoint,
    MetricKind,
    ProjectivePoint,
    circle_distance,
    interval_distance,
    projective_distance,
    snowflake,
)
from .systems import (
    AffineMap,
    MapSpec,
    MoebiusMap,
    PerturbedRotation,
    Rotation,
    SkewState,
    SystemSpec,
    TabulatedMap,
    TrajectoryRecord,
    WordStream,
    apply_map,
    derivative,
    enumerate_words,
    iterate,
    skew_step,
)

__all__ = [
    "__version__",
    "CIRCLE",
    "INTERVAL",
    "PROJECTIVE",
    "CirclePoint",
    "IntervalPoint",
    "ProjectivePoint",
    "MetricKind",
    "circle_distance",
    "interval_distance",
    "projective_distance",
    "snowflake",
    "MapSpec",
    "AffineMap",
    "Rotation",
    "PerturbedRotation",
    "MoebiusMap",
    "TabulatedMap",
    "SystemSpec",
    "WordStream",
    "TrajectoryRecord",
    "SkewState",
    "apply_map",
    "derivative",
    "iterate",
    "skew_step",
    "enumerate_words",
    "gallery",
    "gallery_ids",
    "gallery_facts",
]
