"""Deterministic optical-table simulator with a self-aligning build stack.

The package splits into three layers. ``simcore`` and ``physics`` model the
table: seeded component placement, hidden mount bias, paraxial ray tracing,
camera frames, and a phenomenological lasing response. ``vision`` and
``align`` implement the instrument-side loops: centroiding, beam-quality
moments, Newton walks, and Bayesian knob searches that only ever see camera
pixels. ``pipeline`` strings those into the twelve-step construction
sequence plus surveillance and recovery; ``cli`` and ``trials`` wrap it all
for batch use.
"""

from ._kernels import BACKEND
from .errors import (
    BeamLostError,
    CavforgeError,
    ConstructionError,
    LayoutError,
    NoLasingError,
    SaturationError,
    UnknownComponentError,
    WorkspaceError,
)
from .layout import Layout, default_layout, load_layout, validate_layout
from .pipeline import (
    PipelineState,
    RecoveryReport,
    StepId,
    measure_power_curve,
    recover_displacement,
    recover_drift,
    run_construction,
    surveillance_tick,
)
from .simcore import Component, ComponentKind, Pose, Workspace

__version__ = "0.1.0"

__all__ = [
    "BACKEND",
    "BeamLostError",
    "CavforgeError",
    "Component",
    "ComponentKind",
    "ConstructionError",
    "Layout",
    "LayoutError",
    "NoLasingError",
    "PipelineState",
    "Pose",
    "RecoveryReport",
    "SaturationError",
    "StepId",
    "UnknownComponentError",
    "Workspace",
    "WorkspaceError",
    "default_layout",
    "load_layout",
    "measure_power_curve",
    "recover_displacement",
    "recover_drift",
    "run_construction",
    "surveillance_tick",
    "validate_layout",
    "__version__",
]
