"""Deformable gauze cutting with learned multi-pinch-point tensioning."""
from ._backend import BACKEND
from .mesh import (
    SimParams,
    Sheet,
    TensionConstraint,
    apply_tension,
    cut_vertex,
    new_sheet,
    release_tension,
    settle,
    step,
)

__all__ = [
    "BACKEND",
    "SimParams",
    "Sheet",
    "TensionConstraint",
    "apply_tension",
    "cut_vertex",
    "new_sheet",
    "release_tension",
    "settle",
    "step",
]
__version__ = "0.1.0"
