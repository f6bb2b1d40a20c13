"""Outer approximation of largest control invariant sets via symbolic images.

The package implements the iterative subdivide / build-graph / analyze /
retain loop for discrete-time controlled systems, in a standard
full-subdivision variant and an adaptive variant that refines only the
boundary cells and their nearest neighbours, with a batched parallel graph
builder whose output is identical to the serial one.
"""

from cisgraph.geometry import Box, CellId, Covering, SpatialIndex
from cisgraph.system import SystemModel, InputGrid, CstrParameters, sample_inputs
from cisgraph.image import ImageConfig
from cisgraph.graph import BuildPlan, SymbolicImage
from cisgraph.adaptive import AdaptiveConfig
from cisgraph.engine import RunConfig, RunResult, run

__version__ = "0.1.0"

__all__ = [
    "Box",
    "CellId",
    "Covering",
    "SpatialIndex",
    "SystemModel",
    "InputGrid",
    "CstrParameters",
    "sample_inputs",
    "ImageConfig",
    "BuildPlan",
    "SymbolicImage",
    "AdaptiveConfig",
    "RunConfig",
    "RunResult",
    "run",
]
