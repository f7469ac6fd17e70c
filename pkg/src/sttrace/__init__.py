"""Eulerian space-time trace finite elements for parabolic PDEs on evolving curves."""

from .estimator import SpaceTimeTraceFEM
from .mesh import Triangulation, TimeGrid, build_structured_mesh, refine_uniform, build_time_grid
from .scenes import MergingCircles, MovingCircle, MovingLine, StationaryCircle, get_scene

__all__ = [
    "SpaceTimeTraceFEM",
    "Triangulation",
    "TimeGrid",
    "build_structured_mesh",
    "refine_uniform",
    "build_time_grid",
    "MovingCircle",
    "MergingCircles",
    "MovingLine",
    "StationaryCircle",
    "get_scene",
]

__version__ = "0.1.0"
