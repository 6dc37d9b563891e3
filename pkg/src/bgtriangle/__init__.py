"""Differentiable rendering with Bezier Gaussian triangles."""

import numba as _numba

# kernels write disjoint per-tile slots, so any layer gives identical results;
# probing an outdated TBB only produces a warning
_numba.config.THREADING_LAYER_PRIORITY = ["omp", "workqueue", "tbb"]

from .bezier import ContractError, evaluate_surface, subdivide_4
from .camera import Camera, from_c2w_opengl, look_at
from .render import RenderResult, render
from .scene import Scene, init_from_cube, init_from_point_cloud

__all__ = [
    "Camera",
    "ContractError",
    "RenderResult",
    "Scene",
    "evaluate_surface",
    "from_c2w_opengl",
    "init_from_cube",
    "init_from_point_cloud",
    "look_at",
    "render",
    "subdivide_4",
]
__version__ = "0.1.0"
