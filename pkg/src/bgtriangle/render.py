"""Forward pipeline: raster, boundaries, sub-primitives, splatting."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .camera import Camera
from .raster import BoundarySet, RasterBuffers, boundary_from_pixels, extract_boundaries, rasterize
from .scene import Scene
from .splat import (
    CompositeResult,
    ProjectedGaussians,
    TileLists,
    build_boundary_tiles,
    build_gaussian_tiles,
    composite,
    project,
)
from .subprim import SubPrimitives, generate


@dataclass
class RenderResult:
    image: np.ndarray
    buffers: RasterBuffers
    boundary: BoundarySet | None
    bindex: TileLists | None
    subs: SubPrimitives
    proj: ProjectedGaussians
    gtiles: TileLists
    comp: CompositeResult
    blend: bool
    opacity: float


def render(
    scene: Scene, cam: Camera, *, blend: bool = True, frozen: RenderResult | None = None, keep_records: bool = True
) -> RenderResult:
    """Render one view.

    With ``frozen`` the coordinate/index maps and boundary pixel set of an
    earlier render are reused; everything downstream is recomputed from the
    current scene parameters.
    """
    if frozen is not None:
        buffers = frozen.buffers
    else:
        buffers = rasterize(scene, cam)
    boundary = bindex = None
    if blend:
        if frozen is not None and frozen.boundary is not None:
            boundary = boundary_from_pixels(frozen.boundary.pixel, buffers, scene, cam, scene.r_b)
        else:
            boundary = extract_boundaries(buffers, scene, cam)
        bindex = build_boundary_tiles(boundary, cam.width, cam.height)
    subs = generate(buffers, scene, cam)
    proj = project(subs, cam)
    gtiles = build_gaussian_tiles(proj, cam.width, cam.height)
    comp = composite(proj, gtiles, buffers.ids, boundary, bindex, scene.background, scene.opacity, blend, keep_records)
    return RenderResult(comp.image, buffers, boundary, bindex, subs, proj, gtiles, comp, blend, scene.opacity)


def render_image(scene: Scene, cam: Camera, blend: bool = True) -> np.ndarray:
    return render(scene, cam, blend=blend, keep_records=False).image
