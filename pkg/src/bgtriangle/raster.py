"""Tessellation, z-buffer rasterization and boundary extraction."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path

import numba
import numpy as np

from .bezier import bernstein_basis
from .camera import Camera
from .scene import BGTriangle, Scene

MIN_LEVEL = 1
MAX_LEVEL = 6


@dataclass
class BoundarySet:
    """Boundary pixels with their surface points and screen radii."""

    pixel: np.ndarray  # (M, 2) int, (x, y)
    xy: np.ndarray  # (M, 2) projection of the surface point
    owner: np.ndarray  # (M,) primitive id
    row: np.ndarray  # (M,) scene row of the owner
    bc: np.ndarray  # (M, 3)
    point: np.ndarray  # (M, 3) world
    depth: np.ndarray  # (M,)
    sigma: np.ndarray  # (M,) pixels

    def __len__(self) -> int:
        return len(self.owner)

    @classmethod
    def empty(cls) -> "BoundarySet":
        return cls(
            pixel=np.zeros((0, 2), dtype=np.int64),
            xy=np.zeros((0, 2)),
            owner=np.zeros(0, dtype=np.int64),
            row=np.zeros(0, dtype=np.int64),
            bc=np.zeros((0, 3)),
            point=np.zeros((0, 3)),
            depth=np.zeros(0),
            sigma=np.zeros(0),
        )


@dataclass
class RasterBuffers:
    uv: np.ndarray  # (H, W, 3)
    ids: np.ndarray  # (H, W) primitive id, -1 background
    rows: np.ndarray  # (H, W) scene row, -1 background
    depth: np.ndarray  # (H, W), +inf background
    boundary: BoundarySet | None = None

    @property
    def foreground(self) -> np.ndarray:
        return self.ids >= 0


@lru_cache(maxsize=None)
def tessellation_grid(level: int) -> tuple[np.ndarray, np.ndarray]:
    """Barycentric vertex grid and triangle indices for 4**level triangles."""
    n = 2**level
    lookup = {}
    bc = []
    for b in range(n + 1):
        for a in range(n + 1 - b):
            lookup[(a, b)] = len(bc)
            v, w = a / n, b / n
            bc.append((1.0 - v - w, v, w))
    tris = []
    for b in range(n):
        for a in range(n - b):
            tris.append((lookup[(a, b)], lookup[(a + 1, b)], lookup[(a, b + 1)]))
            if a + b <= n - 2:
                tris.append((lookup[(a + 1, b)], lookup[(a + 1, b + 1)], lookup[(a, b + 1)]))
    bc = np.array(bc)
    tris = np.array(tris, dtype=np.int64)
    bc.setflags(write=False)
    tris.setflags(write=False)
    return bc, tris


# pairs of control points forming the control polygon of each boundary curve
_EDGE_POLYLINES = ((0, 1), (1, 3), (3, 4), (4, 5), (5, 2), (2, 0))


def level_for_extent(extent_px: float) -> int:
    """Smallest level with extent / 2**L <= 1 px, clamped to [1, 6]."""
    if not np.isfinite(extent_px):
        return MAX_LEVEL
    level = int(np.ceil(np.log2(max(extent_px, 1.0))))
    return int(np.clip(level, MIN_LEVEL, MAX_LEVEL))


def projected_extent(net: np.ndarray, cam: Camera) -> float:
    """Longest boundary control-polygon length in pixels (inf if clipped)."""
    xy, z = cam.project(net)
    if np.any(z <= cam.near):
        return np.inf
    lengths = np.zeros(3)
    for e, (a, b) in enumerate(_EDGE_POLYLINES):
        lengths[e // 2] += np.linalg.norm(xy[a] - xy[b])
    return float(lengths.max())


def is_culled(net: np.ndarray, cam: Camera) -> bool:
    xy, z = cam.project(net)
    if np.all(z <= cam.near) or np.all(z >= cam.far):
        return True
    if np.any(z <= cam.near):
        return False
    return bool(
        np.all(xy[:, 0] < 0)
        or np.all(xy[:, 0] > cam.width)
        or np.all(xy[:, 1] < 0)
        or np.all(xy[:, 1] > cam.height)
    )


def primitive_levels(ctrl: np.ndarray, cam: Camera) -> np.ndarray:
    """Tessellation level per primitive for ``cam``; 0 marks culled primitives.

    Vectorized form of :func:`is_culled` plus :func:`level_for_extent`.
    """
    if len(ctrl) == 0:
        return np.zeros(0, dtype=np.int64)
    xy, z = cam.project(ctrl.reshape(-1, 3))
    xy = xy.reshape(len(ctrl), -1, 2)
    z = z.reshape(len(ctrl), -1)
    behind = z <= cam.near
    culled = np.all(behind, axis=1) | np.all(z >= cam.far, axis=1)
    off = (
        np.all(xy[..., 0] < 0, axis=1)
        | np.all(xy[..., 0] > cam.width, axis=1)
        | np.all(xy[..., 1] < 0, axis=1)
        | np.all(xy[..., 1] > cam.height, axis=1)
    )
    clipped = np.any(behind, axis=1)
    culled |= off & ~clipped
    lengths = np.zeros((len(ctrl), 3))
    for e, (a, b) in enumerate(_EDGE_POLYLINES):
        with np.errstate(invalid="ignore"):
            lengths[:, e // 2] += np.linalg.norm(xy[:, a] - xy[:, b], axis=-1)
    ext = lengths.max(1)
    with np.errstate(divide="ignore", invalid="ignore"):
        lvl = np.ceil(np.log2(np.maximum(np.where(np.isfinite(ext), ext, 1.0), 1.0)))
    lvl = np.clip(lvl, MIN_LEVEL, MAX_LEVEL).astype(np.int64)
    lvl = np.where(clipped | ~np.isfinite(ext), MAX_LEVEL, lvl)
    return np.where(culled, 0, lvl)


@dataclass
class Tessellation:
    bc: np.ndarray  # (V, 3)
    points: np.ndarray  # (V, 3) world
    triangles: np.ndarray  # (T, 3) vertex indices
    level: int
    prim_id: int


def tessellate(prim: BGTriangle, cam: Camera | None = None, level: int | None = None) -> Tessellation:
    """Uniform barycentric tessellation of one primitive.

    The level is chosen from the projected size when ``cam`` is given.
    """
    if level is None:
        if cam is None:
            raise ValueError("need a camera or an explicit level")
        level = level_for_extent(projected_extent(prim.geometry, cam))
    bc, tris = tessellation_grid(level)
    pts = bernstein_basis(bc) @ prim.geometry
    return Tessellation(bc=bc, points=pts, triangles=tris, level=level, prim_id=prim.id)


@numba.njit(cache=True)
def _raster_kernel(sx, sy, sz, vbc, tris, tri_id, tri_local, width, height, near, far, zbuf, idbuf, locbuf, uvbuf):
    for t in range(tris.shape[0]):
        i0 = tris[t, 0]
        i1 = tris[t, 1]
        i2 = tris[t, 2]
        z0 = sz[i0]
        z1 = sz[i1]
        z2 = sz[i2]
        if z0 <= near or z1 <= near or z2 <= near:
            continue
        x0 = sx[i0]
        y0 = sy[i0]
        x1 = sx[i1]
        y1 = sy[i1]
        x2 = sx[i2]
        y2 = sy[i2]
        area = (x1 - x0) * (y2 - y0) - (x2 - x0) * (y1 - y0)
        if area == 0.0 or not np.isfinite(area):
            continue
        xmin = max(0, int(np.ceil(min(x0, min(x1, x2)) - 0.5)))
        xmax = min(width - 1, int(np.floor(max(x0, max(x1, x2)) - 0.5)))
        ymin = max(0, int(np.ceil(min(y0, min(y1, y2)) - 0.5)))
        ymax = min(height - 1, int(np.floor(max(y0, max(y1, y2)) - 0.5)))
        gid = tri_id[t]
        loc = tri_local[t]
        for py in range(ymin, ymax + 1):
            cy = py + 0.5
            for px in range(xmin, xmax + 1):
                cx = px + 0.5
                l0 = ((x1 - cx) * (y2 - cy) - (x2 - cx) * (y1 - cy)) / area
                l1 = ((x2 - cx) * (y0 - cy) - (x0 - cx) * (y2 - cy)) / area
                l2 = ((x0 - cx) * (y1 - cy) - (x1 - cx) * (y0 - cy)) / area
                if l0 < 0.0 or l1 < 0.0 or l2 < 0.0:
                    continue
                w0 = l0 / z0
                w1 = l1 / z1
                w2 = l2 / z2
                iz = w0 + w1 + w2
                z = 1.0 / iz
                if z <= near or z >= far:
                    continue
                cur = zbuf[py, px]
                if z > cur:
                    continue
                if z == cur:
                    cid = idbuf[py, px]
                    if gid > cid or (gid == cid and loc >= locbuf[py, px]):
                        continue
                zbuf[py, px] = z
                idbuf[py, px] = gid
                locbuf[py, px] = loc
                for c in range(3):
                    uvbuf[py, px, c] = (w0 * vbc[i0, c] + w1 * vbc[i1, c] + w2 * vbc[i2, c]) / iz


def rasterize(scene: Scene, cam: Camera) -> RasterBuffers:
    """Depth-tested coordinate, index and depth maps of the scene."""
    H, W = cam.height, cam.width
    zbuf = np.full((H, W), np.inf)
    idbuf = np.full((H, W), -1, dtype=np.int64)
    locbuf = np.full((H, W), -1, dtype=np.int64)
    uvbuf = np.zeros((H, W, 3))

    levels = primitive_levels(scene.ctrl, cam)
    by_level: dict[int, list[int]] = {}
    for r in np.flatnonzero(levels > 0):
        by_level.setdefault(int(levels[r]), []).append(int(r))

    all_xy, all_z, all_bc, all_tris, all_ids, all_loc = [], [], [], [], [], []
    offset = 0
    for lvl in sorted(by_level):
        rows = np.array(by_level[lvl], dtype=np.int64)
        bc, tris = tessellation_grid(lvl)
        pts = np.einsum("vm,pmc->pvc", bernstein_basis(bc), scene.ctrl[rows])
        xy, z = cam.project(pts.reshape(-1, 3))
        nv = len(bc)
        all_xy.append(xy)
        all_z.append(z)
        all_bc.append(np.tile(bc, (len(rows), 1)))
        base = offset + np.arange(len(rows))[:, None, None] * nv
        all_tris.append((tris[None] + base).reshape(-1, 3))
        all_ids.append(np.repeat(scene.ids[rows], len(tris)))
        all_loc.append(np.tile(np.arange(len(tris), dtype=np.int64), len(rows)))
        offset += len(rows) * nv

    if all_tris:
        xy = np.concatenate(all_xy)
        _raster_kernel(
            np.ascontiguousarray(xy[:, 0]),
            np.ascontiguousarray(xy[:, 1]),
            np.concatenate(all_z),
            np.concatenate(all_bc),
            np.concatenate(all_tris),
            np.concatenate(all_ids),
            np.concatenate(all_loc),
            W,
            H,
            cam.near,
            cam.far,
            zbuf,
            idbuf,
            locbuf,
            uvbuf,
        )

    fg = idbuf >= 0
    uv = np.clip(uvbuf, 0.0, None)
    s = uv.sum(-1, keepdims=True)
    uv = np.where(fg[..., None], uv / np.where(s > 0, s, 1.0), 0.0)
    lut = scene.index_of()
    rows_map = np.full((H, W), -1, dtype=np.int64)
    if fg.any():
        rows_map[fg] = np.array([lut[int(g)] for g in idbuf[fg]], dtype=np.int64)
    return RasterBuffers(uv=uv, ids=idbuf, rows=rows_map, depth=zbuf)


def boundary_mask(ids: np.ndarray) -> np.ndarray:
    """Foreground pixels with a 4-neighbour of a different id."""
    diff = np.zeros(ids.shape, dtype=bool)
    h = ids[:, :-1] != ids[:, 1:]
    v = ids[:-1, :] != ids[1:, :]
    diff[:, :-1] |= h
    diff[:, 1:] |= h
    diff[:-1, :] |= v
    diff[1:, :] |= v
    return diff & (ids >= 0)


def boundary_from_pixels(pixels: np.ndarray, buffers: RasterBuffers, scene: Scene, cam: Camera, r_b: float) -> BoundarySet:
    """Surface points, projections and radii for given (x, y) boundary pixels."""
    if len(pixels) == 0:
        return BoundarySet.empty()
    xs, ys = pixels[:, 0], pixels[:, 1]
    rows = buffers.rows[ys, xs]
    bc = buffers.uv[ys, xs]
    pts = np.einsum("nm,nmc->nc", bernstein_basis(bc), scene.ctrl[rows])
    xy, z = cam.project(pts)
    return BoundarySet(
        pixel=pixels,
        xy=xy,
        owner=buffers.ids[ys, xs],
        row=rows,
        bc=bc,
        point=pts,
        depth=z,
        sigma=r_b * cam.fx / z,
    )


def extract_boundaries(buffers: RasterBuffers, scene: Scene, cam: Camera, r_b: float | None = None) -> BoundarySet:
    if r_b is None:
        r_b = scene.r_b
    ys, xs = np.nonzero(boundary_mask(buffers.ids))
    return boundary_from_pixels(np.stack([xs, ys], axis=1).astype(np.int64), buffers, scene, cam, r_b)


def dump_debug(buffers: RasterBuffers, out_dir: str | Path, stem: str = "raster") -> None:
    """Index map as palette PNG, coordinate map as RGB PNG, boundary CSV."""
    from PIL import Image

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    ids = buffers.ids
    idx = np.where(ids >= 0, (ids % 255) + 1, 0).astype(np.uint8)
    img = Image.fromarray(idx, mode="P")
    rng = np.random.default_rng(0)
    pal = rng.integers(40, 256, size=(256, 3), dtype=np.uint8)
    pal[0] = 0
    img.putpalette(pal.reshape(-1).tolist())
    img.save(out / f"{stem}_id.png")
    uv8 = np.round(np.clip(buffers.uv, 0, 1) * 255).astype(np.uint8)
    Image.fromarray(uv8, mode="RGB").save(out / f"{stem}_uv.png")
    with open(out / f"{stem}_boundary.csv", "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(["x", "y", "id", "sigma"])
        b = buffers.boundary
        if b is not None:
            for (x, y), g, s in zip(b.pixel, b.owner, b.sigma):
                wr.writerow([int(x), int(y), int(g), repr(float(s))])
