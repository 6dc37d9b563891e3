"""Projection, boundary tile index and discontinuity-aware compositing."""

from __future__ import annotations

from dataclasses import dataclass

import numba
import numpy as np
from numba import prange

from .camera import Camera
from .raster import BoundarySet
from .subprim import SubPrimitives, sh_basis

TILE = 16
K_CUT = 3.0
LOWPASS = 0.3
ALPHA_MAX = 0.99
ALPHA_MIN = 1.0 / 255.0
T_MIN = 1e-4


@dataclass
class ProjectedGaussians:
    mean: np.ndarray  # (N, 2) pixels
    cov: np.ndarray  # (N, 3) a, b, c of [[a, b], [b, c]] incl. low-pass
    conic: np.ndarray  # (N, 3)
    depth: np.ndarray
    owner: np.ndarray
    color: np.ndarray  # (N, 3) diffuse + SH residual, clamped
    radius: np.ndarray  # (N,) int pixels, 0 when dropped
    # cached intermediates for the backward pass
    t_cam: np.ndarray
    J: np.ndarray  # (N, 2, 3)
    cov_cam: np.ndarray  # (N, 3, 3)
    M: np.ndarray  # rotation @ diag(scale)
    view_dir: np.ndarray
    view_len: np.ndarray
    color_pre: np.ndarray  # before the final clamp
    valid: np.ndarray

    def __len__(self) -> int:
        return len(self.owner)


def project(subs: SubPrimitives, cam: Camera) -> ProjectedGaussians:
    """First-order (EWA) screen-space projection of every sub-primitive."""
    t = cam.to_camera(subs.position)
    x, y, z = t[:, 0], t[:, 1], t[:, 2]
    valid = z > cam.near
    zs = np.where(valid, z, 1.0)
    mean = np.stack([cam.fx * x / zs + cam.cx, cam.fy * y / zs + cam.cy], axis=1)
    J = np.zeros((len(z), 2, 3))
    J[:, 0, 0] = cam.fx / zs
    J[:, 0, 2] = -cam.fx * x / zs**2
    J[:, 1, 1] = cam.fy / zs
    J[:, 1, 2] = -cam.fy * y / zs**2
    M = subs.rotation * subs.scale[:, None, :]
    cov3 = M @ np.swapaxes(M, 1, 2)
    cov_cam = cam.R @ cov3 @ cam.R.T
    cov2 = J @ cov_cam @ np.swapaxes(J, 1, 2)
    a = cov2[:, 0, 0] + LOWPASS
    b = cov2[:, 0, 1]
    c = cov2[:, 1, 1] + LOWPASS
    det = a * c - b * b
    conic = np.stack([c / det, -b / det, a / det], axis=1)
    mid = 0.5 * (a + c)
    lam = mid + np.sqrt(np.maximum(0.1, mid * mid - det))
    radius = np.ceil(3.0 * np.sqrt(lam)).astype(np.int64)
    radius = np.where(valid & (det > 0), radius, 0)

    view = subs.position - cam.center
    view_len = np.linalg.norm(view, axis=1)
    view_dir = view / np.maximum(view_len, 1e-12)[:, None]
    residual = np.einsum("nb,nbc->nc", sh_basis(view_dir), subs.sh)
    color_pre = subs.color + residual
    return ProjectedGaussians(
        mean=mean,
        cov=np.stack([a, b, c], axis=1),
        conic=conic,
        depth=z,
        owner=subs.owner,
        color=np.clip(color_pre, 0.0, 1.0),
        radius=radius,
        t_cam=t,
        J=J,
        cov_cam=cov_cam,
        M=M,
        view_dir=view_dir,
        view_len=view_len,
        color_pre=color_pre,
        valid=valid,
    )


@dataclass
class TileLists:
    """Flattened per-tile item lists; items of tile t are order[start[t]:end[t]]."""

    order: np.ndarray
    start: np.ndarray
    end: np.ndarray
    key: np.ndarray  # per entry sort key within the tile (owner or unused)
    tiles_x: int
    tiles_y: int

    @property
    def n_tiles(self) -> int:
        return self.tiles_x * self.tiles_y


def _tile_grid(width: int, height: int) -> tuple[int, int]:
    return (width + TILE - 1) // TILE, (height + TILE - 1) // TILE


def _expand_rects(x0, x1, y0, y1, tiles_x):
    """Enumerate (item, tile) pairs for inclusive tile rectangles."""
    nx = np.maximum(x1 - x0 + 1, 0)
    ny = np.maximum(y1 - y0 + 1, 0)
    counts = nx * ny
    item = np.repeat(np.arange(len(counts)), counts)
    if len(item) == 0:
        return item, item.copy(), item.copy(), item.copy()
    first = np.repeat(np.cumsum(counts) - counts, counts)
    local = np.arange(len(item)) - first
    nx_i = nx[item]
    tx = x0[item] + local % nx_i
    ty = y0[item] + local // nx_i
    return item, tx, ty, ty * tiles_x + tx


def boundary_tile_ranges(xy: np.ndarray, sigma: np.ndarray, width: int, height: int):
    """Inclusive tile rectangle covering each point's influence disc bbox."""
    tiles_x, tiles_y = _tile_grid(width, height)
    r = K_CUT * sigma
    x0 = np.clip(np.floor((xy[:, 0] - r) / TILE), 0, tiles_x - 1).astype(np.int64)
    x1 = np.clip(np.floor((xy[:, 0] + r) / TILE), 0, tiles_x - 1).astype(np.int64)
    y0 = np.clip(np.floor((xy[:, 1] - r) / TILE), 0, tiles_y - 1).astype(np.int64)
    y1 = np.clip(np.floor((xy[:, 1] + r) / TILE), 0, tiles_y - 1).astype(np.int64)
    # discs entirely off-screen touch nothing
    off = (xy[:, 0] + r < 0) | (xy[:, 0] - r > width) | (xy[:, 1] + r < 0) | (xy[:, 1] - r > height)
    x1 = np.where(off, x0 - 1, x1)
    return x0, x1, y0, y1


def disc_overlaps_tile(x, y, r, tx, ty) -> np.ndarray:
    cx = np.clip(x, tx * TILE, (tx + 1) * TILE)
    cy = np.clip(y, ty * TILE, (ty + 1) * TILE)
    return (x - cx) ** 2 + (y - cy) ** 2 < r * r


def build_boundary_tiles(boundary: BoundarySet, width: int, height: int) -> TileLists:
    """Tile index of boundary points sorted by owner id, then point index."""
    tiles_x, tiles_y = _tile_grid(width, height)
    n_tiles = tiles_x * tiles_y
    if len(boundary) and np.any(boundary.sigma <= 0):
        raise ValueError("boundary radii must be positive")
    x0, x1, y0, y1 = boundary_tile_ranges(boundary.xy, boundary.sigma, width, height)
    item, tx, ty, tile = _expand_rects(x0, x1, y0, y1, tiles_x)
    if len(item):
        keep = disc_overlaps_tile(boundary.xy[item, 0], boundary.xy[item, 1], K_CUT * boundary.sigma[item], tx, ty)
        item, tile = item[keep], tile[keep]
    owner = boundary.owner.astype(np.int64)
    order = np.lexsort((item, owner[item], tile))
    tile_sorted = tile[order]
    return TileLists(
        order=np.ascontiguousarray(item[order]),
        start=np.searchsorted(tile_sorted, np.arange(n_tiles), side="left").astype(np.int64),
        end=np.searchsorted(tile_sorted, np.arange(n_tiles), side="right").astype(np.int64),
        key=np.ascontiguousarray(owner[item[order]]),
        tiles_x=tiles_x,
        tiles_y=tiles_y,
    )


def build_gaussian_tiles(proj: ProjectedGaussians, width: int, height: int) -> TileLists:
    """Tile lists of Gaussians sorted front to back (stable by index)."""
    tiles_x, tiles_y = _tile_grid(width, height)
    n_tiles = tiles_x * tiles_y
    r = proj.radius
    live = r > 0
    mx, my = proj.mean[:, 0], proj.mean[:, 1]
    x0 = np.floor((mx - r) / TILE)
    x1 = np.floor((mx + r) / TILE)
    y0 = np.floor((my - r) / TILE)
    y1 = np.floor((my + r) / TILE)
    off = ~live | (x1 < 0) | (y1 < 0) | (x0 >= tiles_x) | (y0 >= tiles_y)
    x0 = np.clip(x0, 0, tiles_x - 1).astype(np.int64)
    x1 = np.clip(x1, 0, tiles_x - 1).astype(np.int64)
    y0 = np.clip(y0, 0, tiles_y - 1).astype(np.int64)
    y1 = np.clip(y1, 0, tiles_y - 1).astype(np.int64)
    x1 = np.where(off, x0 - 1, x1)
    item, tx, ty, tile = _expand_rects(x0, x1, y0, y1, tiles_x)
    depth = proj.depth[item] if len(item) else np.zeros(0)
    order = np.lexsort((item, depth, tile))
    tile_sorted = tile[order]
    return TileLists(
        order=np.ascontiguousarray(item[order]),
        start=np.searchsorted(tile_sorted, np.arange(n_tiles), side="left").astype(np.int64),
        end=np.searchsorted(tile_sorted, np.arange(n_tiles), side="right").astype(np.int64),
        key=np.zeros(len(item), dtype=np.int64),
        tiles_x=tiles_x,
        tiles_y=tiles_y,
    )


@numba.njit(cache=True)
def gamma(d, sigma):
    g = 2.0 ** (d / sigma - 1.0)
    return g if g < 1.0 else 1.0


@numba.njit(cache=True)
def _locate(px, py, g, s, e, blist, bkey, bxy, bsig, kcut):
    """Best covering point of owner g among blist[s:e]; returns (slot, gamma, dist)."""
    lo = s
    hi = e
    while lo < hi:
        mid = (lo + hi) // 2
        if bkey[mid] < g:
            lo = mid + 1
        else:
            hi = mid
    best = -1
    bestg = 2.0
    bestd = np.inf
    bestp = -1
    k = lo
    while k < e and bkey[k] == g:
        p = blist[k]
        dx = px - bxy[p, 0]
        dy = py - bxy[p, 1]
        d = np.sqrt(dx * dx + dy * dy)
        sg = bsig[p]
        if d < kcut * sg:
            gm = gamma(d, sg)
            if gm < bestg or (gm == bestg and (d < bestd or (d == bestd and p < bestp))):
                best = k
                bestg = gm
                bestd = d
                bestp = p
        k += 1
    return best, bestg, bestd


@numba.njit(cache=True)
def _weight(found, gm, g, qid):
    if found < 0:
        return 1.0 if qid == g else 0.0
    return gm if qid == g else 1.0 - gm


@numba.njit(cache=True)
def _coefficients_tiled(qx, qy, gs, ids, bstart, bend, blist, bkey, bxy, bsig, tiles_x, kcut):
    n = qx.shape[0]
    out = np.empty(n)
    loc = np.empty(n, dtype=np.int64)
    for i in range(n):
        tile = (qy[i] // 16) * tiles_x + qx[i] // 16
        k, gm, _ = _locate(qx[i] + 0.5, qy[i] + 0.5, gs[i], bstart[tile], bend[tile], blist, bkey, bxy, bsig, kcut)
        out[i] = _weight(k, gm, gs[i], ids[qy[i], qx[i]])
        loc[i] = blist[k] if k >= 0 else -1
    return out, loc


@numba.njit(cache=True)
def _coefficients_brute(qx, qy, gs, ids, owner, bxy, bsig, kcut):
    n = qx.shape[0]
    m = owner.shape[0]
    out = np.empty(n)
    loc = np.empty(n, dtype=np.int64)
    for i in range(n):
        px = qx[i] + 0.5
        py = qy[i] + 0.5
        g = gs[i]
        best = -1
        bestg = 2.0
        bestd = np.inf
        for p in range(m):
            if owner[p] != g:
                continue
            dx = px - bxy[p, 0]
            dy = py - bxy[p, 1]
            d = np.sqrt(dx * dx + dy * dy)
            sg = bsig[p]
            if d < kcut * sg:
                gm = gamma(d, sg)
                if gm < bestg or (gm == bestg and (d < bestd or (d == bestd and p < best))):
                    best = p
                    bestg = gm
                    bestd = d
        out[i] = _weight(best, bestg, g, ids[qy[i], qx[i]])
        loc[i] = best
    return out, loc


def blending_coefficient(q, g: int, ids: np.ndarray, index: TileLists, boundary: BoundarySet, kcut: float = K_CUT):
    """Blending coefficient(s) for pixel(s) q = (x, y) and owner id(s) g.

    Returns ``(w, located_point)``; located_point is -1 when none covers q.
    """
    q = np.atleast_2d(np.asarray(q, dtype=np.int64))
    gs = np.broadcast_to(np.asarray(g, dtype=np.int64), (len(q),)).copy()
    w, loc = _coefficients_tiled(
        np.ascontiguousarray(q[:, 0]),
        np.ascontiguousarray(q[:, 1]),
        gs,
        ids,
        index.start,
        index.end,
        index.order,
        index.key,
        np.ascontiguousarray(boundary.xy, dtype=np.float64),
        np.ascontiguousarray(boundary.sigma, dtype=np.float64),
        index.tiles_x,
        kcut,
    )
    return w, loc


def blending_coefficient_brute(q, g, ids: np.ndarray, boundary: BoundarySet, kcut: float = K_CUT):
    """Reference scan over every boundary point (no tile index)."""
    q = np.atleast_2d(np.asarray(q, dtype=np.int64))
    gs = np.broadcast_to(np.asarray(g, dtype=np.int64), (len(q),)).copy()
    return _coefficients_brute(
        np.ascontiguousarray(q[:, 0]),
        np.ascontiguousarray(q[:, 1]),
        gs,
        ids,
        np.ascontiguousarray(boundary.owner, dtype=np.int64),
        np.ascontiguousarray(boundary.xy, dtype=np.float64),
        np.ascontiguousarray(boundary.sigma, dtype=np.float64),
        kcut,
    )


@numba.njit(cache=True)
def _pixel_forward(
    px, py, qid, gs, ge, glist, mean, conic, color, owner, opacity,
    blend, bs, be, blist, bkey, bxy, bsig, kcut,
    rec_idx, rec_alpha, rec_T, rec_w, rec_G, rec_k, rec_gm, rec_d,
):
    """Front-to-back blend of one pixel; fills the record arrays.

    Returns (n_records, r, g, b, T_final, n_visited); n_records is -1
    when the record arrays are too short.
    """
    T = 1.0
    cr = 0.0
    cg = 0.0
    cb = 0.0
    n = 0
    visited = 0
    cap = rec_idx.shape[0]
    # below this exponent o * exp(power) < 1/255 for sure, so exp is skipped
    log_cut = np.log(ALPHA_MIN / opacity) - 1e-9
    memo_g = -2
    memo_k = -1
    memo_gm = 1.0
    memo_d = 0.0
    for idx in range(gs, ge):
        gi = glist[idx]
        dx = px - mean[gi, 0]
        dy = py - mean[gi, 1]
        power = -0.5 * (conic[gi, 0] * dx * dx + conic[gi, 2] * dy * dy) - conic[gi, 1] * dx * dy
        if power > 0.0 or power < log_cut:
            continue
        G = np.exp(power)
        if opacity * G < ALPHA_MIN:
            continue
        g = owner[gi]
        k = -1
        gm = 1.0
        dist = 0.0
        if blend:
            if g != memo_g:
                memo_k, memo_gm, memo_d = _locate(px, py, g, bs, be, blist, bkey, bxy, bsig, kcut)
                memo_g = g
            k = memo_k
            gm = memo_gm
            dist = memo_d
            w = _weight(k, gm, g, qid)
        else:
            w = 1.0
        a = opacity * w * G
        if a > ALPHA_MAX:
            a = ALPHA_MAX
        if a < ALPHA_MIN:
            continue
        if n == cap:
            return -1, cr, cg, cb, T, visited
        rec_idx[n] = idx
        rec_alpha[n] = a
        rec_T[n] = T
        rec_w[n] = w
        rec_G[n] = G
        rec_k[n] = k
        rec_gm[n] = gm
        rec_d[n] = dist
        n += 1
        cr += T * a * color[gi, 0]
        cg += T * a * color[gi, 1]
        cb += T * a * color[gi, 2]
        T = T * (1.0 - a)
        visited = idx - gs + 1
        if T < T_MIN:
            break
    return n, cr, cg, cb, T, visited


@numba.njit(cache=True, parallel=True)
def _composite_kernel(
    width, height, tiles_x, gstart, gend, glist, mean, conic, color, owner, opacity, ids,
    blend, bstart, bend, blist, bkey, bxy, bsig, kcut, bg,
    img, tfinal, ncontrib,
):
    n_tiles = gstart.shape[0]
    for tile in prange(n_tiles):
        tx = tile % tiles_x
        ty = tile // tiles_x
        gs = gstart[tile]
        ge = gend[tile]
        cap = max(ge - gs, 1)
        rec_idx = np.empty(cap, dtype=np.int64)
        rec_alpha = np.empty(cap)
        rec_T = np.empty(cap)
        rec_w = np.empty(cap)
        rec_G = np.empty(cap)
        rec_k = np.empty(cap, dtype=np.int64)
        rec_gm = np.empty(cap)
        rec_d = np.empty(cap)
        for py_i in range(ty * 16, min(ty * 16 + 16, height)):
            for px_i in range(tx * 16, min(tx * 16 + 16, width)):
                n, cr, cg, cb, T, visited = _pixel_forward(
                    px_i + 0.5, py_i + 0.5, ids[py_i, px_i], gs, ge, glist, mean, conic, color, owner, opacity,
                    blend, bstart[tile], bend[tile], blist, bkey, bxy, bsig, kcut,
                    rec_idx, rec_alpha, rec_T, rec_w, rec_G, rec_k, rec_gm, rec_d,
                )
                img[py_i, px_i, 0] = cr + T * bg[0]
                img[py_i, px_i, 1] = cg + T * bg[1]
                img[py_i, px_i, 2] = cb + T * bg[2]
                tfinal[py_i, px_i] = T
                ncontrib[py_i, px_i] = n


@numba.njit(cache=True, parallel=True)
def _composite_records_kernel(
    width, height, tiles_x, gstart, gend, glist, mean, conic, color, owner, opacity, ids,
    blend, bstart, bend, blist, bkey, bxy, bsig, kcut, bg,
    img, tfinal, ncontrib, pix_start, tile_cap, overflow,
    rec_idx, rec_alpha, rec_T, rec_w, rec_G, rec_k, rec_gm, rec_d,
):
    """Like _composite_kernel but keeps every pixel's records for the backward pass.

    Tile t owns record slots [t * tile_cap, (t + 1) * tile_cap).
    """
    n_tiles = gstart.shape[0]
    for tile in prange(n_tiles):
        tx = tile % tiles_x
        ty = tile // tiles_x
        gs = gstart[tile]
        ge = gend[tile]
        cur = tile * tile_cap
        stop = cur + tile_cap
        for py_i in range(ty * 16, min(ty * 16 + 16, height)):
            for px_i in range(tx * 16, min(tx * 16 + 16, width)):
                n, cr, cg, cb, T, visited = _pixel_forward(
                    px_i + 0.5, py_i + 0.5, ids[py_i, px_i], gs, ge, glist, mean, conic, color, owner, opacity,
                    blend, bstart[tile], bend[tile], blist, bkey, bxy, bsig, kcut,
                    rec_idx[cur:stop], rec_alpha[cur:stop], rec_T[cur:stop], rec_w[cur:stop],
                    rec_G[cur:stop], rec_k[cur:stop], rec_gm[cur:stop], rec_d[cur:stop],
                )
                if n < 0:
                    overflow[tile] = 1
                    n = 0
                img[py_i, px_i, 0] = cr + T * bg[0]
                img[py_i, px_i, 1] = cg + T * bg[1]
                img[py_i, px_i, 2] = cb + T * bg[2]
                tfinal[py_i, px_i] = T
                ncontrib[py_i, px_i] = n
                pix_start[py_i, px_i] = cur
                cur += n


_record_hint = [32]


@dataclass
class Records:
    """Per-pixel contribution records; pixel (y, x) owns slots start[y, x] + [0, n)."""

    start: np.ndarray
    idx: np.ndarray
    alpha: np.ndarray
    T: np.ndarray
    w: np.ndarray
    G: np.ndarray
    k: np.ndarray
    gm: np.ndarray
    d: np.ndarray


@dataclass
class CompositeResult:
    image: np.ndarray
    T_final: np.ndarray
    n_contrib: np.ndarray
    records: Records | None = None


def _boundary_arrays(boundary: BoundarySet | None, index: TileLists | None, n_tiles: int):
    if boundary is None or index is None or len(boundary) == 0:
        z = np.zeros(n_tiles, dtype=np.int64)
        return z, z.copy(), np.zeros(0, dtype=np.int64), np.zeros(0, dtype=np.int64), np.zeros((0, 2)), np.zeros(0)
    return (
        index.start,
        index.end,
        index.order,
        index.key,
        np.ascontiguousarray(boundary.xy, dtype=np.float64),
        np.ascontiguousarray(boundary.sigma, dtype=np.float64),
    )


def composite(
    proj: ProjectedGaussians,
    gtiles: TileLists,
    ids: np.ndarray,
    boundary: BoundarySet | None,
    bindex: TileLists | None,
    background,
    opacity: float,
    blend: bool = True,
    keep_records: bool = False,
    records_per_pixel: int | None = None,
) -> CompositeResult:
    """Tile-based front-to-back compositing with blending coefficients."""
    H, W = ids.shape
    bs, be, bl, bk, bxy, bsig = _boundary_arrays(boundary, bindex, gtiles.n_tiles)
    args = (
        W, H, gtiles.tiles_x, gtiles.start, gtiles.end, gtiles.order,
        np.ascontiguousarray(proj.mean), np.ascontiguousarray(proj.conic), np.ascontiguousarray(proj.color),
        np.ascontiguousarray(proj.owner, dtype=np.int64), float(opacity), ids,
        bool(blend), bs, be, bl, bk, bxy, bsig, K_CUT, np.asarray(background, dtype=np.float64),
    )
    if not keep_records:
        img = np.zeros((H, W, 3))
        tfinal = np.ones((H, W))
        ncontrib = np.zeros((H, W), dtype=np.int64)
        _composite_kernel(*args, img, tfinal, ncontrib)
        return CompositeResult(image=img, T_final=tfinal, n_contrib=ncontrib)
    longest = int((gtiles.end - gtiles.start).max(initial=0))
    if records_per_pixel is None:
        records_per_pixel = _record_hint[0]
    per_pixel = max(1, min(records_per_pixel, longest))
    while True:
        tile_cap = TILE * TILE * per_pixel
        img = np.zeros((H, W, 3))
        tfinal = np.ones((H, W))
        ncontrib = np.zeros((H, W), dtype=np.int64)
        start = np.zeros((H, W), dtype=np.int64)
        overflow = np.zeros(gtiles.n_tiles, dtype=np.int64)
        size = gtiles.n_tiles * tile_cap
        rec = Records(
            start, np.empty(size, np.int64), np.empty(size), np.empty(size), np.empty(size),
            np.empty(size), np.empty(size, np.int64), np.empty(size), np.empty(size),
        )
        _composite_records_kernel(
            *args, img, tfinal, ncontrib, start, tile_cap, overflow,
            rec.idx, rec.alpha, rec.T, rec.w, rec.G, rec.k, rec.gm, rec.d,
        )
        if not overflow.any():
            # size hint for the next call; only affects buffer layout, never values
            tile_tot = np.zeros(gtiles.n_tiles, dtype=np.int64)
            ys, xs = np.indices((H, W))
            np.add.at(tile_tot, (ys // TILE) * gtiles.tiles_x + xs // TILE, ncontrib)
            _record_hint[0] = max(8, int(np.ceil(1.25 * tile_tot.max(initial=0) / (TILE * TILE))))
            return CompositeResult(image=img, T_final=tfinal, n_contrib=ncontrib, records=rec)
        per_pixel = min(per_pixel * 2, max(longest, 1))


def pixel_records(
    px: int, py: int, proj: ProjectedGaussians, gtiles: TileLists, ids: np.ndarray,
    boundary: BoundarySet | None, bindex: TileLists | None, opacity: float, blend: bool = True,
) -> dict[str, np.ndarray]:
    """Contribution records of one pixel, in blend order (for inspection and tests)."""
    tile = (py // TILE) * gtiles.tiles_x + px // TILE
    gs, ge = gtiles.start[tile], gtiles.end[tile]
    cap = max(ge - gs, 1)
    recs = [np.empty(cap, dtype=np.int64), np.empty(cap), np.empty(cap), np.empty(cap), np.empty(cap),
            np.empty(cap, dtype=np.int64), np.empty(cap), np.empty(cap)]
    bs, be, bl, bk, bxy, bsig = _boundary_arrays(boundary, bindex, gtiles.n_tiles)
    n, *_ = _pixel_forward(
        px + 0.5, py + 0.5, ids[py, px], gs, ge, gtiles.order,
        np.ascontiguousarray(proj.mean), np.ascontiguousarray(proj.conic), np.ascontiguousarray(proj.color),
        np.ascontiguousarray(proj.owner, dtype=np.int64), float(opacity), bool(blend),
        bs[tile], be[tile], bl, bk, bxy, bsig, K_CUT, *recs,
    )
    names = ("slot", "alpha", "T", "w", "G", "bslot", "gamma", "dist")
    out = {k: v[:n] for k, v in zip(names, recs)}
    out["gaussian"] = gtiles.order[out["slot"]]
    point = np.full(n, -1, dtype=np.int64)
    hit = out["bslot"] >= 0
    point[hit] = bl[out["bslot"][hit]]
    out["point"] = point
    return out


def composite_direct(alphas, colors, background) -> tuple[np.ndarray, np.ndarray, float]:
    """Direct evaluation of sum_i T_i a_i c_i + T_n c_bg for one pixel."""
    alphas = np.asarray(alphas, dtype=np.float64)
    colors = np.asarray(colors, dtype=np.float64).reshape(-1, 3)
    Ts = np.array([np.prod(1.0 - alphas[:i]) for i in range(len(alphas))])
    Tn = float(np.prod(1.0 - alphas))
    C = (Ts[:, None] * alphas[:, None] * colors).sum(0) + Tn * np.asarray(background, dtype=np.float64)
    return C, Ts, Tn
