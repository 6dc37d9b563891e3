"""Per-pixel Gaussian sub-primitives generated from rasterized BG-Triangles."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .bezier import bernstein_basis, surface_partials
from .camera import Camera
from .raster import RasterBuffers
from .scene import MAP_LAYOUT, SH_BASIS, Scene, quat_to_matrix

SH_C1 = 0.4886025119029199
SH_C2 = (
    1.0925484305920792,
    -1.0925484305920792,
    0.31539156525252005,
    -1.0925484305920792,
    0.5462742152960396,
)
THIN_AXIS = 1e-4
_EPS = 1e-12


def sh_basis(d: np.ndarray) -> np.ndarray:
    """Real SH bands 1-2 at unit directions d (..., 3) -> (..., 8)."""
    x, y, z = d[..., 0], d[..., 1], d[..., 2]
    return np.stack(
        [
            -SH_C1 * y,
            SH_C1 * z,
            -SH_C1 * x,
            SH_C2[0] * x * y,
            SH_C2[1] * y * z,
            SH_C2[2] * (2.0 * z * z - x * x - y * y),
            SH_C2[3] * x * z,
            SH_C2[4] * (x * x - y * y),
        ],
        axis=-1,
    )


def sh_basis_grad(d: np.ndarray) -> np.ndarray:
    """d(basis)/d(direction): (..., 8, 3)."""
    x, y, z = d[..., 0], d[..., 1], d[..., 2]
    zero = np.zeros_like(x)
    c1 = np.full_like(x, SH_C1)
    rows = [
        (zero, -c1, zero),
        (zero, zero, c1),
        (-c1, zero, zero),
        (SH_C2[0] * y, SH_C2[0] * x, zero),
        (zero, SH_C2[1] * z, SH_C2[1] * y),
        (-2.0 * SH_C2[2] * x, -2.0 * SH_C2[2] * y, 4.0 * SH_C2[2] * z),
        (SH_C2[3] * z, zero, SH_C2[3] * x),
        (2.0 * SH_C2[4] * x, -2.0 * SH_C2[4] * y, zero),
    ]
    return np.stack([np.stack(r, axis=-1) for r in rows], axis=-2)


def eval_sh_residual(coeffs, view_dir) -> np.ndarray:
    """View-dependent RGB residual; coeffs (..., 8, 3), view_dir (..., 3)."""
    view_dir = np.asarray(view_dir, dtype=np.float64)
    norm = np.linalg.norm(view_dir, axis=-1)
    if np.any(np.abs(norm - 1.0) > 1e-9):
        raise ValueError("view direction must be a unit vector")
    return np.einsum("...b,...bc->...c", sh_basis(view_dir), np.asarray(coeffs, dtype=np.float64))


@dataclass
class SubPrimitives:
    """Struct-of-arrays for all sub-primitives of one view, row-major pixel order."""

    pixel: np.ndarray  # (N, 2) (x, y)
    row: np.ndarray  # scene row of the owner
    owner: np.ndarray  # primitive id
    bc: np.ndarray
    basis: np.ndarray  # (N, 6) Bernstein weights at bc
    position: np.ndarray  # (N, 3)
    sv: np.ndarray  # dS/dv
    sw: np.ndarray  # dS/dw
    dbv: np.ndarray  # (N, 6) basis partials along v
    dbw: np.ndarray
    frame: np.ndarray  # (N, 3, 3) tangent frame, columns e1, e2, n
    quat_raw: np.ndarray  # (N, 4) interpolated before normalization
    quat: np.ndarray
    rotation: np.ndarray  # (N, 3, 3) frame @ R(quat)
    log_scale: np.ndarray  # (N, 2)
    scale: np.ndarray  # (N, 3)
    color_raw: np.ndarray  # unclamped Bernstein color
    color: np.ndarray  # diffuse, clamped
    sh: np.ndarray  # (N, 8, 3)
    depth: np.ndarray
    rot_slots: np.ndarray
    rot_wts: np.ndarray
    scl_slots: np.ndarray
    scl_wts: np.ndarray

    def __len__(self) -> int:
        return len(self.owner)


def tangent_frame(sv: np.ndarray, sw: np.ndarray) -> np.ndarray:
    a_len = np.maximum(np.linalg.norm(sv, axis=-1, keepdims=True), _EPS)
    e1 = sv / a_len
    m = np.cross(sv, sw)
    m_len = np.maximum(np.linalg.norm(m, axis=-1, keepdims=True), _EPS)
    n = m / m_len
    e2 = np.cross(n, e1)
    return np.stack([e1, e2, n], axis=-1)


def generate(buffers: RasterBuffers, scene: Scene, cam: Camera) -> SubPrimitives:
    fg = buffers.rows >= 0
    ys, xs = np.nonzero(fg)
    rows = buffers.rows[ys, xs]
    bc = buffers.uv[ys, xs]
    nets = scene.ctrl[rows]
    basis = bernstein_basis(bc)
    pos = np.einsum("nm,nmc->nc", basis, nets)
    sv, sw, dbv, dbw = surface_partials(nets, bc)
    frame = tangent_frame(sv, sw)

    rot_slots, rot_wts = MAP_LAYOUT["rotation"].weights(bc)
    scl_slots, scl_wts = MAP_LAYOUT["scaling"].weights(bc)
    rot_tex = scene.rotation[rows[:, None], rot_slots]  # (N, 4, 4)
    quat_raw = np.einsum("nt,ntc->nc", rot_wts, rot_tex)
    quat = quat_raw / np.maximum(np.linalg.norm(quat_raw, axis=-1, keepdims=True), _EPS)
    rotation = frame @ quat_to_matrix(quat)
    log_scale = np.einsum("nt,ntc->nc", scl_wts, scene.scaling[rows[:, None], scl_slots])
    s12 = np.exp(log_scale)
    scale = np.concatenate([s12, THIN_AXIS * s12.mean(-1, keepdims=True)], axis=-1)

    color_raw = np.einsum("nm,nmc->nc", basis, scene.color[rows])
    sh = scene.sh[rows, 0].reshape(-1, SH_BASIS, 3)
    depth = cam.to_camera(pos)[:, 2]
    return SubPrimitives(
        pixel=np.stack([xs, ys], axis=1).astype(np.int64),
        row=rows,
        owner=buffers.ids[ys, xs],
        bc=bc,
        basis=basis,
        position=pos,
        sv=sv,
        sw=sw,
        dbv=dbv,
        dbw=dbw,
        frame=frame,
        quat_raw=quat_raw,
        quat=quat,
        rotation=rotation,
        log_scale=log_scale,
        scale=scale,
        color_raw=color_raw,
        color=np.clip(color_raw, 0.0, 1.0),
        sh=sh,
        depth=depth,
        rot_slots=rot_slots,
        rot_wts=rot_wts,
        scl_slots=scl_slots,
        scl_wts=scl_wts,
    )
