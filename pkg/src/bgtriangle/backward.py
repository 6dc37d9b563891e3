"""Analytic gradients of the photometric loss and a finite-difference harness."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from math import log

import numba
import numpy as np
from numba import prange

from .camera import Camera, look_at
from .render import RenderResult, render
from .scene import Scene, default_maps, flat_net
from .splat import ALPHA_MAX, _boundary_arrays, composite
from .subprim import SH_BASIS, sh_basis, sh_basis_grad

LN2 = log(2.0)


class GradientError(FloatingPointError):
    pass


@dataclass
class GradientBuffers:
    ctrl: np.ndarray
    color: np.ndarray
    rotation: np.ndarray
    scaling: np.ndarray
    sh: np.ndarray

    @classmethod
    def zeros_like(cls, scene: Scene) -> "GradientBuffers":
        return cls(*(np.zeros_like(getattr(scene, k)) for k in Scene.PARAM_GROUPS))

    def as_dict(self) -> dict[str, np.ndarray]:
        return {k: getattr(self, k) for k in Scene.PARAM_GROUPS}

    def position_norm(self) -> np.ndarray:
        """Mean L2 norm over each primitive's control-point gradients."""
        return np.linalg.norm(self.ctrl, axis=-1).mean(-1)

    def check_finite(self) -> None:
        for k, v in self.as_dict().items():
            if not np.all(np.isfinite(v)):
                raise GradientError(f"non-finite gradient in group '{k}'")


# ---------------------------------------------------------------------------
# per-pixel reference formulas


def backward_composite(alphas, colors, background, dL_dC):
    """Gradients of one pixel's composite w.r.t. each color and alpha.

    Returns (dL/dc (n, 3), dL/dalpha (n,)). Back-to-front with a running
    suffix sum of the later terms plus the background term.
    """
    alphas = np.asarray(alphas, dtype=np.float64)
    colors = np.asarray(colors, dtype=np.float64).reshape(-1, 3)
    dL_dC = np.asarray(dL_dC, dtype=np.float64)
    n = len(alphas)
    T = np.ones(n)
    for i in range(1, n):
        T[i] = T[i - 1] * (1.0 - alphas[i - 1])
    Tn = T[-1] * (1.0 - alphas[-1]) if n else 1.0
    suffix = Tn * np.asarray(background, dtype=np.float64)
    dc = np.zeros((n, 3))
    da = np.zeros(n)
    for i in range(n - 1, -1, -1):
        dc[i] = dL_dC * T[i] * alphas[i]
        da[i] = float(dL_dC @ (T[i] * colors[i] - suffix / (1.0 - alphas[i])))
        suffix = suffix + T[i] * alphas[i] * colors[i]
    return dc, da


def gamma_prime(d, sigma):
    """Derivative of min(2^(d/sigma - 1), 1) in d; zero in the clamped region."""
    d = np.asarray(d, dtype=np.float64)
    g = np.minimum(2.0 ** (d / sigma - 1.0), 1.0)
    return np.where(d < sigma, LN2 / sigma * g, 0.0)


def backward_blending(dL_dalpha, alpha, w):
    """dL/dw from dL/dalpha for alpha = o * w * G; zero where w == 0."""
    dL_dalpha = np.asarray(dL_dalpha, dtype=np.float64)
    alpha = np.asarray(alpha, dtype=np.float64)
    w = np.asarray(w, dtype=np.float64)
    safe = np.where(w > 0, w, 1.0)
    return np.where(w > 0, dL_dalpha * alpha / safe, 0.0)


def backward_boundary(dL_dw, q, b, sigma, own_side):
    """dL/db for located boundary points.

    ``own_side`` is True where the pixel belongs to the Gaussian's own
    primitive (w = gamma), False on the far side (w = 1 - gamma).
    Returns (n, 2); zero for d >= sigma and for d == 0.
    """
    q = np.atleast_2d(np.asarray(q, dtype=np.float64))
    b = np.atleast_2d(np.asarray(b, dtype=np.float64))
    diff = q - b
    d = np.linalg.norm(diff, axis=1)
    sign = np.where(own_side, 1.0, -1.0)
    gp = gamma_prime(d, sigma)
    unit = np.where(d[:, None] > 0, diff / np.where(d > 0, d, 1.0)[:, None], 0.0)
    # dd/db = -(q - b)/|q - b|
    return -(np.asarray(dL_dw) * sign * gp)[:, None] * unit


# ---------------------------------------------------------------------------
# tile backward kernel


@numba.njit(cache=True, parallel=True)
def _backward_kernel(
    width, height, tiles_x, n_tiles, glist, mean, color, conic, owner, opacity, ids,
    blend, blist, bxy, bsig, bg, dLdC, tfinal, ncontrib, start,
    rec_idx, rec_alpha, rec_T, rec_w, rec_G, rec_k, rec_gm, rec_d,
    g_mean, g_conic, g_color, g_bxy, g_bsig,
):
    # every tile list slot belongs to exactly one tile, so tiles never
    # write to the same slot and the result is thread-count independent
    for tile in prange(n_tiles):
        tx = tile % tiles_x
        ty = tile // tiles_x
        for py_i in range(ty * 16, min(ty * 16 + 16, height)):
            for px_i in range(tx * 16, min(tx * 16 + 16, width)):
                d0 = dLdC[py_i, px_i, 0]
                d1 = dLdC[py_i, px_i, 1]
                d2 = dLdC[py_i, px_i, 2]
                if d0 == 0.0 and d1 == 0.0 and d2 == 0.0:
                    continue
                px = px_i + 0.5
                py = py_i + 0.5
                qid = ids[py_i, px_i]
                T = tfinal[py_i, px_i]
                s0 = T * bg[0]
                s1 = T * bg[1]
                s2 = T * bg[2]
                base = start[py_i, px_i]
                for r in range(base + ncontrib[py_i, px_i] - 1, base - 1, -1):
                    idx = rec_idx[r]
                    gi = glist[idx]
                    a = rec_alpha[r]
                    Ti = rec_T[r]
                    c0 = color[gi, 0]
                    c1 = color[gi, 1]
                    c2 = color[gi, 2]
                    ta = Ti * a
                    g_color[idx, 0] += d0 * ta
                    g_color[idx, 1] += d1 * ta
                    g_color[idx, 2] += d2 * ta
                    inv = 1.0 / (1.0 - a)
                    da = d0 * (Ti * c0 - s0 * inv) + d1 * (Ti * c1 - s1 * inv) + d2 * (Ti * c2 - s2 * inv)
                    s0 += ta * c0
                    s1 += ta * c1
                    s2 += ta * c2
                    w = rec_w[r]
                    G = rec_G[r]
                    if opacity * w * G > ALPHA_MAX:
                        continue
                    dG = da * opacity * w
                    dw = da * opacity * G
                    dx = px - mean[gi, 0]
                    dy = py - mean[gi, 1]
                    dpow = dG * G
                    g_mean[idx, 0] += dpow * (conic[gi, 0] * dx + conic[gi, 1] * dy)
                    g_mean[idx, 1] += dpow * (conic[gi, 1] * dx + conic[gi, 2] * dy)
                    g_conic[idx, 0] += -0.5 * dpow * dx * dx
                    g_conic[idx, 1] += -dpow * dx * dy
                    g_conic[idx, 2] += -0.5 * dpow * dy * dy
                    k = rec_k[r]
                    if blend and k >= 0:
                        gm = rec_gm[r]
                        dist = rec_d[r]
                        if gm < 1.0 and dist > 0.0:
                            p = blist[k]
                            sg = bsig[p]
                            sign = 1.0 if qid == owner[gi] else -1.0
                            dgm = dw * sign
                            dd = dgm * LN2 / sg * gm
                            qbx = px - bxy[p, 0]
                            qby = py - bxy[p, 1]
                            g_bxy[k, 0] += -dd * qbx / dist
                            g_bxy[k, 1] += -dd * qby / dist
                            g_bsig[k] += dgm * (-LN2 * dist / (sg * sg) * gm)


@dataclass
class ScreenGradients:
    mean: np.ndarray  # per Gaussian
    conic: np.ndarray
    color: np.ndarray
    boundary_xy: np.ndarray  # per boundary point
    boundary_sigma: np.ndarray


def backward_screen(result: RenderResult, dL_dC: np.ndarray, opacity: float, background) -> ScreenGradients:
    """Gradients w.r.t. projected Gaussian and boundary-point parameters."""
    proj, gt = result.proj, result.gtiles
    H, W = result.buffers.ids.shape
    L = len(gt.order)
    g_mean = np.zeros((L, 2))
    g_conic = np.zeros((L, 3))
    g_color = np.zeros((L, 3))
    bs, be, bl, bk, bxy, bsig = _boundary_arrays(result.boundary, result.bindex, gt.n_tiles)
    g_bxy = np.zeros((len(bl), 2))
    g_bsig = np.zeros(len(bl))
    comp = result.comp
    rec = comp.records
    if rec is None:
        comp = composite(
            proj, gt, result.buffers.ids, result.boundary, result.bindex, background, opacity, result.blend,
            keep_records=True,
        )
        rec = comp.records
    _backward_kernel(
        W, H, gt.tiles_x, gt.n_tiles, gt.order,
        np.ascontiguousarray(proj.mean), np.ascontiguousarray(proj.color), np.ascontiguousarray(proj.conic),
        np.ascontiguousarray(proj.owner, dtype=np.int64), float(opacity), result.buffers.ids,
        bool(result.blend), bl, bxy, bsig, np.asarray(background, dtype=np.float64),
        np.ascontiguousarray(dL_dC, dtype=np.float64), comp.T_final, comp.n_contrib, rec.start,
        rec.idx, rec.alpha, rec.T, rec.w, rec.G, rec.k, rec.gm, rec.d,
        g_mean, g_conic, g_color, g_bxy, g_bsig,
    )
    N = len(proj)
    out_mean = np.zeros((N, 2))
    out_conic = np.zeros((N, 3))
    out_color = np.zeros((N, 3))
    # fixed slot order, independent of thread scheduling
    np.add.at(out_mean, gt.order, g_mean)
    np.add.at(out_conic, gt.order, g_conic)
    np.add.at(out_color, gt.order, g_color)
    M = len(result.boundary) if result.boundary is not None else 0
    out_bxy = np.zeros((M, 2))
    out_bsig = np.zeros(M)
    if len(bl):
        np.add.at(out_bxy, bl, g_bxy)
        np.add.at(out_bsig, bl, g_bsig)
    return ScreenGradients(out_mean, out_conic, out_color, out_bxy, out_bsig)


# ---------------------------------------------------------------------------
# chain rule back to scene parameters


def _quat_matrix_backward(q: np.ndarray, G: np.ndarray) -> np.ndarray:
    r, x, y, z = q[:, 0], q[:, 1], q[:, 2], q[:, 3]
    g = lambda i, j: G[:, i, j]  # noqa: E731
    gr = 2 * (-z * g(0, 1) + y * g(0, 2) + z * g(1, 0) - x * g(1, 2) - y * g(2, 0) + x * g(2, 1))
    gx = 2 * (y * g(0, 1) + z * g(0, 2) + y * g(1, 0) - 2 * x * g(1, 1) - r * g(1, 2) + z * g(2, 0) + r * g(2, 1) - 2 * x * g(2, 2))
    gy = 2 * (-2 * y * g(0, 0) + x * g(0, 1) + r * g(0, 2) + x * g(1, 0) + z * g(1, 2) - r * g(2, 0) + z * g(2, 1) - 2 * y * g(2, 2))
    gz = 2 * (-2 * z * g(0, 0) - r * g(0, 1) + x * g(0, 2) + r * g(1, 0) - 2 * z * g(1, 1) + y * g(1, 2) + x * g(2, 0) + y * g(2, 1))
    return np.stack([gr, gx, gy, gz], axis=1)


def _frame_backward(sv, sw, frame, gF):
    """Backprop through e1 = sv/|sv|, n = (sv x sw)/|.|, e2 = n x e1."""
    e1, e2, n = frame[:, :, 0], frame[:, :, 1], frame[:, :, 2]
    ge1 = gF[:, :, 0].copy()
    ge2 = gF[:, :, 1]
    gn = gF[:, :, 2].copy()
    gn += np.cross(e1, ge2)
    ge1 += np.cross(ge2, n)
    m = np.cross(sv, sw)
    m_len = np.maximum(np.linalg.norm(m, axis=1, keepdims=True), 1e-12)
    gm = (gn - n * np.sum(n * gn, axis=1, keepdims=True)) / m_len
    g_sv = np.cross(sw, gm)
    g_sw = np.cross(gm, sv)
    a_len = np.maximum(np.linalg.norm(sv, axis=1, keepdims=True), 1e-12)
    g_sv += (ge1 - e1 * np.sum(e1 * ge1, axis=1, keepdims=True)) / a_len
    return g_sv, g_sw


def _point_projection_backward(cam: Camera, t: np.ndarray, g_xy: np.ndarray, g_z: np.ndarray) -> np.ndarray:
    """World-space gradient from d/d(pixel xy) and d/d(camera depth)."""
    x, y, z = t[:, 0], t[:, 1], t[:, 2]
    gt = np.stack(
        [
            g_xy[:, 0] * cam.fx / z,
            g_xy[:, 1] * cam.fy / z,
            -g_xy[:, 0] * cam.fx * x / z**2 - g_xy[:, 1] * cam.fy * y / z**2 + g_z,
        ],
        axis=1,
    )
    return gt @ cam.R


def backward_to_params(result: RenderResult, scene: Scene, cam: Camera, sg: ScreenGradients) -> GradientBuffers:
    """Chain screen-space gradients back to every learnable parameter."""
    subs, proj = result.subs, result.proj
    grads = GradientBuffers.zeros_like(scene)
    N = len(subs)
    if N:
        valid = proj.valid
        rows = subs.row

        # color: final clamp, then diffuse clamp and SH residual
        g_pre = np.where((proj.color_pre > 0.0) & (proj.color_pre < 1.0), sg.color, 0.0)
        g_raw = np.where((subs.color_raw >= 0.0) & (subs.color_raw <= 1.0), g_pre, 0.0)
        np.add.at(grads.color, rows, subs.basis[:, :, None] * g_raw[:, None, :])
        Y = sh_basis(proj.view_dir)
        g_sh = Y[:, :, None] * g_pre[:, None, :]
        np.add.at(grads.sh, (rows, 0), g_sh.reshape(N, SH_BASIS * 3))
        g_dir = np.einsum("nbk,nb->nk", sh_basis_grad(proj.view_dir), np.einsum("nbc,nc->nb", subs.sh, g_pre))
        d = proj.view_dir
        g_pos = (g_dir - d * np.sum(d * g_dir, axis=1, keepdims=True)) / proj.view_len[:, None]

        # conic -> 2D covariance
        ca, cb, cc = proj.conic[:, 0], proj.conic[:, 1], proj.conic[:, 2]
        K = np.stack([np.stack([ca, cb], -1), np.stack([cb, cc], -1)], -2)
        gK = np.stack(
            [np.stack([sg.conic[:, 0], 0.5 * sg.conic[:, 1]], -1), np.stack([0.5 * sg.conic[:, 1], sg.conic[:, 2]], -1)], -2
        )
        g_cov2 = -K @ gK @ K
        J = proj.J
        Jt = np.swapaxes(J, 1, 2)
        g_covc = Jt @ g_cov2 @ J
        g_J = 2.0 * g_cov2 @ J @ proj.cov_cam
        g_cov3 = cam.R.T @ g_covc @ cam.R
        g_M = 2.0 * g_cov3 @ proj.M
        g_rot = g_M * subs.scale[:, None, :]
        g_scale = np.sum(g_M * subs.rotation, axis=1)
        g_s12 = g_scale[:, :2] + 0.5e-4 * g_scale[:, 2:3]
        g_log = g_s12 * subs.scale[:, :2]
        np.add.at(grads.scaling, (rows[:, None], subs.scl_slots), subs.scl_wts[:, :, None] * g_log[:, None, :])

        from .scene import quat_to_matrix

        Rq = quat_to_matrix(subs.quat)
        g_frame = g_rot @ np.swapaxes(Rq, 1, 2)
        g_Rq = np.swapaxes(subs.frame, 1, 2) @ g_rot
        g_qn = _quat_matrix_backward(subs.quat, g_Rq)
        qn = subs.quat
        q_len = np.maximum(np.linalg.norm(subs.quat_raw, axis=1, keepdims=True), 1e-12)
        g_q = (g_qn - qn * np.sum(qn * g_qn, axis=1, keepdims=True)) / q_len
        np.add.at(grads.rotation, (rows[:, None], subs.rot_slots), subs.rot_wts[:, :, None] * g_q[:, None, :])

        g_sv, g_sw = _frame_backward(subs.sv, subs.sw, subs.frame, g_frame)

        # mean and Jacobian -> camera-space position
        t = proj.t_cam
        x, y = t[:, 0], t[:, 1]
        z = np.where(valid, t[:, 2], 1.0)
        gJ00, gJ02, gJ11, gJ12 = g_J[:, 0, 0], g_J[:, 0, 2], g_J[:, 1, 1], g_J[:, 1, 2]
        g_z_extra = (
            -gJ00 * cam.fx / z**2
            + gJ02 * 2.0 * cam.fx * x / z**3
            - gJ11 * cam.fy / z**2
            + gJ12 * 2.0 * cam.fy * y / z**3
        )
        gt_J = np.stack([-gJ02 * cam.fx / z**2, -gJ12 * cam.fy / z**2, g_z_extra], axis=1)
        tt = np.where(valid[:, None], t, np.array([0.0, 0.0, 1.0]))
        g_pos = g_pos + _point_projection_backward(cam, tt, sg.mean, np.zeros(N)) + gt_J @ cam.R
        g_pos = np.where(valid[:, None], g_pos, 0.0)
        g_sv = np.where(valid[:, None], g_sv, 0.0)
        g_sw = np.where(valid[:, None], g_sw, 0.0)

        contrib = (
            subs.basis[:, :, None] * g_pos[:, None, :]
            + subs.dbv[:, :, None] * g_sv[:, None, :]
            + subs.dbw[:, :, None] * g_sw[:, None, :]
        )
        np.add.at(grads.ctrl, rows, contrib)

    b = result.boundary
    if b is not None and len(b):
        t_b = cam.to_camera(b.point)
        g_z = sg.boundary_sigma * (-scene.r_b * cam.fx / t_b[:, 2] ** 2)
        g_pt = _point_projection_backward(cam, t_b, sg.boundary_xy, g_z)
        from .bezier import bernstein_basis

        np.add.at(grads.ctrl, b.row, bernstein_basis(b.bc)[:, :, None] * g_pt[:, None, :])
    grads.check_finite()
    return grads


def backward(result: RenderResult, scene: Scene, cam: Camera, dL_dC: np.ndarray) -> GradientBuffers:
    sg = backward_screen(result, dL_dC, scene.opacity, scene.background)
    return backward_to_params(result, scene, cam, sg)


def backward_to_control_points(dL_dS, dL_dc, bc, rows, n_prims, dL_dB=None, boundary_bc=None, boundary_rows=None):
    """Bernstein scatter of per-pixel position/color gradients onto control points.

    Standalone form of the scatter used inside :func:`backward_to_params`.
    """
    from .bezier import bernstein_basis

    g_ctrl = np.zeros((n_prims, 6, 3))
    g_col = np.zeros((n_prims, 6, 3))
    B = bernstein_basis(np.asarray(bc, dtype=np.float64))
    np.add.at(g_ctrl, rows, B[:, :, None] * np.asarray(dL_dS)[:, None, :])
    np.add.at(g_col, rows, B[:, :, None] * np.asarray(dL_dc)[:, None, :])
    if dL_dB is not None and len(dL_dB):
        Bb = bernstein_basis(np.asarray(boundary_bc, dtype=np.float64))
        np.add.at(g_ctrl, boundary_rows, Bb[:, :, None] * np.asarray(dL_dB)[:, None, :])
    return g_ctrl, g_col


# ---------------------------------------------------------------------------
# finite differences


def structure_signature(result: RenderResult):
    """Fingerprint of every discrete decision in a render.

    Two renders with equal signatures differ only through smooth terms,
    so central differences between them are meaningful. Also returns the
    located boundary point and distance of every record with gamma < 1,
    needed to detect the d = 0 cone which no discrete flag captures.
    """
    from .splat import pixel_records

    proj = result.proj
    parts = [
        result.gtiles.order.tobytes(),
        result.gtiles.start.tobytes(),
        ((proj.color_pre > 0) & (proj.color_pre < 1)).tobytes(),
        ((result.subs.color_raw >= 0) & (result.subs.color_raw <= 1)).tobytes(),
    ]
    if result.bindex is not None:
        parts.append(result.bindex.order.tobytes())
    pts, dist = [], []
    H, W = result.buffers.ids.shape
    for py in range(H):
        for px in range(W):
            rec = pixel_records(
                px, py, proj, result.gtiles, result.buffers.ids, result.boundary, result.bindex,
                result.opacity, result.blend,
            )
            soft = rec["gamma"] < 1.0
            parts.append(rec["gaussian"].tobytes())
            parts.append(rec["point"].tobytes())
            parts.append(soft.tobytes())
            pts.append(rec["point"][soft])
            dist.append(rec["dist"][soft])
    located = (np.concatenate(pts), np.concatenate(dist)) if pts else (np.zeros(0, np.int64), np.zeros(0))
    return b"".join(parts), located


def near_nonsmooth(base: RenderResult, base_sig, probe: RenderResult) -> bool:
    """True if ``probe`` crosses a discrete event or a located point sweeps over its pixel."""
    sig, _ = structure_signature(probe)
    if sig != base_sig[0]:
        return True
    pts, d0 = base_sig[1]
    if len(pts) == 0:
        return False
    disp = np.linalg.norm(probe.boundary.xy[pts] - base.boundary.xy[pts], axis=1)
    return bool(np.any(d0 <= disp))


@dataclass
class FDRow:
    group: str
    index: tuple
    analytic: float
    numeric: float
    rel_error: float
    excluded: bool


def finite_difference_check(
    scene: Scene,
    cam: Camera,
    target: np.ndarray,
    selectors,
    eps: float = 1e-4,
    freeze_raster: bool = True,
    loss_fn=None,
    blend: bool = True,
    smooth_margin: float = 10.0,
) -> list[FDRow]:
    """Central differences of the scalar loss for selected parameters.

    ``selectors`` is an iterable of (group, index-tuple). With
    ``freeze_raster`` the coordinate/index maps and boundary pixel set of
    the unperturbed render are reused for every perturbed render.
    """
    from .train import photometric_loss

    if loss_fn is None:
        loss_fn = photometric_loss
    base = render(scene, cam, blend=blend)
    L0, dC = loss_fn(base.image, target)
    grads = backward(base, scene, cam, dC).as_dict()
    frozen = base if freeze_raster else None
    base_sig = structure_signature(base)

    rows = []
    for group, index in selectors:
        index = tuple(index)
        arr = getattr(scene, group)
        orig = arr[index]

        def at(delta):
            arr[index] = orig + delta
            try:
                return render(scene, cam, blend=blend, frozen=frozen)
            finally:
                arr[index] = orig

        rp, rm = at(eps), at(-eps)
        num = (loss_fn(rp.image, target)[0] - loss_fn(rm.image, target)[0]) / (2 * eps)
        excluded = any(near_nonsmooth(base, base_sig, at(d)) for d in (smooth_margin * eps, -smooth_margin * eps))
        ana = float(grads[group][index])
        rel = abs(ana - num) / max(abs(ana), abs(num), 1e-8)
        rows.append(FDRow(group, index, ana, float(num), rel, excluded))
    return rows


def write_fd_report(rows: list[FDRow], path) -> None:
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(["parameter", "analytic", "numeric", "rel_error", "excluded"])
        for r in rows:
            name = f"{r.group}[{','.join(str(i) for i in r.index)}]"
            wr.writerow([name, repr(r.analytic), repr(r.numeric), repr(r.rel_error), int(r.excluded)])


def gradcheck_scene(seed: int = 0, size: int = 16) -> tuple[Scene, Camera]:
    """Three perturbed, overlapping primitives filling a small view."""
    rng = np.random.default_rng(seed)
    nets = []
    for _ in range(3):
        c = rng.uniform(-0.4, 0.4, 3)
        a, b, d = (c + rng.normal(0, 0.6, 3) for _ in range(3))
        nets.append(flat_net(a, b, d) + rng.normal(0, 0.08, (6, 3)))
    m = default_maps(3, 0.5)
    m["rotation"] += rng.normal(0, 0.2, m["rotation"].shape)
    m["scaling"] += rng.normal(0, 0.3, m["scaling"].shape)
    m["sh"] += rng.normal(0, 0.1, m["sh"].shape)
    scene = Scene(
        ids=np.arange(3), ctrl=np.array(nets), color=rng.uniform(0.15, 0.85, (3, 6, 3)),
        background=np.array([0.1, 0.2, 0.3]), r_b=0.15, **m,
    )
    cam = look_at([0.5, -3.5, 2.0], fov_x=0.8, width=size, height=size)
    return scene, cam


def random_selectors(scene: Scene, per_group: int, rng: np.random.Generator) -> list[tuple[str, tuple]]:
    out = []
    for g in Scene.PARAM_GROUPS:
        shape = getattr(scene, g).shape
        for _ in range(per_group):
            out.append((g, tuple(int(rng.integers(0, d)) for d in shape)))
    return out


def fd_passes(row: FDRow, rtol: float = 2e-3, atol: float = 1e-8) -> bool:
    return abs(row.analytic - row.numeric) <= max(rtol * max(abs(row.analytic), abs(row.numeric)), atol)
