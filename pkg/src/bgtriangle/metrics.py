"""Image and geometry metrics: PSNR, SSIM, Chamfer, edge sharpness."""

from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy import ndimage
from scipy.spatial import cKDTree

WIN = 11
WIN_SIGMA = 1.5
C1 = 0.01**2
C2 = 0.03**2
BRUTE_LIMIT = 10_000


def _check_pair(a, b):
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"image shapes differ: {a.shape} vs {b.shape}")
    return a, b


def psnr(a, b) -> float:
    a, b = _check_pair(a, b)
    mse = float(np.mean((a - b) ** 2))
    if mse == 0.0:
        return float("inf")
    return 10.0 * np.log10(1.0 / mse)


def gaussian_window(size: int = WIN, sigma: float = WIN_SIGMA) -> np.ndarray:
    x = np.arange(size) - (size - 1) / 2.0
    g = np.exp(-(x**2) / (2 * sigma**2))
    return g / g.sum()


def _filter_valid(x: np.ndarray, g: np.ndarray) -> np.ndarray:
    """Separable valid-mode filtering of (H, W, C) along the first two axes."""
    k = len(g)
    x = sliding_window_view(x, k, axis=0) @ g
    return sliding_window_view(x, k, axis=1) @ g


def _filter_adjoint(y: np.ndarray, g: np.ndarray, shape) -> np.ndarray:
    """Transpose of :func:`_filter_valid` (a full correlation)."""
    k = len(g)
    H, W = shape[:2]
    tmp = np.zeros((y.shape[0], W) + y.shape[2:])
    for j in range(k):
        tmp[:, j : j + y.shape[1]] += g[j] * y
    out = np.zeros((H, W) + y.shape[2:])
    for i in range(k):
        out[i : i + y.shape[0]] += g[i] * tmp
    return out


def _as_hwc(x: np.ndarray) -> np.ndarray:
    return x[..., None] if x.ndim == 2 else x


def ssim_with_grad(a, b, need_grad: bool = True):
    """Mean SSIM over valid window positions and channels, and d(ssim)/da."""
    a, b = _check_pair(a, b)
    squeeze = a.ndim == 2
    a, b = _as_hwc(a), _as_hwc(b)
    if a.shape[0] < WIN or a.shape[1] < WIN:
        raise ValueError(f"image {a.shape[:2]} is smaller than the {WIN}x{WIN} SSIM window")
    g = gaussian_window()
    ma, mb = _filter_valid(a, g), _filter_valid(b, g)
    paa, pbb, pab = _filter_valid(a * a, g), _filter_valid(b * b, g), _filter_valid(a * b, g)
    saa, sbb, sab = paa - ma * ma, pbb - mb * mb, pab - ma * mb
    A1 = 2 * ma * mb + C1
    A2 = 2 * sab + C2
    B1 = ma * ma + mb * mb + C1
    B2 = saa + sbb + C2
    smap = A1 * A2 / (B1 * B2)
    val = float(smap.mean())
    if not need_grad:
        return val, None
    gs = 1.0 / smap.size
    den = B1 * B2
    # partials w.r.t. the local moments m_a, E[a^2], E[ab]
    d_ma = (2 * mb * A2 - 2 * mb * A1) / den - smap * (2 * ma / B1 - 2 * ma / B2)
    d_paa = -smap / B2
    d_pab = 2 * A1 / den
    grad = (
        _filter_adjoint(gs * d_ma, g, a.shape)
        + 2 * a * _filter_adjoint(gs * d_paa, g, a.shape)
        + b * _filter_adjoint(gs * d_pab, g, a.shape)
    )
    return val, (grad[..., 0] if squeeze else grad)


def ssim(a, b) -> float:
    return ssim_with_grad(a, b, need_grad=False)[0]


def ssim_naive(a, b) -> float:
    """Double-loop reference used to check :func:`ssim`."""
    a, b = _check_pair(a, b)
    a, b = _as_hwc(a), _as_hwc(b)
    g = gaussian_window()
    w2 = np.outer(g, g)
    H, W, C = a.shape
    vals = []
    for c in range(C):
        for i in range(H - WIN + 1):
            for j in range(W - WIN + 1):
                pa = a[i : i + WIN, j : j + WIN, c]
                pb = b[i : i + WIN, j : j + WIN, c]
                ma = np.sum(w2 * pa)
                mb = np.sum(w2 * pb)
                va = np.sum(w2 * pa * pa) - ma * ma
                vb = np.sum(w2 * pb * pb) - mb * mb
                cov = np.sum(w2 * pa * pb) - ma * mb
                vals.append((2 * ma * mb + C1) * (2 * cov + C2) / ((ma * ma + mb * mb + C1) * (va + vb + C2)))
    return float(np.mean(vals))


def _check_points(p):
    p = np.asarray(p, dtype=np.float64).reshape(-1, 3)
    if len(p) == 0:
        raise ValueError("chamfer distance needs non-empty point sets")
    return p


def _nn_brute(src: np.ndarray, dst: np.ndarray, chunk: int = 1024) -> np.ndarray:
    out = np.empty(len(src))
    for s in range(0, len(src), chunk):
        d = np.linalg.norm(src[s : s + chunk, None, :] - dst[None, :, :], axis=-1)
        out[s : s + chunk] = d.min(1)
    return out


def chamfer(P, Q, accelerate: bool | None = None) -> float:
    """Symmetric mean nearest-neighbour distance, halved."""
    P, Q = _check_points(P), _check_points(Q)
    if accelerate is None:
        accelerate = max(len(P), len(Q)) > BRUTE_LIMIT
    if accelerate:
        dpq = cKDTree(Q).query(P)[0]
        dqp = cKDTree(P).query(Q)[0]
    else:
        dpq = _nn_brute(P, Q)
        dqp = _nn_brute(Q, P)
    return 0.5 * (float(dpq.mean()) + float(dqp.mean()))


def luminance(img) -> np.ndarray:
    img = np.asarray(img, dtype=np.float64)
    if img.ndim == 2:
        return img
    return img[..., :3] @ np.array([0.299, 0.587, 0.114])


def sobel_magnitude(gray) -> np.ndarray:
    gray = np.asarray(gray, dtype=np.float64)
    gx = ndimage.sobel(gray, axis=1, mode="nearest")
    gy = ndimage.sobel(gray, axis=0, mode="nearest")
    return np.hypot(gx, gy)


def edge_sharpness(image, mask) -> float:
    mask = np.asarray(mask, dtype=bool)
    if not mask.any():
        raise ValueError("edge band mask is empty")
    return float(sobel_magnitude(luminance(image))[mask].mean())


def boundary_band(ids_or_mask, width: int = 2) -> np.ndarray:
    """Pixels within ``width`` of a label change."""
    lab = np.asarray(ids_or_mask)
    edge = np.zeros(lab.shape, dtype=bool)
    h = lab[:, 1:] != lab[:, :-1]
    v = lab[1:, :] != lab[:-1, :]
    edge[:, 1:] |= h
    edge[:, :-1] |= h
    edge[1:, :] |= v
    edge[:-1, :] |= v
    if width > 1:
        edge = ndimage.binary_dilation(edge, iterations=width - 1)
    return edge


def edge_band(target, threshold: float = 0.1, width: int = 2) -> np.ndarray:
    """Pixels near strong luminance edges of ``target`` (0-1 scale Sobel)."""
    edge = sobel_magnitude(luminance(target)) > threshold
    if width > 1 and edge.any():
        edge = ndimage.binary_dilation(edge, iterations=width - 1)
    return edge
