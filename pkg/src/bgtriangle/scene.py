"""Learnable BG-Triangle scene: control nets, color nets and attribute maps."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree

from . import bezier
from .bezier import DEGREE, bernstein_basis, n_control_points

N_CTRL = n_control_points(DEGREE)
SH_BASIS = 8  # bands 1 and 2, no DC
SUB_OPACITY = 0.99
VIS_RES = 8

ATTR_KINDS = ("rotation", "scaling", "sh")


@dataclass(frozen=True)
class AttributeMap:
    """Layout of one triangular texel grid.

    Texels live on the lower-left half of an ``res x res`` grid, i.e. the
    integer cells (x, y) with x + y <= res - 1, stored in row-major order
    of that half.
    """

    kind: str
    res: int
    channels: int

    @property
    def n_texels(self) -> int:
        return self.res * (self.res + 1) // 2

    def texel_index(self) -> np.ndarray:
        """(res, res) table mapping grid cells to storage slots, -1 if unused."""
        table = -np.ones((self.res, self.res), dtype=np.int64)
        t = 0
        for y in range(self.res):
            for x in range(self.res - y):
                table[x, y] = t
                t += 1
        return table

    def texel_coords(self) -> np.ndarray:
        """Barycentric coordinates of every texel center, in storage order."""
        out = np.zeros((self.n_texels, 3))
        table = self.texel_index()
        for x in range(self.res):
            for y in range(self.res):
                t = table[x, y]
                if t < 0:
                    continue
                if self.res == 1:
                    out[t] = (1 / 3, 1 / 3, 1 / 3)
                else:
                    v = x / (self.res - 1)
                    w = y / (self.res - 1)
                    out[t] = (1.0 - v - w, v, w)
        return out

    def weights(self, bc: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Bilinear texel slots and weights for bc (N, 3) -> (N, 4) each.

        Corners outside the triangular half get weight 0 and the rest are
        renormalized. Unused slots point at texel 0 with weight 0.
        """
        bc = np.atleast_2d(np.asarray(bc, dtype=np.float64))
        n = bc.shape[0]
        if self.res == 1:
            slots = np.zeros((n, 4), dtype=np.int64)
            wts = np.zeros((n, 4))
            wts[:, 0] = 1.0
            return slots, wts
        r1 = self.res - 1
        x = np.clip(bc[:, 1] * r1, 0.0, r1)
        y = np.clip(bc[:, 2] * r1, 0.0, r1)
        x0 = np.minimum(np.floor(x), r1 - 1).astype(np.int64)
        y0 = np.minimum(np.floor(y), r1 - 1).astype(np.int64)
        fx = x - x0
        fy = y - y0
        table = self.texel_index()
        cx = np.stack([x0, x0 + 1, x0, x0 + 1], axis=1)
        cy = np.stack([y0, y0, y0 + 1, y0 + 1], axis=1)
        wts = np.stack([(1 - fx) * (1 - fy), fx * (1 - fy), (1 - fx) * fy, fx * fy], axis=1)
        slots = table[cx, cy]
        wts = np.where(slots >= 0, wts, 0.0)
        wts = wts / wts.sum(axis=1, keepdims=True)
        return np.maximum(slots, 0), wts


MAP_LAYOUT = {
    "rotation": AttributeMap("rotation", 3, 4),
    "scaling": AttributeMap("scaling", 3, 2),
    "sh": AttributeMap("sh", 1, SH_BASIS * 3),
}


def visibility_map() -> AttributeMap:
    return AttributeMap("visibility", VIS_RES, 1)


@dataclass
class BGTriangle:
    """Read-only view of a single primitive."""

    id: int
    geometry: np.ndarray
    color_net: np.ndarray
    maps: dict[str, np.ndarray]


@dataclass
class Scene:
    """Structure-of-arrays container for all primitives.

    Learnable arrays (float64):
      ctrl (P, 6, 3), color (P, 6, 3), rotation (P, 6, 4),
      scaling (P, 6, 2) log-scale, sh (P, 1, 24) laid out [basis][rgb].
    """

    ids: np.ndarray
    ctrl: np.ndarray
    color: np.ndarray
    rotation: np.ndarray
    scaling: np.ndarray
    sh: np.ndarray
    background: np.ndarray = field(default_factory=lambda: np.zeros(3))
    opacity: float = SUB_OPACITY
    r_b: float = 0.04
    sh_bands: int = 2
    next_id: int = 0
    stats: "SplitStats | None" = None

    PARAM_GROUPS = ("ctrl", "color", "rotation", "scaling", "sh")

    def __post_init__(self):
        if self.next_id <= (self.ids.max(initial=-1)):
            self.next_id = int(self.ids.max(initial=-1)) + 1
        if self.stats is None:
            self.stats = SplitStats.zeros(len(self.ids))
        if not (0.0 < self.opacity <= 1.0):
            raise ValueError(f"sub-primitive opacity must lie in (0, 1], got {self.opacity}")
        if self.r_b <= 0:
            raise ValueError(f"boundary radius r_b must be positive, got {self.r_b}")

    def __len__(self) -> int:
        return len(self.ids)

    def params(self) -> dict[str, np.ndarray]:
        return {k: getattr(self, k) for k in self.PARAM_GROUPS}

    def primitive(self, i: int) -> BGTriangle:
        return BGTriangle(
            id=int(self.ids[i]),
            geometry=self.ctrl[i],
            color_net=self.color[i],
            maps={k: getattr(self, k)[i] for k in ATTR_KINDS},
        )

    def index_of(self) -> dict[int, int]:
        return {int(g): i for i, g in enumerate(self.ids)}

    def copy(self) -> "Scene":
        return Scene(
            ids=self.ids.copy(),
            ctrl=self.ctrl.copy(),
            color=self.color.copy(),
            rotation=self.rotation.copy(),
            scaling=self.scaling.copy(),
            sh=self.sh.copy(),
            background=self.background.copy(),
            opacity=self.opacity,
            r_b=self.r_b,
            sh_bands=self.sh_bands,
            next_id=self.next_id,
            stats=self.stats.copy(),
        )

    def select(self, keep: np.ndarray) -> None:
        """Keep only the primitives flagged (or indexed) by ``keep``."""
        for k in self.PARAM_GROUPS + ("ids",):
            setattr(self, k, getattr(self, k)[keep])
        self.stats = self.stats.select(keep)

    def extend(self, other: dict[str, np.ndarray]) -> np.ndarray:
        """Append primitives from arrays; assigns fresh ids, returns them."""
        n = len(other["ctrl"])
        new_ids = np.arange(self.next_id, self.next_id + n, dtype=np.int64)
        self.next_id += n
        self.ids = np.concatenate([self.ids, new_ids])
        for k in self.PARAM_GROUPS:
            setattr(self, k, np.concatenate([getattr(self, k), other[k]]))
        self.stats = self.stats.concat(SplitStats.zeros(n))
        return new_ids

    def extent(self) -> float:
        pts = self.ctrl.reshape(-1, 3)
        return float(np.linalg.norm(pts.max(0) - pts.min(0)))


@dataclass
class SplitStats:
    """Per-primitive bookkeeping between split/prune events."""

    grad_norm_sum: np.ndarray
    grad_count: np.ndarray
    edge_sum: np.ndarray
    edge_views: np.ndarray
    vis_count: np.ndarray
    vis_texture: np.ndarray
    n_views: int = 0

    @classmethod
    def zeros(cls, n: int) -> "SplitStats":
        vm = visibility_map()
        return cls(
            grad_norm_sum=np.zeros(n),
            grad_count=np.zeros(n, dtype=np.int64),
            edge_sum=np.zeros(n),
            edge_views=np.zeros(n, dtype=np.int64),
            vis_count=np.zeros(n, dtype=np.int64),
            vis_texture=np.zeros((n, vm.n_texels), dtype=bool),
            n_views=0,
        )

    def _fields(self):
        return ("grad_norm_sum", "grad_count", "edge_sum", "edge_views", "vis_count", "vis_texture")

    def copy(self) -> "SplitStats":
        return SplitStats(*(getattr(self, f).copy() for f in self._fields()), n_views=self.n_views)

    def select(self, keep) -> "SplitStats":
        return SplitStats(*(getattr(self, f)[keep] for f in self._fields()), n_views=self.n_views)

    def concat(self, other: "SplitStats") -> "SplitStats":
        return SplitStats(
            *(np.concatenate([getattr(self, f), getattr(other, f)]) for f in self._fields()),
            n_views=self.n_views,
        )

    def reset(self) -> None:
        fresh = SplitStats.zeros(len(self.grad_norm_sum))
        for f in self._fields():
            setattr(self, f, getattr(fresh, f))
        self.n_views = 0


def default_maps(n: int, triangle_size: float | np.ndarray) -> dict[str, np.ndarray]:
    rot = np.zeros((n, MAP_LAYOUT["rotation"].n_texels, 4))
    rot[..., 0] = 1.0
    size = np.broadcast_to(np.asarray(triangle_size, dtype=np.float64), (n,))
    log_s = np.log(size / (2.0 * MAP_LAYOUT["scaling"].res))
    scl = np.repeat(log_s[:, None, None], MAP_LAYOUT["scaling"].n_texels, axis=1)
    scl = np.repeat(scl, 2, axis=2)
    sh = np.zeros((n, MAP_LAYOUT["sh"].n_texels, MAP_LAYOUT["sh"].channels))
    return {"rotation": rot, "scaling": scl, "sh": sh}


def flat_net(a, b, c) -> np.ndarray:
    """Degree-2 net of the flat triangle with corners a (u), b (v), c (w)."""
    a, b, c = (np.asarray(x, dtype=np.float64) for x in (a, b, c))
    corners = np.stack([a, b, c])
    idx = bezier.multi_indices(DEGREE)
    return (idx / DEGREE) @ corners


def _random_rotations(rng: np.random.Generator, n: int) -> np.ndarray:
    q = rng.normal(size=(n, 4))
    q /= np.linalg.norm(q, axis=1, keepdims=True)
    return quat_to_matrix(q)


def quat_to_matrix(q: np.ndarray) -> np.ndarray:
    """Rotation matrices from unit quaternions (w, x, y, z); (..., 4) -> (..., 3, 3)."""
    r, x, y, z = q[..., 0], q[..., 1], q[..., 2], q[..., 3]
    out = np.empty(q.shape[:-1] + (3, 3))
    out[..., 0, 0] = 1 - 2 * (y * y + z * z)
    out[..., 0, 1] = 2 * (x * y - r * z)
    out[..., 0, 2] = 2 * (x * z + r * y)
    out[..., 1, 0] = 2 * (x * y + r * z)
    out[..., 1, 1] = 1 - 2 * (x * x + z * z)
    out[..., 1, 2] = 2 * (y * z - r * x)
    out[..., 2, 0] = 2 * (x * z - r * y)
    out[..., 2, 1] = 2 * (y * z + r * x)
    out[..., 2, 2] = 1 - 2 * (x * x + y * y)
    return out


def median_nn_distance(points: np.ndarray) -> float:
    if len(points) < 2:
        return 0.0
    d, _ = cKDTree(points).query(points, k=2)
    return float(np.median(d[:, 1]))


def init_from_point_cloud(
    points,
    target_count: int,
    triangle_size: float | None = None,
    seed: int = 0,
    **scene_kw,
) -> Scene:
    """One randomly oriented equilateral primitive per sampled point."""
    points = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    if len(points) == 0:
        raise ValueError("cannot initialize from an empty point cloud")
    if target_count < 1:
        raise ValueError("target_count must be >= 1")
    rng = np.random.default_rng(seed)
    m = min(target_count, len(points))
    chosen = points[np.sort(rng.choice(len(points), size=m, replace=False))]
    if triangle_size is None:
        triangle_size = 2.0 * median_nn_distance(chosen)
        if triangle_size <= 0:
            triangle_size = 1.0
    # equilateral triangle with unit edge, centroid at origin, in the xy plane
    circ = triangle_size / np.sqrt(3.0)
    ang = np.array([90.0, 210.0, 330.0]) * np.pi / 180.0
    local = np.stack([np.cos(ang), np.sin(ang), np.zeros(3)], axis=1) * circ
    rots = _random_rotations(rng, m)
    corners = np.einsum("nij,kj->nki", rots, local) + chosen[:, None, :]
    idx = bezier.multi_indices(DEGREE) / DEGREE
    ctrl = np.einsum("mk,nkc->nmc", idx, corners)
    color = np.full((m, N_CTRL, 3), 0.5)
    maps = default_maps(m, triangle_size)
    return Scene(
        ids=np.arange(m, dtype=np.int64),
        ctrl=ctrl,
        color=color,
        **maps,
        **scene_kw,
    )


def init_from_cube(center=(0.0, 0.0, 0.0), edge: float = 2.0, per_face_subdiv: int = 1, **scene_kw) -> Scene:
    """Flat primitives tiling the surface of an axis-aligned cube."""
    if edge <= 0:
        raise ValueError("cube edge must be positive")
    center = np.asarray(center, dtype=np.float64)
    h = edge / 2.0
    s = per_face_subdiv
    nets = []
    for axis in range(3):
        for sign in (-1.0, 1.0):
            a1, a2 = [a for a in range(3) if a != axis]
            for iu in range(s):
                for iv in range(s):
                    def corner(pu, pv):
                        p = np.zeros(3)
                        p[axis] = sign * h
                        p[a1] = -h + edge * pu / s
                        p[a2] = -h + edge * pv / s
                        return p + center

                    c00, c10 = corner(iu, iv), corner(iu + 1, iv)
                    c01, c11 = corner(iu, iv + 1), corner(iu + 1, iv + 1)
                    nets.append(flat_net(c00, c10, c11))
                    nets.append(flat_net(c00, c11, c01))
    ctrl = np.array(nets)
    m = len(ctrl)
    size = edge / s
    return Scene(
        ids=np.arange(m, dtype=np.int64),
        ctrl=ctrl,
        color=np.full((m, N_CTRL, 3), 0.5),
        **default_maps(m, size),
        **scene_kw,
    )


def sample_attribute(prim: BGTriangle, kind: str, bc) -> np.ndarray:
    """Interpolate one attribute map at barycentric coordinates ``bc``."""
    layout = MAP_LAYOUT[kind]
    bc = np.asarray(bc, dtype=np.float64)
    single = bc.ndim == 1
    slots, wts = layout.weights(np.atleast_2d(bc))
    texels = prim.maps[kind]
    val = np.einsum("nt,ntc->nc", wts, texels[slots])
    if kind == "rotation":
        val = val / np.linalg.norm(val, axis=-1, keepdims=True)
    return val[0] if single else val


def sample_barycentric(rng: np.random.Generator, count: int) -> np.ndarray:
    """Area-uniform barycentric samples via the square-root warp."""
    r1 = rng.random(count)
    r2 = rng.random(count)
    s = np.sqrt(r1)
    return np.stack([1.0 - s, s * (1.0 - r2), s * r2], axis=1)


def sample_surface_points(prim: BGTriangle, count: int, seed: int = 0) -> np.ndarray:
    if count <= 0:
        return np.zeros((0, 3))
    rng = np.random.default_rng(seed)
    bc = sample_barycentric(rng, count)
    return bernstein_basis(bc) @ prim.geometry


def sample_scene_points(scene: Scene, density: float, seed: int = 0) -> np.ndarray:
    """Surface samples with count proportional to each primitive's area.

    ``density`` is samples per unit area.
    """
    rng = np.random.default_rng(seed)
    areas = primitive_areas(scene.ctrl)
    counts = np.maximum(1, np.round(areas * density)).astype(np.int64)
    out = []
    for i, c in enumerate(counts):
        bc = sample_barycentric(rng, int(c))
        out.append(bernstein_basis(bc) @ scene.ctrl[i])
    return np.concatenate(out) if out else np.zeros((0, 3))


def primitive_areas(ctrl: np.ndarray) -> np.ndarray:
    """Area estimated from the four flat sub-triangles of the control net."""
    # corner/mid-edge points of the surface in storage order
    idx = bezier.multi_indices(DEGREE) / DEGREE
    pts = np.einsum("mj,pjc->pmc", bernstein_basis(idx), ctrl)
    p200, p110, p101, p020, p011, p002 = (pts[:, t] for t in range(6))
    tris = [(p200, p110, p101), (p110, p020, p011), (p101, p011, p002), (p011, p101, p110)]
    total = np.zeros(len(ctrl))
    for a, b, c in tris:
        total += 0.5 * np.linalg.norm(np.cross(b - a, c - a), axis=1)
    return total


def aspect_ratios(ctrl: np.ndarray) -> np.ndarray:
    """Bounding-box aspect ratio of each control net in its principal frame."""
    out = np.empty(len(ctrl))
    for i, net in enumerate(ctrl):
        centered = net - net.mean(0)
        _, _, vt = np.linalg.svd(centered, full_matrices=False)
        ext = np.ptp(centered @ vt[:2].T, axis=0)
        lo = max(float(ext.min()), 1e-12)
        out[i] = float(ext.max()) / lo
    return out
