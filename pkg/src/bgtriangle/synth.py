"""Procedurally textured toy scenes and an independent reference ray tracer.

Nothing here touches the primitive renderer; these images are the ground
truth the reconstruction is judged against.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .camera import Camera, look_at, to_c2w_opengl
from .dataio import save_image

DEFAULT_FOV = 0.6911112070083618
DEFAULT_RADIUS = 5.0

# one light/dark pair per cube face (+x, -x, +y, -y, +z, -z)
FACE_COLORS = np.array(
    [
        [[0.85, 0.20, 0.15], [0.95, 0.85, 0.70]],
        [[0.15, 0.45, 0.85], [0.90, 0.90, 0.90]],
        [[0.15, 0.65, 0.25], [0.95, 0.90, 0.35]],
        [[0.55, 0.20, 0.65], [0.85, 0.75, 0.90]],
        [[0.95, 0.55, 0.10], [0.20, 0.20, 0.25]],
        [[0.10, 0.60, 0.65], [0.95, 0.60, 0.65]],
    ]
)
BALL_COLORS = np.array([[0.85, 0.25, 0.15], [0.95, 0.90, 0.75]])


@dataclass(frozen=True)
class AnalyticScene:
    kind: str  # cube | ball
    texture: str  # checker | stripes
    texels: int
    half_edge: float = 1.0  # cube spans [-h, h]^3
    radius: float = 1.0  # ball radius, centered at the origin

    def surface_params(self, p: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """(face, s, t) with s, t in [0, 1]; face is 0 for the ball."""
        if self.kind == "cube":
            axis = np.argmax(np.abs(p), axis=-1)
            sign = np.take_along_axis(p, axis[..., None], -1)[..., 0] >= 0
            face = 2 * axis + (~sign)
            a1 = np.where(axis == 0, 1, 0)
            a2 = np.where(axis == 2, 1, 2)
            s = (np.take_along_axis(p, a1[..., None], -1)[..., 0] / self.half_edge + 1.0) / 2.0
            t = (np.take_along_axis(p, a2[..., None], -1)[..., 0] / self.half_edge + 1.0) / 2.0
            return face, np.clip(s, 0, 1), np.clip(t, 0, 1)
        q = p / np.linalg.norm(p, axis=-1, keepdims=True)
        s = (np.arctan2(q[..., 1], q[..., 0]) + np.pi) / (2 * np.pi)
        t = np.arccos(np.clip(q[..., 2], -1, 1)) / np.pi
        return np.zeros(p.shape[:-1], dtype=np.int64), s, t

    def pattern(self, s: np.ndarray, t: np.ndarray) -> np.ndarray:
        n = self.texels
        su = s * (2 * n if self.kind == "ball" else n)
        iu = np.minimum(np.floor(su), (2 * n if self.kind == "ball" else n) - 1).astype(np.int64)
        iv = np.minimum(np.floor(t * n), n - 1).astype(np.int64)
        if self.texture == "checker":
            return (iu + iv) % 2
        return iu % 2

    def albedo(self, p: np.ndarray) -> np.ndarray:
        face, s, t = self.surface_params(p)
        k = self.pattern(s, t)
        table = FACE_COLORS if self.kind == "cube" else BALL_COLORS[None]
        return table[face, k]

    def sample_surface(self, count: int, rng: np.random.Generator) -> np.ndarray:
        """Area-uniform surface samples."""
        if self.kind == "ball":
            d = rng.normal(size=(count, 3))
            return self.radius * d / np.linalg.norm(d, axis=1, keepdims=True)
        face = rng.integers(0, 6, size=count)
        uv = rng.uniform(-self.half_edge, self.half_edge, size=(count, 2))
        p = np.zeros((count, 3))
        axis = face // 2
        sign = np.where(face % 2 == 0, 1.0, -1.0)
        for a in range(3):
            m = axis == a
            others = [o for o in range(3) if o != a]
            p[m, a] = sign[m] * self.half_edge
            p[m, others[0]] = uv[m, 0]
            p[m, others[1]] = uv[m, 1]
        return p


def make_scene(kind: str = "cube", texture: str = "checker", texels: int = 4) -> AnalyticScene:
    if kind not in ("cube", "ball"):
        raise ValueError(f"unknown scene kind '{kind}'")
    if texture not in ("checker", "stripes"):
        raise ValueError(f"unknown texture '{texture}'")
    if texels < 1:
        raise ValueError("texel count must be >= 1")
    return AnalyticScene(kind, texture, int(texels))


def intersect(scene: AnalyticScene, o: np.ndarray, d: np.ndarray) -> np.ndarray:
    """Nearest positive hit distance per ray (inf on miss)."""
    if scene.kind == "ball":
        b = np.sum(o * d, axis=-1)
        c = np.sum(o * o, axis=-1) - scene.radius**2
        disc = b * b - c
        sq = np.sqrt(np.maximum(disc, 0.0))
        t0, t1 = -b - sq, -b + sq
        t = np.where(t0 > 0, t0, np.where(t1 > 0, t1, np.inf))
        return np.where(disc >= 0, t, np.inf)
    h = scene.half_edge
    with np.errstate(divide="ignore", invalid="ignore"):
        inv = 1.0 / d
        ta = (-h - o) * inv
        tb = (h - o) * inv
    tmin = np.nanmax(np.minimum(ta, tb), axis=-1)
    tmax = np.nanmin(np.maximum(ta, tb), axis=-1)
    hit = tmax >= np.maximum(tmin, 0.0)
    t = np.where(tmin > 0, tmin, tmax)
    return np.where(hit & (t > 0), t, np.inf)


def render_reference(scene: AnalyticScene, cam: Camera, s: int = 4) -> tuple[np.ndarray, np.ndarray]:
    """Stratified s x s supersampled albedo (straight, not premultiplied) and coverage."""
    if s < 1:
        raise ValueError("supersampling factor must be >= 1")
    H, W = cam.height, cam.width
    off = (np.arange(s) + 0.5) / s
    ys, xs = np.meshgrid(np.arange(H), np.arange(W), indexing="ij")
    sy = (ys[..., None, None] + off[:, None]).reshape(H, W, -1)
    sx = (xs[..., None, None] + off[None, :]).reshape(H, W, -1)
    o, d = cam.pixel_rays(sx, sy)
    t = intersect(scene, o, d)
    hit = np.isfinite(t)
    col = np.zeros(t.shape + (3,))
    if hit.any():
        p = o[hit] + t[hit][:, None] * d[hit]
        col[hit] = scene.albedo(p)
    cover = hit.mean(-1)
    total = col.sum(-2)
    n = hit.sum(-1)
    straight = np.where(n[..., None] > 0, total / np.maximum(n, 1)[..., None], 0.0)
    return straight, cover


def composite_over(straight: np.ndarray, cover: np.ndarray, background) -> np.ndarray:
    return straight * cover[..., None] + np.asarray(background, dtype=np.float64) * (1.0 - cover[..., None])


def fibonacci_sphere(n: int, rotation: np.ndarray | None = None) -> np.ndarray:
    i = np.arange(n) + 0.5
    z = 1.0 - 2.0 * i / n
    r = np.sqrt(1.0 - z * z)
    phi = i * np.pi * (3.0 - np.sqrt(5.0))
    pts = np.stack([r * np.cos(phi), r * np.sin(phi), z], axis=1)
    return pts if rotation is None else pts @ rotation.T


def _random_rotation(rng: np.random.Generator) -> np.ndarray:
    q, r = np.linalg.qr(rng.normal(size=(3, 3)))
    q = q * np.sign(np.diag(r))
    if np.linalg.det(q) < 0:
        q[:, 0] = -q[:, 0]
    return q


def make_cameras(n: int, radius: float, rng: np.random.Generator, width: int, height: int, fov: float = DEFAULT_FOV) -> list[Camera]:
    dirs = fibonacci_sphere(n, _random_rotation(rng))
    return [look_at(radius * d, fov_x=fov, width=width, height=height) for d in dirs]


def make_dataset(
    out,
    kind: str = "cube",
    texture: str = "checker",
    texels: int = 4,
    n_train: int = 100,
    n_test: int = 20,
    radius: float = DEFAULT_RADIUS,
    seed: int = 0,
    width: int = 128,
    height: int = 128,
    closeup: bool = False,
    supersample: int = 4,
    n_points: int = 2000,
    point_noise: float = 0.01,
    fov: float = DEFAULT_FOV,
) -> Path:
    """Write train/test splits, RGBA images and a coarse point cloud to ``out``."""
    out = Path(out)
    scene = make_scene(kind, texture, texels)
    rng = np.random.default_rng(seed)
    splits = {
        "train": make_cameras(n_train, radius, rng, width, height, fov),
        "test": make_cameras(n_test, radius * (0.4 if closeup else 1.0), rng, width, height, fov),
    }
    for split, cams in splits.items():
        (out / split).mkdir(parents=True, exist_ok=True)
        frames = []
        for i, cam in enumerate(cams):
            rgb, cover = render_reference(scene, cam, supersample)
            save_image(out / split / f"r_{i}.png", np.concatenate([rgb, cover[..., None]], axis=-1))
            frames.append({"file_path": f"./{split}/r_{i}", "transform_matrix": to_c2w_opengl(cam).tolist()})
        manifest = {"camera_angle_x": fov, "frames": frames}
        (out / f"transforms_{split}.json").write_text(json.dumps(manifest, indent=1))
    pts = scene.sample_surface(n_points, rng) + rng.normal(scale=point_noise, size=(n_points, 3))
    np.save(out / "points3d.npy", pts)
    meta = {
        "kind": kind, "texture": texture, "texels": texels, "radius": radius, "seed": seed,
        "closeup": closeup, "supersample": supersample, "width": width, "height": height,
    }
    (out / "scene.json").write_text(json.dumps(meta, indent=1))
    return out


def read_scene(root) -> AnalyticScene | None:
    """Analytic scene recorded next to a generated dataset, if any."""
    meta = Path(root) / "scene.json"
    if not meta.is_file():
        return None
    m = json.loads(meta.read_text())
    return make_scene(m["kind"], m["texture"], m["texels"])
