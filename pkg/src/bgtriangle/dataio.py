"""Dataset loading, checkpoint files and line-stroke export."""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image

from .camera import Camera, from_c2w_opengl
from .bezier import bernstein_basis
from .raster import tessellation_grid
from .scene import Scene

CKPT_MAGIC = b"BGTRICK\x00"
CKPT_VERSION = 1


class DatasetError(Exception):
    """Base class for dataset problems; messages carry file and field."""


class MissingFileError(DatasetError, FileNotFoundError):
    pass


class ManifestError(DatasetError, ValueError):
    pass


class DimensionError(DatasetError, ValueError):
    pass


class CheckpointError(ValueError):
    pass


def srgb_to_linear(x):
    x = np.asarray(x, dtype=np.float64)
    return np.where(x <= 0.04045, x / 12.92, ((x + 0.055) / 1.055) ** 2.4)


def linear_to_srgb(x):
    x = np.clip(np.asarray(x, dtype=np.float64), 0.0, 1.0)
    return np.where(x <= 0.0031308, 12.92 * x, 1.055 * x ** (1 / 2.4) - 0.055)


@dataclass
class SceneDataset:
    cameras: list
    images: list  # (H, W, 3) float in [0, 1]
    masks: list | None  # (H, W) float coverage or None
    names: list
    points: np.ndarray | None = None
    root: Path | None = None

    def __len__(self) -> int:
        return len(self.cameras)

    def targets(self, background) -> list[np.ndarray]:
        """Images composited over ``background`` using their masks."""
        bg = np.asarray(background, dtype=np.float64)
        if self.masks is None:
            return list(self.images)
        return [im * m[..., None] + bg * (1.0 - m[..., None]) for im, m in zip(self.images, self.masks)]

    def subset(self, idx) -> "SceneDataset":
        idx = list(idx)
        return SceneDataset(
            cameras=[self.cameras[i] for i in idx],
            images=[self.images[i] for i in idx],
            masks=None if self.masks is None else [self.masks[i] for i in idx],
            names=[self.names[i] for i in idx],
            points=self.points,
            root=self.root,
        )


def _manifest(path: Path, split: str) -> dict:
    mf = path / f"transforms_{split}.json"
    if not mf.is_file():
        raise MissingFileError(f"{mf}: manifest not found")
    try:
        data = json.loads(mf.read_text())
    except json.JSONDecodeError as exc:
        raise ManifestError(f"{mf}: malformed JSON ({exc.msg} at line {exc.lineno})") from None
    if not isinstance(data, dict):
        raise ManifestError(f"{mf}: top level must be an object")
    if "camera_angle_x" not in data:
        raise ManifestError(f"{mf}: missing field 'camera_angle_x'")
    if not isinstance(data.get("frames"), list):
        raise ManifestError(f"{mf}: missing or invalid field 'frames'")
    return data


def load_dataset(path, split: str = "train", srgb: bool = True, limit: int | None = None) -> SceneDataset:
    """Read a ``transforms_<split>.json`` dataset of RGBA images.

    With ``srgb`` the 8-bit values are decoded to linear light.
    """
    path = Path(path)
    if not path.is_dir():
        raise MissingFileError(f"{path}: dataset directory not found")
    data = _manifest(path, split)
    mf = path / f"transforms_{split}.json"
    try:
        fov = float(data["camera_angle_x"])
    except (TypeError, ValueError):
        raise ManifestError(f"{mf}: field 'camera_angle_x' is not a number") from None
    frames = data["frames"][:limit] if limit else data["frames"]
    cams, images, masks, names = [], [], [], []
    shape = None
    for n, fr in enumerate(frames):
        where = f"{mf}: frames[{n}]"
        if not isinstance(fr, dict) or "file_path" not in fr or "transform_matrix" not in fr:
            raise ManifestError(f"{where}: needs 'file_path' and 'transform_matrix'")
        m = np.asarray(fr["transform_matrix"], dtype=np.float64)
        if m.shape != (4, 4) or not np.all(np.isfinite(m)):
            raise ManifestError(f"{where}.transform_matrix: expected a finite 4x4 matrix")
        rel = fr["file_path"]
        img_path = path / rel
        if img_path.suffix == "":
            img_path = img_path.with_suffix(".png")
        if not img_path.is_file():
            raise MissingFileError(f"{where}.file_path: image {img_path} not found")
        with Image.open(img_path) as im:
            arr = np.asarray(im.convert("RGBA"), dtype=np.float64) / 255.0
        if shape is None:
            shape = arr.shape[:2]
        elif arr.shape[:2] != shape:
            raise DimensionError(f"{where}: image {img_path.name} is {arr.shape[1]}x{arr.shape[0]}, expected {shape[1]}x{shape[0]}")
        rgb = srgb_to_linear(arr[..., :3]) if srgb else arr[..., :3]
        H, W = arr.shape[:2]
        try:
            cams.append(from_c2w_opengl(m, fov, W, H))
        except ValueError as exc:
            raise ManifestError(f"{where}.transform_matrix: {exc}") from None
        images.append(rgb)
        masks.append(arr[..., 3])
        names.append(Path(rel).stem)
    points = None
    pf = path / "points3d.npy"
    if pf.is_file():
        points = np.load(pf)
        if points.ndim != 2 or points.shape[1] != 3:
            raise DimensionError(f"{pf}: expected an (N, 3) array, got {points.shape}")
    return SceneDataset(cams, images, masks, names, points, path)


# ---------------------------------------------------------------------------
# checkpoints
#
# layout: magic (8 bytes) | version u32 | header length u32 | JSON header |
# little-endian arrays back to back, offsets given in the header.


def _pack(arrays: dict[str, np.ndarray], dtype: str) -> tuple[list, bytes]:
    table, blobs, off = [], [], 0
    for name, a in arrays.items():
        b = np.ascontiguousarray(a, dtype=dtype).tobytes()
        table.append({"name": name, "shape": list(a.shape), "offset": off})
        blobs.append(b)
        off += len(b)
    return table, b"".join(blobs)


def save_checkpoint(scene: Scene, path, state=None, dtype: str = "<f4") -> None:
    """Write ``scene`` (and optionally Adam state) to ``path``."""
    arrays = dict(scene.params())
    if state is not None:
        for k in Scene.PARAM_GROUPS:
            arrays[f"adam_m.{k}"] = state.m[k]
            arrays[f"adam_v.{k}"] = state.v[k]
    table, blob = _pack(arrays, dtype)
    header = {
        "version": CKPT_VERSION,
        "dtype": dtype,
        "count": len(scene),
        "ids": [int(i) for i in scene.ids],
        "next_id": int(scene.next_id),
        "background": [float(x) for x in scene.background],
        "opacity": float(scene.opacity),
        "r_b": float(scene.r_b),
        "sh_bands": int(scene.sh_bands),
        "arrays": table,
        "adam_t": None if state is None else int(state.t),
    }
    hb = json.dumps(header, sort_keys=True).encode()
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as fh:
        fh.write(CKPT_MAGIC)
        fh.write(struct.pack("<II", CKPT_VERSION, len(hb)))
        fh.write(hb)
        fh.write(blob)


def load_checkpoint(path, with_state: bool = False):
    """Read a checkpoint; returns the scene, or (scene, state) with ``with_state``."""
    path = Path(path)
    try:
        raw = path.read_bytes()
    except FileNotFoundError:
        raise CheckpointError(f"{path}: checkpoint not found") from None
    if len(raw) < 16 or raw[:8] != CKPT_MAGIC:
        raise CheckpointError(f"{path}: not a checkpoint file")
    version, hlen = struct.unpack("<II", raw[8:16])
    if version != CKPT_VERSION:
        raise CheckpointError(f"{path}: checkpoint version {version}, this build reads {CKPT_VERSION}")
    if len(raw) < 16 + hlen:
        raise CheckpointError(f"{path}: truncated header")
    try:
        header = json.loads(raw[16 : 16 + hlen])
    except json.JSONDecodeError:
        raise CheckpointError(f"{path}: corrupt header") from None
    body = raw[16 + hlen :]
    dt = np.dtype(header["dtype"])
    arrays = {}
    for ent in header["arrays"]:
        n = int(np.prod(ent["shape"])) * dt.itemsize
        chunk = body[ent["offset"] : ent["offset"] + n]
        if len(chunk) != n:
            raise CheckpointError(f"{path}: truncated array '{ent['name']}'")
        arrays[ent["name"]] = np.frombuffer(chunk, dtype=dt).reshape(ent["shape"]).astype(np.float64)
    scene = Scene(
        ids=np.asarray(header["ids"], dtype=np.int64),
        **{k: arrays[k] for k in Scene.PARAM_GROUPS},
        background=np.asarray(header["background"]),
        opacity=header["opacity"],
        r_b=header["r_b"],
        sh_bands=header["sh_bands"],
        next_id=header["next_id"],
    )
    if not with_state:
        return scene
    state = None
    if header.get("adam_t") is not None:
        from .train import AdamState

        state = AdamState(
            m={k: arrays[f"adam_m.{k}"] for k in Scene.PARAM_GROUPS},
            v={k: arrays[f"adam_v.{k}"] for k in Scene.PARAM_GROUPS},
            t=header["adam_t"],
        )
    return scene, state


# ---------------------------------------------------------------------------
# strokes


def tessellated_faces(scene: Scene, level: int = 3):
    """World-space flat triangles of every primitive: (P*T, 3, 3)."""
    bc, tris = tessellation_grid(level)
    pts = np.einsum("vm,pmc->pvc", bernstein_basis(bc), scene.ctrl)
    return pts[:, tris]  # (P, T, 3, 3)


def face_areas(faces: np.ndarray) -> np.ndarray:
    return 0.5 * np.linalg.norm(np.cross(faces[..., 1, :] - faces[..., 0, :], faces[..., 2, :] - faces[..., 0, :]), axis=-1)


def default_stroke_threshold(scene: Scene, level: int = 3) -> float:
    return 10.0 * float(np.median(face_areas(tessellated_faces(scene, level))))


def export_strokes(scene: Scene, threshold: float | None, path, level: int = 3, decimals: int = 9) -> int:
    """Write edges of small tessellated faces as ``v``/``l`` records; returns the segment count."""
    if threshold is None:
        threshold = default_stroke_threshold(scene, level)
    faces = tessellated_faces(scene, level).reshape(-1, 3, 3)
    keep = face_areas(faces) < threshold
    verts: dict[tuple, int] = {}
    coords = []
    segs = set()

    def vid(p):
        key = tuple(np.round(p, decimals))
        if key not in verts:
            verts[key] = len(coords)
            coords.append(p)
        return verts[key]

    for f in faces[keep]:
        ids = [vid(p) for p in f]
        for a, b in ((0, 1), (1, 2), (2, 0)):
            i, j = ids[a], ids[b]
            if i != j:
                segs.add((min(i, j), max(i, j)))
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as fh:
        for p in coords:
            fh.write(f"v {p[0]:.9g} {p[1]:.9g} {p[2]:.9g}\n")
        for i, j in sorted(segs):
            fh.write(f"l {i + 1} {j + 1}\n")
    return len(segs)


def read_strokes(path) -> tuple[np.ndarray, np.ndarray]:
    v, l = [], []
    for line in Path(path).read_text().splitlines():
        parts = line.split()
        if not parts:
            continue
        if parts[0] == "v":
            v.append([float(x) for x in parts[1:4]])
        elif parts[0] == "l":
            l.append([int(x) - 1 for x in parts[1:3]])
    return np.array(v).reshape(-1, 3), np.array(l, dtype=np.int64).reshape(-1, 2)


def save_image(path, img, srgb: bool = True) -> None:
    img = np.asarray(img, dtype=np.float64)
    if srgb:
        rgb = linear_to_srgb(img[..., :3])
    else:
        rgb = np.clip(img[..., :3], 0, 1)
    out = np.round(rgb * 255).astype(np.uint8)
    if img.shape[-1] == 4:
        a = np.round(np.clip(img[..., 3], 0, 1) * 255).astype(np.uint8)
        out = np.concatenate([out, a[..., None]], axis=-1)
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Image.fromarray(out).save(path)


def camera_to_json(cam: Camera) -> dict:
    return {
        "R": cam.R.tolist(), "t": cam.t.tolist(), "fx": cam.fx, "fy": cam.fy,
        "cx": cam.cx, "cy": cam.cy, "width": cam.width, "height": cam.height,
    }
