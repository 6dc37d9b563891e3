"""Pinhole camera with OpenCV axes (x right, y down, z forward)."""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np


@dataclass(frozen=True)
class Camera:
    R: np.ndarray  # world -> camera rotation
    t: np.ndarray  # world -> camera translation
    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int
    near: float = 0.01
    far: float = 100.0

    def __post_init__(self):
        R = np.asarray(self.R, dtype=np.float64)
        object.__setattr__(self, "R", R)
        object.__setattr__(self, "t", np.asarray(self.t, dtype=np.float64))
        if self.fx <= 0 or self.fy <= 0:
            raise ValueError("focal lengths must be positive")
        if not self.near < self.far:
            raise ValueError("near plane must be closer than far plane")
        if np.abs(R @ R.T - np.eye(3)).max() > 1e-9:
            raise ValueError("camera rotation is not orthonormal")

    @property
    def center(self) -> np.ndarray:
        return -self.R.T @ self.t

    @property
    def shape(self) -> tuple[int, int]:
        return (self.height, self.width)

    def to_camera(self, pts: np.ndarray) -> np.ndarray:
        return pts @ self.R.T + self.t

    def project(self, pts: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Pixel coordinates (pixel (r, c) spans [c, c+1] x [r, r+1]) and depth."""
        pc = self.to_camera(np.asarray(pts, dtype=np.float64))
        z = pc[..., 2]
        with np.errstate(divide="ignore", invalid="ignore"):
            x = self.fx * pc[..., 0] / z + self.cx
            y = self.fy * pc[..., 1] / z + self.cy
        return np.stack([x, y], axis=-1), z

    def pixel_rays(self, xs: np.ndarray, ys: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """World-space origins and unit directions through image points."""
        d_cam = np.stack(
            [(xs - self.cx) / self.fx, (ys - self.cy) / self.fy, np.ones_like(xs, dtype=np.float64)],
            axis=-1,
        )
        d = d_cam @ self.R
        d /= np.linalg.norm(d, axis=-1, keepdims=True)
        o = np.broadcast_to(self.center, d.shape)
        return o, d

    def zoomed(self, factor: float) -> "Camera":
        """Close-up by focal scaling about the principal point."""
        return replace(self, fx=self.fx * factor, fy=self.fy * factor)

    def moved_closer(self, fraction: float, target=(0.0, 0.0, 0.0)) -> "Camera":
        """Same orientation, camera center pulled toward ``target``."""
        target = np.asarray(target, dtype=np.float64)
        c = target + (self.center - target) * fraction
        return replace(self, t=-self.R @ c)

    def resized(self, width: int, height: int) -> "Camera":
        sx = width / self.width
        sy = height / self.height
        return replace(
            self, fx=self.fx * sx, fy=self.fy * sy, cx=self.cx * sx, cy=self.cy * sy, width=width, height=height
        )


def look_at(eye, target=(0.0, 0.0, 0.0), up=(0.0, 0.0, 1.0), *, fov_x: float, width: int, height: int, near=0.01, far=100.0) -> Camera:
    eye = np.asarray(eye, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    up = np.asarray(up, dtype=np.float64)
    z = target - eye
    z /= np.linalg.norm(z)
    if abs(np.dot(z, up)) > 0.999:
        up = np.array([0.0, 1.0, 0.0]) if abs(z[1]) < 0.9 else np.array([1.0, 0.0, 0.0])
    x = np.cross(z, up)
    x /= np.linalg.norm(x)
    y = np.cross(z, x)
    R = np.stack([x, y, z])
    fx = width / (2.0 * np.tan(fov_x / 2.0))
    return Camera(R=R, t=-R @ eye, fx=fx, fy=fx, cx=width / 2.0, cy=height / 2.0, width=width, height=height, near=near, far=far)


def from_c2w_opengl(c2w: np.ndarray, fov_x: float, width: int, height: int, near=0.01, far=100.0) -> Camera:
    """Camera from a camera-to-world matrix in OpenGL axes (y up, z back)."""
    c2w = np.asarray(c2w, dtype=np.float64)
    flip = np.diag([1.0, -1.0, -1.0])
    rot_c2w = c2w[:3, :3] @ flip
    R = rot_c2w.T
    t = -R @ c2w[:3, 3]
    fx = width / (2.0 * np.tan(fov_x / 2.0))
    return Camera(R=R, t=t, fx=fx, fy=fx, cx=width / 2.0, cy=height / 2.0, width=width, height=height, near=near, far=far)


def to_c2w_opengl(cam: Camera) -> np.ndarray:
    flip = np.diag([1.0, -1.0, -1.0])
    m = np.eye(4)
    m[:3, :3] = cam.R.T @ flip
    m[:3, 3] = cam.center
    return m
