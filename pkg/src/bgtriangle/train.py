"""Photometric loss, Adam updates, split/prune scheduling and the training loop."""

from __future__ import annotations

import csv
import dataclasses
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .backward import GradientBuffers, GradientError, backward
from .bezier import SUBDIVISION_CORNERS, subdivide_4
from .metrics import luminance, psnr, sobel_magnitude, ssim_with_grad
from .render import RenderResult, render
from .scene import MAP_LAYOUT, Scene, SplitStats, aspect_ratios, primitive_areas, visibility_map

log = logging.getLogger(__name__)


@dataclass
class TrainConfig:
    lambda_dssim: float = 0.2
    iterations: int = 3000
    split_interval: int = 300
    split_until: int = 15000
    tau_g: float = 0.0018
    tau_b: float = 13.0
    tau_v: float = 0.08
    tau_r: float = 0.4
    tau_a: float = 3e-4
    tau_s: float = 10.0
    lr_ctrl: float = 1.6e-4
    lr_ctrl_final: float = 0.01  # decay factor reached at the last iteration
    lr_color: float = 2.5e-3
    lr_rotation: float = 1e-3
    lr_scaling: float = 5e-3
    lr_sh: float = 2.5e-3
    max_primitives: int = 300
    seed: int = 0
    r_b: float = 0.04
    background: tuple = (0.0, 0.0, 0.0)
    init: str = "points"  # points | cube
    init_count: int = 150
    triangle_size: float = 0.0  # 0 selects the automatic size
    blend: bool = True
    log_every: int = 100
    checkpoint_every: int = 0

    def __post_init__(self):
        self.background = tuple(float(x) for x in self.background)
        if not 0.0 <= self.lambda_dssim <= 1.0:
            raise ValueError("lambda_dssim must lie in [0, 1]")
        if self.split_interval <= 0:
            raise ValueError("split_interval must be positive")
        for k in ("tau_g", "tau_b", "tau_v", "tau_r", "tau_a", "tau_s"):
            if getattr(self, k) <= 0:
                raise ValueError(f"threshold {k} must be positive")
        if self.iterations < 0:
            raise ValueError("iterations must be >= 0")
        if self.max_primitives < 1:
            raise ValueError("max_primitives must be >= 1")
        if self.init not in ("points", "cube"):
            raise ValueError(f"unknown init '{self.init}'")

    @classmethod
    def parse_value(cls, key: str, text: str):
        fields = {f.name: f for f in dataclasses.fields(cls)}
        if key not in fields:
            raise KeyError(f"unknown config key '{key}'")
        default = fields[key].default
        text = text.strip()
        if isinstance(default, bool):
            if text.lower() in ("1", "true", "yes", "on"):
                return True
            if text.lower() in ("0", "false", "no", "off"):
                return False
            raise ValueError(f"config key '{key}' expects a boolean, got '{text}'")
        if isinstance(default, tuple):
            return tuple(float(x) for x in text.replace(",", " ").split())
        return type(default)(text)

    @classmethod
    def read_file(cls, path) -> dict:
        """Flat ``key = value`` file; '#' starts a comment."""
        out = {}
        for n, line in enumerate(Path(path).read_text().splitlines(), 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValueError(f"{path}:{n}: expected 'key = value'")
            k, v = (s.strip() for s in line.split("=", 1))
            try:
                out[k] = cls.parse_value(k, v)
            except (KeyError, ValueError) as exc:
                raise ValueError(f"{path}:{n}: {exc}") from None
        return out

    def to_text(self) -> str:
        lines = []
        for f in dataclasses.fields(self):
            v = getattr(self, f.name)
            if isinstance(v, tuple):
                v = ",".join(repr(x) for x in v)
            lines.append(f"{f.name} = {v}")
        return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# loss


def loss_terms(image, target, lam: float = 0.2):
    """Returns (loss, dL/dimage, l2, dssim)."""
    image = np.asarray(image, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    if image.shape != target.shape:
        raise ValueError(f"render {image.shape} and target {target.shape} differ in shape")
    diff = image - target
    l2 = float(np.mean(diff**2))
    grad = (1.0 - lam) * 2.0 * diff / diff.size
    dssim = 0.0
    if lam > 0:
        s, gs = ssim_with_grad(image, target)
        dssim = (1.0 - s) / 2.0
        grad = grad - lam * 0.5 * gs
    return (1.0 - lam) * l2 + lam * dssim, grad, l2, dssim


def photometric_loss(image, target, lam: float = 0.2):
    L, g, _, _ = loss_terms(image, target, lam)
    return L, g


# ---------------------------------------------------------------------------
# optimizer


@dataclass
class AdamState:
    m: dict
    v: dict
    t: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-15

    @classmethod
    def for_scene(cls, scene: Scene) -> "AdamState":
        return cls(
            m={k: np.zeros_like(a) for k, a in scene.params().items()},
            v={k: np.zeros_like(a) for k, a in scene.params().items()},
        )

    def select(self, keep) -> None:
        for k in self.m:
            self.m[k] = self.m[k][keep]
            self.v[k] = self.v[k][keep]

    def extend(self, n: int) -> None:
        for k in self.m:
            pad = np.zeros((n,) + self.m[k].shape[1:])
            self.m[k] = np.concatenate([self.m[k], pad])
            self.v[k] = np.concatenate([self.v[k], pad])


def learning_rates(cfg: TrainConfig, iteration: int, extent: float) -> dict[str, float]:
    frac = iteration / max(cfg.iterations - 1, 1)
    return {
        "ctrl": cfg.lr_ctrl * extent * cfg.lr_ctrl_final ** min(frac, 1.0),
        "color": cfg.lr_color,
        "rotation": cfg.lr_rotation,
        "scaling": cfg.lr_scaling,
        "sh": cfg.lr_sh,
    }


def step(scene: Scene, grads: GradientBuffers, state: AdamState, lrs: dict[str, float]) -> None:
    """One Adam update in place, then clamp colors and renormalize rotations."""
    grads.check_finite()
    state.t += 1
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1**state.t
    c2 = 1.0 - b2**state.t
    for k, g in grads.as_dict().items():
        m = state.m[k]
        v = state.v[k]
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        p = getattr(scene, k)
        p -= lrs[k] * (m / c1) / (np.sqrt(v / c2) + state.eps)
    np.clip(scene.color, 0.0, 1.0, out=scene.color)
    q = np.linalg.norm(scene.rotation, axis=-1, keepdims=True)
    scene.rotation /= np.maximum(q, 1e-12)


# ---------------------------------------------------------------------------
# split / prune


def edge_map(target) -> np.ndarray:
    """Sobel magnitude of the grayscale target on a 0-255 scale."""
    return sobel_magnitude(luminance(target) * 255.0)


def _visibility_slots(bc: np.ndarray) -> np.ndarray:
    vm = visibility_map()
    r1 = vm.res - 1
    x = np.rint(bc[:, 1] * r1).astype(np.int64)
    y = np.rint(bc[:, 2] * r1).astype(np.int64)
    over = np.maximum(x + y - r1, 0)
    # push back inside the triangular half along the larger coordinate
    xs = np.where(x >= y, x - over, x)
    ys = np.where(x >= y, y, y - over)
    return vm.texel_index()[xs, ys]


def accumulate_split_stats(scene: Scene, grads: GradientBuffers | None, result: RenderResult, edges: np.ndarray) -> None:
    st = scene.stats
    st.n_views += 1
    rows = result.buffers.rows
    fg = rows >= 0
    if not fg.any():
        return
    r = rows[fg]
    n = len(scene)
    counts = np.bincount(r, minlength=n)
    visible = counts > 0
    st.vis_count += visible
    if grads is not None:
        st.grad_norm_sum[visible] += grads.position_norm()[visible]
        st.grad_count += visible
    esum = np.bincount(r, weights=edges[fg], minlength=n)
    st.edge_sum[visible] += esum[visible] / counts[visible]
    st.edge_views += visible
    slots = _visibility_slots(result.buffers.uv[fg])
    st.vis_texture[r, slots] = True


@dataclass
class SplitReport:
    split: int = 0
    pruned: int = 0
    dropped_splits: int = 0
    count: int = 0


# the middle child runs its v and w directions backwards, so its tangent
# frame is the parent's turned half way around the normal
_FLIPPED_CHILD = 3


def _half_turn_z(q: np.ndarray) -> np.ndarray:
    """Left-multiply (w, x, y, z) quaternions by a half turn about local z."""
    w, x, y, z = np.moveaxis(q, -1, 0)
    return np.stack([-z, -y, x, w], axis=-1)


def _child_arrays(scene: Scene, rows: np.ndarray) -> dict[str, np.ndarray]:
    out = {k: [] for k in Scene.PARAM_GROUPS}
    for r in rows:
        geo = subdivide_4(scene.ctrl[r])
        col = subdivide_4(scene.color[r])
        for c in range(4):
            out["ctrl"].append(geo[c])
            out["color"].append(col[c])
            for kind in ("rotation", "scaling", "sh"):
                layout = MAP_LAYOUT[kind]
                parent_bc = layout.texel_coords() @ SUBDIVISION_CORNERS[c]
                slots, wts = layout.weights(parent_bc)
                vals = np.einsum("nt,ntc->nc", wts, getattr(scene, kind)[r][slots])
                if kind == "rotation":
                    vals /= np.linalg.norm(vals, axis=-1, keepdims=True)
                    if c == _FLIPPED_CHILD:
                        vals = _half_turn_z(vals)
                out[kind].append(vals)
    return {k: np.array(v).reshape((-1,) + getattr(scene, k).shape[1:]) for k, v in out.items()}


def split_and_prune(scene: Scene, cfg: TrainConfig, rng: np.random.Generator, state: AdamState | None = None) -> SplitReport:
    st = scene.stats
    rep = SplitReport(count=len(scene))
    if st.n_views == 0:
        return rep
    n_tex = visibility_map().n_texels
    mean_grad = st.grad_norm_sum / np.maximum(st.grad_count, 1)
    mean_edge = st.edge_sum / np.maximum(st.edge_views, 1)
    prune = (
        (st.vis_count / st.n_views < cfg.tau_v)
        | (st.vis_texture.sum(1) / n_tex < cfg.tau_r)
        | (primitive_areas(scene.ctrl) < cfg.tau_a)
        | (aspect_ratios(scene.ctrl) > cfg.tau_s)
    )
    if prune.all():
        raise RuntimeError(f"split/prune would remove all {len(scene)} primitives")
    split = ((mean_grad > cfg.tau_g) | (mean_edge > cfg.tau_b)) & ~prune
    n_keep = int((~prune).sum())
    cand = np.flatnonzero(split)
    room = max((cfg.max_primitives - n_keep) // 3, 0)
    if len(cand) > room:
        chosen = np.sort(rng.choice(cand, size=room, replace=False))
        rep.dropped_splits = len(cand) - room
        cand = chosen
    children = _child_arrays(scene, cand) if len(cand) else None
    keep = ~prune
    keep[cand] = False
    scene.select(keep)
    if state is not None:
        state.select(keep)
    if children is not None:
        scene.extend(children)
        if state is not None:
            state.extend(len(children["ctrl"]))
    scene.stats.reset()
    rep.split = len(cand)
    rep.pruned = int(prune.sum())
    rep.count = len(scene)
    return rep


# ---------------------------------------------------------------------------
# loop


@dataclass
class TrainLog:
    rows: list = field(default_factory=list)
    events: list = field(default_factory=list)

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            wr = csv.writer(fh)
            wr.writerow(["iteration", "loss", "l2", "dssim", "primitive_count", "psnr_running"])
            for r in self.rows:
                wr.writerow([r["iteration"], repr(r["loss"]), repr(r["l2"]), repr(r["dssim"]), r["primitive_count"], repr(r["psnr_running"])])


def initial_scene(dataset, cfg: TrainConfig) -> Scene:
    from .scene import init_from_cube, init_from_point_cloud

    kw = dict(background=np.array(cfg.background), r_b=cfg.r_b)
    if cfg.init == "points":
        if dataset.points is None or len(dataset.points) == 0:
            raise ValueError("dataset has no point cloud; use init = cube")
        size = cfg.triangle_size if cfg.triangle_size > 0 else None
        return init_from_point_cloud(dataset.points, cfg.init_count, size, seed=cfg.seed, **kw)
    return init_from_cube(edge=2.0, per_face_subdiv=max(1, int(round(np.sqrt(cfg.init_count / 12)))), **kw)


def train_loop(dataset, cfg: TrainConfig, scene: Scene | None = None, log_path=None, checkpoint_dir=None, callback=None):
    """Optimize ``scene`` (or a fresh initial scene) on ``dataset``; returns (scene, TrainLog)."""
    from .dataio import save_checkpoint

    if len(dataset) == 0:
        raise ValueError("training needs at least one view")
    if scene is None:
        scene = initial_scene(dataset, cfg)
    scene.background = np.asarray(cfg.background, dtype=np.float64)
    scene.r_b = cfg.r_b
    rng = np.random.default_rng(cfg.seed)
    split_rng = np.random.default_rng([cfg.seed, 1])
    state = AdamState.for_scene(scene)
    extent = scene.extent()
    targets = dataset.targets(scene.background)
    edges = [edge_map(t) for t in targets]
    tlog = TrainLog()
    order = np.array([], dtype=np.int64)
    window = []
    for it in range(cfg.iterations):
        if len(order) == 0:
            order = rng.permutation(len(dataset))
        v = int(order[0])
        order = order[1:]
        cam = dataset.cameras[v]
        res = render(scene, cam, blend=cfg.blend)
        L, dC, l2, dssim = loss_terms(res.image, targets[v], cfg.lambda_dssim)
        grads = backward(res, scene, cam, dC)
        if it < cfg.split_until:
            accumulate_split_stats(scene, grads, res, edges[v])
        try:
            step(scene, grads, state, learning_rates(cfg, it, extent))
        except GradientError as exc:
            raise GradientError(f"iteration {it}, view {v}: {exc}") from None
        window.append(psnr(np.clip(res.image, 0, 1), targets[v]))
        done = it + 1
        if done % cfg.split_interval == 0 and done <= cfg.split_until and done < cfg.iterations:
            rep = split_and_prune(scene, cfg, split_rng, state)
            tlog.events.append({"iteration": done, **dataclasses.asdict(rep)})
            log.info("iter %d: split %d, pruned %d, count %d", done, rep.split, rep.pruned, rep.count)
        if done % cfg.log_every == 0 or done == cfg.iterations:
            row = {
                "iteration": done,
                "loss": L,
                "l2": l2,
                "dssim": dssim,
                "primitive_count": len(scene),
                "psnr_running": float(np.mean(window)),
            }
            window = []
            tlog.rows.append(row)
            log.info("iter %d loss %.5f psnr %.2f n %d", done, L, row["psnr_running"], len(scene))
            if log_path is not None:
                tlog.write_csv(log_path)
        if checkpoint_dir is not None and cfg.checkpoint_every and done % cfg.checkpoint_every == 0:
            save_checkpoint(scene, Path(checkpoint_dir) / f"iter_{done:06d}.bgt", state)
        if callback is not None:
            callback(it, scene, res)
    if log_path is not None:
        tlog.write_csv(log_path)
    return scene, tlog, state


def mean_l2(scene: Scene, dataset, blend: bool = True) -> float:
    targets = dataset.targets(scene.background)
    return float(np.mean([np.mean((render(scene, c, blend=blend).image - t) ** 2) for c, t in zip(dataset.cameras, targets)]))
