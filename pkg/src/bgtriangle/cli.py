"""``bgtri`` command line: synth, train, render, eval, export-strokes, check-grad.

Outputs go under ``--out`` with a fixed layout::

    checkpoints/  renders/  logs/  metrics.json
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import __version__

log = logging.getLogger("bgtriangle")


# ---------------------------------------------------------------------------
# shared helpers


def _set_threads(n: int | None) -> int:
    import numba

    avail = numba.config.NUMBA_NUM_THREADS
    if n is None:
        return numba.get_num_threads()
    if n < 1:
        raise ValueError("--threads must be >= 1")
    if n > avail:
        log.warning("--threads %d exceeds the %d available; using %d", n, avail, avail)
        n = avail
    numba.set_num_threads(n)
    return n


def _layout(out: Path) -> dict[str, Path]:
    paths = {k: out / k for k in ("checkpoints", "renders", "logs")}
    for p in paths.values():
        p.mkdir(parents=True, exist_ok=True)
    return paths


def _default_checkpoint(args) -> Path:
    if args.checkpoint:
        return Path(args.checkpoint)
    return Path(args.out) / "checkpoints" / "final.bgt"


def _default_data(args) -> Path:
    return Path(args.data) if args.data else Path(args.out) / "data"


def _train_flag(name: str) -> str:
    return "--" + name.replace("_", "-")


def _train_config(args):
    from .train import TrainConfig

    values = {}
    if args.config:
        values.update(TrainConfig.read_file(args.config))
    for f in dataclasses.fields(TrainConfig):
        v = getattr(args, f"cfg_{f.name}", None)
        if v is not None:
            values[f.name] = v
    if args.seed is not None:
        values["seed"] = args.seed
    return TrainConfig(**values)


def _cameras(args, ds=None):
    """Cameras from a dataset split or an explicit look-at eye, close-up adjusted."""
    from .camera import look_at

    if args.eye is not None:
        cams = [look_at(args.eye, fov_x=args.fov, width=args.width, height=args.height)]
        names = ["view"]
    else:
        cams, names = list(ds.cameras), list(ds.names)
    if args.distance_scale != 1.0:
        cams = [c.moved_closer(args.distance_scale) for c in cams]
    if args.zoom != 1.0:
        cams = [c.zoomed(args.zoom) for c in cams]
    return cams, names


# ---------------------------------------------------------------------------
# subcommands


def cmd_synth(args) -> int:
    from .synth import make_dataset

    out = _default_data(args)
    make_dataset(
        out, kind=args.kind, texture=args.texture, texels=args.texels, n_train=args.n_train, n_test=args.n_test,
        radius=args.radius, seed=args.seed or 0, width=args.width, height=args.height, closeup=args.closeup,
        supersample=args.supersample, n_points=args.n_points, point_noise=args.point_noise, fov=args.fov,
    )
    print(json.dumps({"dataset": str(out)}))
    return 0


def cmd_train(args) -> int:
    from .dataio import load_checkpoint, load_dataset, save_checkpoint
    from .report import plot_training_log
    from .train import train_loop

    cfg = _train_config(args)
    paths = _layout(Path(args.out))
    ds = load_dataset(_default_data(args), "train", srgb=not args.no_srgb, limit=args.limit)
    scene = load_checkpoint(args.resume) if args.resume else None
    (paths["logs"] / "config.txt").write_text(cfg.to_text())
    scene, tlog, state = train_loop(
        ds, cfg, scene=scene, log_path=paths["logs"] / "train.csv", checkpoint_dir=paths["checkpoints"]
    )
    final = paths["checkpoints"] / "final.bgt"
    save_checkpoint(scene, final, state, dtype=args.checkpoint_dtype)
    (paths["logs"] / "events.json").write_text(json.dumps(tlog.events, indent=1))
    if tlog.rows:
        plot_training_log(tlog.rows, paths["logs"] / "training.png")
    last = tlog.rows[-1] if tlog.rows else {}
    print(json.dumps({"checkpoint": str(final), "primitives": len(scene), **{k: last[k] for k in ("loss", "psnr_running") if k in last}}))
    return 0


def cmd_render(args) -> int:
    from .dataio import load_checkpoint, load_dataset, save_image
    from .render import render_image

    scene = load_checkpoint(_default_checkpoint(args))
    ds = None if args.eye is not None else load_dataset(_default_data(args), args.split, limit=args.limit)
    cams, names = _cameras(args, ds)
    out = _layout(Path(args.out))["renders"]
    written = []
    for cam, name in zip(cams, names):
        img = render_image(scene, cam, blend=not args.no_blend)
        p = out / f"{name}{args.suffix}.png"
        save_image(p, np.clip(img, 0, 1))
        written.append(str(p))
    print(json.dumps({"renders": len(written), "dir": str(out)}))
    return 0


def _chamfer_for(scene, root, density: float, seed: int):
    from .metrics import chamfer
    from .scene import sample_scene_points
    from .synth import read_scene

    ref = read_scene(root) if root is not None else None
    if ref is None:
        return None
    pts = sample_scene_points(scene, density, seed=seed)
    gt = ref.sample_surface(len(pts), np.random.default_rng(seed))
    return chamfer(pts, gt)


def evaluate(scene, cams, targets, names, *, blend: bool = True, edge_threshold: float = 0.1):
    """Per-view metrics and the rendered images."""
    from .metrics import edge_band, edge_sharpness, psnr, ssim
    from .render import render_image

    per_view, images = [], []
    for cam, tgt, name in zip(cams, targets, names):
        img = np.clip(render_image(scene, cam, blend=blend), 0, 1)
        row = {"view": name, "psnr": psnr(img, tgt), "ssim": ssim(img, tgt)}
        band = edge_band(tgt, edge_threshold)
        if band.any():
            row["edge_sharpness"] = edge_sharpness(img, band)
        per_view.append(row)
        images.append(img)
    return per_view, images


def _targets(scene, ds, cams, moved: bool, supersample: int = 4):
    """Stored views, or fresh reference renders when the cameras were moved."""
    from .synth import composite_over, read_scene, render_reference

    if not moved:
        return ds.targets(scene.background)
    ref = read_scene(ds.root)
    if ref is None:
        raise ValueError("--zoom/--distance-scale evaluation needs the analytic scene.json of a synth dataset")
    return [composite_over(*render_reference(ref, c, supersample), scene.background) for c in cams]


def _aggregate(per_view: list[dict]) -> dict:
    agg = {}
    for k in ("psnr", "ssim", "edge_sharpness"):
        vals = [r[k] for r in per_view if k in r]
        if vals:
            agg[k] = float(np.mean(vals))
    return agg


def cmd_eval(args) -> int:
    from .dataio import load_checkpoint, load_dataset
    from .report import plot_comparison, plot_metric_bars

    if args.eye is not None:
        raise ValueError("--eye applies to render only; eval uses dataset views")
    scene = load_checkpoint(_default_checkpoint(args))
    root = _default_data(args)
    ds = load_dataset(root, args.split, limit=args.limit)
    cams, _ = _cameras(args, ds)
    targets = _targets(scene, ds, cams, args.zoom != 1.0 or args.distance_scale != 1.0)
    per_view, images = evaluate(scene, cams, targets, ds.names, blend=not args.no_blend, edge_threshold=args.edge_threshold)
    result = {"split": args.split, "blend": not args.no_blend, "aggregate": _aggregate(per_view), "per_view": per_view}
    if not args.no_chamfer:
        ch = _chamfer_for(scene, root, args.chamfer_density, args.seed or 0)
        if ch is not None:
            result["aggregate"]["chamfer"] = ch
    out = Path(args.out)
    paths = _layout(out)
    (out / "metrics.json").write_text(json.dumps(result, indent=1, default=float))
    plot_comparison(images, targets, paths["renders"] / "eval_grid.png", titles=ds.names)
    finite = [r for r in per_view if np.isfinite(r["psnr"])]
    if finite:
        plot_metric_bars(finite, "psnr", paths["renders"] / "eval_psnr.png")
    print(json.dumps(result["aggregate"]))
    return 0


def cmd_export_strokes(args) -> int:
    from .dataio import default_stroke_threshold, export_strokes, load_checkpoint

    scene = load_checkpoint(_default_checkpoint(args))
    thr = args.threshold if args.threshold is not None else default_stroke_threshold(scene, args.level)
    path = Path(args.output) if args.output else Path(args.out) / "strokes.obj"
    n = export_strokes(scene, thr, path, level=args.level)
    print(json.dumps({"strokes": str(path), "segments": n, "threshold": thr}))
    return 0


def cmd_check_grad(args) -> int:
    from .backward import fd_passes, finite_difference_check, gradcheck_scene, random_selectors, write_fd_report

    seed = args.seed or 0
    rng = np.random.default_rng(seed)
    scene, cam = gradcheck_scene(seed, args.size)
    target = rng.random((cam.height, cam.width, 3))
    sel = random_selectors(scene, args.per_group, rng)
    rows = finite_difference_check(scene, cam, target, sel, eps=args.eps, blend=not args.no_blend)
    path = Path(args.output) if args.output else _layout(Path(args.out))["logs"] / "gradcheck.csv"
    write_fd_report(rows, path)
    checked = [r for r in rows if not r.excluded]
    failed = [r for r in checked if not fd_passes(r, args.rtol)]
    print(json.dumps({"report": str(path), "checked": len(checked), "excluded": len(rows) - len(checked), "failed": len(failed)}))
    return 1 if failed else 0


# ---------------------------------------------------------------------------
# parser


def _add_train_flags(p: argparse.ArgumentParser) -> None:
    from .train import TrainConfig

    g = p.add_argument_group("training config (override --config)")
    for f in dataclasses.fields(TrainConfig):
        if f.name == "seed":  # the global --seed
            continue
        flag = _train_flag(f.name)
        dest = f"cfg_{f.name}"
        if isinstance(f.default, bool):
            g.add_argument(flag, dest=dest, type=lambda s, k=f.name: TrainConfig.parse_value(k, s), metavar="BOOL",
                           help=f"default {f.default}")
        elif isinstance(f.default, tuple):
            g.add_argument(flag, dest=dest, type=float, nargs=3, metavar=("R", "G", "B"), help=f"default {f.default}")
        else:
            g.add_argument(flag, dest=dest, type=type(f.default), metavar=type(f.default).__name__.upper(),
                           help=f"default {f.default}")


def _add_camera_flags(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("cameras")
    g.add_argument("--split", default="test", help="dataset split to use (default test)")
    g.add_argument("--limit", type=int, help="use only the first N views")
    g.add_argument("--zoom", type=float, default=1.0, help="focal-length multiplier for close-ups")
    g.add_argument("--distance-scale", type=float, default=1.0, help="scale camera distance to the origin")
    g.add_argument("--eye", type=float, nargs=3, help="render one look-at view from this point instead of a dataset")
    g.add_argument("--fov", type=float, default=0.6911112070083618, help="horizontal fov (radians) for --eye")
    g.add_argument("--width", type=int, default=128)
    g.add_argument("--height", type=int, default=128)
    g.add_argument("--no-blend", action="store_true", help="disable discontinuity-aware blending (w = 1)")


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=argparse.SUPPRESS, help="random seed")
    common.add_argument("--config", default=argparse.SUPPRESS, help="key = value training config file")
    common.add_argument("--threads", type=int, default=argparse.SUPPRESS, help="worker threads for render/backward")
    common.add_argument("--out", default=argparse.SUPPRESS, help="output directory (default ./out)")
    common.add_argument("--data", default=argparse.SUPPRESS, help="dataset directory (default OUT/data)")
    common.add_argument("-v", "--verbose", action="store_true", default=argparse.SUPPRESS, help="log progress")

    parser = argparse.ArgumentParser(prog="bgtri", description="Bezier Gaussian triangle toolkit", parents=[common])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", metavar="COMMAND")

    p = sub.add_parser("synth", parents=[common], help="generate a toy dataset")
    p.add_argument("--kind", choices=("cube", "ball"), default="cube")
    p.add_argument("--texture", choices=("checker", "stripes"), default="checker")
    p.add_argument("--texels", type=int, default=4)
    p.add_argument("--n-train", type=int, default=100)
    p.add_argument("--n-test", type=int, default=20)
    p.add_argument("--radius", type=float, default=5.0, help="camera distance")
    p.add_argument("--width", type=int, default=128)
    p.add_argument("--height", type=int, default=128)
    p.add_argument("--closeup", action="store_true", help="test cameras at 40%% of the distance")
    p.add_argument("--supersample", type=int, default=4)
    p.add_argument("--n-points", type=int, default=2000, help="coarse point cloud size")
    p.add_argument("--point-noise", type=float, default=0.01)
    p.add_argument("--fov", type=float, default=0.6911112070083618)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("train", parents=[common], help="optimize a scene on a dataset")
    p.add_argument("--resume", help="start from this checkpoint")
    p.add_argument("--limit", type=int, help="use only the first N training views")
    p.add_argument("--no-srgb", action="store_true", help="treat image values as linear")
    p.add_argument("--checkpoint-dtype", choices=("<f4", "<f8"), default="<f4")
    _add_train_flags(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("render", parents=[common], help="render a checkpoint")
    p.add_argument("--checkpoint", help="default OUT/checkpoints/final.bgt")
    p.add_argument("--suffix", default="", help="appended to output file names")
    _add_camera_flags(p)
    p.set_defaults(func=cmd_render)

    p = sub.add_parser("eval", parents=[common], help="metrics of a checkpoint on a dataset split")
    p.add_argument("--checkpoint", help="default OUT/checkpoints/final.bgt")
    p.add_argument("--edge-threshold", type=float, default=0.1, help="Sobel level defining the edge band")
    p.add_argument("--chamfer-density", type=float, default=2000.0, help="surface samples per unit area")
    p.add_argument("--no-chamfer", action="store_true")
    _add_camera_flags(p)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("export-strokes", parents=[common], help="write small tessellated faces as line strokes")
    p.add_argument("--checkpoint", help="default OUT/checkpoints/final.bgt")
    p.add_argument("--threshold", type=float, help="face area limit (default 10x the median)")
    p.add_argument("--level", type=int, default=3, help="tessellation level")
    p.add_argument("--output", help="default OUT/strokes.obj")
    p.set_defaults(func=cmd_export_strokes)

    p = sub.add_parser("check-grad", parents=[common], help="finite-difference check of the analytic backward on a seeded three-primitive scene")
    p.add_argument("--size", type=int, default=16, help="render size")
    p.add_argument("--per-group", type=int, default=25, help="parameters sampled per group")
    p.add_argument("--eps", type=float, default=1e-5)
    p.add_argument("--rtol", type=float, default=2e-3)
    p.add_argument("--no-blend", action="store_true")
    p.add_argument("--output", help="CSV path (default OUT/logs/gradcheck.csv)")
    p.set_defaults(func=cmd_check_grad)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    argv = sys.argv[1:] if argv is None else list(argv)
    if not argv:
        parser.print_usage(sys.stderr)
        return 2
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    if getattr(args, "command", None) is None:
        parser.print_usage(sys.stderr)
        return 2
    for k, default in (("seed", None), ("config", None), ("threads", None), ("out", "out"), ("data", None), ("verbose", False)):
        if not hasattr(args, k):
            setattr(args, k, default)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        _set_threads(args.threads)
        return args.func(args)
    except KeyboardInterrupt:
        print("error: interrupted", file=sys.stderr)
        return 130
    except Exception as exc:  # one line, machine readable
        print(f"error: {type(exc).__name__}: {exc}".replace("\n", " "), file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
