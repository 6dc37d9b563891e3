"""Figure output for the CLI: training curves and render/target grids."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .dataio import linear_to_srgb  # noqa: E402


def plot_training_log(rows: list[dict], path) -> Path:
    """Loss and running PSNR against iteration."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    it = [r["iteration"] for r in rows]
    fig, (ax0, ax1) = plt.subplots(1, 2, figsize=(9, 3.2))
    ax0.semilogy(it, [r["loss"] for r in rows], label="loss")
    ax0.semilogy(it, [r["l2"] for r in rows], label="L2")
    ax0.set_xlabel("iteration")
    ax0.legend()
    ax1.plot(it, [r["psnr_running"] for r in rows], color="tab:green")
    ax1.set_xlabel("iteration")
    ax1.set_ylabel("PSNR (dB)")
    ax2 = ax1.twinx()
    ax2.step(it, [r["primitive_count"] for r in rows], where="post", color="tab:gray", alpha=0.6)
    ax2.set_ylabel("primitives")
    fig.tight_layout()
    fig.savefig(path, dpi=110)
    plt.close(fig)
    return path


def plot_comparison(renders: list[np.ndarray], targets: list[np.ndarray], path, titles=None, max_views: int = 6) -> Path:
    """Rows of render | target | absolute error for the first few views."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    n = min(len(renders), max_views)
    fig, axes = plt.subplots(n, 3, figsize=(7.5, 2.5 * n), squeeze=False)
    for i in range(n):
        err = np.abs(renders[i] - targets[i]).mean(-1)
        panels = (linear_to_srgb(np.clip(renders[i], 0, 1)), linear_to_srgb(targets[i]), err)
        for j, img in enumerate(panels):
            ax = axes[i, j]
            ax.imshow(img, cmap="magma" if j == 2 else None, vmin=0, vmax=1 if j < 2 else max(float(err.max()), 1e-6))
            ax.set_xticks([])
            ax.set_yticks([])
        axes[i, 0].set_ylabel(titles[i] if titles else f"view {i}", fontsize=8)
    for j, name in enumerate(("render", "target", "|error|")):
        axes[0, j].set_title(name, fontsize=9)
    fig.tight_layout()
    fig.savefig(path, dpi=110)
    plt.close(fig)
    return path


def plot_metric_bars(per_view: list[dict], key: str, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    vals = [v[key] for v in per_view]
    fig, ax = plt.subplots(figsize=(6, 2.8))
    ax.bar(np.arange(len(vals)), vals, color="tab:blue")
    ax.axhline(float(np.mean(vals)), color="k", lw=0.8, ls="--")
    ax.set_xlabel("test view")
    ax.set_ylabel(key)
    fig.tight_layout()
    fig.savefig(path, dpi=110)
    plt.close(fig)
    return path
