"""Metric curves (SVG) and generated-sample grids (PNG)."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402
from PIL import Image  # noqa: E402

from ..exceptions import ValidationError  # noqa: E402
from ..metrics.report import read_metrics  # noqa: E402
from ..model_zoo import Checkpoint, ParamStore, load_checkpoint  # noqa: E402
from ..training import generate  # noqa: E402


def moving_average(values, window: int = 20) -> np.ndarray:
    """Trailing mean over the last ``window`` points (fewer at the start)."""
    if window < 1:
        raise ValidationError("window must be >= 1")
    v = np.asarray(values, dtype=np.float64)
    if v.size == 0:
        return v
    c = np.cumsum(np.insert(v, 0, 0.0))
    idx = np.arange(1, v.size + 1)
    lo = np.maximum(idx - window, 0)
    return (c[idx] - c[lo]) / (idx - lo)


def plot_metrics(log_paths, out_path, metric: str = "fid", window: int = 20, key: str = "",
                 labels: dict | None = None) -> Path:
    """One smoothed curve per ``(log, run_id)`` for ``metric``; writes an SVG.

    ``labels`` optionally maps run ids to legend names.
    """
    if isinstance(log_paths, (str, Path)):
        log_paths = [log_paths]
    curves = []
    for path in log_paths:
        reports = read_metrics(path) if Path(path).exists() else []
        rows = [r for r in reports if r.metric == metric and r.key == key]
        if not rows:
            raise ValidationError(f"{path}: no {metric!r} entries to plot")
        for run_id in sorted({r.run_id for r in rows}):
            pts = sorted((r.iteration, r.value) for r in rows if r.run_id == run_id)
            curves.append((run_id, [p[0] for p in pts], [p[1] for p in pts]))
    labels = labels or {}
    fig, ax = plt.subplots(figsize=(6, 4))
    for run_id, its, vals in curves:
        ax.plot(its, moving_average(vals, window), label=labels.get(run_id, run_id))
    ax.set_xlabel("iteration")
    ax.set_ylabel(metric if not key else f"{metric}[{key}]")
    ax.legend(fontsize=7)
    fig.tight_layout()
    out_path = Path(out_path)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    # A fixed hash salt and no date keep the SVG byte-stable across runs.
    with matplotlib.rc_context({"svg.hashsalt": "gantransfer"}):
        fig.savefig(out_path, format="svg", metadata={"Date": None})
    plt.close(fig)
    return out_path


def _to_uint8(images: np.ndarray) -> np.ndarray:
    x = np.clip((images + 1.0) * 127.5 + 0.5, 0, 255).astype(np.uint8)
    return x.transpose(0, 2, 3, 1)


def sample_grid(checkpoint, n_rows: int, n_cols: int, seed: int, out_path, per_class: bool | None = None,
                padding: int = 2) -> Path:
    """Save an ``n_rows x n_cols`` grid of generated images as PNG.

    For conditional generators row ``r`` shows class ``r`` by default. Each
    cell is surrounded by ``padding`` black pixels.
    """
    if n_rows < 1 or n_cols < 1:
        raise ValidationError("grid needs at least one row and one column")
    if isinstance(checkpoint, ParamStore):
        g = checkpoint
    elif isinstance(checkpoint, Checkpoint):
        g = checkpoint.param_store
    else:
        g = load_checkpoint(checkpoint).param_store
    if g.spec.role != "generator":
        raise ValidationError("sample grids need a generator checkpoint")
    if per_class is None:
        per_class = g.spec.is_conditional
    labels = None
    if per_class:
        if not g.spec.is_conditional:
            raise ValidationError("per-class rows need a conditional generator")
        if n_rows > g.spec.n_classes:
            raise ValidationError(f"n_rows={n_rows} exceeds the {g.spec.n_classes} classes")
        labels = np.repeat(np.arange(n_rows), n_cols)
    imgs = _to_uint8(generate(g, n_rows * n_cols, seed, labels=labels))
    s, c = g.spec.image_size, g.spec.channels
    step = s + padding
    canvas = np.zeros((n_rows * step + padding, n_cols * step + padding, c), dtype=np.uint8)
    for i, img in enumerate(imgs):
        r, col = divmod(i, n_cols)
        y, x = padding + r * step, padding + col * step
        canvas[y:y + s, x:x + s] = img
    mode = "L" if c == 1 else "RGB"
    out_path = Path(out_path)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    Image.fromarray(canvas[..., 0] if c == 1 else canvas, mode=mode).save(out_path, format="PNG")
    return out_path
