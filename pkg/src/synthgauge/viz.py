"""Exact t-SNE and deterministic SVG / CSV writers."""
import csv
import io
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Optional

import numpy as np

from . import _kernels
from ._rng import rng_for
from .errors import NumericalError, ValidationError

MAX_POINTS = 2000
CLASS_COLORS = {0: "#d62728", 1: "#1f77b4"}  # benign red, malignant blue
CLASS_NAMES = {0: "benign", 1: "malignant"}


@dataclass
class TsneConfig:
    output_dims: int = 2
    perplexity: float = 30.0
    iterations: int = 1000
    learning_rate: Optional[float] = None  # None: max(N / exaggeration / 4, 50)
    seed: int = 0
    exaggeration: float = 12.0
    exaggeration_iters: int = 250
    momentum: float = 0.5
    final_momentum: float = 0.8
    momentum_switch: int = 250


@dataclass
class TsneResult:
    layout: np.ndarray
    kl_history: List[float] = field(default_factory=list)
    row_entropies: Optional[np.ndarray] = None
    conditional_p: Optional[np.ndarray] = None


def joint_probabilities(x, perplexity):
    """Symmetrised input affinities plus the calibrated conditional rows."""
    d2 = _kernels.sq_dists(x, x)
    cond, _ = _kernels.perplexity_rows(d2, np.log(perplexity))
    p = (cond + cond.T) / (2.0 * x.shape[0])
    return p, cond


def row_entropies(cond):
    """Shannon entropy (nats) of each conditional row."""
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = np.where(cond > 0, -cond * np.log(cond), 0.0)
    return terms.sum(axis=1)


def tsne(x, cfg=None, return_info=False):
    """Exact O(N^2) t-SNE with momentum and per-parameter gains.

    After early exaggeration ends, a step that raises the KL objective is
    rejected and momentum restarts with half the step size, so the recorded
    KL history is non-increasing from then on.
    """
    cfg = cfg or TsneConfig()
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2:
        raise ValidationError(f"expected an N x D matrix, got shape {x.shape}")
    n = x.shape[0]
    if n < 10 or n > MAX_POINTS:
        raise ValidationError(f"t-SNE supports 10 <= N <= {MAX_POINTS}, got {n}")
    if cfg.output_dims not in (2, 3):
        raise ValidationError(f"output_dims must be 2 or 3, got {cfg.output_dims}")
    if not 0 < cfg.perplexity < (n - 1) / 3.0:
        raise ValidationError(f"perplexity {cfg.perplexity} must lie in (0, {(n - 1) / 3.0:.3f}) for N={n}")
    lr = cfg.learning_rate or max(n / cfg.exaggeration / 4.0, 50.0)
    p, cond = joint_probabilities(x, cfg.perplexity)
    y = 1e-4 * rng_for(cfg.seed, "tsne").standard_normal((n, cfg.output_dims))

    def exaggeration(it):
        return cfg.exaggeration if it < cfg.exaggeration_iters else 1.0

    def evaluate(y_, it):
        grad_, kl_ = _kernels.tsne_grad(y_, p, exaggeration(it))
        if not np.all(np.isfinite(grad_)):
            raise NumericalError(f"non-finite t-SNE gradient at iteration {it}")
        return grad_, kl_

    update = np.zeros_like(y)
    gains = np.ones_like(y)
    step_scale = 1.0
    history = []
    grad, kl = evaluate(y, 0)
    for it in range(cfg.iterations):
        mom = cfg.momentum if it < cfg.momentum_switch else cfg.final_momentum
        history.append(kl)
        same = np.sign(grad) == np.sign(update)
        gains = np.maximum(np.where(same, gains * 0.8, gains + 0.2), 0.01)
        update = mom * update - lr * step_scale * gains * grad
        y_new = y + update
        y_new -= y_new.mean(axis=0)
        grad_new, kl_new = evaluate(y_new, it + 1)
        if it + 1 > cfg.exaggeration_iters and kl_new > kl:
            # safeguard once exaggeration is off: drop the step, restart momentum
            update = np.zeros_like(y)
            gains = np.ones_like(y)
            step_scale *= 0.5
            if it + 1 == cfg.exaggeration_iters + 1:
                grad, kl = evaluate(y, it + 1)
            continue
        y, grad, kl = y_new, grad_new, kl_new
        if it + 1 > cfg.exaggeration_iters:
            step_scale = min(1.0, step_scale * 1.1)
    history.append(kl)
    y = y - y.mean(axis=0)
    if not return_info:
        return y
    return TsneResult(y, history, row_entropies(cond), cond)


# ----------------------------------------------------------------------------
# SVG
# ----------------------------------------------------------------------------

PANEL = 360
MARGIN = 40


def _fmt(v):
    return f"{v:.2f}"


def _panel(out, ox, oy, xs, ys, labels, sources, title):
    x0, y0 = ox + MARGIN, oy + MARGIN
    size = PANEL - 2 * MARGIN
    out.append('<g class="panel">')
    out.append(f'<text x="{_fmt(ox + PANEL / 2)}" y="{_fmt(oy + 20)}" text-anchor="middle" font-size="12">{title}</text>')
    out.append(f'<line x1="{_fmt(x0)}" y1="{_fmt(y0 + size)}" x2="{_fmt(x0 + size)}" y2="{_fmt(y0 + size)}" stroke="black"/>')
    out.append(f'<line x1="{_fmt(x0)}" y1="{_fmt(y0)}" x2="{_fmt(x0)}" y2="{_fmt(y0 + size)}" stroke="black"/>')
    if len(xs):
        def scale(v):
            lo, hi = float(np.min(v)), float(np.max(v))
            span = hi - lo if hi > lo else 1.0
            return (np.asarray(v) - lo) / span

        px = x0 + 5 + scale(xs) * (size - 10)
        py = y0 + size - 5 - scale(ys) * (size - 10)
        for cx, cy, lab, src in zip(px, py, labels, sources):
            color = CLASS_COLORS.get(int(lab), "#7f7f7f")
            if src == "synthetic":
                out.append(f'<rect x="{_fmt(cx - 3)}" y="{_fmt(cy - 3)}" width="6" height="6" fill="{color}" fill-opacity="0.7"/>')
            else:
                out.append(f'<circle cx="{_fmt(cx)}" cy="{_fmt(cy)}" r="3" fill="{color}" fill-opacity="0.7"/>')
    out.append("</g>")


def _legend(out, y):
    items = [("circle", 0, "real benign"), ("circle", 1, "real malignant"), ("rect", 0, "synthetic benign"), ("rect", 1, "synthetic malignant")]
    for i, (shape, lab, text) in enumerate(items):
        x = MARGIN + i * 150
        color = CLASS_COLORS[lab]
        if shape == "circle":
            out.append(f'<circle cx="{x}" cy="{y}" r="4" fill="{color}"/>')
        else:
            out.append(f'<rect x="{x - 4}" y="{y - 4}" width="8" height="8" fill="{color}"/>')
        out.append(f'<text x="{x + 8}" y="{y + 4}" font-size="11">{text}</text>')


def scatter_svg(layout, labels=None, sources=None, title="embedding"):
    """SVG 1.1 scatter; 3-D layouts become three pairwise-axis panels."""
    layout = np.asarray(layout, dtype=np.float64)
    if layout.size == 0:
        layout = layout.reshape(0, 2) if layout.ndim < 2 or layout.shape[1] == 0 else layout
    n, dims = layout.shape
    labels = np.zeros(n, dtype=int) if labels is None else np.asarray(labels)
    sources = ["real"] * n if sources is None else list(sources)
    if labels.shape != (n,) or len(sources) != n:
        raise ValidationError("labels and sources must align with layout rows")
    if dims not in (2, 3):
        raise ValidationError(f"layout must be 2-D or 3-D, got {dims} columns")
    pairs = [(0, 1)] if dims == 2 else [(0, 1), (0, 2), (1, 2)]
    width = PANEL * len(pairs)
    height = PANEL + 30
    out = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{width}" height="{height}" viewBox="0 0 {width} {height}">',
        f"<title>{title}</title>",
        f'<rect x="0" y="0" width="{width}" height="{height}" fill="white"/>',
    ]
    for i, (a, b) in enumerate(pairs):
        _panel(out, i * PANEL, 0, layout[:, a], layout[:, b], labels, sources, f"{title}: axis {a + 1} vs {b + 1}")
    _legend(out, PANEL + 15)
    out.append("</svg>")
    return "\n".join(out) + "\n"


def emit_scatter(layout, labels, sources, path, title="embedding"):
    text = scatter_svg(layout, labels, sources, title)
    try:
        Path(path).write_text(text, encoding="utf-8")
    except OSError as exc:
        raise OSError(f"{path}: {exc}") from exc
    return path


def small_multiples_svg(grid, title="sweep"):
    """One panel per (index, alpha) cell; each plots sample components by position."""
    rows = sorted({g[0] for g in grid}, key=[g[0] for g in grid].index)
    cols = sorted({g[1] for g in grid}, key=[g[1] for g in grid].index)
    cell = 120
    width, height = cell * len(cols) + 60, cell * len(rows) + 40
    all_vals = np.concatenate([np.asarray(g[2]).ravel() for g in grid]) if grid else np.zeros(1)
    lo, hi = float(all_vals.min()), float(all_vals.max())
    span = hi - lo if hi > lo else 1.0
    out = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{width}" height="{height}" viewBox="0 0 {width} {height}">',
        f"<title>{title}</title>",
        f'<rect x="0" y="0" width="{width}" height="{height}" fill="white"/>',
    ]
    for j, a in enumerate(cols):
        out.append(f'<text x="{_fmt(60 + j * cell + cell / 2)}" y="20" text-anchor="middle" font-size="11">alpha={a:g}</text>')
    for i, r in enumerate(rows):
        out.append(f'<text x="5" y="{_fmt(40 + i * cell + cell / 2)}" font-size="11">dir {r}</text>')
    for idx, alpha, sample in grid:
        i, j = rows.index(idx), cols.index(alpha)
        ox, oy = 60 + j * cell, 30 + i * cell
        out.append(f'<rect x="{ox + 2}" y="{oy + 2}" width="{cell - 4}" height="{cell - 4}" fill="none" stroke="#999999"/>')
        sample = np.asarray(sample).ravel()
        m = max(sample.size - 1, 1)
        for k, v in enumerate(sample):
            cx = ox + 8 + (cell - 16) * k / m
            cy = oy + cell - 8 - (cell - 16) * (v - lo) / span
            out.append(f'<circle cx="{_fmt(cx)}" cy="{_fmt(cy)}" r="2" fill="#333333"/>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def emit_small_multiples(grid, path, title="sweep"):
    Path(path).write_text(small_multiples_svg(grid, title), encoding="utf-8")
    return path


# ----------------------------------------------------------------------------
# CSV
# ----------------------------------------------------------------------------


def _cell(v):
    if v is None:
        return ""
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, (np.integer,)):
        return str(int(v))
    return str(v)


def csv_text(rows, header=None):
    """RFC 4180 text. ``rows`` are dicts (``header`` picks/order columns) or sequences."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\r\n")
    rows = list(rows)
    if rows and isinstance(rows[0], dict):
        header = list(header or rows[0].keys())
        writer.writerow(header)
        for r in rows:
            writer.writerow([_cell(r.get(h)) for h in header])
    else:
        if header:
            writer.writerow(header)
        for r in rows:
            writer.writerow([_cell(v) for v in r])
    return buf.getvalue()


def emit_csv(rows, path, header=None):
    try:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(csv_text(rows, header))
    except OSError as exc:
        raise OSError(f"{path}: {exc}") from exc
    return path
