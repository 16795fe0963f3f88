"""Confusion matrices and SVG rendering of training curves and confusion grids.

All renderers are pure string builders: identical inputs give identical bytes.
"""

from __future__ import annotations

from dataclasses import dataclass
from xml.sax.saxutils import escape

import numpy as np

from cascademl.errors import ValidationError
from cascademl.neuralnet import TrainingHistory

TRAIN_COLOR = "#1f77b4"
VAL_COLOR = "#d62728"
MARK_COLOR = "#2ca02c"


@dataclass(frozen=True)
class ConfusionMatrix:
    counts: np.ndarray  # rows = true class, columns = predicted class
    class_names: tuple[str, ...]

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    @property
    def accuracy(self) -> float:
        return float(np.trace(self.counts) / self.total) if self.total else float("nan")

    def row_percentages(self) -> list[list[float | None]]:
        out = []
        for row in self.counts:
            s = row.sum()
            out.append([None if s == 0 else 100.0 * v / s for v in row])
        return out


@dataclass
class PlotSpec:
    show_min_max: bool = True
    user_metric: str | None = None
    title: str = "Training history"


def confusion_matrix(true_labels, predicted_labels, class_names) -> ConfusionMatrix:
    t = np.asarray(true_labels, dtype=int).ravel()
    p = np.asarray(predicted_labels, dtype=int).ravel()
    if t.shape != p.shape:
        raise ValidationError(f"length mismatch: {t.size} true labels vs {p.size} predictions")
    n = len(class_names)
    if n < 1:
        raise ValidationError("at least one class name is required")
    for arr, what in ((t, "true"), (p, "predicted")):
        if arr.size and (arr.min() < 0 or arr.max() >= n):
            raise ValidationError(f"{what} label out of range for {n} classes")
    counts = np.zeros((n, n), dtype=np.int64)
    np.add.at(counts, (t, p), 1)
    return ConfusionMatrix(counts, tuple(str(c) for c in class_names))


def _fmt_cell(count: int, pct: float | None) -> str:
    return f"{count} (—)" if pct is None else f"{count} ({pct:.1f}%)"


def confusion_text(cm: ConfusionMatrix, title: str = "") -> str:
    """Fixed-width table: rows are true classes, columns predicted classes."""
    pcts = cm.row_percentages()
    cells = [[_fmt_cell(int(c), p) for c, p in zip(row, prow)] for row, prow in zip(cm.counts, pcts)]
    corner = "true \\ pred"
    first_w = max([len(corner)] + [len(n) for n in cm.class_names])
    col_w = [
        max(len(cm.class_names[j]), *(len(cells[i][j]) for i in range(len(cells))))
        for j in range(len(cm.class_names))
    ]
    lines = []
    if title:
        lines.append(title)
    lines.append("  ".join([corner.ljust(first_w)] + [n.rjust(w) for n, w in zip(cm.class_names, col_w)]))
    for name, row in zip(cm.class_names, cells):
        lines.append("  ".join([name.ljust(first_w)] + [c.rjust(w) for c, w in zip(row, col_w)]))
    lines.append(f"accuracy: {cm.accuracy!r} ({int(np.trace(cm.counts))}/{cm.total})")
    return "\n".join(lines) + "\n"


def _num(v: float) -> str:
    return f"{v:.2f}"


def _svg_open(width: int, height: int) -> list[str]:
    return [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="12">',
        f'<rect x="0" y="0" width="{width}" height="{height}" fill="white"/>',
    ]


def render_confusion(cm: ConfusionMatrix, title: str = "Confusion matrix") -> tuple[str, str]:
    """Return ``(svg_document, text_table)`` carrying the same numbers."""
    n = len(cm.class_names)
    cell = 90
    left, top = 130, 70
    width, height = left + n * cell + 30, top + n * cell + 60
    pcts = cm.row_percentages()
    out = _svg_open(width, height)
    out.append(f'<text x="{width / 2:.1f}" y="24" text-anchor="middle" font-size="16">{escape(title)}</text>')
    out.append(f'<text x="{left + n * cell / 2:.1f}" y="{top - 30}" text-anchor="middle">Predicted</text>')
    out.append(
        f'<text x="20" y="{top + n * cell / 2:.1f}" text-anchor="middle" '
        f'transform="rotate(-90 20 {top + n * cell / 2:.1f})">True</text>'
    )
    for j, name in enumerate(cm.class_names):
        out.append(
            f'<text class="col-label" x="{left + j * cell + cell / 2:.1f}" y="{top - 8}" '
            f'text-anchor="middle">{escape(name)}</text>'
        )
    for i, name in enumerate(cm.class_names):
        y0 = top + i * cell
        out.append(
            f'<text class="row-label" x="{left - 8}" y="{y0 + cell / 2 + 4:.1f}" '
            f'text-anchor="end">{escape(name)}</text>'
        )
        for j in range(n):
            pct = pcts[i][j]
            shade = 0.0 if pct is None else pct / 100.0
            level = int(round(255 - 180 * shade))
            fill = f"rgb({level},{level},255)"
            ink = "white" if shade > 0.6 else "black"
            x0 = left + j * cell
            out.append(
                f'<rect x="{x0}" y="{y0}" width="{cell}" height="{cell}" fill="{fill}" stroke="#444"/>'
            )
            out.append(
                f'<text class="cell" data-row="{i}" data-col="{j}" x="{x0 + cell / 2:.1f}" '
                f'y="{y0 + cell / 2 + 4:.1f}" text-anchor="middle" fill="{ink}">'
                f"{escape(_fmt_cell(int(cm.counts[i, j]), pct))}</text>"
            )
    out.append(
        f'<text x="{left}" y="{height - 20}">accuracy {cm.accuracy:.4f} '
        f"({int(np.trace(cm.counts))}/{cm.total})</text>"
    )
    out.append("</svg>")
    return "\n".join(out) + "\n", confusion_text(cm, title)


def best_epoch_index(values, mode: str) -> int:
    """First occurrence of the minimum (``mode="min"``) or maximum."""
    arr = np.asarray(values, dtype=np.float64)
    return int(np.argmin(arr) if mode == "min" else np.argmax(arr))


def _panel(out, values_by_name, x0, y0, w, h, ylabel, marker):
    names = list(values_by_name)
    all_vals = np.concatenate([np.asarray(values_by_name[n], dtype=float) for n in names])
    lo, hi = float(all_vals.min()), float(all_vals.max())
    if hi - lo < 1e-12:
        lo, hi = lo - 0.5, hi + 0.5
    n_epochs = len(values_by_name[names[0]])

    def px(i):
        return x0 + (w / 2 if n_epochs == 1 else i * w / (n_epochs - 1))

    def py(v):
        return y0 + h - (v - lo) / (hi - lo) * h

    out.append(f'<rect x="{x0}" y="{y0}" width="{w}" height="{h}" fill="none" stroke="#888"/>')
    out.append(f'<text x="{x0 - 45}" y="{y0 + h / 2:.1f}" transform="rotate(-90 {x0 - 45} {y0 + h / 2:.1f})" '
               f'text-anchor="middle">{escape(ylabel)}</text>')
    out.append(f'<text x="{x0 - 5}" y="{y0 + 4}" text-anchor="end">{hi:.4g}</text>')
    out.append(f'<text x="{x0 - 5}" y="{y0 + h + 4}" text-anchor="end">{lo:.4g}</text>')
    out.append(f'<text x="{x0 + w / 2:.1f}" y="{y0 + h + 30}" text-anchor="middle">epoch</text>')
    for i in range(n_epochs):
        if n_epochs <= 20 or i % max(1, n_epochs // 10) == 0:
            out.append(f'<text x="{_num(px(i))}" y="{y0 + h + 15}" text-anchor="middle" font-size="10">{i + 1}</text>')
    for k, name in enumerate(names):
        color = VAL_COLOR if name.startswith("val_") else TRAIN_COLOR
        vals = values_by_name[name]
        pts = " ".join(f"{_num(px(i))},{_num(py(v))}" for i, v in enumerate(vals))
        out.append(f'<polyline class="series" data-name="{escape(name)}" points="{pts}" '
                   f'fill="none" stroke="{color}" stroke-width="2"/>')
        for i, v in enumerate(vals):
            out.append(f'<circle cx="{_num(px(i))}" cy="{_num(py(v))}" r="2.5" fill="{color}"/>')
        out.append(f'<text x="{x0 + w - 5}" y="{y0 + 15 + 15 * k}" text-anchor="end" fill="{color}">{escape(name)}</text>')
    if marker is not None:
        name, idx, label = marker
        v = values_by_name[name][idx]
        out.append(f'<circle class="marker" data-series="{escape(name)}" data-epoch="{idx}" '
                   f'cx="{_num(px(idx))}" cy="{_num(py(v))}" r="6" fill="none" stroke="{MARK_COLOR}" stroke-width="2"/>')
        out.append(f'<text class="annotation" x="{_num(px(idx) + 8)}" y="{_num(py(v) - 8)}" fill="{MARK_COLOR}">'
                   f'{escape(label)}: {v:.4f} (epoch {idx + 1})</text>')


def render_history(history: TrainingHistory, spec: PlotSpec | None = None) -> str:
    """Loss panel plus an optional user-metric panel, as one SVG document."""
    spec = spec or PlotSpec()
    if not history.records:
        raise ValidationError("history is empty")
    keys = history.keys
    if spec.user_metric is not None and spec.user_metric not in keys:
        raise ValidationError(f"unknown user_metric {spec.user_metric!r}; history has {keys}")
    panels = [("loss", "min", "min val_loss" if "val_loss" in keys else "min loss")]
    if spec.user_metric is not None:
        panels.append((spec.user_metric, "max", f"max val_{spec.user_metric}"))
    pw, ph = 520, 240
    width, height = pw + 120, 60 + len(panels) * (ph + 70)
    out = _svg_open(width, height)
    out.append(f'<text x="{width / 2:.1f}" y="24" text-anchor="middle" font-size="16">{escape(spec.title)}</text>')
    for p, (metric, mode, label) in enumerate(panels):
        series = {metric: history.series(metric)}
        if f"val_{metric}" in keys:
            series[f"val_{metric}"] = history.series(f"val_{metric}")
        marker = None
        if spec.show_min_max:
            target = f"val_{metric}" if f"val_{metric}" in series else metric
            if target == metric:
                label = f"{mode} {metric}"
            marker = (target, best_epoch_index(series[target], mode), label)
        _panel(out, series, 80, 50 + p * (ph + 70), pw, ph, metric, marker)
    out.append("</svg>")
    return "\n".join(out) + "\n"


def plot_history_curves(history: TrainingHistory, show_min_max_plot=True, user_metric=None, path=None) -> str:
    svg = render_history(history, PlotSpec(show_min_max_plot, user_metric))
    if path is not None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(svg)
    return svg
