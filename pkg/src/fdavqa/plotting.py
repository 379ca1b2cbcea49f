"""Minimal SVG line and bar charts for metrics CSV files."""

from __future__ import annotations

import csv
from pathlib import Path
from xml.sax.saxutils import escape

PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b")
PANEL_W, PANEL_H = 420, 280
MARGIN = 48


def _num(s):
    return None if s in ("", None) else float(s)


class Panel:
    """One chart area at (x0, y0) with data ranges mapped onto it."""

    def __init__(self, x0, y0, xlim, ylim, w=PANEL_W, h=PANEL_H):
        self.x0, self.y0, self.w, self.h = x0, y0, w, h
        self.xlim = xlim if xlim[1] > xlim[0] else (xlim[0] - 0.5, xlim[0] + 0.5)
        self.ylim = ylim if ylim[1] > ylim[0] else (ylim[0] - 0.5, ylim[0] + 0.5)
        self.parts: list[str] = []

    def px(self, x):
        lo, hi = self.xlim
        return self.x0 + MARGIN + (x - lo) / (hi - lo) * (self.w - 2 * MARGIN)

    def py(self, y):
        lo, hi = self.ylim
        return self.y0 + self.h - MARGIN - (y - lo) / (hi - lo) * (self.h - 2 * MARGIN)

    def text(self, x, y, s, size=11, anchor="middle"):
        self.parts.append(f'<text x="{x:.1f}" y="{y:.1f}" font-size="{size}" '
                          f'text-anchor="{anchor}">{escape(str(s))}</text>')

    def axes(self, title, xlabel, ylabel, yticks=5):
        left, right = self.x0 + MARGIN, self.x0 + self.w - MARGIN
        top, bottom = self.y0 + MARGIN, self.y0 + self.h - MARGIN
        self.parts.append(f'<rect x="{left:.1f}" y="{top:.1f}" width="{right - left:.1f}" '
                          f'height="{bottom - top:.1f}" fill="none" stroke="#444"/>')
        self.text(self.x0 + self.w / 2, self.y0 + MARGIN / 2, title, 13)
        self.text(self.x0 + self.w / 2, bottom + 34, xlabel)
        self.text(self.x0 + 12, (top + bottom) / 2, ylabel, anchor="start")
        lo, hi = self.ylim
        for k in range(yticks + 1):
            v = lo + (hi - lo) * k / yticks
            y = self.py(v)
            self.parts.append(f'<line x1="{left - 4:.1f}" y1="{y:.1f}" x2="{left:.1f}" '
                              f'y2="{y:.1f}" stroke="#444"/>')
            self.text(left - 6, y + 4, f"{v:.2f}", 9, "end")

    def line(self, points, color, label, slot):
        if not points:
            return
        path = " ".join(f"{self.px(x):.1f},{self.py(y):.1f}" for x, y in points)
        self.parts.append(f'<polyline points="{path}" fill="none" stroke="{color}" '
                          f'stroke-width="2"/>')
        for x, y in points:
            self.parts.append(f'<circle cx="{self.px(x):.1f}" cy="{self.py(y):.1f}" r="2.5" '
                              f'fill="{color}"/>')
        self.legend(color, label, slot)

    def legend(self, color, label, slot):
        lx = self.x0 + self.w - MARGIN - 110
        ly = self.y0 + MARGIN + 12 + 14 * slot
        self.parts.append(f'<rect x="{lx:.1f}" y="{ly - 8:.1f}" width="10" height="10" '
                          f'fill="{color}"/>')
        self.text(lx + 14, ly + 1, label, 10, "start")


def _document(panels, width, height) -> str:
    body = "\n".join(p for panel in panels for p in panel.parts)
    return (f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
            f'viewBox="0 0 {width} {height}">\n<rect width="100%" height="100%" fill="white"/>\n'
            f"{body}\n</svg>\n")


def learning_curve_svg(rows: list[dict]) -> str:
    """Training loss and validation accuracy per epoch, plus a bar chart of the last epoch."""
    train = [(r["epoch"], r["loss"]) for r in rows if r["split"] == "train" and r["loss"] is not None]
    val = {m: [(r["epoch"], r["all"]) for r in rows
               if r["split"] == "val" and r["mode"] == m and r["all"] is not None]
           for m in ("open", "mc")}
    epochs = [e for e, _ in train] or [0, 1]
    losses = [v for _, v in train] or [0.0, 1.0]

    loss_panel = Panel(0, 0, (min(epochs), max(epochs)), (0.0, max(losses) * 1.05))
    loss_panel.axes("Training loss", "epoch", "loss")
    loss_panel.line(train, PALETTE[0], "train loss", 0)

    acc_panel = Panel(PANEL_W, 0, (min(epochs), max(epochs)), (0.0, 1.0))
    acc_panel.axes("Validation accuracy", "epoch", "acc")
    for k, (m, pts) in enumerate(val.items()):
        acc_panel.line(pts, PALETTE[k + 1], f"val {m}", k)

    last = [r for r in rows if r["split"] == "val"]
    groups = []
    if last:
        final = max(r["epoch"] for r in last)
        groups = [(r["mode"], {k: r[k] for k in ("all", "yesno", "number", "other")})
                  for r in last if r["epoch"] == final]
    bar_panel = bar_panel_for(groups, 2 * PANEL_W, "Final validation accuracy")
    return _document([loss_panel, acc_panel, bar_panel], 3 * PANEL_W, PANEL_H)


def bar_panel_for(groups, x0, title) -> Panel:
    """Grouped bars: one group per label, one bar per metric column."""
    panel = Panel(x0, 0, (0.0, 1.0), (0.0, 1.0))
    panel.axes(title, "", "acc")
    if not groups:
        panel.text(x0 + PANEL_W / 2, PANEL_H / 2, "(no data)")
        return panel
    keys = list(groups[0][1])
    inner = PANEL_W - 2 * MARGIN
    slot = inner / len(groups)
    bar = slot * 0.8 / len(keys)
    for g, (label, values) in enumerate(groups):
        gx = x0 + MARGIN + g * slot + slot * 0.1
        for k, key in enumerate(keys):
            v = values.get(key)
            if v is None:
                continue
            top = panel.py(v)
            panel.parts.append(f'<rect x="{gx + k * bar:.1f}" y="{top:.1f}" width="{bar:.1f}" '
                               f'height="{panel.py(0.0) - top:.1f}" fill="{PALETTE[k % len(PALETTE)]}"/>')
        panel.text(gx + slot * 0.4, PANEL_H - MARGIN + 14, label, 10)
    for k, key in enumerate(keys):
        panel.legend(PALETTE[k % len(PALETTE)], key, k)
    return panel


def ablation_svg(rows: list[dict]) -> str:
    """Bar chart of the seed-averaged rows of an ablation CSV, one panel per mode."""
    panels = []
    modes = list(dict.fromkeys(r["mode"] for r in rows if r["seed"] == "mean"))
    for k, mode in enumerate(modes):
        groups = [(r["title"], {c: _num(r[c]) for c in ("all", "yesno", "other", "number")})
                  for r in rows if r["seed"] == "mean" and r["mode"] == mode]
        panels.append(bar_panel_for(groups, k * PANEL_W, f"Ablation ({mode})"))
    if not panels:
        panels.append(bar_panel_for([], 0, "Ablation"))
    return _document(panels, PANEL_W * len(panels), PANEL_H)


def plot_metrics_csv(csv_path, svg_path) -> Path:
    """Render a training-history or ablation CSV to SVG."""
    with open(csv_path, newline="", encoding="utf-8") as f:
        reader = csv.DictReader(f)
        columns = reader.fieldnames or []
        rows = list(reader)
    if "epoch" in columns:
        from .training import read_history_csv
        svg = learning_curve_svg(read_history_csv(csv_path))
    elif "title" in columns and "seed" in columns:
        svg = ablation_svg(rows)
    else:
        raise ValueError(f"{csv_path}: not a training history or ablation CSV (columns {columns})")
    out = Path(svg_path)
    out.write_text(svg, encoding="utf-8")
    return out
