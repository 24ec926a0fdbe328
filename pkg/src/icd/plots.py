"""Minimal self-contained SVG output for scatter, trajectory, frontier and loss plots."""

from __future__ import annotations

import csv
import os
from dataclasses import dataclass, field

import numpy as np

PALETTE = ("#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f",
           "#bcbd22", "#17becf")
KINDS = ("scatter", "trajectory", "frontier", "loss-curve")


class PlotInputError(ValueError):
    def __init__(self, path: str, line: int, msg: str):
        super().__init__(f"{path}:{line}: {msg}")
        self.path = path
        self.line = line


def _fmt(v: float) -> str:
    return f"{v:.2f}"


class Canvas:
    """Data-space to pixel-space mapping plus an ordered list of SVG elements."""

    def __init__(self, width: int, height: int, extent: np.ndarray, margin: int = 40, equal: bool = True):
        extent = np.asarray(extent, dtype=np.float64).reshape(-1, 2)
        lo, hi = extent.min(axis=0), extent.max(axis=0)
        span = np.maximum(hi - lo, 1e-9)
        lo, hi = lo - 0.05 * span, hi + 0.05 * span
        self.w, self.h, self.margin = width, height, margin
        sx = (width - 2 * margin) / (hi[0] - lo[0])
        sy = (height - 2 * margin) / (hi[1] - lo[1])
        if equal:
            sx = sy = min(sx, sy)
        self.lo, self.sx, self.sy = lo, sx, sy
        self.items: list[str] = []

    def px(self, p) -> tuple[float, float]:
        return (self.margin + (p[0] - self.lo[0]) * self.sx,
                self.h - self.margin - (p[1] - self.lo[1]) * self.sy)

    def line(self, a, b, color: str = "#000000", width: float = 1.0) -> None:
        (x1, y1), (x2, y2) = self.px(a), self.px(b)
        self.items.append(f'<line x1="{_fmt(x1)}" y1="{_fmt(y1)}" x2="{_fmt(x2)}" y2="{_fmt(y2)}" '
                          f'stroke="{color}" stroke-width="{width}"/>')

    def polyline(self, pts, color: str = "#000000", width: float = 1.0) -> None:
        coords = " ".join(f"{_fmt(x)},{_fmt(y)}" for x, y in (self.px(p) for p in pts))
        self.items.append(f'<polyline points="{coords}" fill="none" stroke="{color}" stroke-width="{width}"/>')

    def points(self, pts, color: str = "#000000", r: float = 2.0) -> None:
        for p in pts:
            x, y = self.px(p)
            self.items.append(f'<circle cx="{_fmt(x)}" cy="{_fmt(y)}" r="{r}" fill="{color}"/>')

    def text(self, x: float, y: float, s: str, size: int = 12, anchor: str = "start") -> None:
        s = s.replace("&", "&amp;").replace("<", "&lt;").replace(">", "&gt;")
        self.items.append(f'<text x="{_fmt(x)}" y="{_fmt(y)}" font-size="{size}" '
                          f'font-family="sans-serif" text-anchor="{anchor}">{s}</text>')

    def axes(self, xlabel: str = "", ylabel: str = "") -> None:
        m = self.margin
        self.items.append(f'<rect x="{m}" y="{m}" width="{self.w - 2 * m}" height="{self.h - 2 * m}" '
                          'fill="none" stroke="#444444" stroke-width="1"/>')
        if xlabel:
            self.text(self.w / 2, self.h - 8, xlabel, anchor="middle")
        if ylabel:
            self.text(8, m - 10, ylabel)

    def render(self) -> str:
        head = (f'<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{self.w}" height="{self.h}" '
                f'viewBox="0 0 {self.w} {self.h}">')
        body = [f'<rect width="{self.w}" height="{self.h}" fill="#ffffff"/>'] + self.items
        return "\n".join([head, *body, "</svg>"]) + "\n"


@dataclass
class PlotSpec:
    kind: str
    inputs: list[str] = field(default_factory=list)
    title: str = ""
    size: int = 480

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown plot kind {self.kind!r}; expected one of {', '.join(KINDS)}")
        if not self.inputs:
            raise ValueError("plot needs at least one input file")


def read_csv(path: str, required: tuple[str, ...]) -> dict[str, np.ndarray]:
    """Numeric columns of a header-row CSV; malformed rows report their line number."""
    if not os.path.exists(path):
        raise FileNotFoundError(f"plot input not found: {path}")
    with open(path, newline="") as f:
        rows = list(csv.reader(f))
    if not rows:
        raise PlotInputError(path, 1, "empty file")
    header = rows[0]
    missing = [k for k in required if k not in header]
    if missing:
        raise PlotInputError(path, 1, f"missing column(s) {', '.join(missing)}")
    cols: dict[str, list[float]] = {k: [] for k in header}
    for lineno, row in enumerate(rows[1:], start=2):
        if len(row) != len(header):
            raise PlotInputError(path, lineno, f"expected {len(header)} fields, got {len(row)}")
        for k, v in zip(header, row):
            try:
                cols[k].append(float(v))
            except ValueError:
                if k in required:
                    raise PlotInputError(path, lineno, f"non-numeric value {v!r} in column {k}") from None
                cols[k].append(float("nan"))
    return {k: np.asarray(v) for k, v in cols.items()}


def scatter_svg(cols: dict[str, np.ndarray], size: int = 480, title: str = "") -> str:
    pts = np.stack([cols["x"], cols["y"]], axis=1)
    cv = Canvas(size, size, pts)
    cv.axes("x", "y")
    labels = cols.get("label", cols.get("class"))
    if labels is None:
        cv.points(pts, PALETTE[0])
    else:
        for k in np.unique(labels[np.isfinite(labels)]):
            cv.points(pts[labels == k], PALETTE[int(k) % len(PALETTE)])
    if title:
        cv.text(size / 2, 20, title, 14, "middle")
    return cv.render()


def trajectory_svg(cols: dict[str, np.ndarray], size: int = 480, title: str = "") -> str:
    pts = np.stack([cols["x"], cols["y"]], axis=1)
    cv = Canvas(size, size, pts)
    cv.axes("x", "y")
    sample, stage = cols["sample"].astype(int), cols["stage"].astype(int)
    for i in np.unique(sample):
        sel = sample == i
        order = np.argsort(stage[sel], kind="stable")
        cv.polyline(pts[sel][order], PALETTE[i % len(PALETTE)], 0.6)
    last = stage == stage.max()
    cv.points(pts[stage == 0], "#000000", 1.5)
    cv.points(pts[last], "#d62728", 1.5)
    if title:
        cv.text(size / 2, 20, title, 14, "middle")
    return cv.render()


def frontier_svg(cols: dict[str, np.ndarray], size: int = 480, title: str = "") -> str:
    pts = np.stack([cols["preservation"], cols["edit_success"]], axis=1)
    cv = Canvas(size, size, pts, equal=False)
    cv.axes("mean displacement", "edit success")
    order = np.argsort(pts[:, 0], kind="stable")
    cv.polyline(pts[order], PALETTE[0], 1.5)
    cv.points(pts, PALETTE[3], 3.0)
    if "tau" in cols:
        for p, tau in zip(pts, cols["tau"]):
            x, y = cv.px(p)
            cv.text(x + 5, y - 5, f"tau={tau:g}", 10)
    if title:
        cv.text(size / 2, 20, title, 14, "middle")
    return cv.render()


def loss_svg(cols: dict[str, np.ndarray], size: int = 480, title: str = "") -> str:
    step = cols["step"]
    names = [k for k in cols if k != "step" and np.all(np.isfinite(cols[k])) and np.any(cols[k] > 0)]
    ys = np.concatenate([np.log10(np.maximum(cols[k], 1e-12)) for k in names]) if names else np.zeros(1)
    extent = np.stack([np.concatenate([step] * max(len(names), 1)), ys], axis=1)
    cv = Canvas(size, size, extent, equal=False)
    cv.axes("step", "log10 loss")
    for i, k in enumerate(names):
        y = np.log10(np.maximum(cols[k], 1e-12))
        cv.polyline(np.stack([step, y], axis=1), PALETTE[i % len(PALETTE)], 1.0)
        cv.text(size - cv.margin - 4, cv.margin + 14 * (i + 1), k, 10, "end")
    if title:
        cv.text(size / 2, 20, title, 14, "middle")
    return cv.render()


_REQUIRED = {
    "scatter": ("x", "y"),
    "trajectory": ("sample", "stage", "x", "y"),
    "frontier": ("edit_success", "preservation"),
    "loss-curve": ("step",),
}
_RENDER = {"scatter": scatter_svg, "trajectory": trajectory_svg, "frontier": frontier_svg, "loss-curve": loss_svg}


def emit_plot(spec: PlotSpec, out_path: str) -> str:
    """Render ``spec`` from its first input CSV and write the SVG; returns the SVG text."""
    cols = read_csv(spec.inputs[0], _REQUIRED[spec.kind])
    svg = _RENDER[spec.kind](cols, spec.size, spec.title)
    os.makedirs(os.path.dirname(os.path.abspath(out_path)), exist_ok=True)
    with open(out_path, "w", newline="\n") as f:
        f.write(svg)
    return svg
