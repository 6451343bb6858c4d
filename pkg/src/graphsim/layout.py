"""Fruchterman-Reingold layout and node-link rendering to SVG/PNG."""

from __future__ import annotations

import io
import math
from dataclasses import dataclass, field

import numpy as np
from PIL import Image, ImageDraw

from .generators import make_rng
from .graph import Graph


@dataclass(frozen=True)
class Layout:
    positions: tuple[tuple[float, float], ...]
    energy_trace: tuple[float, ...] = field(default=(), compare=False, repr=False)

    def __len__(self) -> int:
        return len(self.positions)


@dataclass(frozen=True)
class RenderStyle:
    canvas: int = 1024
    node_fill: str = "#1f77b4"
    node_stroke: str = "#ffffff"
    edge_stroke: str = "#555555"
    edge_width: float = 1.5
    background: str = "#ffffff"
    margin: float = 0.05
    min_radius: float = 4.0
    max_radius: float = 12.0

    def __post_init__(self) -> None:
        if self.canvas < 64:
            raise ValueError("canvas must be at least 64 px")
        if not 0.0 <= self.margin < 0.4:
            raise ValueError("margin must lie in [0, 0.4)")

    def node_radius(self, n: int) -> float:
        return min(self.max_radius, max(self.min_radius, 200.0 / math.sqrt(n)))


def fr_energy(pos: np.ndarray, edges: np.ndarray, k: float) -> float:
    """Attractive ``d^3/(3k)`` over edges plus repulsive ``-k^2 ln d`` over pairs."""
    n = len(pos)
    if n < 2:
        return 0.0
    iu, ju = np.triu_indices(n, k=1)
    d = np.linalg.norm(pos[iu] - pos[ju], axis=1)
    rep = -(k**2) * np.log(np.maximum(d, 1e-12)).sum()
    if len(edges) == 0:
        return float(rep)
    de = np.linalg.norm(pos[edges[:, 0]] - pos[edges[:, 1]], axis=1)
    return float((de**3).sum() / (3 * k) + rep)


def fr_positions(g: Graph, iterations: int = 500, seed: int = 0) -> tuple[np.ndarray, list[float]]:
    """Raw FR coordinates (unit-square area) plus energy after the first and last iteration."""
    if iterations < 1:
        raise ValueError("iterations must be >= 1")
    n = g.node_count
    rng = make_rng(seed)
    pos = rng.random((n, 2))
    if n == 1:
        return pos, [0.0]
    k = math.sqrt(1.0 / n)
    t0 = 0.1
    edges = np.array(g.edges, dtype=int).reshape(-1, 2)
    trace = []
    kk = k * k
    for it in range(iterations):
        x = pos[:, 0]
        y = pos[:, 1]
        dx = x[:, None] - x[None, :]
        dy = y[:, None] - y[None, :]
        d2 = dx * dx + dy * dy
        np.fill_diagonal(d2, 1.0)
        np.maximum(d2, 1e-18, out=d2)
        # repulsion k^2/d along the unit vector delta/d
        w = kk / d2
        np.fill_diagonal(w, 0.0)
        disp = np.stack([(dx * w).sum(axis=1), (dy * w).sum(axis=1)], axis=1)
        if len(edges):
            ed = pos[edges[:, 0]] - pos[edges[:, 1]]
            el = np.sqrt((ed * ed).sum(axis=1))
            pull = ed * (el / k)[:, None]  # d^2/k along ed/d
            for axis in (0, 1):
                disp[:, axis] += np.bincount(edges[:, 1], weights=pull[:, axis], minlength=n)
                disp[:, axis] -= np.bincount(edges[:, 0], weights=pull[:, axis], minlength=n)
        temp = t0 * (1.0 - it / iterations)
        length = np.maximum(np.linalg.norm(disp, axis=1), 1e-12)
        pos = pos + disp * (np.minimum(length, temp) / length)[:, None]
        if it == 0 or it == iterations - 1:
            trace.append(fr_energy(pos, edges, k))
    return pos, trace


def rescale(pos: np.ndarray, margin: float) -> np.ndarray:
    """Uniformly scale and centre ``pos`` into ``[margin, 1-margin]^2``."""
    lo = pos.min(axis=0)
    span = (pos.max(axis=0) - lo).max()
    inner = 1.0 - 2.0 * margin
    if span <= 0:
        return np.full_like(pos, 0.5)
    scaled = (pos - lo) / span * inner
    offset = (1.0 - (scaled.max(axis=0) - scaled.min(axis=0))) / 2.0
    return np.clip(scaled + offset, margin, 1.0 - margin)


def fr_layout(g: Graph, iterations: int = 500, seed: int = 0, margin: float = 0.05) -> Layout:
    if g.node_count == 1:
        return Layout(((0.5, 0.5),), (0.0,))
    pos, trace = fr_positions(g, iterations, seed)
    out = rescale(pos, margin)
    return Layout(tuple((float(x), float(y)) for x, y in out), tuple(trace))


# -- rendering ---------------------------------------------------------------


def _check(g: Graph, layout: Layout) -> None:
    if len(layout) != g.node_count:
        raise ValueError(f"layout has {len(layout)} positions for {g.node_count} nodes")


def _pixels(layout: Layout, size: float) -> list[tuple[float, float]]:
    # y grows downward in image space
    return [(x * size, (1.0 - y) * size) for x, y in layout.positions]


def render_svg(g: Graph, layout: Layout, style: RenderStyle = RenderStyle()) -> bytes:
    _check(g, layout)
    size = style.canvas
    px = _pixels(layout, size)
    r = style.node_radius(g.node_count)
    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{size}" height="{size}" '
        f'viewBox="0 0 {size} {size}">',
        f'<rect x="0" y="0" width="{size}" height="{size}" fill="{style.background}"/>',
        f'<g stroke="{style.edge_stroke}" stroke-width="{style.edge_width:g}">',
    ]
    for u, v in g.edges:
        (x1, y1), (x2, y2) = px[u], px[v]
        out.append(f'<line x1="{x1:.2f}" y1="{y1:.2f}" x2="{x2:.2f}" y2="{y2:.2f}"/>')
    out.append("</g>")
    out.append(f'<g fill="{style.node_fill}" stroke="{style.node_stroke}" stroke-width="1">')
    for x, y in px:
        out.append(f'<circle cx="{x:.2f}" cy="{y:.2f}" r="{r:.2f}"/>')
    out.append("</g>")
    out.append("</svg>")
    return ("\n".join(out) + "\n").encode("utf-8")


def render_png(g: Graph, layout: Layout, style: RenderStyle = RenderStyle(), supersample: int = 2) -> bytes:
    _check(g, layout)
    size = style.canvas * supersample
    img = Image.new("RGB", (size, size), style.background)
    draw = ImageDraw.Draw(img)
    px = _pixels(layout, size)
    width = max(1, round(style.edge_width * supersample))
    for u, v in g.edges:
        draw.line([px[u], px[v]], fill=style.edge_stroke, width=width)
    r = style.node_radius(g.node_count) * supersample
    for x, y in px:
        draw.ellipse([x - r, y - r, x + r, y + r], fill=style.node_fill, outline=style.node_stroke, width=supersample)
    if supersample > 1:
        img = img.resize((style.canvas, style.canvas), Image.LANCZOS)
    buf = io.BytesIO()
    img.save(buf, format="PNG", optimize=False)
    return buf.getvalue()


def render(g: Graph, layout: Layout, style: RenderStyle = RenderStyle()) -> dict[str, bytes]:
    return {"svg": render_svg(g, layout, style), "png": render_png(g, layout, style)}
