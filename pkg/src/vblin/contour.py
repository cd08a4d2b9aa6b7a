"""Marching squares contours and a small deterministic SVG writer."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#e377c2", "#17becf")


@dataclass
class Polyline:
    points: np.ndarray    # (K, 2)
    closed: bool


@dataclass
class ContourFigure:
    window: tuple
    resolution: int
    levels: list
    lines: dict = field(default_factory=dict)   # level -> list of Polyline
    title: str = ""

    def empty_levels(self):
        return [c for c in self.levels if not self.lines.get(c)]

    def to_svg(self, size: int = 480) -> str:
        return render_svg(self, size)


def _edge_point(key, U, V, F, c):
    kind, i, j = key
    if kind == "h":
        p, q = (i, j), (i + 1, j)
    else:
        p, q = (i, j), (i, j + 1)
    fp, fq = F[p], F[q]
    s = 0.5 if fq == fp else (c - fp) / (fq - fp)
    s = min(max(s, 0.0), 1.0)
    return (U[p] + s * (U[q] - U[p]), V[p] + s * (V[q] - V[p]))


def marching_squares(f, c: float, window, resolution: int):
    """Segments of {f = c} as pairs of edge keys, plus the edge-point lookup.

    Saddle cells are split according to the sign of f at the cell center.
    """
    (u0, u1), (v0, v1) = window
    n = int(resolution)
    us = np.linspace(u0, u1, n + 1)
    vs = np.linspace(v0, v1, n + 1)
    U, V = np.meshgrid(us, vs, indexing="ij")
    F = np.asarray(f(np.stack([U.ravel(), V.ravel()], axis=1)), dtype=float).reshape(n + 1, n + 1)
    above = F >= c
    cu = 0.5 * (us[:-1] + us[1:])
    cv = 0.5 * (vs[:-1] + vs[1:])
    CU, CV = np.meshgrid(cu, cv, indexing="ij")
    center = np.asarray(f(np.stack([CU.ravel(), CV.ravel()], axis=1)), dtype=float).reshape(n, n) >= c

    segments = []
    for i in range(n):
        for j in range(n):
            a, b, cc, d = above[i, j], above[i + 1, j], above[i + 1, j + 1], above[i, j + 1]
            if a == b == cc == d:
                continue
            edges = [("h", i, j), ("v", i + 1, j), ("h", i, j + 1), ("v", i, j)]
            crossed = [a != b, b != cc, cc != d, d != a]
            hit = [e for e, x in zip(edges, crossed) if x]
            if len(hit) == 2:
                segments.append((hit[0], hit[1]))
            elif center[i, j] == a:
                # a and c joined through the center; b and d are cut off
                segments.append((edges[0], edges[1]))
                segments.append((edges[2], edges[3]))
            else:
                segments.append((edges[3], edges[0]))
                segments.append((edges[1], edges[2]))
    return segments, (U, V, F)


def _chain(segments):
    """Join segments sharing edge keys into ordered key paths."""
    adj = {}
    for k, (p, q) in enumerate(segments):
        adj.setdefault(p, []).append(k)
        adj.setdefault(q, []).append(k)
    used = [False] * len(segments)
    paths = []

    def walk(start):
        path = [start]
        cur = start
        while True:
            nxt = [k for k in adj[cur] if not used[k]]
            if not nxt:
                return path
            k = nxt[0]
            used[k] = True
            p, q = segments[k]
            cur = q if p == cur else p
            path.append(cur)

    for key in sorted(adj):
        if len(adj[key]) == 1 and not all(used[k] for k in adj[key]):
            paths.append((walk(key), False))
    for key in sorted(adj):
        if not all(used[k] for k in adj[key]):
            path = walk(key)
            paths.append((path, path[0] == path[-1]))
    return paths


def contour_lines(f, c: float, window, resolution: int = 200):
    segments, (U, V, F) = marching_squares(f, c, window, resolution)
    out = []
    for path, closed in _chain(segments):
        pts = np.array([_edge_point(k, U, V, F, c) for k in path])
        out.append(Polyline(pts, closed))
    return out


def contour_figure(f, levels, window, resolution: int = 200, title: str = "") -> ContourFigure:
    window = tuple(tuple(float(x) for x in w) for w in window)
    fig = ContourFigure(window, int(resolution), [float(c) for c in levels], title=title)
    for c in fig.levels:
        fig.lines[c] = contour_lines(f, c, window, resolution)
    return fig


def _fmt(x: float) -> str:
    s = f"{x:.3f}".rstrip("0").rstrip(".")
    return "0" if s in ("-0", "") else s


def render_svg(fig: ContourFigure, size: int = 480) -> str:
    (u0, u1), (v0, v1) = fig.window
    pad = 20
    sx = (size - 2 * pad) / (u1 - u0)
    sy = (size - 2 * pad) / (v1 - v0)

    def px(p):
        return _fmt(pad + (p[0] - u0) * sx), _fmt(size - pad - (p[1] - v0) * sy)

    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{size}" height="{size}" viewBox="0 0 {size} {size}">',
        f"<title>{_escape(fig.title)}</title>",
        f'<rect x="0" y="0" width="{size}" height="{size}" fill="white"/>',
    ]
    ox, oy = px((0.0, 0.0))
    if u0 <= 0 <= u1:
        out.append(f'<line x1="{ox}" y1="{_fmt(pad)}" x2="{ox}" y2="{_fmt(size - pad)}" stroke="#cccccc" stroke-width="0.5"/>')
    if v0 <= 0 <= v1:
        out.append(f'<line x1="{_fmt(pad)}" y1="{oy}" x2="{_fmt(size - pad)}" y2="{oy}" stroke="#cccccc" stroke-width="0.5"/>')
    for idx, c in enumerate(fig.levels):
        color = PALETTE[idx % len(PALETTE)]
        out.append(f'<g class="level" data-level="{_fmt(c)}" stroke="{color}" fill="none" stroke-width="1.2">')
        for line in fig.lines.get(c, []):
            coords = [" ".join(px(p)) for p in line.points]
            d = "M " + " L ".join(coords) + (" Z" if line.closed else "")
            out.append(f'<path d="{d}"/>')
        out.append("</g>")
        out.append(
            f'<text x="{_fmt(pad + 4)}" y="{_fmt(pad + 14 * (idx + 1))}" font-size="11" fill="{color}">c = {_fmt(c)}</text>'
        )
    out.append("</svg>")
    return "\n".join(out) + "\n"


def _escape(text: str) -> str:
    return text.replace("&", "&amp;").replace("<", "&lt;").replace(">", "&gt;")


__all__ = ["ContourFigure", "Polyline", "contour_figure", "contour_lines", "marching_squares", "render_svg"]
