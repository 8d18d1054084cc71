"""Concentric ring diagrams of a run, as plain SVG.

From the centre outwards: the initial ring, the initially unhappy nodes, the
nodes covered by a stable interval of their own type, one radial tick per
type change (further out = later), and the final ring.  Node i sits at angle
2*pi*i/n measured clockwise from twelve o'clock.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from pathlib import Path
from xml.sax.saxutils import escape

import numpy as np

from . import metrics
from .dynamics import Trace
from .ring import ModelParams, RingConfig, same_type_counts


class TimeScale(enum.Enum):
    RANK = "rank"
    LINEAR = "linear"


@dataclass(frozen=True)
class RenderOptions:
    size: int = 800
    # radii as fractions of half the image size, innermost first
    initial: tuple[float, float] = (0.30, 0.36)
    unhappy: tuple[float, float] = (0.37, 0.40)
    stable: tuple[float, float] = (0.41, 0.44)
    events: tuple[float, float] = (0.46, 0.88)
    final: tuple[float, float] = (0.90, 0.96)
    alpha_colour: str = "#C8C8C8"
    beta_colour: str = "#000000"
    background: str = "#FFFFFF"
    max_arcs: int = 4096
    max_marks: int = 20000
    time_scale: TimeScale = TimeScale.RANK

    def __post_init__(self):
        bands = [self.initial, self.unhappy, self.stable, self.events, self.final]
        edges = [x for band in bands for x in band]
        if any(b <= a for a, b in zip(edges, edges[1:])):
            raise ValueError("layer radii must increase strictly from the centre outwards")
        if not (0 < edges[0] and edges[-1] <= 1):
            raise ValueError("radii must lie in (0, 1]")
        if self.max_arcs < 1 or self.max_marks < 0:
            raise ValueError("caps must be positive")
        if isinstance(self.time_scale, str):
            object.__setattr__(self, "time_scale", TimeScale(self.time_scale))

    def colour(self, kind: int) -> str:
        return self.alpha_colour if kind == 1 else self.beta_colour


# a layer is an int8 array over nodes: 1 ALPHA, 0 BETA, -1 nothing drawn
def _segments(layer: np.ndarray, max_arcs: int) -> tuple[list[tuple[int, int, int]], int]:
    """Runs ``(start, length, value)`` of a circular layer, skipping blanks.

    Beyond ``max_arcs`` runs the ring is cut into ``max_arcs`` equal angular
    bins, each painted with the majority drawn value (ALPHA on ties, blank
    if nothing is drawn in the bin).  Returns the runs and the node count per
    drawing unit (1 when exact).
    """
    n = layer.size
    cut = np.flatnonzero(layer != np.roll(layer, 1))
    if cut.size == 0:
        return ([(0, n, int(layer[0]))] if layer[0] >= 0 else []), 1
    if cut.size > max_arcs:
        edges = (np.arange(max_arcs + 1) * n) // max_arcs
        binned = np.empty(max_arcs, dtype=np.int8)
        for b in range(max_arcs):
            chunk = layer[edges[b] : edges[b + 1]]
            a = int(np.count_nonzero(chunk == 1))
            z = int(np.count_nonzero(chunk == 0))
            binned[b] = -1 if a + z == 0 else (1 if a >= z else 0)
        runs, _ = _segments(binned, max_arcs)
        scaled = [(int(edges[s]), int(edges[min(s + ln, max_arcs)] - edges[s]) if s + ln <= max_arcs
                   else int(n - edges[s] + edges[s + ln - max_arcs]), v) for s, ln, v in runs]
        return scaled, int(math.ceil(n / max_arcs))
    lengths = np.diff(np.concatenate((cut, [cut[0] + n])))
    return [(int(s), int(ln), int(layer[s])) for s, ln in zip(cut, lengths) if layer[s] >= 0], 1


def _f(x: float) -> str:
    s = f"{x:.3f}".rstrip("0").rstrip(".")
    return "0" if s == "-0" else s


class _Canvas:
    def __init__(self, opts: RenderOptions):
        self.opts = opts
        self.c = opts.size / 2
        self.parts: list[str] = []

    def point(self, angle: float, r: float) -> tuple[str, str]:
        return _f(self.c + r * math.sin(angle)), _f(self.c - r * math.cos(angle))

    def annulus(self, r1: float, r2: float, colour: str, cls: str):
        mid, width = (r1 + r2) / 2, r2 - r1
        self.parts.append(
            f'<circle class="{cls}" cx="{_f(self.c)}" cy="{_f(self.c)}" r="{_f(mid)}" fill="none" '
            f'stroke="{colour}" stroke-width="{_f(width)}"/>'
        )

    def sector(self, a1: float, a2: float, r1: float, r2: float, colour: str, cls: str):
        large = 1 if a2 - a1 > math.pi else 0
        x1, y1 = self.point(a1, r2)
        x2, y2 = self.point(a2, r2)
        x3, y3 = self.point(a2, r1)
        x4, y4 = self.point(a1, r1)
        self.parts.append(
            f'<path class="{cls}" d="M{x1},{y1} A{_f(r2)},{_f(r2)} 0 {large} 1 {x2},{y2} '
            f'L{x3},{y3} A{_f(r1)},{_f(r1)} 0 {large} 0 {x4},{y4} Z" fill="{colour}"/>'
        )

    def tick(self, angle: float, r1: float, r2: float, colour: str, width: float, cls: str):
        x1, y1 = self.point(angle, r1)
        x2, y2 = self.point(angle, r2)
        self.parts.append(
            f'<line class="{cls}" x1="{x1}" y1="{y1}" x2="{x2}" y2="{y2}" stroke="{colour}" '
            f'stroke-width="{_f(width)}"/>'
        )


def _draw_layer(canvas: _Canvas, layer: np.ndarray, band: tuple[float, float], cls: str) -> int:
    opts = canvas.opts
    n = layer.size
    r1, r2 = band[0] * canvas.c, band[1] * canvas.c
    segs, _ = _segments(layer, opts.max_arcs)
    for start, length, value in segs:
        if length >= n:
            canvas.annulus(r1, r2, opts.colour(value), cls)
        else:
            a1 = 2 * math.pi * start / n
            canvas.sector(a1, a1 + 2 * math.pi * length / n, r1, r2, opts.colour(value), cls)
    return len(segs)


def _mark_positions(trace: Trace, opts: RenderOptions) -> tuple[np.ndarray, np.ndarray]:
    m = len(trace)
    if m == 0:
        return np.zeros(0, dtype=np.int64), np.zeros(0)
    keep = np.arange(m)
    if opts.max_marks and m > opts.max_marks:
        keep = (np.arange(opts.max_marks) * m) // opts.max_marks
    if opts.time_scale is TimeScale.RANK:
        frac = (keep + 0.5) / m
    else:
        last = max(int(trace.stages), int(trace.stage[-1]), 1)
        frac = trace.stage[keep] / last
    return keep, frac


def render_ring(trace: Trace, params: ModelParams, opts: RenderOptions | None = None) -> str:
    opts = opts or RenderOptions()
    initial: RingConfig = trace.initial
    n = initial.n
    if n != params.n:
        raise ValueError(f"trace has n={n}, params say n={params.n}")
    canvas = _Canvas(opts)
    size = opts.size
    canvas.parts.append(f'<rect width="{size}" height="{size}" fill="{opts.background}"/>')

    types = initial.types
    _draw_layer(canvas, types, opts.initial, "initial")
    unhappy = same_type_counts(initial, params.w) < params.threshold
    _draw_layer(canvas, np.where(unhappy, types, -1).astype(np.int8), opts.unhappy, "unhappy")
    stable = metrics.stable_nodes(initial, params.w, params.tau)
    _draw_layer(canvas, np.where(stable, types, -1).astype(np.int8), opts.stable, "stable")

    keep, frac = _mark_positions(trace, opts)
    if keep.size:
        e1, e2 = opts.events[0] * canvas.c, opts.events[1] * canvas.c
        tick_len = max((e2 - e1) / max(keep.size, 1), 0.6)
        width = max(2 * math.pi * e1 / n, 0.25)
        dst = trace.dst
        for k, f in zip(keep.tolist(), frac.tolist()):
            angle = 2 * math.pi * (int(trace.node[k]) + 0.5) / n
            r = e1 + f * (e2 - e1)
            canvas.tick(angle, r - tick_len / 2, r + tick_len / 2, opts.colour(int(dst[k])), width, "event")

    _draw_layer(canvas, trace.final_config().types, opts.final, "final")

    title = escape(f"n={n} w={params.w} tau={params.tau} model={params.model.value} events={len(trace)}")
    head = (
        '<?xml version="1.0" encoding="UTF-8"?>\n'
        f'<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{size}" height="{size}" '
        f'viewBox="0 0 {size} {size}">\n<title>{title}</title>\n'
    )
    return head + "\n".join(canvas.parts) + "\n</svg>\n"


def write_svg(path, trace: Trace, params: ModelParams, opts: RenderOptions | None = None) -> None:
    Path(path).write_text(render_ring(trace, params, opts))
