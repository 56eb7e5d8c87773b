"""Deterministic SVG rendering of fields and overlays.

The document is assembled element by element in a fixed order with all
coordinates written at six decimals, so identical inputs produce identical
bytes regardless of platform or thread count.  Overlays: contour polylines,
critical-point markers (one glyph per kind), sign-region shading, and ball
partitions; the legend lists level values and marker glyphs.
"""

from __future__ import annotations

import io

import numpy as np

from .fields import GridField, sample
from .geometry import Domain
from .topology import LOCAL_MAX, LOCAL_MIN, NON_ISOLATED, SADDLE

SIZE = 720.0
MARGIN = 56.0
LEGEND_W = 170.0

# Eight-stop blue-to-yellow ramp, interpolated linearly.
_RAMP = [
    (0.267, 0.005, 0.329), (0.283, 0.141, 0.458), (0.254, 0.265, 0.530),
    (0.207, 0.372, 0.553), (0.164, 0.471, 0.558), (0.128, 0.567, 0.551),
    (0.135, 0.659, 0.518), (0.267, 0.749, 0.441),
]
_RAMP += [(0.478, 0.821, 0.318), (0.741, 0.873, 0.150), (0.993, 0.906, 0.144)]

KIND_STYLE = {
    LOCAL_MAX: ("max", "#d62728"),
    LOCAL_MIN: ("min", "#1f77b4"),
    SADDLE: ("saddle", "#9467bd"),
    NON_ISOLATED: ("level component", "#ff7f0e"),
}


def _color(v: float) -> str:
    v = min(max(v, 0.0), 1.0)
    x = v * (len(_RAMP) - 1)
    i = min(int(x), len(_RAMP) - 2)
    t = x - i
    r, g, b = (a + t * (c - a) for a, c in zip(_RAMP[i], _RAMP[i + 1]))
    return "#%02x%02x%02x" % (round(255 * r), round(255 * g), round(255 * b))


def _fmt(v: float) -> str:
    return f"{v:.6f}"


class _Canvas:
    def __init__(self, bbox):
        x0, y0, x1, y1 = bbox
        span = max(x1 - x0, y1 - y0)
        self.scale = (SIZE - 2 * MARGIN) / span
        self.x0, self.y0, self.x1, self.y1 = x0, y0, x1, y1
        self.width = MARGIN * 2 + (x1 - x0) * self.scale + LEGEND_W
        self.height = MARGIN * 2 + (y1 - y0) * self.scale
        self.parts: list[str] = []

    def map(self, p):
        x = MARGIN + (p[0] - self.x0) * self.scale
        y = self.height - (MARGIN + (p[1] - self.y0) * self.scale)
        return x, y

    def add(self, element: str):
        self.parts.append(element)

    def polyline(self, pts, stroke, width=1.5, dash=None, fill="none", opacity=None):
        coords = " ".join(f"{_fmt(x)},{_fmt(y)}" for x, y in (self.map(p) for p in pts))
        extra = f' stroke-dasharray="{dash}"' if dash else ""
        extra += f' opacity="{_fmt(opacity)}"' if opacity is not None else ""
        self.add(f'<polyline points="{coords}" fill="{fill}" stroke="{stroke}" '
                 f'stroke-width="{_fmt(width)}"{extra}/>')

    def document(self) -> str:
        out = io.StringIO()
        out.write('<?xml version="1.0" encoding="UTF-8"?>\n')
        out.write(f'<svg xmlns="http://www.w3.org/2000/svg" width="{_fmt(self.width)}" '
                  f'height="{_fmt(self.height)}" '
                  f'viewBox="0 0 {_fmt(self.width)} {_fmt(self.height)}">\n')
        out.write('<rect x="0" y="0" width="100%" height="100%" fill="#ffffff"/>\n')
        for p in self.parts:
            out.write(p)
            out.write("\n")
        out.write("</svg>\n")
        return out.getvalue()


def render_svg(field, domain: Domain, n: int = 96, contours=None, points=None,
               sign_regions=None, partitions=None, title: str = "") -> str:
    """Render a deterministic SVG of the field with the requested overlays.

    contours: list of LevelComponents; points: list of CriticalPoints;
    sign_regions: a SignRegions value shades f(u) > 0 / < 0; partitions:
    BallPartition list drawn as circle plus zero-curve dashes.
    """
    gf = field if isinstance(field, GridField) else sample(field, domain, max(32, n))
    cv = _Canvas(domain.bbox())

    vals = np.where(gf.valid(), gf.values, np.nan)
    vmin = float(np.nanmin(vals)) if np.isfinite(vals).any() else 0.0
    vmax = float(np.nanmax(vals)) if np.isfinite(vals).any() else 1.0
    span = (vmax - vmin) or 1.0

    # Heatmap cells (row-major, fixed order).
    stride = max(1, gf.nx // n, gf.ny // n)
    for j in range(0, gf.ny - stride, stride):
        for i in range(0, gf.nx - stride, stride):
            block = vals[j:j + stride + 1, i:i + stride + 1]
            if np.isnan(block).all():
                continue
            v = float(np.nanmean(block))
            x0, y0 = cv.map((gf.xs[i], gf.ys[min(j + stride, gf.ny - 1)]))
            x1, y1 = cv.map((gf.xs[min(i + stride, gf.nx - 1)], gf.ys[j]))
            cv.add(f'<rect x="{_fmt(x0)}" y="{_fmt(y0)}" width="{_fmt(x1 - x0)}" '
                   f'height="{_fmt(y1 - y0)}" fill="{_color((v - vmin) / span)}"/>')

    if sign_regions is not None:
        for comp in sign_regions.interface:
            if len(comp.polyline) >= 2:
                cv.polyline(comp.polyline, "#000000", width=2.0, dash="6,3")

    cv.polyline(domain.boundary_polyline(256), "#333333", width=2.0)

    levels_drawn = []
    for comp in (contours or []):
        if len(comp.polyline) >= 2:
            cv.polyline(comp.polyline, "#f0f0f0", width=1.2)
            if comp.level not in levels_drawn:
                levels_drawn.append(comp.level)
        elif len(comp.polyline) == 1:
            x, y = cv.map(comp.polyline[0])
            cv.add(f'<circle cx="{_fmt(x)}" cy="{_fmt(y)}" r="2.500000" '
                   f'fill="none" stroke="#f0f0f0" stroke-width="1.200000"/>')

    for part in (partitions or []):
        theta = np.linspace(0, 2 * np.pi, 181)
        circ = np.stack([part.p[0] + part.delta * np.cos(theta),
                         part.p[1] + part.delta * np.sin(theta)], axis=-1)
        cv.polyline(circ, "#2ca02c", width=1.5, dash="4,3")
        for poly in part.N_polylines:
            cv.polyline(poly, "#2ca02c", width=1.0, dash="2,2")

    for cp in (points or []):
        x, y = cv.map(cp.position)
        color = KIND_STYLE.get(cp.kind, ("", "#000000"))[1]
        if cp.kind == LOCAL_MAX:
            pts = f"{_fmt(x)},{_fmt(y - 6)} {_fmt(x - 5)},{_fmt(y + 4)} {_fmt(x + 5)},{_fmt(y + 4)}"
            cv.add(f'<polygon points="{pts}" fill="{color}"/>')
        elif cp.kind == LOCAL_MIN:
            pts = f"{_fmt(x)},{_fmt(y + 6)} {_fmt(x - 5)},{_fmt(y - 4)} {_fmt(x + 5)},{_fmt(y - 4)}"
            cv.add(f'<polygon points="{pts}" fill="{color}"/>')
        elif cp.kind == SADDLE:
            cv.add(f'<path d="M {_fmt(x - 5)} {_fmt(y - 5)} L {_fmt(x + 5)} {_fmt(y + 5)} '
                   f'M {_fmt(x - 5)} {_fmt(y + 5)} L {_fmt(x + 5)} {_fmt(y - 5)}" '
                   f'stroke="{color}" stroke-width="2.000000"/>')
        else:
            cv.add(f'<circle cx="{_fmt(x)}" cy="{_fmt(y)}" r="5.000000" fill="none" '
                   f'stroke="{color}" stroke-width="2.000000"/>')
            if cp.component is not None and len(cp.component.polyline) >= 2:
                cv.polyline(cp.component.polyline, color, width=2.0)

    # Legend.
    lx = cv.width - LEGEND_W + 10
    ly = MARGIN
    cv.add(f'<text x="{_fmt(lx)}" y="{_fmt(ly)}" font-family="monospace" '
           f'font-size="12">{title or getattr(field, "name", "field")}</text>')
    ly += 18
    cv.add(f'<text x="{_fmt(lx)}" y="{_fmt(ly)}" font-family="monospace" '
           f'font-size="11">u range [{_fmt(vmin)}, {_fmt(vmax)}]</text>')
    kinds_present = []
    for cp in (points or []):
        if cp.kind not in kinds_present:
            kinds_present.append(cp.kind)
    for kind in kinds_present:
        ly += 16
        label, color = KIND_STYLE[kind]
        cv.add(f'<rect x="{_fmt(lx)}" y="{_fmt(ly - 9)}" width="10.000000" '
               f'height="10.000000" fill="{color}"/>')
        cv.add(f'<text x="{_fmt(lx + 16)}" y="{_fmt(ly)}" font-family="monospace" '
               f'font-size="11">{label}</text>')
    for lev in levels_drawn[:12]:
        ly += 16
        cv.add(f'<text x="{_fmt(lx)}" y="{_fmt(ly)}" font-family="monospace" '
               f'font-size="11">level {_fmt(lev)}</text>')
    return cv.document()
