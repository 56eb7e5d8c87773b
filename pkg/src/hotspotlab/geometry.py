"""Planar domains: disks, axis-aligned rectangles, and convex polygons.

Every shape provides an exact signed distance (negative inside, zero on the
boundary, positive outside), outward unit normals on the boundary, a
containment classifier with an explicit boundary tolerance, and a dense
boundary polyline for line integrals.  Domains are immutable value objects;
all operations are pure.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

INTERIOR = "interior"
BOUNDARY = "boundary"
EXTERIOR = "exterior"

# Default boundary tolerance, as a fraction of the domain diameter.
BOUNDARY_TOL_FRACTION = 1e-12


class DomainError(ValueError):
    """Invalid domain construction or query."""


class VertexNormalError(DomainError):
    """Outward normal requested within tolerance of a polygon vertex."""


def _as_point(x) -> np.ndarray:
    p = np.asarray(x, dtype=float)
    if p.shape != (2,):
        raise DomainError(f"expected a 2-D point, got shape {p.shape}")
    return p


@dataclass(frozen=True)
class Domain:
    """Base class; concrete shapes implement signed_distance and normals."""

    def signed_distance(self, x) -> float:
        raise NotImplementedError

    def signed_distance_many(self, xs: np.ndarray) -> np.ndarray:
        xs = np.asarray(xs, dtype=float)
        return np.array([self.signed_distance(p) for p in xs.reshape(-1, 2)]).reshape(xs.shape[:-1])

    def outward_normal(self, x) -> np.ndarray:
        raise NotImplementedError

    def bbox(self) -> tuple[float, float, float, float]:
        """(x0, y0, x1, y1) tight axis-aligned bounding box."""
        raise NotImplementedError

    def diameter(self) -> float:
        x0, y0, x1, y1 = self.bbox()
        return float(np.hypot(x1 - x0, y1 - y0))

    def area(self) -> float:
        raise NotImplementedError

    def boundary_tol(self) -> float:
        return BOUNDARY_TOL_FRACTION * self.diameter()

    def contains(self, x, tol: float | None = None) -> str:
        """Classify a point as interior / boundary / exterior.

        `tol` is the boundary half-width; defaults to 1e-12 * diameter.
        """
        d = self.signed_distance(x)
        tol = self.boundary_tol() if tol is None else tol
        if abs(d) <= tol:
            return BOUNDARY
        return INTERIOR if d < 0.0 else EXTERIOR

    def is_convex(self) -> bool:
        return True

    def boundary_polyline(self, n: int = 256) -> np.ndarray:
        """Closed boundary polyline, (n+1, 2) with last vertex == first."""
        raise NotImplementedError

    def boundary_points(self, n: int = 1024) -> np.ndarray:
        """n distinct boundary sample points (open, no duplicated seam)."""
        return self.boundary_polyline(n)[:-1]

    def to_config(self) -> dict:
        raise NotImplementedError


@dataclass(frozen=True)
class Disk(Domain):
    center: tuple[float, float] = (0.0, 0.0)
    radius: float = 1.0

    def __post_init__(self):
        if not self.radius > 0:
            raise DomainError(f"disk radius must be positive, got {self.radius}")
        object.__setattr__(self, "center", (float(self.center[0]), float(self.center[1])))
        object.__setattr__(self, "radius", float(self.radius))

    def signed_distance(self, x) -> float:
        p = _as_point(x)
        return float(np.hypot(p[0] - self.center[0], p[1] - self.center[1]) - self.radius)

    def signed_distance_many(self, xs) -> np.ndarray:
        xs = np.asarray(xs, dtype=float)
        return np.hypot(xs[..., 0] - self.center[0], xs[..., 1] - self.center[1]) - self.radius

    def outward_normal(self, x) -> np.ndarray:
        p = _as_point(x)
        v = p - np.asarray(self.center)
        r = np.hypot(v[0], v[1])
        if r == 0.0:
            raise DomainError("normal undefined at the disk center")
        return v / r

    def bbox(self):
        cx, cy = self.center
        r = self.radius
        return (cx - r, cy - r, cx + r, cy + r)

    def area(self) -> float:
        return float(np.pi * self.radius**2)

    def boundary_polyline(self, n: int = 256) -> np.ndarray:
        th = np.linspace(0.0, 2.0 * np.pi, n + 1)
        cx, cy = self.center
        return np.column_stack([cx + self.radius * np.cos(th), cy + self.radius * np.sin(th)])

    def to_config(self) -> dict:
        return {"type": "disk", "center": list(self.center), "radius": self.radius}


@dataclass(frozen=True)
class Rectangle(Domain):
    lo: tuple[float, float] = (0.0, 0.0)
    hi: tuple[float, float] = (1.0, 1.0)

    def __post_init__(self):
        lo = (float(self.lo[0]), float(self.lo[1]))
        hi = (float(self.hi[0]), float(self.hi[1]))
        if not (lo[0] < hi[0] and lo[1] < hi[1]):
            raise DomainError(f"rectangle needs lo < hi componentwise, got {lo}, {hi}")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)

    def signed_distance(self, x) -> float:
        p = _as_point(x)
        c = 0.5 * (np.asarray(self.lo) + np.asarray(self.hi))
        half = 0.5 * (np.asarray(self.hi) - np.asarray(self.lo))
        q = np.abs(p - c) - half
        outside = np.maximum(q, 0.0)
        return float(np.hypot(outside[0], outside[1]) + min(max(q[0], q[1]), 0.0))

    def signed_distance_many(self, xs) -> np.ndarray:
        xs = np.asarray(xs, dtype=float)
        c = 0.5 * (np.asarray(self.lo) + np.asarray(self.hi))
        half = 0.5 * (np.asarray(self.hi) - np.asarray(self.lo))
        q = np.abs(xs - c) - half
        outside = np.maximum(q, 0.0)
        return np.hypot(outside[..., 0], outside[..., 1]) + np.minimum(
            np.maximum(q[..., 0], q[..., 1]), 0.0
        )

    def outward_normal(self, x) -> np.ndarray:
        p = _as_point(x)
        # Nearest edge wins; corners are ambiguous within tolerance.
        d = np.array([
            p[0] - self.lo[0],     # west
            self.hi[0] - p[0],     # east
            p[1] - self.lo[1],     # south
            self.hi[1] - p[1],     # north
        ])
        normals = np.array([[-1.0, 0.0], [1.0, 0.0], [0.0, -1.0], [0.0, 1.0]])
        order = np.argsort(d)
        if abs(d[order[0]] - d[order[1]]) <= self.boundary_tol():
            raise VertexNormalError(f"normal ambiguous at rectangle corner near {tuple(p)}")
        return normals[order[0]]

    def bbox(self):
        return (self.lo[0], self.lo[1], self.hi[0], self.hi[1])

    def area(self) -> float:
        return float((self.hi[0] - self.lo[0]) * (self.hi[1] - self.lo[1]))

    def boundary_polyline(self, n: int = 256) -> np.ndarray:
        corners = np.array([
            [self.lo[0], self.lo[1]],
            [self.hi[0], self.lo[1]],
            [self.hi[0], self.hi[1]],
            [self.lo[0], self.hi[1]],
        ])
        return _polyline_through(corners, n)

    def to_config(self) -> dict:
        return {"type": "rectangle", "lo": list(self.lo), "hi": list(self.hi)}


@dataclass(frozen=True)
class ConvexPolygon(Domain):
    vertices: tuple = field(default_factory=tuple)

    def __post_init__(self):
        v = np.asarray(self.vertices, dtype=float)
        if v.ndim != 2 or v.shape[0] < 3 or v.shape[1] != 2:
            raise DomainError("polygon needs at least 3 planar vertices")
        # Shoelace: counter-clockwise orientation required.
        x, y = v[:, 0], v[:, 1]
        area2 = np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y)
        if area2 <= 0:
            raise DomainError("polygon vertices must be counter-clockwise")
        e = np.roll(v, -1, axis=0) - v
        cross = e[:, 0] * np.roll(e, -1, axis=0)[:, 1] - e[:, 1] * np.roll(e, -1, axis=0)[:, 0]
        scale = float(np.max(np.abs(v))) or 1.0
        if np.any(cross < -1e-12 * scale**2):
            raise DomainError("polygon is not convex")
        if np.count_nonzero(cross > 1e-12 * scale**2) < 3:
            raise DomainError("polygon is degenerate (fewer than 3 strict turns)")
        object.__setattr__(self, "vertices", tuple(map(tuple, v.tolist())))

    def _varr(self) -> np.ndarray:
        return np.asarray(self.vertices, dtype=float)

    def signed_distance(self, x) -> float:
        p = _as_point(x)
        v = self._varr()
        w = np.roll(v, -1, axis=0)
        e = w - v
        # Distance to nearest edge segment.
        t = np.clip(np.einsum("ij,ij->i", p - v, e) / np.einsum("ij,ij->i", e, e), 0.0, 1.0)
        proj = v + t[:, None] * e
        dist = np.min(np.hypot(p[0] - proj[:, 0], p[1] - proj[:, 1]))
        # Inside test for a convex CCW polygon: left of every edge.
        cross = e[:, 0] * (p[1] - v[:, 1]) - e[:, 1] * (p[0] - v[:, 0])
        inside = bool(np.all(cross >= 0.0))
        return float(-dist if inside else dist)

    def outward_normal(self, x) -> np.ndarray:
        p = _as_point(x)
        v = self._varr()
        w = np.roll(v, -1, axis=0)
        e = w - v
        t = np.clip(np.einsum("ij,ij->i", p - v, e) / np.einsum("ij,ij->i", e, e), 0.0, 1.0)
        proj = v + t[:, None] * e
        d = np.hypot(p[0] - proj[:, 0], p[1] - proj[:, 1])
        k = int(np.argmin(d))
        tol = self.boundary_tol()
        # Reject queries whose nearest boundary point lies at a vertex.
        seg_len = float(np.hypot(e[k, 0], e[k, 1]))
        if t[k] * seg_len <= tol or (1.0 - t[k]) * seg_len <= tol:
            raise VertexNormalError(f"normal undefined within tolerance of a vertex near {tuple(p)}")
        n = np.array([e[k, 1], -e[k, 0]])  # right-hand normal of a CCW edge points outward
        return n / np.hypot(n[0], n[1])

    def bbox(self):
        v = self._varr()
        return (float(v[:, 0].min()), float(v[:, 1].min()), float(v[:, 0].max()), float(v[:, 1].max()))

    def area(self) -> float:
        v = self._varr()
        x, y = v[:, 0], v[:, 1]
        return float(0.5 * np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y))

    def boundary_polyline(self, n: int = 256) -> np.ndarray:
        return _polyline_through(self._varr(), n)

    def to_config(self) -> dict:
        return {"type": "polygon", "vertices": [list(v) for v in self.vertices]}


def _polyline_through(corners: np.ndarray, n: int) -> np.ndarray:
    """Closed polyline through the corner loop with ~n vertices, arc-length spaced."""
    loop = np.vstack([corners, corners[:1]])
    seg = np.hypot(*np.diff(loop, axis=0).T)
    total = float(seg.sum())
    pts = []
    for k in range(len(corners)):
        m = max(1, int(round(n * seg[k] / total)))
        t = np.linspace(0.0, 1.0, m, endpoint=False)
        pts.append(loop[k] + t[:, None] * (loop[k + 1] - loop[k]))
    out = np.vstack(pts + [corners[:1]])
    return out


def domain_from_config(cfg: dict) -> Domain:
    """Build a Domain from its JSON description."""
    kind = cfg.get("type")
    if kind == "disk":
        return Disk(center=tuple(cfg.get("center", (0.0, 0.0))), radius=cfg["radius"])
    if kind == "rectangle":
        return Rectangle(lo=tuple(cfg["lo"]), hi=tuple(cfg["hi"]))
    if kind == "polygon":
        return ConvexPolygon(vertices=tuple(map(tuple, cfg["vertices"])))
    raise DomainError(f"unknown domain type {kind!r}")
