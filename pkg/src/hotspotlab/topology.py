"""Critical-point detection and classification, level-set extraction, sign
regions, and the structural checks built on them.

Classification follows a punctured-ring sign test: a candidate p is a local
maximum when grad(u) . (x - p) stays negative on sample rings around p inside
the closed domain, a local minimum when it stays positive, and a saddle when
both signs occur.  Points lying on a level-curve component along which the
gradient vanishes are never classified by the ring test; they are absorbed by
the non-isolated detector, which traces zero curves of the two gradient
components, polishes their vertices onto the critical set, and chains the
survivors into polyline components.
"""

from __future__ import annotations

from dataclasses import dataclass, field as dfield

import numpy as np
from scipy.spatial import cKDTree

from .fields import AnalyticField, GridField, sample
from .geometry import Domain
from .nonlinearity import Nonlinearity, SignChangeError, find_sign_change

LOCAL_MAX = "LocalMax"
LOCAL_MIN = "LocalMin"
SADDLE = "Saddle"
NON_ISOLATED = "NonIsolatedComponent"

MAX_COMPONENTS = 10_000
ANALYTIC_TAU_G = 1e-10


class TopologyError(RuntimeError):
    pass


@dataclass
class LevelComponent:
    level: float
    polyline: np.ndarray          # (k, 2); single row for singletons
    closed: bool
    touches_boundary: bool
    min_grad_norm: float
    max_grad_norm: float
    index: int = 0
    degenerate: bool = False      # singleton component {x0}

    @property
    def id(self) -> tuple[float, int]:
        return (self.level, self.index)

    def length(self) -> float:
        if len(self.polyline) < 2:
            return 0.0
        return float(np.sum(np.hypot(*np.diff(self.polyline, axis=0).T)))

    def to_dict(self) -> dict:
        return {"level": self.level, "index": self.index, "closed": self.closed,
                "touches_boundary": self.touches_boundary,
                "min_grad_norm": self.min_grad_norm, "max_grad_norm": self.max_grad_norm,
                "degenerate": self.degenerate, "n_vertices": int(len(self.polyline)),
                "length": self.length()}


@dataclass
class CriticalPoint:
    position: np.ndarray
    u_value: float
    grad_norm: float
    kind: str
    on_boundary: bool
    evidence: dict = dfield(default_factory=dict)
    component: LevelComponent | None = None

    def to_dict(self) -> dict:
        d = {"position": [float(self.position[0]), float(self.position[1])],
             "u_value": self.u_value, "grad_norm": self.grad_norm,
             "kind": self.kind, "on_boundary": self.on_boundary,
             "evidence": self.evidence}
        if self.component is not None:
            d["component"] = self.component.to_dict()
        return d


def default_tau_g(field, n: int = 256, domain: Domain | None = None) -> float:
    """Gradient tolerance: 10 h^2 for grid fields (stencil truncation scale),
    1e-10 for analytic fields."""
    if isinstance(field, GridField):
        return 10.0 * field.h**2
    return ANALYTIC_TAU_G


def working_h(field, domain: Domain, n: int = 256) -> float:
    if isinstance(field, GridField):
        return field.h
    x0, y0, x1, y1 = domain.bbox()
    return max(x1 - x0, y1 - y0) / (n - 1)


def _raster(field, domain: Domain, n: int) -> GridField:
    if isinstance(field, GridField):
        return field
    return sample(field, domain, n)


def _grad_many(field, pts: np.ndarray) -> np.ndarray:
    if isinstance(field, AnalyticField):
        return np.asarray(field.gradient(pts), dtype=float)
    return field.gradient_many(pts)


def _value_many(field, pts: np.ndarray) -> np.ndarray:
    if isinstance(field, AnalyticField):
        return np.asarray(field.value(pts), dtype=float)
    return field.value_many(pts)


def _project_inside(domain: Domain, pts: np.ndarray) -> np.ndarray:
    """Pull points that left the domain back onto the boundary."""
    out = pts.copy()
    flat = out.reshape(-1, 2)
    sd = domain.signed_distance_many(flat)
    step = 1e-7 * domain.diameter()
    for k in np.nonzero(sd > 0)[0]:
        x = flat[k]
        gx = (domain.signed_distance(x + [step, 0]) - domain.signed_distance(x - [step, 0])) / (2 * step)
        gy = (domain.signed_distance(x + [0, step]) - domain.signed_distance(x - [0, step])) / (2 * step)
        nn = np.hypot(gx, gy) or 1.0
        flat[k] = x - sd[k] * np.array([gx, gy]) / nn
    return out


def _newton_polish(field, domain: Domain, pts: np.ndarray, h: float, tau_stop: float,
                   max_iter: int = 30) -> np.ndarray:
    """Newton iteration on grad(u) = 0 with a finite-difference Jacobian and
    steps clamped to h; points are kept inside the closed domain."""
    x = pts.copy().astype(float)
    fd = max(h * 1e-2, 1e-9 * domain.diameter())
    for _ in range(max_iter):
        g = _grad_many(field, x)
        gn = np.hypot(g[:, 0], g[:, 1])
        active = gn > tau_stop / 10.0
        if not np.any(active):
            break
        xa = x[active]
        gxp = _grad_many(field, xa + [fd, 0.0])
        gxm = _grad_many(field, xa - [fd, 0.0])
        gyp = _grad_many(field, xa + [0.0, fd])
        gym = _grad_many(field, xa - [0.0, fd])
        H11 = (gxp[:, 0] - gxm[:, 0]) / (2 * fd)
        H12 = (gyp[:, 0] - gym[:, 0]) / (2 * fd)
        H21 = (gxp[:, 1] - gxm[:, 1]) / (2 * fd)
        H22 = (gyp[:, 1] - gym[:, 1]) / (2 * fd)
        det = H11 * H22 - H12 * H21
        ga = g[active]
        small = np.abs(det) < 1e-300
        det = np.where(small, 1.0, det)
        dx = -(H22 * ga[:, 0] - H12 * ga[:, 1]) / det
        dy = -(-H21 * ga[:, 0] + H11 * ga[:, 1]) / det
        step = np.stack([dx, dy], axis=-1)
        # Fall back to steepest descent when the Hessian is unusable.
        norm = np.hypot(step[:, 0], step[:, 1])
        bad = small | ~np.isfinite(norm)
        if np.any(bad):
            step[bad] = -ga[bad] / np.maximum(gn[active][bad], 1e-300)[:, None] * (h / 4)
            norm = np.hypot(step[:, 0], step[:, 1])
        crop = np.minimum(1.0, h / np.maximum(norm, 1e-300))
        xa = xa + step * crop[:, None]
        x[active] = xa
        x = _project_inside(domain, x)
    return x


def _descent_refine(field, domain: Domain, pts: np.ndarray, h: float, steps: int = 10) -> np.ndarray:
    """The coarse stage: gradient descent on |grad u|^2 with step h/4."""
    x = pts.copy().astype(float)
    fd = max(h * 1e-2, 1e-9 * domain.diameter())
    for _ in range(steps):
        g = _grad_many(field, x)
        G = g[:, 0] ** 2 + g[:, 1] ** 2
        gxp = _grad_many(field, x + [fd, 0.0])
        gxm = _grad_many(field, x - [fd, 0.0])
        gyp = _grad_many(field, x + [0.0, fd])
        gym = _grad_many(field, x - [0.0, fd])
        dGx = (np.sum(gxp**2, -1) - np.sum(gxm**2, -1)) / (2 * fd)
        dGy = (np.sum(gyp**2, -1) - np.sum(gym**2, -1)) / (2 * fd)
        dn = np.hypot(dGx, dGy)
        move = dn > 0
        direction = np.stack([-dGx, -dGy], axis=-1) / np.maximum(dn, 1e-300)[:, None]
        trial = x + (h / 4) * direction * move[:, None]
        trial = _project_inside(domain, trial)
        gt = _grad_many(field, trial)
        Gt = gt[:, 0] ** 2 + gt[:, 1] ** 2
        better = Gt < G
        x[better] = trial[better]
    return x


def find_critical_points(field, domain: Domain, tau_g: float | None = None,
                         n: int = 256) -> list[CriticalPoint]:
    """Locate candidate critical points (kind unset).

    Candidates are plateau-tolerant local minima of |grad u|^2 over the raster
    nodes plus boundary-scan minima, refined by descent and a Newton polish,
    kept when the polished gradient norm drops below tau_g, and deduplicated
    within radius 2h.
    """
    gf = _raster(field, domain, n)
    h = working_h(field, domain, n)
    if tau_g is None:
        tau_g = default_tau_g(field, n, domain)
    src = field if isinstance(field, AnalyticField) else gf

    g = gf.node_gradient_cached() if isinstance(src, GridField) else _grad_many(src, gf.points)
    G = g[..., 0] ** 2 + g[..., 1] ** 2
    G = np.where(gf.valid(), G, np.inf)
    Gp = np.pad(G, 1, constant_values=np.inf)
    is_min = np.ones_like(G, dtype=bool)
    for dj in (-1, 0, 1):
        for di in (-1, 0, 1):
            if di == 0 and dj == 0:
                continue
            is_min &= G <= Gp[1 + dj: Gp.shape[0] - 1 + dj, 1 + di: Gp.shape[1] - 1 + di]
    is_min &= np.isfinite(G)
    cand = gf.points[is_min].reshape(-1, 2)

    # Boundary scan: gradient-norm minima along a dense boundary polyline.
    bpts = domain.boundary_points(4 * n)
    bg = _grad_many(src, bpts)
    bn = np.hypot(bg[:, 0], bg[:, 1])
    prev = np.roll(bn, 1)
    nxt = np.roll(bn, -1)
    bmin = (bn <= prev) & (bn <= nxt)
    cand = np.vstack([cand, bpts[bmin]])
    if len(cand) == 0:
        return []

    cand = _descent_refine(src, domain, cand, h)
    cand = _newton_polish(src, domain, cand, h, tau_g)
    g = _grad_many(src, cand)
    gn = np.hypot(g[:, 0], g[:, 1])
    ok = np.isfinite(gn) & (gn <= tau_g)
    cand, gn = cand[ok], gn[ok]
    if len(cand) == 0:
        return []

    # Deduplicate within 2h, preferring the smallest gradient norm.
    order = np.lexsort((cand[:, 1], cand[:, 0], gn))
    kept: list[int] = []
    for idx in order:
        if all(np.hypot(*(cand[idx] - cand[k])) > 2 * h for k in kept):
            kept.append(idx)
    out = []
    tolb = max(domain.boundary_tol(), 1e-9 * domain.diameter())
    for k in kept:
        p = cand[k]
        sd = domain.signed_distance(p)
        out.append(CriticalPoint(
            position=p, u_value=float(_value_many(src, p.reshape(1, 2))[0]),
            grad_norm=float(gn[k]), kind="", on_boundary=bool(abs(sd) <= tolb),
            evidence={"raster_n": n, "tau_g": tau_g}))
    out.sort(key=lambda cp: (cp.position[0], cp.position[1]))
    return out


def classify_ring_test(field, domain: Domain, p, delta_list=None, ring_samples: int = 64,
                       tau_g: float | None = None, n: int = 256) -> tuple[str, dict]:
    """Ring sign test around a candidate point, restricted to the closed
    domain.

    Dot products grad(u).(x-p) are compared against tau_g * delta (the
    gradient tolerance scaled by the ring radius).  Returns (kind, evidence);
    kind is the empty string when every usable sample is below tolerance or a
    sample's gradient norm is itself below tau_g — Definition of an isolated
    point then fails and the caller should defer to the non-isolated detector.
    A disagreement between scales yields a saddle with a note.
    """
    p = np.asarray(p, dtype=float)
    h = working_h(field, domain, n)
    if tau_g is None:
        tau_g = default_tau_g(field, n, domain)
    if delta_list is None:
        if isinstance(field, GridField):
            delta_list = [2 * h, 4 * h, 8 * h]
        else:
            d = domain.diameter()
            delta_list = [1e-3 * d, 1e-2 * d, 1e-1 * d]
    src = field
    theta = 2.0 * np.pi * np.arange(ring_samples) / ring_samples
    ring_dirs = np.stack([np.cos(theta), np.sin(theta)], axis=-1)

    per_delta = []
    kinds = []
    min_grad = np.inf
    for delta in delta_list:
        pts = p + delta * ring_dirs
        sd = domain.signed_distance_many(pts)
        keep = sd <= domain.boundary_tol()
        pts = pts[keep]
        if len(pts) == 0:
            per_delta.append({"delta": delta, "usable": 0, "n_pos": 0, "n_neg": 0,
                              "n_degenerate": 0, "min_grad": None, "kind": "empty"})
            kinds.append("empty")
            continue
        g = _grad_many(src, pts)
        s = np.einsum("ij,ij->i", g, pts - p)
        gn = np.hypot(g[:, 0], g[:, 1])
        tau_s = tau_g * delta
        n_pos = int(np.sum(s > tau_s))
        n_neg = int(np.sum(s < -tau_s))
        n_deg = int(len(s) - n_pos - n_neg)
        vanishing = int(np.sum(gn <= tau_g))
        min_grad = min(min_grad, float(np.min(gn)))
        if n_pos == 0 and n_neg == 0:
            kind = ""       # every dot product below tolerance: not isolated
        elif vanishing > 0:
            kind = ""       # the strict 0 < |grad u| clause fails on this ring
        elif n_pos > 0 and n_neg > 0:
            kind = SADDLE
        elif n_neg > 0 and n_deg == 0:
            kind = LOCAL_MAX
        elif n_pos > 0 and n_deg == 0:
            kind = LOCAL_MIN
        else:
            # One-sided but not strict everywhere: the definition's "otherwise".
            kind = SADDLE
        kinds.append(kind)
        per_delta.append({"delta": float(delta), "usable": int(len(pts)), "n_pos": n_pos,
                          "n_neg": n_neg, "n_degenerate": n_deg,
                          "n_vanishing_grad": vanishing,
                          "min_grad": float(np.min(gn)), "kind": kind or "degenerate"})

    evidence = {"delta_list": [float(d) for d in delta_list],
                "ring_samples": ring_samples, "tau_g": float(tau_g),
                "min_grad_on_rings": None if min_grad is np.inf else float(min_grad),
                "per_delta": per_delta, "note": ""}
    usable = [k for k in kinds if k != "empty"]
    if not usable:
        evidence["note"] = "no usable ring samples"
        return "", evidence
    if any(k == "" for k in usable):
        evidence["note"] = "ring test degenerate; defer to non-isolated detection"
        return "", evidence
    if all(k == usable[0] for k in usable):
        return usable[0], evidence
    evidence["note"] = "scale-inconsistent"
    return SADDLE, evidence


# ---------------------------------------------------------------------------
# Level sets (marching squares)
# ---------------------------------------------------------------------------

def _marching_squares(gf: GridField, w: np.ndarray):
    """Zero-level polylines of node data w on the valid region of the grid.

    Returns a list of (polyline, closed, touches_boundary).  Zero node values
    count as positive; ambiguous cells split by the cell-average rule.
    """
    ny, nx = w.shape
    valid = gf.valid() & np.isfinite(w)
    xs, ys = gf.xs, gf.ys

    def edge_point(kind, j, i):
        if kind == "H":
            wa, wb = w[j, i], w[j, i + 1]
            t = wa / (wa - wb)
            return (xs[i] + t * (xs[i + 1] - xs[i]), ys[j])
        wa, wb = w[j, i], w[j + 1, i]
        t = wa / (wa - wb)
        return (xs[i], ys[j] + t * (ys[j + 1] - ys[j]))

    segments = []  # (key_a, key_b)
    coords: dict = {}
    cell_open = np.zeros((ny - 1, nx - 1), dtype=bool)
    for j in range(ny - 1):
        for i in range(nx - 1):
            if not (valid[j, i] and valid[j, i + 1] and valid[j + 1, i] and valid[j + 1, i + 1]):
                cell_open[j, i] = True
                continue
            s00 = w[j, i] >= 0
            s10 = w[j, i + 1] >= 0
            s01 = w[j + 1, i] >= 0
            s11 = w[j + 1, i + 1] >= 0
            code = (s00 << 0) | (s10 << 1) | (s11 << 2) | (s01 << 3)
            if code in (0, 15):
                continue
            bottom = ("H", j, i)
            top = ("H", j + 1, i)
            left = ("V", j, i)
            right = ("V", j, i + 1)
            pairs = {
                1: [(bottom, left)], 14: [(bottom, left)],
                2: [(bottom, right)], 13: [(bottom, right)],
                4: [(right, top)], 11: [(right, top)],
                8: [(left, top)], 7: [(left, top)],
                3: [(left, right)], 12: [(left, right)],
                6: [(bottom, top)], 9: [(bottom, top)],
            }
            if code in pairs:
                segs = pairs[code]
            else:
                # Ambiguous diagonal cases 5 and 10: cell-center average decides.
                center = 0.25 * (w[j, i] + w[j, i + 1] + w[j + 1, i] + w[j + 1, i + 1])
                if code == 5:      # s00 and s11 positive
                    segs = [(bottom, right), (left, top)] if center >= 0 else \
                           [(bottom, left), (right, top)]
                else:              # code == 10
                    segs = [(bottom, left), (right, top)] if center >= 0 else \
                           [(bottom, right), (left, top)]
            for a, b in segs:
                for key in (a, b):
                    if key not in coords:
                        coords[key] = edge_point(*key)
                segments.append((a, b))

    # Chain segments into polylines.
    adj: dict = {}
    for a, b in segments:
        adj.setdefault(a, []).append(b)
        adj.setdefault(b, []).append(a)
    visited = set()
    chains = []
    keys_sorted = sorted(adj.keys())
    # Open chains start at degree-1 keys.
    for start in [k for k in keys_sorted if len(adj[k]) == 1]:
        if start in visited:
            continue
        chain = [start]
        visited.add(start)
        cur, prev = start, None
        while True:
            nxts = [k for k in adj[cur] if k != prev and k not in visited]
            if not nxts:
                break
            prev, cur = cur, nxts[0]
            visited.add(cur)
            chain.append(cur)
        chains.append((chain, False))
    for start in keys_sorted:
        if start in visited:
            continue
        chain = [start]
        visited.add(start)
        cur, prev = start, None
        closed = False
        while True:
            nxts = [k for k in adj[cur] if k != prev]
            nxts = [k for k in nxts if k not in visited]
            if not nxts:
                closed = any(k == start for k in adj[cur]) and len(chain) > 2
                break
            prev, cur = cur, nxts[0]
            visited.add(cur)
            chain.append(cur)
        chains.append((chain, closed))

    out = []
    for chain, closed in chains:
        pts = np.array([coords[k] for k in chain])
        if closed:
            pts = np.vstack([pts, pts[:1]])
        touches = bool(np.any(gf.domain.signed_distance_many(pts) > -2 * gf.h))
        out.append((pts, closed, touches))
    return out


def extract_level_set(field, domain: Domain, t: float, n: int = 256,
                      tau_level: float | None = None) -> list[LevelComponent]:
    """Connected components of the level set {u = t}, marching squares over
    the masked raster; isolated extrema sitting exactly at level t are
    reported as degenerate singleton components."""
    gf = _raster(field, domain, n)
    src = field if isinstance(field, AnalyticField) else gf
    h = working_h(field, domain, n)
    if tau_level is None:
        scale = 10.0 * h * h if isinstance(field, GridField) else 1e-8
        tau_level = scale * (1.0 + abs(t))
    w = np.where(gf.valid(), gf.values - t, np.nan)
    raw = _marching_squares(gf, w)
    if len(raw) > MAX_COMPONENTS:
        raise TopologyError(f"more than {MAX_COMPONENTS} components at level {t:g}")
    comps = []
    for idx, (pts, closed, touches) in enumerate(raw):
        g = _grad_many(src, pts)
        gn = np.hypot(g[:, 0], g[:, 1])
        comps.append(LevelComponent(
            level=float(t), polyline=pts, closed=closed, touches_boundary=touches,
            min_grad_norm=float(np.nanmin(gn)) if len(gn) else np.nan,
            max_grad_norm=float(np.nanmax(gn)) if len(gn) else np.nan,
            index=idx))

    # Singleton components: strict node extrema at level t away from curves.
    v = np.where(gf.valid(), gf.values, np.nan)
    vp = np.pad(v, 1, constant_values=np.nan)
    neigh = np.stack([vp[1 + dj: vp.shape[0] - 1 + dj, 1 + di: vp.shape[1] - 1 + di]
                      for dj in (-1, 0, 1) for di in (-1, 0, 1) if (di, dj) != (0, 0)])
    enough = np.sum(~np.isnan(neigh), axis=0) >= 3
    strict = np.zeros_like(v, dtype=bool)
    with np.errstate(invalid="ignore"):
        ismax = (np.max(np.nan_to_num(neigh, nan=-np.inf), axis=0) <= v) & enough
        ismin = (np.min(np.nan_to_num(neigh, nan=np.inf), axis=0) >= v) & enough
        strict = (np.nan_to_num(np.max(neigh, axis=0) - np.min(neigh, axis=0),
                                nan=np.inf) > 0) | ~enough
    cand = gf.points[(ismax | ismin) & strict].reshape(-1, 2)
    if len(cand):
        tau_g = default_tau_g(field, n, domain)
        refined = _newton_polish(src, domain, cand, h, tau_g)
        vals = _value_many(src, refined)
        g = _grad_many(src, refined)
        gn = np.hypot(g[:, 0], g[:, 1])
        keep = (np.abs(vals - t) <= tau_level) & (gn <= tau_g)
        pts = refined[keep]
        for p in pts:
            # Drop candidates adjacent to an extracted curve or a previous singleton.
            near_curve = any(
                len(c.polyline) and float(np.min(np.hypot(*(c.polyline - p).T))) < 2 * h
                for c in comps)
            if near_curve:
                continue
            if not _is_strict_extremum(src, domain, p, h):
                continue
            comps.append(LevelComponent(
                level=float(t), polyline=p.reshape(1, 2), closed=True,
                touches_boundary=domain.contains(p) != "interior",
                min_grad_norm=0.0, max_grad_norm=0.0,
                index=len(comps), degenerate=True))
    return comps


def _is_strict_extremum(src, domain: Domain, p: np.ndarray, h: float,
                        samples: int = 16) -> bool:
    """Strict one-sided extremality on a ring of radius 1.5 h in the closed
    domain.  Ring samples leaving the domain are projected onto the boundary,
    so a point on a flat critical boundary curve fails (its along-boundary
    neighbours share its value)."""
    theta = 2.0 * np.pi * np.arange(samples) / samples
    ring = p + 1.5 * h * np.stack([np.cos(theta), np.sin(theta)], axis=-1)
    ring = _project_inside(domain, ring)
    keep = np.hypot(*(ring - p).T) > 0.5 * h  # drop samples that collapse onto p
    ring = ring[keep]
    if len(ring) < samples // 3:
        return False
    uc = float(_value_many(src, p.reshape(1, 2))[0])
    uv = _value_many(src, ring)
    return bool(np.all(uv > uc) or np.all(uv < uc))


# ---------------------------------------------------------------------------
# Non-isolated critical components
# ---------------------------------------------------------------------------

def detect_critical_curves(field, domain: Domain, tau_g: float | None = None,
                           n: int = 256) -> list[LevelComponent]:
    """Level-agnostic curve components of the critical set {grad u = 0}.

    Vertices of the zero curves of each gradient component are kept when the
    full gradient is small on the local second-derivative scale, polished by
    Newton onto the critical set, and chained into components.  The domain
    boundary itself is returned as a component when the gradient vanishes
    along all of it.
    """
    gf = _raster(field, domain, n)
    src = field if isinstance(field, AnalyticField) else gf
    h = working_h(field, domain, n)
    if tau_g is None:
        tau_g = default_tau_g(field, n, domain)

    g_nodes = gf.node_gradient_cached() if isinstance(src, GridField) else _grad_many(src, gf.points)
    pts_all = []
    for comp_idx in (0, 1):
        w = np.where(gf.valid(), g_nodes[..., comp_idx], np.nan)
        for pts, _closed, _tb in _marching_squares(gf, w):
            if len(pts) < 2:
                continue
            g = _grad_many(src, pts)
            gn = np.hypot(g[:, 0], g[:, 1])
            other = g[:, 1 - comp_idx]
            # Distance-to-critical-set estimate |g_other| / |grad g_other|.
            fdstep = h / 10
            gp = _grad_many(src, pts + [fdstep, 0.0])
            gm = _grad_many(src, pts - [fdstep, 0.0])
            hp = _grad_many(src, pts + [0.0, fdstep])
            hm = _grad_many(src, pts - [0.0, fdstep])
            d_other = np.hypot((gp[:, 1 - comp_idx] - gm[:, 1 - comp_idx]) / (2 * fdstep),
                               (hp[:, 1 - comp_idx] - hm[:, 1 - comp_idx]) / (2 * fdstep))
            keep = np.abs(other) <= 2 * h * d_other + tau_g
            pts_all.append(pts[keep])
    merged = np.vstack(pts_all) if pts_all else np.empty((0, 2))

    comps: list[LevelComponent] = []
    if len(merged):
        refined = _newton_polish(src, domain, merged, h, tau_g)
        g = _grad_many(src, refined)
        gn = np.hypot(g[:, 0], g[:, 1])
        moved = np.hypot(*(refined - merged).T)
        ok = np.isfinite(gn) & (gn <= tau_g) & (moved <= 3 * h)
        pts = refined[ok]
        if len(pts):
            # Deduplicate at h/2 and chain by proximity.
            order = np.lexsort((pts[:, 1], pts[:, 0]))
            pts = pts[order]
            tree = cKDTree(pts)
            taken = np.zeros(len(pts), dtype=bool)
            dedup = []
            for i in range(len(pts)):
                if taken[i]:
                    continue
                group = tree.query_ball_point(pts[i], h / 2)
                taken[group] = True
                dedup.append(pts[i])
            pts = np.array(dedup)
            comps.extend(_chain_components(pts, src, domain, h, len(comps)))

    # Whole boundary as a critical curve.
    bpts = domain.boundary_points(max(512, 2 * n))
    bg = _grad_many(src, bpts)
    bgn = np.hypot(bg[:, 0], bg[:, 1])
    bvals = _value_many(src, bpts)
    if np.all(np.isfinite(bgn)) and float(np.max(bgn)) <= tau_g and \
            float(np.max(bvals) - np.min(bvals)) <= 1e-6 * (1 + float(np.max(np.abs(bvals)))):
        poly = domain.boundary_polyline(max(512, 2 * n))
        comps.append(LevelComponent(
            level=float(np.mean(bvals)), polyline=poly, closed=True,
            touches_boundary=True, min_grad_norm=float(np.min(bgn)),
            max_grad_norm=float(np.max(bgn)), index=len(comps)))
    return comps


def _chain_components(pts: np.ndarray, src, domain: Domain, h: float, base_index: int):
    """Group refined critical points into curve components and order each into
    a polyline (angular order for loops, principal-axis order for arcs)."""
    tree = cKDTree(pts)
    link = 2.5 * h
    n_pts = len(pts)
    parent = list(range(n_pts))

    def find(a):
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    for i, j in sorted(tree.query_pairs(link)):
        ri, rj = find(i), find(j)
        if ri != rj:
            parent[max(ri, rj)] = min(ri, rj)
    groups: dict[int, list[int]] = {}
    for i in range(n_pts):
        groups.setdefault(find(i), []).append(i)

    comps = []
    for root in sorted(groups):
        idx = groups[root]
        if len(idx) < 4:
            continue  # point-like clusters belong to the isolated classifier
        P = pts[idx]
        centroid = P.mean(axis=0)
        Q = P - centroid
        cov = Q.T @ Q / len(Q)
        evals, evecs = np.linalg.eigh(cov)
        elongated = evals[1] > 25.0 * max(evals[0], 1e-300)
        if elongated:
            s = Q @ evecs[:, 1]
            order = np.argsort(s, kind="stable")
            poly = P[order]
            closed = False
        else:
            ang = np.arctan2(Q[:, 1], Q[:, 0])
            order = np.argsort(ang, kind="stable")
            poly = P[order]
            gaps = np.hypot(*np.diff(np.vstack([poly, poly[:1]]), axis=0).T)
            closed = bool(np.max(gaps) < 6 * h)
            if closed:
                poly = np.vstack([poly, poly[:1]])
        g = _grad_many(src, poly)
        gn = np.hypot(g[:, 0], g[:, 1])
        vals = _value_many(src, poly)
        sd = domain.signed_distance_many(poly)
        comps.append(LevelComponent(
            level=float(np.median(vals)), polyline=poly, closed=closed,
            touches_boundary=bool(np.any(sd > -2 * h)),
            min_grad_norm=float(np.min(gn)), max_grad_norm=float(np.max(gn)),
            index=base_index + len(comps)))
    return comps


def detect_nonisolated(field, domain: Domain, t: float, tau_g: float | None = None,
                       n: int = 256, tau_level: float | None = None) -> list[LevelComponent]:
    """Level-curve components at level t along which the gradient vanishes.

    Marching-squares components of {u = t} with max |grad u| < tau_g qualify,
    as do critical curves from the tracer whose level matches t (these catch
    tangential components invisible to sign-based extraction).  Singletons do
    not qualify.
    """
    gf_h = working_h(field, domain, n)
    if tau_g is None:
        tau_g = default_tau_g(field, n, domain)
    if tau_level is None:
        scale = 10.0 * gf_h**2 if isinstance(field, GridField) else 1e-8
        tau_level = scale * (1.0 + abs(t))
    out = []
    for comp in extract_level_set(field, domain, t, n):
        if comp.degenerate:
            continue
        if comp.max_grad_norm < tau_g:
            out.append(comp)
    traced = detect_critical_curves(field, domain, tau_g, n)
    for comp in traced:
        if abs(comp.level - t) <= tau_level:
            if not any(_components_overlap(comp, c, 2 * gf_h) for c in out):
                comp.index = len(out)
                out.append(comp)
    return out


def _components_overlap(a: LevelComponent, b: LevelComponent, tol: float) -> bool:
    if not len(a.polyline) or not len(b.polyline):
        return False
    tree = cKDTree(b.polyline)
    d, _ = tree.query(a.polyline, k=1)
    return bool(np.median(d) < tol)


def classify_field(field, domain: Domain, nl: Nonlinearity | None = None,
                   tau_g: float | None = None, n: int = 256, delta_list=None,
                   ring_samples: int = 64) -> list[CriticalPoint]:
    """Full pipeline: find candidates, absorb those lying on non-isolated
    critical curves, classify the rest by the ring test."""
    cands = find_critical_points(field, domain, tau_g, n)
    curves = detect_critical_curves(field, domain, tau_g, n)
    h = working_h(field, domain, n)
    out: list[CriticalPoint] = []
    used_curves = set()
    for cp in cands:
        assigned = None
        for k, comp in enumerate(curves):
            if len(comp.polyline) and float(np.min(np.hypot(*(comp.polyline - cp.position).T))) <= 2 * h:
                assigned = (k, comp)
                break
        if assigned is not None:
            used_curves.add(assigned[0])
            continue
        kind, evidence = classify_ring_test(field, domain, cp.position, delta_list,
                                            ring_samples, tau_g, n)
        if kind == "":
            kind = SADDLE
            evidence["note"] = (evidence.get("note") or "") + \
                "; ring test degenerate and no critical curve found"
        cp.kind = kind
        cp.evidence.update(evidence)
        out.append(cp)
    for k, comp in enumerate(curves):
        rep = comp.polyline[0]
        out.append(CriticalPoint(
            position=np.asarray(rep, dtype=float), u_value=comp.level,
            grad_norm=comp.max_grad_norm, kind=NON_ISOLATED,
            on_boundary=comp.touches_boundary,
            evidence={"component_index": comp.index, "absorbed": bool(k in used_curves)},
            component=comp))
    out.sort(key=lambda cp: (cp.kind, cp.position[0], cp.position[1]))
    return out


# ---------------------------------------------------------------------------
# Sign regions and structural checks
# ---------------------------------------------------------------------------

@dataclass
class BoundaryExtremum:
    position: np.ndarray
    value: float
    multiplicity_samples: int
    clusters: int
    plateau: bool

    def to_dict(self):
        return {"position": [float(self.position[0]), float(self.position[1])],
                "value": self.value, "multiplicity_samples": self.multiplicity_samples,
                "clusters": self.clusters, "plateau": self.plateau}


@dataclass
class SignRegions:
    domain: Domain
    m: float
    M: float
    plus_fraction: float
    minus_fraction: float
    interface: list
    p_plus: BoundaryExtremum | None
    p_minus: BoundaryExtremum | None

    def to_dict(self):
        return {"m": self.m, "M": self.M,
                "plus_area_fraction": self.plus_fraction,
                "minus_area_fraction": self.minus_fraction,
                "interface_components": [c.to_dict() for c in self.interface],
                "p_plus": self.p_plus.to_dict() if self.p_plus else None,
                "p_minus": self.p_minus.to_dict() if self.p_minus else None}


def _boundary_extremum(bpts, bu, pick_max: bool, spacing_tol: int = 2,
                       value_tol: float = 1e-8) -> BoundaryExtremum:
    target = np.max(bu) if pick_max else np.min(bu)
    hits = np.nonzero(np.abs(bu - target) <= value_tol)[0]
    n = len(bu)
    # Cluster circularly adjacent hits.
    clusters = 1
    if len(hits) > 1:
        gaps = np.diff(hits)
        clusters = 1 + int(np.sum(gaps > spacing_tol))
        if (hits[0] + n - hits[-1]) <= spacing_tol and clusters > 1:
            clusters -= 1
    plateau = len(hits) > max(8, n // 50)
    k = hits[int(np.argmax(bu[hits]))] if pick_max else hits[int(np.argmin(bu[hits]))]
    return BoundaryExtremum(position=bpts[k], value=float(bu[k]),
                            multiplicity_samples=int(len(hits)), clusters=clusters,
                            plateau=bool(plateau))


def sign_regions(field, nl: Nonlinearity, domain: Domain, n: int = 256,
                 boundary_samples: int = 2048) -> SignRegions:
    """Split the domain by the sign of f(u(x)) and locate boundary extrema of
    u over each closure, with multiplicity reported rather than assumed."""
    gf = _raster(field, domain, n)
    src = field if isinstance(field, AnalyticField) else gf
    vals = np.where(gf.valid(), gf.values, np.nan)
    bpts = domain.boundary_points(max(1024, boundary_samples))
    bu = _value_many(src, bpts)
    m = float(min(np.nanmin(vals), np.min(bu)))
    M = float(max(np.nanmax(vals), np.max(bu)))

    fu = np.full_like(vals, np.nan)
    ok = gf.valid()
    fu[ok] = np.asarray(nl.f(vals[ok]), dtype=float)
    n_valid = int(ok.sum())
    plus_frac = float(np.sum(fu[ok] > 0) / n_valid)
    minus_frac = float(np.sum(fu[ok] < 0) / n_valid)

    wgrid = GridField(domain, max(gf.nx, gf.ny), provenance="fsign")
    wgrid.values = fu
    wgrid.mask = gf.mask
    interface = []
    for pts, closed, touches in _marching_squares(wgrid, np.where(ok, fu, np.nan)):
        g = _grad_many(src, pts)
        gn = np.hypot(g[:, 0], g[:, 1])
        interface.append(LevelComponent(
            level=0.0, polyline=pts, closed=closed, touches_boundary=touches,
            min_grad_norm=float(np.min(gn)) if len(gn) else np.nan,
            max_grad_norm=float(np.max(gn)) if len(gn) else np.nan,
            index=len(interface)))

    bfu = np.asarray(nl.f(bu), dtype=float)
    p_plus = p_minus = None
    if np.any(bfu > 0):
        sel = bfu > 0
        p_plus = _boundary_extremum(bpts[sel], bu[sel], pick_max=True)
    if np.any(bfu < 0):
        sel = bfu < 0
        p_minus = _boundary_extremum(bpts[sel], bu[sel], pick_max=False)
    return SignRegions(domain=domain, m=m, M=M, plus_fraction=plus_frac,
                       minus_fraction=minus_frac, interface=interface,
                       p_plus=p_plus, p_minus=p_minus)


def check_extremum_sign(field, nl: Nonlinearity, points: list[CriticalPoint],
                        tol: float = 1e-8) -> list[dict]:
    """Sign rule at classified extrema: f(u(p)) >= -tol at maxima and
    f(u(p)) <= tol at minima; saddles and curve components are exempt."""
    verdicts = []
    for cp in points:
        if cp.kind not in (LOCAL_MAX, LOCAL_MIN):
            continue
        fv = float(nl.f(cp.u_value))
        ok = fv >= -tol if cp.kind == LOCAL_MAX else fv <= tol
        verdicts.append({"position": [float(cp.position[0]), float(cp.position[1])],
                         "kind": cp.kind, "u": cp.u_value, "f_of_u": fv,
                         "pass": bool(ok)})
    return verdicts


def _segment_min_distance(P: np.ndarray, Q: np.ndarray) -> tuple[float, np.ndarray]:
    """Minimum distance between two polylines and the location achieving it
    (midpoint of the nearest approach), exact over all segment pairs."""
    best = np.inf
    loc = np.array([np.nan, np.nan])
    A0, A1 = P[:-1], P[1:]
    for b0, b1 in zip(Q[:-1], Q[1:]):
        d, pt = _seg_to_segs(b0, b1, A0, A1)
        if d < best:
            best = d
            loc = pt
    return float(best), loc


def _seg_to_segs(b0, b1, A0, A1):
    """Min distance from segment (b0, b1) to each of many segments (A0, A1)."""
    # Sample-based bound is insufficient at the 2h threshold, so use the exact
    # segment-segment distance formula component-wise.
    d_b = b1 - b0
    d_a = A1 - A0
    r = b0 - A0
    a = np.einsum("ij,ij->i", d_a, d_a)
    e = float(d_b @ d_b)
    f = d_a[:, 0] * d_b[0] + d_a[:, 1] * d_b[1]
    c = np.einsum("ij,ij->i", d_a, r)
    g = r[:, 0] * d_b[0] + r[:, 1] * d_b[1]
    denom = a * e - f * f
    s = np.where(denom > 1e-300, np.clip((f * g - c * e) / np.where(denom > 1e-300, denom, 1.0), 0, 1), 0.0)
    t = np.where(e > 1e-300, np.clip((g + s * f) / max(e, 1e-300), 0, 1), 0.0)
    # One clamped re-pass for the boundary cases.
    s = np.where(a > 1e-300, np.clip((t * f - c) / np.where(a > 1e-300, a, 1.0), 0, 1), 0.0)
    t = np.where(e > 1e-300, np.clip((g + s * f) / max(e, 1e-300), 0, 1), 0.0)
    pa = A0 + s[:, None] * d_a
    pb = b0 + t[:, None] * d_b
    dist = np.hypot(pa[:, 0] - pb[:, 0], pa[:, 1] - pb[:, 1])
    k = int(np.argmin(dist))
    return float(dist[k]), 0.5 * (pa[k] + pb[k])


def _self_intersections(P: np.ndarray, tol: float) -> list:
    """Proper crossings between non-adjacent segments of one polyline."""
    n = len(P) - 1
    if n < 3:
        return []
    A0, A1 = P[:-1], P[1:]
    D = A1 - A0
    closed = bool(np.allclose(P[0], P[-1]))
    hits = []
    for i in range(n - 2):
        jmax = n - 1 if (closed and i == 0) else n
        j0 = i + 2
        if j0 >= jmax:
            continue
        b0, b1, db = A0[j0:jmax], A1[j0:jmax], D[j0:jmax]
        a0, da = A0[i], D[i]
        d1 = da[0] * (b0[:, 1] - a0[1]) - da[1] * (b0[:, 0] - a0[0])
        d2 = da[0] * (b1[:, 1] - a0[1]) - da[1] * (b1[:, 0] - a0[0])
        d3 = db[:, 0] * (a0[1] - b0[:, 1]) - db[:, 1] * (a0[0] - b0[:, 0])
        a1 = A1[i]
        d4 = db[:, 0] * (a1[1] - b0[:, 1]) - db[:, 1] * (a1[0] - b0[:, 0])
        mask = ((d1 > tol) != (d2 > tol)) & ((d3 > tol) != (d4 > tol))
        for k in np.nonzero(mask)[0]:
            hits.append((i, j0 + int(k), tuple(0.5 * (a0 + b1[k]))))
    return hits


def check_level_disjoint(components: list[LevelComponent], h: float) -> dict:
    """Disjointness of same-level components: pairwise polyline distance must
    exceed 2h and every component must be simple."""
    failures = []
    for i in range(len(components)):
        for j in range(i + 1, len(components)):
            a, b = components[i], components[j]
            if len(a.polyline) < 2 or len(b.polyline) < 2:
                if len(a.polyline) and len(b.polyline):
                    d = float(np.min(np.hypot(*(a.polyline[:, None, :] - b.polyline[None, :, :]).reshape(-1, 2).T)))
                    loc = a.polyline[0]
                else:
                    continue
            else:
                d, loc = _segment_min_distance(a.polyline, b.polyline)
            if d <= 2 * h:
                failures.append({"pair": [a.index, b.index], "distance": d,
                                 "location": [float(loc[0]), float(loc[1])]})
    self_hits = []
    for c in components:
        if len(c.polyline) > 3:
            for i, j, loc in _self_intersections(c.polyline, 0.0):
                self_hits.append({"component": c.index, "segments": [i, j],
                                  "location": [float(loc[0]), float(loc[1])]})
    return {"pass": not failures and not self_hits,
            "n_components": len(components),
            "pair_failures": failures, "self_intersections": self_hits}


def check_interface_contact(field, nl: Nonlinearity, domain: Domain, n: int = 256,
                            tau_g: float | None = None) -> dict:
    """Structure of the interface level set S_{u0} where f(u) changes sign:
    component count, boundary contact, gradient bound along it, and the
    boundary extrema of u over each sign region with multiplicities."""
    from .nonlinearity import check_hypothesis_a

    regions = sign_regions(field, nl, domain, n)
    m, M = regions.m, regions.M
    if tau_g is None:
        tau_g = default_tau_g(field, n, domain)
    try:
        u0, unique = find_sign_change(nl, (m, M))
    except SignChangeError as exc:
        return {"error": str(exc), "m": m, "M": M, "u0": None, "consistent": None}
    comps = [c for c in extract_level_set(field, domain, u0, n) if not c.degenerate]
    single = len(comps) == 1
    touches = any(c.touches_boundary for c in comps)
    min_grad = min((c.min_grad_norm for c in comps), default=np.nan)
    hyp = check_hypothesis_a(nl, (m + 1e-9 * (M - m), M), 256) if M > m else None
    violations = []
    if single:
        if not touches:
            violations.append("interface does not reach the boundary")
        if not (min_grad > tau_g):
            violations.append("gradient vanishes somewhere along the interface")
        if regions.p_plus is not None and regions.p_plus.clusters != 1:
            violations.append("boundary maximum over the positive region is not unique")
        if regions.p_minus is not None and regions.p_minus.clusters != 1:
            violations.append("boundary minimum over the negative region is not unique")
    consistent = None if not single else (len(violations) == 0)
    return {
        "u0": float(u0), "u0_unique_sign_change": bool(unique),
        "m": m, "M": M,
        "n_components": len(comps),
        "precondition_single_component": bool(single),
        "touches_boundary": bool(touches),
        "min_grad_on_interface": float(min_grad) if np.isfinite(min_grad) else None,
        "p_plus": regions.p_plus.to_dict() if regions.p_plus else None,
        "p_minus": regions.p_minus.to_dict() if regions.p_minus else None,
        "hypothesis_a": hyp.to_dict() if hyp else None,
        "violations": violations,
        "consistent": consistent,
    }
