"""Matplotlib figure rendering for the report path.

Figures are written alongside the delimited outputs with deterministic
settings (fixed size and dpi, metadata stripped) so repeated runs produce
identical bytes.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .fields import GridField, sample
from .geometry import Domain
from .topology import LOCAL_MAX, LOCAL_MIN, NON_ISOLATED, SADDLE

_MARKERS = {LOCAL_MAX: ("^", "tab:red"), LOCAL_MIN: ("v", "tab:blue"),
            SADDLE: ("x", "tab:purple"), NON_ISOLATED: ("o", "tab:orange")}


def save_field_figure(path: str, field, domain: Domain, n: int = 128,
                      contours=None, points=None, title: str = "") -> None:
    """Heatmap of the field with optional contour polylines and critical-point
    markers, written to `path` (png)."""
    gf = field if isinstance(field, GridField) else sample(field, domain, max(32, n))
    vals = np.where(gf.valid(), gf.values, np.nan)

    fig, ax = plt.subplots(figsize=(6.0, 5.0), dpi=110)
    x0, y0, x1, y1 = domain.bbox()
    im = ax.imshow(vals, origin="lower", extent=(x0, x1, y0, y1), cmap="viridis",
                   interpolation="nearest")
    fig.colorbar(im, ax=ax, shrink=0.85)
    bp = domain.boundary_polyline(256)
    ax.plot(bp[:, 0], bp[:, 1], color="k", lw=1.2)
    for comp in (contours or []):
        poly = np.asarray(comp.polyline)
        if len(poly) >= 2:
            ax.plot(poly[:, 0], poly[:, 1], color="w", lw=0.8)
        else:
            ax.plot(poly[:, 0], poly[:, 1], marker=".", color="w", ms=4)
    seen = set()
    for cp in (points or []):
        marker, color = _MARKERS.get(cp.kind, (".", "k"))
        label = cp.kind if cp.kind not in seen else None
        seen.add(cp.kind)
        ax.plot([cp.position[0]], [cp.position[1]], marker=marker, color=color,
                ls="none", ms=7, label=label)
        if cp.kind == NON_ISOLATED and cp.component is not None and len(cp.component.polyline) > 1:
            poly = cp.component.polyline
            ax.plot(poly[:, 0], poly[:, 1], color=color, lw=1.4)
    if seen:
        ax.legend(loc="upper right", fontsize=8)
    ax.set_aspect("equal")
    ax.set_title(title or getattr(field, "name", "field"), fontsize=10)
    fig.tight_layout()
    fig.savefig(path, metadata={"Software": None})
    plt.close(fig)


def save_convergence_figure(path: str, log: list, title: str = "") -> None:
    """Residual history of a grid solve."""
    fig, ax = plt.subplots(figsize=(5.0, 3.5), dpi=110)
    res = [entry["residual_inf"] for entry in log]
    ax.semilogy(range(len(res)), np.maximum(res, 1e-300), marker="o", ms=3)
    ax.set_xlabel("Newton iteration")
    ax.set_ylabel("residual sup norm")
    ax.grid(True, which="both", alpha=0.3)
    ax.set_title(title or "convergence", fontsize=10)
    fig.tight_layout()
    fig.savefig(path, metadata={"Software": None})
    plt.close(fig)


def save_profile_figure(path: str, profile, title: str = "") -> None:
    """Radial profile u(r) and u'(r)."""
    fig, ax = plt.subplots(figsize=(5.0, 3.5), dpi=110)
    ax.plot(profile.r, profile.u_nodes, label="u(r)")
    ax.plot(profile.r, profile.du_nodes, label="u'(r)", ls="--")
    ax.set_xlabel("r")
    ax.legend(fontsize=8)
    ax.grid(True, alpha=0.3)
    ax.set_title(title or "radial profile", fontsize=10)
    fig.tight_layout()
    fig.savefig(path, metadata={"Software": None})
    plt.close(fig)
