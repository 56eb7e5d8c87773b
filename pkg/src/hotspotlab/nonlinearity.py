"""Reaction laws f(u): closed-form families, tabulated laws, the structural
hypothesis-(A) gate, sign-change location, and recovery of f from a radial
solution profile (including the branch audit that decides whether any
autonomous law exists on a given range).

Antiderivatives use the fixed convention F(u) = integral of f from 0 to u,
so F(0) = 0 for every family; ledgers stay comparable across laws.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.interpolate import CubicHermiteSpline, PchipInterpolator

from .quadrature import sign_intervals

BRANCH_TOL = 1e-8  # absolute f disagreement that flags a branch conflict


class NonlinearityError(ValueError):
    """Invalid construction or configuration."""


class FDomainError(NonlinearityError):
    """f evaluated outside its domain of definition."""

    def __init__(self, message: str, u=None):
        super().__init__(message)
        self.u = u


class SignChangeError(NonlinearityError):
    """No sign change of f on the requested interval."""


class Nonlinearity:
    """Base reaction law.  Subclasses provide f, fprime, F and a config dict."""

    name = "base"
    u_min: float = -np.inf  # lower edge of the domain of definition
    u_max: float = np.inf

    def _check_domain(self, u):
        u = np.asarray(u, dtype=float)
        bad = (u < self.u_min) | (u > self.u_max)
        if np.any(bad):
            offending = float(np.atleast_1d(u)[np.atleast_1d(bad)].flat[0])
            raise FDomainError(
                f"{self.name}: u={offending:.6g} outside domain [{self.u_min:g}, {self.u_max:g}]",
                u=offending)
        return u

    def f(self, u):
        raise NotImplementedError

    def fprime(self, u):
        raise NotImplementedError

    def F(self, u):
        raise NotImplementedError

    def to_config(self) -> dict:
        raise NotImplementedError


@dataclass(frozen=True)
class Power(Nonlinearity):
    """f(u) = a * u**m + c."""

    m: float = 1.0
    a: float = 1.0
    c: float = 0.0

    def __post_init__(self):
        if self.m < 0:
            raise NonlinearityError("power exponent must be nonnegative")

    @property
    def name(self):
        return f"power(m={self.m:g},a={self.a:g},c={self.c:g})"

    @property
    def u_min(self):
        # Fractional powers are real only for u >= 0.
        return 0.0 if self.m != int(self.m) else -np.inf

    def f(self, u):
        u = self._check_domain(u)
        return self.a * u**self.m + self.c

    def fprime(self, u):
        u = self._check_domain(u)
        if self.m == 0:
            return np.zeros_like(u)
        return self.a * self.m * u ** (self.m - 1.0)

    def F(self, u):
        u = self._check_domain(u)
        return self.a * u ** (self.m + 1.0) / (self.m + 1.0) + self.c * u

    def to_config(self):
        return {"family": "power", "m": self.m, "a": self.a, "c": self.c}


@dataclass(frozen=True)
class Linear(Nonlinearity):
    """f(u) = lam * u."""

    lam: float = 1.0

    @property
    def name(self):
        return f"linear(lam={self.lam:g})"

    def f(self, u):
        return self.lam * np.asarray(u, dtype=float)

    def fprime(self, u):
        return self.lam * np.ones_like(np.asarray(u, dtype=float))

    def F(self, u):
        u = np.asarray(u, dtype=float)
        return self.lam * u * u / 2.0

    def to_config(self):
        return {"family": "linear", "lam": self.lam}


@dataclass(frozen=True)
class Constant(Nonlinearity):
    """f(u) = c."""

    c: float = 0.0

    @property
    def name(self):
        return f"constant({self.c:g})"

    def f(self, u):
        return self.c * np.ones_like(np.asarray(u, dtype=float))

    def fprime(self, u):
        return np.zeros_like(np.asarray(u, dtype=float))

    def F(self, u):
        return self.c * np.asarray(u, dtype=float)

    def to_config(self):
        return {"family": "constant", "c": self.c}


@dataclass(frozen=True)
class Example1Printed(Nonlinearity):
    """The closed-form law quoted alongside the built-in example1 field:
    f(u) = 3 - sqrt(1 + 2 sqrt(u)) + 8 sqrt(u), defined for u >= 0.

    Kept verbatim and never silently corrected; residual audits measure how
    far it is from the law the example1 field actually satisfies.
    """

    name = "example1_printed"
    u_min = 0.0

    def f(self, u):
        u = self._check_domain(u)
        s = np.sqrt(u)
        return 3.0 - np.sqrt(1.0 + 2.0 * s) + 8.0 * s

    def fprime(self, u):
        u = self._check_domain(u)
        u = np.maximum(u, 1e-300)
        s = np.sqrt(u)
        return -1.0 / (2.0 * s * np.sqrt(1.0 + 2.0 * s)) + 4.0 / s

    def F(self, u):
        u = self._check_domain(u)
        s = np.sqrt(u)
        w = 1.0 + 2.0 * s
        return 3.0 * u + 16.0 / 3.0 * u * s - w**2.5 / 5.0 + w**1.5 / 3.0 - 2.0 / 15.0

    def to_config(self):
        return {"family": "example1_printed"}


class Tabulated(Nonlinearity):
    """Reaction law given by monotone-u (u, f) sample pairs.

    f interpolates the table monotonically (PCHIP); f' uses a centered
    difference with step 1e-6 * max(1, |u|); F integrates the interpolant from
    0 when 0 lies in the table range, else from the table minimum.
    """

    def __init__(self, us, fs, label: str = "tabulated"):
        us = np.asarray(us, dtype=float)
        fs = np.asarray(fs, dtype=float)
        if us.ndim != 1 or us.shape != fs.shape or len(us) < 2:
            raise NonlinearityError("tabulated law needs matching 1-D (u, f) arrays")
        order = np.argsort(us, kind="stable")
        us, fs = us[order], fs[order]
        keep = np.concatenate([[True], np.diff(us) > 0])
        self.us, self.fs = us[keep], fs[keep]
        self.label = label
        self.u_min = float(self.us[0])
        self.u_max = float(self.us[-1])
        self._interp = PchipInterpolator(self.us, self.fs, extrapolate=False)
        self._anti = self._interp.antiderivative()
        self._base = 0.0 if self.u_min <= 0.0 <= self.u_max else self.u_min

    @property
    def name(self):
        return self.label

    def f(self, u):
        u = self._check_domain(u)
        return self._interp(u)

    def fprime(self, u):
        u = self._check_domain(u)
        h = 1e-6 * np.maximum(1.0, np.abs(u))
        lo = np.clip(u - h, self.u_min, self.u_max)
        hi = np.clip(u + h, self.u_min, self.u_max)
        return (self._interp(hi) - self._interp(lo)) / (hi - lo)

    def F(self, u):
        u = self._check_domain(u)
        return self._anti(u) - self._anti(self._base)

    def to_csv(self) -> str:
        lines = ["u,f"]
        for u, f in zip(self.us, self.fs):
            lines.append("%.17g,%.17g" % (u, f))
        return "\n".join(lines) + "\n"

    @classmethod
    def from_csv(cls, text: str, label: str = "tabulated") -> "Tabulated":
        lines = text.strip().splitlines()
        if lines[0] != "u,f":
            raise NonlinearityError("unexpected tabulated CSV header")
        data = np.array([[float(v) for v in line.split(",")] for line in lines[1:]])
        return cls(data[:, 0], data[:, 1], label=label)

    def to_config(self):
        return {"family": "tabulated", "n": int(len(self.us)),
                "u_range": [self.u_min, self.u_max]}


class RecoveredRadial(Tabulated):
    """Law recovered from a monotone radial profile, evaluated through the
    profile itself: a query u is inverted to its radius on the stored cubic
    Hermite interpolant and f is read off in r-space, where the recovered law
    is smooth.  This keeps the recovery exact to interpolation accuracy even
    where f(u) has a square-root singularity."""

    def __init__(self, rs, us, fs, dus, label: str = "recovered"):
        super().__init__(us, fs, label=label)
        order = np.argsort(rs, kind="stable")
        self._r = np.asarray(rs, float)[order]
        self._u = np.asarray(us, float)[order]
        self._f = np.asarray(fs, float)[order]
        self._du = np.asarray(dus, float)[order]
        self._u_of_r = CubicHermiteSpline(self._r, self._u, self._du)
        self._f_of_r = PchipInterpolator(self._r, self._f)
        self._increasing = bool(self._u[-1] >= self._u[0])

    def f(self, u):
        u = self._check_domain(u)
        scalar = np.isscalar(u) or np.asarray(u).ndim == 0
        uu = np.atleast_1d(np.asarray(u, dtype=float))
        rr = self._invert_many(uu.ravel()).reshape(uu.shape)
        out = np.asarray(self._f_of_r(rr), dtype=float)
        return float(out.flat[0]) if scalar else out.reshape(np.asarray(u).shape)

    def _invert_many(self, targets: np.ndarray) -> np.ndarray:
        """Vectorized bisection of u(r) = target on the stored interpolant."""
        table = self._u if self._increasing else -self._u
        t = np.clip(targets if self._increasing else -targets, table[0], table[-1])
        tgt = t if self._increasing else -t
        j = np.clip(np.searchsorted(table, t) - 1, 0, len(table) - 2)
        a = self._r[j].astype(float).copy()
        b = self._r[j + 1].astype(float).copy()
        fa = np.asarray(self._u_of_r(a), dtype=float) - tgt
        fb = np.asarray(self._u_of_r(b), dtype=float) - tgt
        # Roots landing on a bracket endpoint: freeze the bracket there.
        a = np.where(fb == 0.0, b, a)
        b = np.where(fa == 0.0, a, b)
        for _ in range(60):
            m = 0.5 * (a + b)
            fm = np.asarray(self._u_of_r(m), dtype=float) - tgt
            same = (fa < 0) == (fm < 0)
            a = np.where(same, m, a)
            fa = np.where(same, fm, fa)
            b = np.where(same, b, m)
        return 0.5 * (a + b)

    def _invert(self, target: float) -> float:
        return float(self._invert_many(np.array([target]))[0])


@dataclass
class BranchConflict:
    u: float
    radii: list
    f_values: list

    @property
    def spread(self) -> float:
        return float(max(self.f_values) - min(self.f_values))

    def to_dict(self) -> dict:
        return {"u": self.u, "radii": self.radii, "f_values": self.f_values,
                "spread": self.spread}


@dataclass
class BranchReport:
    r_range: tuple[float, float]
    monotone_pieces: list          # [(r_lo, r_hi, direction)]
    conflicts: list                # [BranchConflict], worst first
    autonomous: bool
    probes: int

    def to_dict(self) -> dict:
        return {
            "r_range": list(self.r_range),
            "monotone_pieces": [list(p) for p in self.monotone_pieces],
            "n_conflicts": len(self.conflicts),
            "autonomous": self.autonomous,
            "probes": self.probes,
            "worst_conflicts": [c.to_dict() for c in self.conflicts[:16]],
        }


@dataclass
class HypothesisAReport:
    """Sampled verdict for the structural gate: u*f(u) - 2F(u) > 0, f' > 0,
    with F > 0 tracked alongside since the level-curve results require it."""

    interval: tuple[float, float]
    min_A: float
    argmin_A: float
    min_fprime: float
    min_F: float
    samples: int
    verdict_A: bool
    verdict_fprime: bool
    verdict_F: bool

    @property
    def overall(self) -> bool:
        return self.verdict_A and self.verdict_fprime and self.verdict_F

    def to_dict(self) -> dict:
        return {
            "interval": list(self.interval),
            "min_A": self.min_A,
            "argmin_A": self.argmin_A,
            "min_fprime": self.min_fprime,
            "min_F": self.min_F,
            "samples": self.samples,
            "verdict_A": self.verdict_A,
            "verdict_fprime": self.verdict_fprime,
            "verdict_F": self.verdict_F,
            "overall": self.overall,
        }


def check_hypothesis_a(nl: Nonlinearity, interval: tuple[float, float],
                       n_samples: int = 256) -> HypothesisAReport:
    """Sample u*f - 2F, f' and F at Chebyshev nodes strictly inside the
    interval and report minima plus boolean verdicts."""
    lo, hi = float(interval[0]), float(interval[1])
    if not hi > lo:
        raise NonlinearityError("empty hypothesis interval")
    if n_samples < 100:
        raise NonlinearityError("need at least 100 sample points")
    k = np.arange(n_samples)
    nodes = 0.5 * (lo + hi) + 0.5 * (hi - lo) * np.cos((2 * k + 1) * np.pi / (2 * n_samples))
    nodes = np.sort(nodes)
    fu = np.asarray(nl.f(nodes), dtype=float)
    Fu = np.asarray(nl.F(nodes), dtype=float)
    fp = np.asarray(nl.fprime(nodes), dtype=float)
    A = nodes * fu - 2.0 * Fu
    i = int(np.argmin(A))
    return HypothesisAReport(
        interval=(lo, hi),
        min_A=float(A[i]), argmin_A=float(nodes[i]),
        min_fprime=float(np.min(fp)), min_F=float(np.min(Fu)),
        samples=n_samples,
        verdict_A=bool(A[i] > 0.0),
        verdict_fprime=bool(np.min(fp) > 0.0),
        verdict_F=bool(np.min(Fu) > 0.0),
    )


def find_sign_change(nl_or_fn, interval: tuple[float, float],
                     scan_points: int = 1000) -> tuple[float, bool]:
    """Locate a sign change of f by bisection.

    Returns (u0, unique) where `unique` is False when a scan with
    `scan_points` samples sees more than one sign change.  Raises
    SignChangeError when f has the same sign at both interval ends.
    """
    fn = nl_or_fn.f if isinstance(nl_or_fn, Nonlinearity) else nl_or_fn
    lo, hi = float(interval[0]), float(interval[1])
    flo, fhi = float(fn(lo)), float(fn(hi))
    if flo == 0.0:
        return lo, _count_sign_changes(fn, lo, hi, scan_points) <= 1
    if fhi == 0.0:
        return hi, _count_sign_changes(fn, lo, hi, scan_points) <= 1
    if flo * fhi > 0.0:
        raise SignChangeError(f"no sign change on [{lo:g}, {hi:g}] (f={flo:.3g} and {fhi:.3g})")
    a, b, fa = lo, hi, flo
    for _ in range(300):
        m = 0.5 * (a + b)
        fm = float(fn(m))
        if abs(fm) < 1e-12 or (b - a) < 1e-14:
            return m, _count_sign_changes(fn, lo, hi, scan_points) <= 1
        if (fa < 0) == (fm < 0):
            a, fa = m, fm
        else:
            b = m
    return 0.5 * (a + b), _count_sign_changes(fn, lo, hi, scan_points) <= 1


def _count_sign_changes(fn, lo, hi, n) -> int:
    us = np.linspace(lo, hi, n)
    vals = np.array([float(fn(u)) for u in us])
    signs = np.sign(vals)
    signs = signs[signs != 0]
    return int(np.sum(signs[:-1] != signs[1:]))


def recover_f_from_radial(profile, r_range: tuple[float, float], n: int = 2049,
                          tol: float = BRANCH_TOL):
    """Recover the autonomous law a radial profile satisfies, if one exists.

    profile must expose u(r), du(r), d2u(r); the recovered samples are
    (u(r), -(u'' + u'/r)), with the removable singularity at r=0 handled by
    -(2 u''(0)).  Returns (law, report): the law as a sorted tabulated family
    (with an exact r-space evaluator when the profile is monotone) and a
    branch report listing u-values attained at several radii with materially
    different recovered f.
    """
    r_lo, r_hi = float(r_range[0]), float(r_range[1])
    if not r_hi > r_lo or r_lo < 0:
        raise NonlinearityError("invalid radial range")
    if r_lo == 0.0 and abs(float(profile.du(0.0))) > 1e-10:
        raise NonlinearityError("profile is not even at r=0 (u'(0) != 0)")

    rs = np.linspace(r_lo, r_hi, n)
    us = np.asarray(profile.u(rs), dtype=float)
    dus = np.asarray(profile.du(rs), dtype=float)
    d2us = np.asarray(profile.d2u(rs), dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        neg_lap = -(d2us + np.where(rs > 0, dus / np.where(rs > 0, rs, 1.0), d2us))
    if r_lo == 0.0:
        neg_lap[0] = -2.0 * d2us[0]

    pieces = sign_intervals(lambda r: float(profile.du(max(r, 1e-14))), r_lo, r_hi, n_scan=1024)
    pieces = [(a, b, s) for a, b, s in pieces if s != 0 and (b - a) > 1e-12]

    conflicts = _branch_conflicts(profile, pieces, tol)
    autonomous = len(conflicts) == 0

    if autonomous and len(pieces) == 1:
        law = RecoveredRadial(rs, us, neg_lap, dus,
                              label=f"recovered[{r_lo:g},{r_hi:g}]")
    else:
        law = Tabulated(us, neg_lap, label=f"recovered[{r_lo:g},{r_hi:g}]")

    report = BranchReport(
        r_range=(r_lo, r_hi),
        monotone_pieces=[(a, b, s) for a, b, s in pieces],
        conflicts=sorted(conflicts, key=lambda c: -c.spread),
        autonomous=autonomous,
        probes=257 * max(1, len(pieces) - 1),
    )
    return law, report


def _branch_conflicts(profile, pieces, tol, probes_per_pair: int = 257):
    """Probe u-values shared by different monotone pieces for disagreement in
    the recovered f; piece endpoint values are always probed."""

    def neglap(r: float) -> float:
        if r <= 0:
            return -2.0 * float(profile.d2u(0.0))
        return -(float(profile.d2u(r)) + float(profile.du(r)) / r)

    def invert(piece, target, tol_r=1e-13):
        a, b, _ = piece
        ua, ub = float(profile.u(a)), float(profile.u(b))
        target = float(np.clip(target, min(ua, ub), max(ua, ub)))
        lo, hi = (a, b) if ua <= ub else (b, a)
        flo = float(profile.u(lo)) - target
        fhi = float(profile.u(hi)) - target
        if flo == 0.0:
            return lo
        if fhi == 0.0:
            return hi
        for _ in range(100):
            m = 0.5 * (lo + hi)
            fm = float(profile.u(m)) - target
            if fm == 0.0 or abs(hi - lo) < tol_r:
                return m
            if (flo < 0) == (fm < 0):
                lo, flo = m, fm
            else:
                hi = m
        return 0.5 * (lo + hi)

    conflicts: list[BranchConflict] = []
    for i in range(len(pieces)):
        for j in range(i + 1, len(pieces)):
            ai, bi, _ = pieces[i]
            aj, bj, _ = pieces[j]
            ui = sorted([float(profile.u(ai)), float(profile.u(bi))])
            uj = sorted([float(profile.u(aj)), float(profile.u(bj))])
            lo, hi = max(ui[0], uj[0]), min(ui[1], uj[1])
            if hi < lo:
                continue
            targets = np.unique(np.concatenate([
                np.linspace(lo, hi, probes_per_pair),
                [lo, hi],
            ]))
            for t in targets:
                ri = invert(pieces[i], float(t))
                rj = invert(pieces[j], float(t))
                fi, fj = neglap(ri), neglap(rj)
                if abs(fi - fj) > tol:
                    conflicts.append(BranchConflict(
                        u=float(t), radii=[ri, rj], f_values=[fi, fj]))
    return conflicts


def nonlinearity_from_config(cfg: dict) -> Nonlinearity:
    fam = cfg.get("family")
    if fam == "power":
        return Power(m=float(cfg.get("m", 1.0)), a=float(cfg.get("a", 1.0)),
                     c=float(cfg.get("c", 0.0)))
    if fam == "linear":
        return Linear(lam=float(cfg.get("lam", 1.0)))
    if fam == "constant":
        return Constant(c=float(cfg.get("c", 0.0)))
    if fam == "example1_printed":
        return Example1Printed()
    if fam == "tabulated":
        if "path" in cfg:
            with open(cfg["path"]) as fh:
                return Tabulated.from_csv(fh.read())
        return Tabulated(cfg["u"], cfg["f"])
    raise NonlinearityError(f"unknown nonlinearity family {fam!r}")
