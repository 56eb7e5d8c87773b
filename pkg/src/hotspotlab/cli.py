"""Command-line front end.

Subcommands: solve, classify, levels, pohozaev, hypothesis, verify-example1,
audit.  Configuration comes from a JSON file (--config) with flag overrides;
unknown keys are rejected.  Artifacts are JSON reports, CSV tables, SVG
figures, and matplotlib PNG figures, all byte-deterministic for a fixed
configuration and seed.

Exit codes: 0 success, 1 verification/check failure, 2 solver
non-convergence, 3 invalid configuration.
"""

from __future__ import annotations

import argparse
import concurrent.futures as cf
import copy
import json
import os
import sys

import numpy as np

from . import __version__
from .fields import GridField, catalog, catalog_domain, sample
from .geometry import Disk, DomainError, domain_from_config
from .nonlinearity import (NonlinearityError, check_hypothesis_a,
                           nonlinearity_from_config)
from .pohozaev import audit_identity, ledger, partition_ball, saddle_exclusion_test
from .report import ensure_dir, levels_csv, write_json, write_text
from .solver import SolverError, SolverParams, residual_norm, solve_grid, solve_radial
from .svg import render_svg
from .verify import check_neumann_constraint, check_unique_peak, verify_example1
from . import figures
from . import topology as T

EXIT_OK = 0
EXIT_CHECK_FAILED = 1
EXIT_SOLVER = 2
EXIT_CONFIG = 3


class ConfigError(ValueError):
    pass


DEFAULT_CONFIG = {
    "domain": {"type": "disk", "center": [0.0, 0.0], "radius": 1.0},
    "nonlinearity": None,
    "field": None,
    "grid": {"n": 128},
    "solver": {"bc": "dirichlet", "u_center_guess": 0.3, "tol_residual": None,
               "max_newton": 50, "method": "grid"},
    "analysis": {"tau_g": None, "delta_list": None, "levels": 9,
                 "ring_samples": 64, "pohozaev": {"p": [0.0, 0.0], "delta": 0.5}},
    "output": {"dir": "out", "formats": ["json", "csv", "svg", "png"]},
}

_SCHEMA = {
    "domain": {"type", "center", "radius", "lo", "hi", "vertices"},
    "nonlinearity": {"family", "m", "a", "c", "lam", "path", "u", "f"},
    "field": {"source", "name", "path"},
    "grid": {"n"},
    "solver": {"bc", "u_center_guess", "tol_residual", "max_newton", "method"},
    "analysis": {"tau_g", "delta_list", "levels", "ring_samples", "pohozaev"},
    "output": {"dir", "formats"},
}


def load_config(path: str | None) -> dict:
    cfg = copy.deepcopy(DEFAULT_CONFIG)
    if path is None:
        return cfg
    try:
        with open(path) as fh:
            user = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    if not isinstance(user, dict):
        raise ConfigError("config root must be a JSON object")
    for key, val in user.items():
        if key not in DEFAULT_CONFIG:
            raise ConfigError(f"unknown config section {key!r}")
        if isinstance(val, dict):
            allowed = _SCHEMA.get(key, set())
            for sub in val:
                if sub not in allowed:
                    raise ConfigError(f"unknown key {key}.{sub!r}")
            if key == "analysis" and "pohozaev" in val and isinstance(val["pohozaev"], dict):
                for sub in val["pohozaev"]:
                    if sub not in {"p", "delta"}:
                        raise ConfigError(f"unknown key analysis.pohozaev.{sub!r}")
            base = cfg[key] if isinstance(cfg.get(key), dict) else {}
            merged = dict(base)
            merged.update(val)
            cfg[key] = merged
        else:
            cfg[key] = val
    return cfg


def _field_from_spec(spec: str | dict, cfg: dict):
    """Resolve a field source into (field, domain).

    String forms: 'catalog:NAME' or 'csv:PATH'.
    """
    if isinstance(spec, str):
        kind, _, arg = spec.partition(":")
        spec = {"source": kind, "name": arg, "path": arg}
    kind = spec.get("source")
    if kind == "catalog":
        name = spec.get("name")
        fields = catalog()
        if name not in fields:
            raise ConfigError(f"unknown catalog field {name!r}; have {sorted(fields)}")
        dom = (domain_from_config(cfg["domain"]) if cfg.get("_explicit_domain")
               else catalog_domain(name))
        return fields[name], dom
    if kind == "csv":
        dom = domain_from_config(cfg["domain"])
        with open(spec["path"]) as fh:
            return GridField.from_csv(fh.read(), dom), dom
    raise ConfigError(f"unknown field source {kind!r}")


def _solve_from_config(cfg: dict):
    """Run the configured solve; returns (field, domain, extras)."""
    dom = domain_from_config(cfg["domain"])
    nl_cfg = cfg.get("nonlinearity")
    if nl_cfg is None:
        raise ConfigError("solve requires a nonlinearity section")
    nl = nonlinearity_from_config(nl_cfg)
    sc = cfg["solver"]
    params = SolverParams(tol_residual=sc.get("tol_residual"),
                          max_newton=int(sc.get("max_newton", 50)))
    method = sc.get("method", "grid")
    if method == "radial":
        if not isinstance(dom, Disk):
            raise ConfigError("radial solve needs a disk domain")
        prof = solve_radial(nl, dom.radius, sc["bc"], float(sc.get("u_center_guess", 0.3)), params)
        field = prof.as_field(dom.center)
        return field, dom, {"profile": prof, "nl": nl,
                            "log": [{"secant_steps": prof.secant_steps,
                                     "boundary_miss": prof.boundary_miss,
                                     "residual": prof.residual}]}
    n = int(cfg["grid"]["n"])
    init = GridField(dom, n)
    init.values = np.where(init.valid(), float(sc.get("u_center_guess", 0.0)) * 0.0, np.nan)
    sol, log = solve_grid(dom, nl, sc["bc"], init, params)
    return sol, dom, {"nl": nl, "log": log}


def acquire_field(cfg: dict, field_flag: str | None):
    """Field resolution order: --field flag, config field section, solve."""
    if field_flag:
        field, dom = _field_from_spec(field_flag, cfg)
        nl = nonlinearity_from_config(cfg["nonlinearity"]) if cfg.get("nonlinearity") else None
        return field, dom, {"nl": nl}
    if cfg.get("field"):
        field, dom = _field_from_spec(cfg["field"], cfg)
        nl = nonlinearity_from_config(cfg["nonlinearity"]) if cfg.get("nonlinearity") else None
        return field, dom, {"nl": nl}
    return _solve_from_config(cfg)


def _say(args, msg: str):
    if not args.quiet:
        print(msg)


def _wants(cfg, fmt: str) -> bool:
    return fmt in cfg["output"].get("formats", [])


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------

def cmd_solve(args, cfg) -> int:
    out = ensure_dir(args.out or cfg["output"]["dir"])
    field, dom, extras = _solve_from_config(cfg)
    log = extras.get("log", [])
    if isinstance(field, GridField):
        write_text(os.path.join(out, "field.csv"), field.to_csv())
        if _wants(cfg, "png"):
            figures.save_convergence_figure(os.path.join(out, "convergence.png"), log)
    else:
        prof = extras["profile"]
        lines = ["r,u,du"]
        for r, u, v in zip(prof.r, prof.u_nodes, prof.du_nodes):
            lines.append("%.17g,%.17g,%.17g" % (r, u, v))
        write_text(os.path.join(out, "profile.csv"), "\n".join(lines) + "\n")
        if _wants(cfg, "png"):
            figures.save_profile_figure(os.path.join(out, "profile.png"), prof)
        gf = sample(field, dom, int(cfg["grid"]["n"]))
        write_text(os.path.join(out, "field.csv"), gf.to_csv())
    write_json(os.path.join(out, "convergence.json"), {"log": log}, cfg)
    if _wants(cfg, "png"):
        figures.save_field_figure(os.path.join(out, "field.png"), field, dom,
                                  n=int(cfg["grid"]["n"]))
    _say(args, f"solve: wrote field artifacts to {out}")
    return EXIT_OK


def cmd_classify(args, cfg) -> int:
    out = ensure_dir(args.out or cfg["output"]["dir"])
    field, dom, extras = acquire_field(cfg, args.field)
    nl = extras.get("nl")
    n = int(cfg["grid"]["n"])
    points = T.classify_field(field, dom, nl, tau_g=cfg["analysis"].get("tau_g"), n=n,
                              ring_samples=int(cfg["analysis"].get("ring_samples", 64)))
    doc = {"points": [cp.to_dict() for cp in points],
           "counts": {k: sum(1 for cp in points if cp.kind == k)
                      for k in (T.LOCAL_MAX, T.LOCAL_MIN, T.SADDLE, T.NON_ISOLATED)}}
    if nl is not None:
        doc["extremum_sign_checks"] = T.check_extremum_sign(field, nl, points)
    write_json(os.path.join(out, "critical_points.json"), doc, cfg)
    if _wants(cfg, "png"):
        figures.save_field_figure(os.path.join(out, "field.png"), field, dom, n=n,
                                  points=points)
    if _wants(cfg, "svg"):
        write_text(os.path.join(out, "field.svg"),
                   render_svg(field, dom, points=points))
    _say(args, f"classify: {doc['counts']}")
    return EXIT_OK


def _level_values(cfg, field, dom, args):
    if getattr(args, "t", None) is not None:
        return [float(args.t)]
    spec = cfg["analysis"].get("levels", 9)
    if isinstance(spec, list):
        return [float(t) for t in spec]
    gf = field if isinstance(field, GridField) else sample(field, dom, int(cfg["grid"]["n"]))
    vals = gf.values[gf.valid()]
    lo, hi = float(np.nanmin(vals)), float(np.nanmax(vals))
    k = int(spec)
    return [lo + (hi - lo) * (i + 1) / (k + 1) for i in range(k)]


def cmd_levels(args, cfg) -> int:
    out = ensure_dir(args.out or cfg["output"]["dir"])
    field, dom, _ = acquire_field(cfg, args.field)
    n = int(cfg["grid"]["n"])
    ts = _level_values(cfg, field, dom, args)

    def one(t):
        return T.extract_level_set(field, dom, t, n=n)

    workers = max(1, args.workers)
    if workers > 1:
        with cf.ThreadPoolExecutor(max_workers=workers) as pool:
            per_level = list(pool.map(one, ts))
    else:
        per_level = [one(t) for t in ts]
    components = []
    for comps in per_level:
        for c in comps:
            c.index = len(components)
            components.append(c)
    write_text(os.path.join(out, "levels.csv"), levels_csv(components))
    if _wants(cfg, "svg"):
        write_text(os.path.join(out, "levels.svg"),
                   render_svg(field, dom, contours=components))
    if _wants(cfg, "png"):
        figures.save_field_figure(os.path.join(out, "levels.png"), field, dom, n=n,
                                  contours=components)
    write_json(os.path.join(out, "levels.json"),
               {"levels": ts, "components": [c.to_dict() for c in components]}, cfg)
    _say(args, f"levels: {len(components)} component(s) across {len(ts)} level(s)")
    return EXIT_OK


def cmd_pohozaev(args, cfg) -> int:
    out = ensure_dir(args.out or cfg["output"]["dir"])
    field, dom, extras = acquire_field(cfg, args.field)
    nl = extras.get("nl")
    if nl is None:
        raise ConfigError("pohozaev needs a nonlinearity (config section or solve)")
    pz = cfg["analysis"]["pohozaev"]
    p = [float(v) for v in (args.p.split(",") if args.p else pz["p"])]
    delta = float(args.delta if args.delta is not None else pz["delta"])
    n = int(cfg["grid"]["n"])
    part = partition_ball(field, dom, p, delta, n=n)
    doc = {
        "partition": {"p": p, "delta": delta, "ring_measure": part.ring_measure,
                      "plus_measure": part.plus_measure, "minus_measure": part.minus_measure,
                      "n_tangency_max": part.n_tangency_max},
        "ledgers": {region: ledger(field, nl, part, region).to_dict()
                    for region in ("whole", "plus", "minus")},
        "audit": audit_identity(field, nl, dom, p, delta, "whole"),
        "saddle_exclusion": saddle_exclusion_test(field, nl, dom, p, delta, n=n),
    }
    write_json(os.path.join(out, "ledger.json"), doc, cfg)
    if _wants(cfg, "svg"):
        write_text(os.path.join(out, "partition.svg"),
                   render_svg(field, dom, partitions=[part]))
    _say(args, f"pohozaev: residual_printed={doc['ledgers']['whole']['residual_printed']:.3e} "
               f"residual_oracle={doc['ledgers']['whole']['residual_oracle']:.3e}")
    return EXIT_OK


def cmd_hypothesis(args, cfg) -> int:
    out = ensure_dir(args.out or cfg["output"]["dir"])
    if args.family:
        nl_cfg = {"family": args.family}
        for k in ("m", "a", "c", "lam"):
            v = getattr(args, k)
            if v is not None:
                nl_cfg[k] = float(v)
        nl = nonlinearity_from_config(nl_cfg)
    elif cfg.get("nonlinearity"):
        nl = nonlinearity_from_config(cfg["nonlinearity"])
    else:
        raise ConfigError("hypothesis needs --family or a config nonlinearity")
    lo, hi = (float(v) for v in args.interval.split(","))
    rep = check_hypothesis_a(nl, (lo, hi), n_samples=max(100, args.samples))
    doc = {"nonlinearity": nl.to_config(), "report": rep.to_dict()}
    write_json(os.path.join(out, "hypothesis.json"), doc, cfg)
    _say(args, f"hypothesis: overall={'pass' if rep.overall else 'fail'} "
               f"min_A={rep.min_A:.3e} min_fprime={rep.min_fprime:.3e} min_F={rep.min_F:.3e}")
    return EXIT_OK if rep.overall else EXIT_CHECK_FAILED


def cmd_verify_example1(args, cfg) -> int:
    out = ensure_dir(args.out or cfg["output"]["dir"])
    rep = verify_example1(args.radius, resolution=int(cfg["grid"]["n"]))
    write_json(os.path.join(out, "verify_example1.json"), rep.to_dict(), cfg)
    if args.junit:
        write_text(os.path.join(out, "verify_example1.xml"), rep.to_junit_xml())
    field = catalog()["example1"]
    dom = Disk((0.0, 0.0), float(args.radius))
    if _wants(cfg, "png"):
        comps = []
        for t in (0.05, 0.1, 0.15, 0.2, 0.25):
            comps.extend(T.extract_level_set(field, dom, t, n=128))
        figures.save_field_figure(os.path.join(out, "example1.png"), field, dom,
                                  n=128, contours=comps)
    if _wants(cfg, "svg"):
        comps = T.detect_nonisolated(field, dom, 0.25, n=128)
        write_text(os.path.join(out, "example1.svg"),
                   render_svg(field, dom, contours=comps))
    for c in rep.checks:
        _say(args, f"[{'PASS' if c.passed else 'FAIL'}] {c.anchor}: {c.observed}")
    _say(args, f"verify-example1 R={args.radius}: overall "
               f"{'pass' if rep.overall else 'FAIL'}")
    return EXIT_OK if rep.overall else EXIT_CHECK_FAILED


def cmd_audit(args, cfg) -> int:
    out = ensure_dir(args.out or cfg["output"]["dir"])
    field, dom, extras = acquire_field(cfg, args.field)
    nl = extras.get("nl")
    n = int(cfg["grid"]["n"])
    doc: dict = {"seed": args.seed, "n": n}

    if isinstance(field, GridField):
        write_text(os.path.join(out, "field.csv"), field.to_csv())
    else:
        write_text(os.path.join(out, "field.csv"), sample(field, dom, n).to_csv())
    if "log" in extras:
        doc["convergence"] = extras["log"]

    points = T.classify_field(field, dom, nl, tau_g=cfg["analysis"].get("tau_g"), n=n,
                              ring_samples=int(cfg["analysis"].get("ring_samples", 64)))
    doc["critical_points"] = [cp.to_dict() for cp in points]
    doc["counts"] = {k: sum(1 for cp in points if cp.kind == k)
                     for k in (T.LOCAL_MAX, T.LOCAL_MIN, T.SADDLE, T.NON_ISOLATED)}

    ts = _level_values(cfg, field, dom, args)
    components = []
    workers = max(1, args.workers)
    if workers > 1:
        with cf.ThreadPoolExecutor(max_workers=workers) as pool:
            per_level = list(pool.map(lambda t: T.extract_level_set(field, dom, t, n=n), ts))
    else:
        per_level = [T.extract_level_set(field, dom, t, n=n) for t in ts]
    for comps in per_level:
        for c in comps:
            c.index = len(components)
            components.append(c)
    write_text(os.path.join(out, "levels.csv"), levels_csv(components))
    h = T.working_h(field, dom, n)
    doc["level_disjointness"] = {str(t): T.check_level_disjoint(
        [c for c in components if c.level == t and not c.degenerate], h) for t in ts}

    if nl is not None:
        doc["extremum_sign_checks"] = T.check_extremum_sign(field, nl, points)
        doc["residual_norm"] = residual_norm(field, nl, dom, seed=args.seed)
        doc["neumann_constraint"] = check_neumann_constraint(field, nl, dom, n=n)
        doc["interface"] = T.check_interface_contact(field, nl, dom, n=n)
        doc["unique_peak"] = check_unique_peak(field, nl, dom, n=n)
        pz = cfg["analysis"]["pohozaev"]
        p, delta = [float(v) for v in pz["p"]], float(pz["delta"])
        try:
            part = partition_ball(field, dom, p, delta, n=min(n, 192))
            doc["pohozaev"] = {region: ledger(field, nl, part, region).to_dict()
                               for region in ("whole", "plus", "minus")}
            doc["saddle_exclusion"] = saddle_exclusion_test(field, nl, dom, p, delta,
                                                            n=min(n, 192))
        except Exception as exc:  # ledger is best-effort in the audit
            doc["pohozaev_error"] = str(exc)

    write_json(os.path.join(out, "audit.json"), doc, cfg)
    if _wants(cfg, "svg"):
        write_text(os.path.join(out, "levels.svg"),
                   render_svg(field, dom, contours=components, points=points))
    if _wants(cfg, "png"):
        figures.save_field_figure(os.path.join(out, "audit.png"), field, dom, n=n,
                                  contours=components, points=points)
    _say(args, f"audit: {doc['counts']}; artifacts in {out}")
    return EXIT_OK


# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="hotspotlab",
        description="Laboratory for 2-D semilinear elliptic equations: solve "
                    "-lap(u) = f(u), classify critical points and level sets, "
                    "and audit local Pohozaev ledgers.",
        epilog="Config file defaults: " + json.dumps(DEFAULT_CONFIG))
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--config", default=None, help="JSON config path")
        sp.add_argument("--out", default=None, help="output directory")
        sp.add_argument("--n", type=int, default=None, help="grid nodes per axis")
        sp.add_argument("--seed", type=int, default=0, help="seed for sample-point generators")
        sp.add_argument("--junit", action="store_true", help="also write JUnit XML")
        sp.add_argument("--quiet", action="store_true", help="suppress progress output")
        sp.add_argument("--workers", type=int, default=1, help="worker threads for sweeps")

    sp = sub.add_parser("solve", help="solve the configured problem, write field CSV + convergence log")
    common(sp)
    sp.set_defaults(fn=cmd_solve)

    sp = sub.add_parser("classify", help="find and classify critical points")
    common(sp)
    sp.add_argument("--field", default=None, help="catalog:NAME or csv:PATH")
    sp.set_defaults(fn=cmd_classify)

    sp = sub.add_parser("levels", help="extract level-set components (CSV + SVG)")
    common(sp)
    sp.add_argument("--field", default=None, help="catalog:NAME or csv:PATH")
    sp.add_argument("--t", type=float, default=None, help="single level value")
    sp.set_defaults(fn=cmd_levels)

    sp = sub.add_parser("pohozaev", help="evaluate the local Pohozaev ledger at (p, delta)")
    common(sp)
    sp.add_argument("--field", default=None, help="catalog:NAME or csv:PATH")
    sp.add_argument("--p", default=None, help="center point as X,Y")
    sp.add_argument("--delta", type=float, default=None, help="ball radius")
    sp.set_defaults(fn=cmd_pohozaev)

    sp = sub.add_parser("hypothesis", help="check the structural gate for a reaction law")
    common(sp)
    sp.add_argument("--family", default=None, help="power | linear | constant | example1_printed")
    sp.add_argument("--m", type=float, default=None)
    sp.add_argument("--a", type=float, default=None)
    sp.add_argument("--c", type=float, default=None)
    sp.add_argument("--lam", type=float, default=None)
    sp.add_argument("--interval", default="0,1", help="interval lo,hi (default 0,1)")
    sp.add_argument("--samples", type=int, default=256)
    sp.set_defaults(fn=cmd_hypothesis)

    sp = sub.add_parser("verify-example1", help="audit the built-in counterexample field")
    common(sp)
    sp.add_argument("--radius", type=float, default=1.0, choices=[1.0, 2.0],
                    help="disk radius (1 or 2)")
    sp.set_defaults(fn=cmd_verify_example1)

    sp = sub.add_parser("audit", help="full pipeline: solve, classify, structural checks, ledgers")
    common(sp)
    sp.add_argument("--field", default=None, help="catalog:NAME or csv:PATH")
    sp.set_defaults(fn=cmd_audit)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config)
        if args.config:
            with open(args.config) as fh:
                cfg["_explicit_domain"] = "domain" in json.load(fh)
        else:
            cfg["_explicit_domain"] = False
        if args.n is not None:
            cfg["grid"]["n"] = int(args.n)
        if args.out is not None:
            cfg["output"]["dir"] = args.out
        code = args.fn(args, cfg)
        return code
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (DomainError, NonlinearityError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except SolverError as exc:
        print(f"solver error: {exc}", file=sys.stderr)
        return EXIT_SOLVER


if __name__ == "__main__":
    sys.exit(main())
