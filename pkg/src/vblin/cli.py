"""Command line driver: JSON scenario in, JSON report (and SVG) out.

Exit codes: 0 everything passed, 2 certified failure, 3 configuration error.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import sys
from importlib import resources
from pathlib import Path

import numpy as np

from . import __version__
from .calculus import seminorm
from .contour import contour_figure
from .estimates import EstimateReport, block_continuity_probe, estimate_points, verify_estimates
from .exprlang import ExprError, evaluate, parse, to_string
from .foliation import (
    EmptyBandError, HomogeneousFn, PreconditionError, check_homogeneity,
    check_homotopy_leaf_invariance, check_leaf_preserving, default_samples,
    estimate_degree, level_components,
)
from .hadamard import BundleMap, NotZeroSectionPreserving, fiber_tangent
from .linearize import HomotopyConfig, Kind, admissible_delta, linhom, support_check, tube_samples
from .symmetry import detect_hyperbolic, lin_group, linlp_group

EXIT_OK = 0
EXIT_FAIL = 2
EXIT_CONFIG = 3

log = logging.getLogger("vblin")

COMMANDS = ("linearize", "verify-estimates", "symmetry", "plot", "foliation-check", "parse-check")


class ConfigError(Exception):
    pass


def load_schema(command: str) -> dict:
    text = resources.files("vblin").joinpath("schemas", f"{command}.json").read_text()
    return json.loads(text)


def load_scenario(path, command: str):
    """Read and validate a scenario; returns (scenario, raw bytes)."""
    import jsonschema

    try:
        raw = Path(path).read_bytes()
    except OSError as exc:
        raise ConfigError(f"cannot read scenario: {exc}") from None
    try:
        scenario = json.loads(raw)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"scenario is not valid JSON: {exc}") from None
    try:
        jsonschema.validate(scenario, load_schema(command))
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ConfigError(f"schema violation at {where}: {exc.message}") from None
    return scenario, raw


def _build_map(scenario) -> BundleMap:
    cfg = scenario["map"]
    domain_cfg = scenario.get("domain")
    try:
        return BundleMap.from_config(cfg, domain_cfg)
    except (ExprError, NotZeroSectionPreserving, ValueError) as exc:
        raise ConfigError(f"bad map: {exc}") from None


def _homog(cfg) -> HomogeneousFn:
    try:
        return HomogeneousFn(cfg["g"], float(cfg.get("k", 1.0)), tuple(cfg.get("vars", ("u", "v"))))
    except (ExprError, ValueError) as exc:
        raise ConfigError(f"bad function: {exc}") from None


def _window(scenario, default=((-2.0, 2.0), (-2.0, 2.0))):
    return tuple(tuple(float(x) for x in w) for w in scenario.get("window", default))


# --- commands ---------------------------------------------------------------------


def cmd_linearize(scenario) -> tuple:
    h = _build_map(scenario)
    try:
        kind = Kind.parse(scenario["kind"])
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    eps = float(scenario["epsilon"])
    grids = scenario.get("grids", {})
    tols = scenario.get("tolerances", {})
    t_grid = tuple(grids.get("t_grid", (0.0, 0.25, 0.5, 0.75, 1.0)))
    try:
        template = HomotopyConfig(
            delta=eps, t_grid=t_grid,
            base_points=grids.get("base_points", 9), fiber_points=grids.get("fiber_points", 21),
            min_image_sep_ratio=tols.get("min_image_sep_ratio", 1e-3),
        )
        search = admissible_delta(h, kind, eps, template)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    result = {"map": h.describe(), "search": search.to_json(), "grids": template.to_json()}
    if not search.passed:
        result["properties"] = {}
        return result, False

    cfg = template.with_delta(search.delta)
    n = grids.get("samples", 1000)
    limits = {
        "endpoint": tols.get("endpoint", 1e-12),
        "linearization": tols.get("linearization", 1e-8),
        "support": tols.get("support", 1e-12),
        "zero_section": tols.get("zero_section", 1e-10),
    }
    props = {}
    xs, vs = tube_samples(h, n, h.domain.fiber_radius)
    ref = np.hstack(h(xs, vs))
    props["endpoint"] = float(np.max(np.abs(linhom(h, cfg, 1.0, xs, vs, check_domain=False) - ref)))
    a_delta = cfg.bump.a * cfg.delta
    xi, vi = tube_samples(h, n, min(a_delta, h.domain.fiber_radius))
    lin = np.hstack(fiber_tangent(h)(xi, vi))
    props["linearization"] = float(np.max(np.abs(linhom(h, cfg, 0.0, xi, vi, check_domain=False) - lin)))
    b_delta = cfg.bump.b * cfg.delta
    if b_delta < h.domain.fiber_radius:
        xo, vo = tube_samples(h, n, h.domain.fiber_radius, b_delta)
        props["support"] = support_check(h, cfg, cfg.t_grid, xo, vo)
    else:
        props["support"] = 0.0
    zx = h.domain.base_grid(cfg.base_points)
    zv = np.zeros((len(zx), h.source.fiber_dim))
    z_ref = np.hstack(h(zx, zv))
    props["zero_section"] = max(
        float(np.max(np.abs(linhom(h, cfg, t, zx, zv, check_domain=False) - z_ref))) for t in cfg.t_grid
    )
    checks = {k: {"value": props[k], "limit": limits[k], "pass": bool(props[k] <= limits[k])} for k in limits}
    result["delta"] = cfg.delta
    result["properties"] = checks
    result["samples"] = n
    mx = h.source.base_dim
    traj = []
    for probe in scenario.get("probes", []):
        p = np.asarray(probe, dtype=float)
        if len(p) != h.source.dim:
            raise ConfigError(f"probe {probe} has wrong dimension")
        traj.append({
            "point": [float(x) for x in p],
            "trajectory": [
                [float(x) for x in linhom(h, cfg, t, p[:mx], p[mx:], check_domain=False)] for t in cfg.t_grid
            ],
        })
    result["trajectories"] = traj
    return result, all(c["pass"] for c in checks.values())


def cmd_verify_estimates(scenario) -> tuple:
    h = _build_map(scenario)
    grids = scenario.get("grids", {})
    t_grid = scenario.get("t_grid", [0.0, 0.25, 0.5, 0.75, 1.0])
    report = EstimateReport()
    for d in scenario.get("deltas", []):
        cfg = HomotopyConfig(delta=float(d), t_grid=tuple(sorted(set(t_grid) | {0.0, 1.0})))
        K = estimate_points(h, d, grids.get("base_points", 5), grids.get("fiber_points", 9),
                            grids.get("tube_points", 9))
        for t in t_grid:
            report.extend(verify_estimates(h, cfg, float(t), K, grid_id=f"domain+tube({len(K)})"))
    result = {"map": h.describe(), "estimates": report.to_json(), "grids": grids, "t_grid": t_grid}
    if report.records:
        print(report.table(), file=sys.stderr)
    ok = report.passed
    if "seminorm_orders" in scenario:
        K = estimate_points(h, max(scenario.get("deltas", [0.1])))
        nx = h.target.base_dim
        result["seminorms"] = {
            str(r): seminorm(lambda w: h.stacked(w)[:, nx:], r, K, True, h.source.base_dim)
            for r in scenario["seminorm_orders"]
        }
    if "continuity" in scenario:
        c = scenario["continuity"]
        zs = np.asarray(c["zero_section"], dtype=float) if "zero_section" in c else None
        probe = block_continuity_probe(h, HomotopyConfig(delta=max(c["deltas"])), float(c.get("t", 0.0)),
                                       c["deltas"], zs)
        cont = probe.to_json()
        if c.get("expect_q_gap"):
            # the Q gap must stay bounded away from zero for every delta
            floor = min(min(g) for g in probe.q_gap_zero_section)
            cont["q_gap_min"] = floor
            cont["q_gap_persists"] = bool(floor > 1e-3)
            ok = ok and cont["q_gap_persists"]
        result["continuity"] = cont
        ok = ok and probe.passed
    return result, ok


def cmd_symmetry(scenario) -> tuple:
    g = _homog(scenario)
    tol = scenario.get("tol", 1e-8)
    window = _window(scenario)
    res = scenario.get("resolution", 200)
    try:
        lin = lin_group(g, tol, scenario.get("sweep_resolution", 4096))
        levels = scenario.get("levels")
        if levels is None:
            from .foliation import default_levels
            levels = default_levels(g, window, res)
        labelings = [level_components(g, c, window, res) for c in levels]
    except (ExprError, EmptyBandError) as exc:
        raise ConfigError(str(exc)) from None
    lp = linlp_group(lin, g, labelings, levels)
    hyp, hres = detect_hyperbolic(g, tol)
    result = {
        "g": g.canonical(),
        "k": g.degree,
        "tol": tol,
        "levels": levels,
        "lin": lin.to_json(),
        "linlp": lp.to_json(),
        "hyperbolic_residuals": {repr(t): r for t, r in hres.items()},
        "homogeneity_residual": check_homogeneity(g, default_samples()),
    }
    ok = True
    exp = scenario.get("expect", {})
    checks = {}
    for key, grp, attr in (("lin_kind", lin, "kind"), ("lin_order", lin, "order"),
                           ("linlp_kind", lp, "kind"), ("linlp_order", lp, "order")):
        if key in exp:
            checks[key] = {"expected": exp[key], "got": getattr(grp, attr), "pass": getattr(grp, attr) == exp[key]}
            ok = ok and checks[key]["pass"]
    result["expectations"] = checks
    svg = None
    if scenario.get("plot"):
        svg = contour_figure(g, levels, window, res, title=f"g = {g.canonical()}").to_svg()
    return result, ok, svg


def cmd_plot(scenario) -> tuple:
    g = _homog(scenario)
    window = _window(scenario)
    try:
        fig = contour_figure(g, scenario["levels"], window, scenario.get("resolution", 200),
                             title=scenario.get("title", f"g = {g.canonical()}"))
    except ExprError as exc:
        raise ConfigError(str(exc)) from None
    empty = fig.empty_levels()
    for c in empty:
        log.warning("level %r produced no contour inside the window", c)
    return fig.to_svg(scenario.get("size", 480)), empty


def cmd_foliation_check(scenario) -> tuple:
    f = _homog(scenario["f"])
    h = _build_map(scenario)
    if h.target.fiber_dim != f.dim or h.source.fiber_dim != f.dim:
        raise ConfigError("map fiber dimension does not match f")
    window = _window(scenario)
    res = scenario.get("resolution", 200)
    levels = scenario.get("levels", [1.0])
    samples = default_samples(f.dim, scenario.get("samples", 64))
    result = {"f": f.canonical(), "k": f.degree, "map": h.describe(), "levels": levels, "resolution": res}
    ok = True
    homog = check_homogeneity(f, samples)
    deg = None
    try:
        deg = estimate_degree(f, samples)
    except ValueError as exc:
        result["degree_error"] = str(exc)
    result["homogeneity_residual"] = homog
    result["degree_estimate"] = deg
    ok = ok and homog <= 1e-9 and deg is not None and abs(deg - f.degree) <= 1e-9

    labelings, counts = [], {}
    for c in levels:
        try:
            lab = level_components(f, c, window, res)
        except EmptyBandError as exc:
            raise ConfigError(str(exc)) from None
        labelings.append(lab)
        counts[repr(float(c))] = lab.count
    result["leaf_counts"] = counts
    expect = scenario.get("expect_counts", {})
    if expect:
        result["leaf_counts_expected"] = expect
        ok = ok and all(counts.get(repr(float(k))) == v for k, v in expect.items())

    x0 = h.domain.base_grid(2)[:1]

    def fiber_map(p):
        return h(x0, np.asarray(p, dtype=float)[None, :])[1][0]

    leaf = check_leaf_preserving(fiber_map, f, levels, labelings)
    result["leaf_preserving"] = leaf.to_json()
    ok = ok and leaf.passed

    hom = scenario.get("homotopy", {})
    cfg = HomotopyConfig(delta=hom.get("delta", 0.2), t_grid=tuple(hom.get("t_grid", (0.0, 0.25, 0.5, 0.75, 1.0))))
    xs, vs = tube_samples(h, scenario.get("samples", 64) * 8, h.domain.fiber_radius)
    pts = np.hstack([xs, vs])
    try:
        inv = check_homotopy_leaf_invariance(h, f, cfg, cfg.t_grid, pts)
        inv["pass"] = bool(inv["residual"] <= 1e-6)
        ok = ok and inv["pass"]
    except PreconditionError as exc:
        inv = {"precondition_failure": str(exc), "pass": False}
        ok = False
    result["homotopy_leaf_invariance"] = inv
    return result, ok


def cmd_parse_check(scenario) -> tuple:
    out = []
    ok = True
    for item in scenario["expressions"]:
        rec = {"text": item["text"]}
        try:
            node = parse(item["text"])
            canon = to_string(node)
            rec["canonical"] = canon
            rec["roundtrip"] = parse(canon) == node
            if "env" in item:
                rec["value"] = evaluate(node, item["env"])
            rec["error"] = None
        except ExprError as exc:
            rec["error"] = f"{type(exc).__name__}: {exc}"
        good = (rec["error"] is not None) == bool(item.get("expect_error", False))
        if rec.get("roundtrip") is False:
            good = False
        if "expect_value" in item and rec.get("value") is not None:
            good = good and abs(rec["value"] - item["expect_value"]) <= 1e-12 * (1 + abs(item["expect_value"]))
        rec["pass"] = bool(good)
        ok = ok and good
        out.append(rec)
    return {"expressions": out}, ok


# --- plumbing ---------------------------------------------------------------------


def _dump(obj) -> str:
    return json.dumps(obj, sort_keys=True, indent=2, allow_nan=False) + "\n"


def _envelope(command, raw: bytes, scenario, result, ok) -> dict:
    return {
        "tool": "vblin",
        "version": __version__,
        "command": command,
        "scenario_sha256": hashlib.sha256(raw).hexdigest(),
        "scenario": scenario,
        "pass": bool(ok),
        "result": result,
    }


def _write(path, text: str):
    if path is None:
        sys.stdout.write(text)
    else:
        Path(path).write_text(text)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="vblin", description="Linearizing homotopies for vector bundle maps.")
    parser.add_argument("--version", action="version", version=f"vblin {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--scenario", required=True, help="JSON scenario file")
        p.add_argument("--out", help="report path (SVG for plot); stdout when omitted")
        p.add_argument("--threads", type=int, default=1,
                       help="accepted for interface compatibility; results never depend on it")
        p.add_argument("--verbose", action="store_true")
    return parser


def run(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s", stream=sys.stderr)
    if args.threads < 1:
        log.error("--threads must be >= 1")
        return EXIT_CONFIG
    try:
        scenario, raw = load_scenario(args.scenario, args.command)
        if args.command == "plot":
            svg, _ = cmd_plot(scenario)
            _write(args.out, svg)
            return EXIT_OK
        if args.command == "symmetry":
            result, ok, svg = cmd_symmetry(scenario)
            if svg is not None:
                if args.out is None:
                    log.warning("plot requested but no --out given; SVG skipped")
                else:
                    Path(args.out).with_suffix(".svg").write_text(svg)
        else:
            handler = {
                "linearize": cmd_linearize,
                "verify-estimates": cmd_verify_estimates,
                "foliation-check": cmd_foliation_check,
                "parse-check": cmd_parse_check,
            }[args.command]
            result, ok = handler(scenario)
    except ConfigError as exc:
        log.error("%s", exc)
        return EXIT_CONFIG
    _write(args.out, _dump(_envelope(args.command, raw, scenario, result, ok)))
    if args.verbose:
        log.info("%s: %s", args.command, "PASS" if ok else "FAIL")
    return EXIT_OK if ok else EXIT_FAIL


def main():
    sys.exit(run())


if __name__ == "__main__":
    main()
