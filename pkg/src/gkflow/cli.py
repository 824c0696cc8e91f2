"""Command-line driver: verification suites and the flow pipeline.

Exit codes: 0 all checks pass, 1 a check fails, 2 usage error, 3 numerical
abort (chart exit or singular data).
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import os
import sys
import warnings

import numpy as np

from . import __version__
from . import examples as ex_mod
from . import linalg as la
from .errors import NumericalAbort, PositivityError, ValidationError

SCHEMA_VERSION = 1
DEFAULTS = {"h": 1e-3, "dt": 1e-2, "samples": 64, "seed": 0, "t_max": 1.0, "steps": None, "k_max": 6}
CONFIG_ENV = "GKFLOW_CONFIG"


class UsageError(Exception):
    pass


# --- configuration ---------------------------------------------------------

def read_config(path) -> dict:
    """Flat key=value file; '#' starts a comment."""
    out = {}
    with open(path, encoding="utf-8") as fh:
        for n, line in enumerate(fh, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise UsageError(f"{path}:{n}: expected key=value")
            k, v = (s.strip() for s in line.split("=", 1))
            out[k.replace("-", "_")] = v
    return out


def _coerce(key, value):
    if key in ("samples", "seed", "steps", "k_max"):
        return int(value)
    if key in ("h", "dt", "t_max") or key.startswith("tol."):
        return float(value)
    return value


def resolve_options(args) -> dict:
    """defaults < config file < command-line flags."""
    opts = dict(DEFAULTS)
    path = args.config or os.environ.get(CONFIG_ENV)
    overrides = {}
    if path:
        try:
            raw = read_config(path)
        except OSError as e:
            raise UsageError(f"cannot read config {path}: {e}") from e
        for k, v in raw.items():
            try:
                val = _coerce(k, v)
            except ValueError as e:
                raise UsageError(f"bad config value {k}={v}") from e
            if k.startswith("tol."):
                overrides[k[4:]] = val
            else:
                opts[k] = val
    for k in DEFAULTS:
        v = getattr(args, k, None)
        if v is not None:
            opts[k] = v
    opts["tol_overrides"] = overrides
    if opts["h"] <= 0 or opts["dt"] <= 0 or opts["samples"] <= 0:
        raise UsageError("h, dt and samples must be positive")
    return opts


# --- reports ---------------------------------------------------------------

class Report:
    def __init__(self, command: str, example: str | None, opts: dict):
        self.command, self.example, self.opts = command, example, opts
        self.records, self.warnings, self.table = [], [], None

    def check(self, cid: str, anchor: str, residual: float, tolerance: float, upper: bool = True):
        """Record residual < tolerance (or residual > tolerance when upper is False)."""
        tol = float(self.opts.get("tol_overrides", {}).get(cid, tolerance))
        r = float(residual)
        ok = bool(r < tol) if upper else bool(r > tol)
        self.records.append({"id": cid, "anchor": anchor, "residual": r, "tolerance": tol,
                             "comparison": "<" if upper else ">", "pass": ok})
        return ok

    def info(self, cid: str, anchor: str, value):
        self.records.append({"id": cid, "anchor": anchor, "residual": value, "tolerance": None,
                             "comparison": None, "pass": True})

    def warn(self, msg: str):
        self.warnings.append(msg)
        warnings.warn(msg, stacklevel=2)

    @property
    def passed(self) -> bool:
        return all(r["pass"] for r in self.records)

    def as_dict(self) -> dict:
        o = self.opts
        return {
            "schema_version": SCHEMA_VERSION,
            "version": __version__,
            "command": self.command,
            "example": self.example,
            "environment": {"h": o["h"], "dt": o["dt"], "samples": o["samples"], "seed": o["seed"]},
            "records": self.records,
            "warnings": self.warnings,
            "pass": self.passed,
        }


def table_csv(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow(["" if v is None else v for v in r])
    return buf.getvalue()


def svg_plot(xs, series: dict, title: str = "", width: int = 640, height: int = 400) -> str:
    """Minimal line plot of log10 |y| against x."""
    pad = 50
    colors = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e"]
    xs = np.asarray(xs, float)
    logs = {}
    for k, ys in series.items():
        ys = np.array([np.nan if v is None else abs(v) for v in ys], float)
        logs[k] = np.log10(np.maximum(ys, 1e-300))
    finite = np.concatenate([v[np.isfinite(v)] for v in logs.values()] or [np.zeros(1)])
    lo, hi = (float(finite.min()), float(finite.max())) if finite.size else (0.0, 1.0)
    lo = max(lo, hi - 20)
    hi = hi if hi > lo else lo + 1
    x0, x1 = float(xs.min()), float(xs.max()) if xs.max() > xs.min() else float(xs.min()) + 1

    def px(v):
        return pad + (v - x0) / (x1 - x0) * (width - 2 * pad)

    def py(v):
        return height - pad - (min(max(v, lo), hi) - lo) / (hi - lo) * (height - 2 * pad)

    parts = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}">',
             f'<rect width="{width}" height="{height}" fill="white"/>',
             f'<text x="{width / 2}" y="20" text-anchor="middle" font-size="14">{title}</text>',
             f'<line x1="{pad}" y1="{height - pad}" x2="{width - pad}" y2="{height - pad}" stroke="black"/>',
             f'<line x1="{pad}" y1="{pad}" x2="{pad}" y2="{height - pad}" stroke="black"/>',
             f'<text x="{width / 2}" y="{height - 10}" text-anchor="middle" font-size="12">t</text>',
             f'<text x="{pad - 5}" y="{height - pad}" text-anchor="end" font-size="10">1e{lo:.0f}</text>',
             f'<text x="{pad - 5}" y="{pad + 5}" text-anchor="end" font-size="10">1e{hi:.0f}</text>']
    for i, (k, ys) in enumerate(logs.items()):
        col = colors[i % len(colors)]
        pts = " ".join(f"{px(a):.1f},{py(b):.1f}" for a, b in zip(xs, ys) if np.isfinite(b))
        if pts:
            parts.append(f'<polyline fill="none" stroke="{col}" stroke-width="1.5" points="{pts}"/>')
        parts.append(f'<text x="{width - pad + 5}" y="{pad + 15 * i}" font-size="11" fill="{col}">{k}</text>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def _example(name, opts, default, **params):
    name = name or default
    try:
        return ex_mod.get(name, h=opts["h"], **params)
    except KeyError as e:
        raise UsageError(str(e.args[0])) from e


def _axiom_tol(ex, opts):
    return ex.tolerances.get("axioms", 100 * opts["h"] ** 2)


# --- commands --------------------------------------------------------------

def cmd_axioms(args, opts) -> Report:
    from .fields import courant_axioms
    ex = _example(args.example, opts, "kahler_torus_T4")
    rep = Report("axioms", ex.name, opts)
    x = ex.samples(opts["samples"], opts["seed"])
    a, b, c, f = ex.axiom_sections(opts["seed"], x)
    res = courant_axioms(a, b, c, f, x, H=ex.H)
    tol = _axiom_tol(ex, opts)
    anchors = {"jacobi": "Courant axioms: Jacobi identity for the Dorfman bracket",
               "leibniz": "Courant axioms: Leibniz rule in the second slot",
               "pairing_invariance": "Courant axioms: anchor derivative of the pairing",
               "skew_anomaly": "Courant axioms: skew-symmetry anomaly"}
    for k, v in res.items():
        rep.check(k, anchors.get(k, k), v, tol)
    if ex.extra.get("expect_fail"):
        rep.warn(f"{ex.name} is a negative control: {', '.join(ex.extra['expect_fail'])} should fail")
    return rep


def cmd_gcs_check(args, opts) -> Report:
    from .fields import constant
    from .gcs import GCStructure, HoloPoisson, gen_nijenhuis
    ex = _example(args.example, opts, "elliptic_Ec")
    rep = Report("gcs-check", ex.name, opts)
    if ex.I is None or ex.P is None:
        raise UsageError(f"example {ex.name} carries no holomorphic Poisson data")
    x = ex.samples(opts["samples"], opts["seed"])
    Q = ex.Q if ex.Q is not None else constant("bivector", np.zeros((ex.chart.dim,) * 2), ex.chart)
    hp = HoloPoisson(ex.I, ex.P, Q)
    scale = max(1.0, ex.I.max_abs(x), Q.max_abs(x))
    tol = ex.chart.tol(scale)
    for k, v in hp.residuals(x).items():
        rep.check(f"holo_{k}", f"holomorphic Poisson structure: {k}", v, tol)
    g = ex.gcs()
    sq, orth = g.fiber_residuals(x)
    fiber_tol = 100 * la.MACHINE_TOL * scale**2
    rep.check("gcs_square", "generalized complex fiber: J^2 = -1", sq, fiber_tol)
    rep.check("gcs_orthogonal", "generalized complex fiber: J preserves the pairing", orth, fiber_tol)
    rep.check("gen_nijenhuis", "integrability of the upper-triangular generalized complex structure",
              gen_nijenhuis(g, x), tol * scale)
    return rep


def cmd_bismut_check(args, opts) -> Report:
    from .bismut import (GMetricField, gen_bismut_bracket, gen_bismut_matrix, gen_torsion,
                         mixed_torsion, torsion_expected)
    from .linalg import maxnorm
    ex = _example(args.example, opts, "bismut_torus_T3")
    if ex.g is None:
        raise UsageError(f"example {ex.name} has no metric")
    rep = Report("bismut-check", ex.name, opts)
    x = ex.samples(min(opts["samples"], 32), opts["seed"])
    m = GMetricField(ex.g, ex.H).validate(x)
    Dm, Db = gen_bismut_matrix(m), gen_bismut_bracket(m)
    rep.check("two_path", "generalized Bismut connection: matrix form against bracket form",
              maxnorm(Dm.on_frames(x) - Db.on_frames(x)), ex.tolerances.get("two_path", 1e-8))
    T = gen_torsion(Dm, x, 0.5)
    rep.check("torsion", "torsion of the generalized Bismut connection equals pi+*H + pi-*H",
              maxnorm(T - torsion_expected(m, x, 0.5)), ex.tolerances.get("torsion", 1e-8))
    rep.check("mixed_torsion", "mixed components of the torsion vanish",
              maxnorm(mixed_torsion(T, m, x)), ex.tolerances.get("torsion", 1e-8))
    return rep


def _brane_for(ex, opts, t):
    from .fields import constant
    from .flow import FlowState
    from .gk_build import BraneSolution
    if ex.X is not None and ex.name == "synthetic_flow_R4":
        return FlowState(ex.flow_input(), t, opts["dt"]).brane()
    if ex.Q is None and ex.F is not None:
        zero = constant("bivector", np.zeros((ex.chart.dim,) * 2), ex.chart)
        return BraneSolution(ex.I, ex.I, zero, ex.F)
    raise UsageError(f"example {ex.name} does not provide a brane solution")


def cmd_gk_assemble(args, opts) -> Report:
    from .bismut import pair_characterization
    from .gk_build import eigenbundle_residual, gk_from_solution, round_trip_residual
    ex = _example(args.example, opts, "kahler_torus_T4")
    rep = Report("gk-assemble", ex.name, opts)
    x = ex.samples(opts["samples"], opts["seed"])
    t = float(args.t if args.t is not None else 0.5)
    s = _brane_for(ex, opts, t)
    pair = gk_from_solution(s, x)
    inv = pair.invariants(x)
    for k, v in inv.items():
        if k == "G_min_eigenvalue":
            rep.check(k, "positivity of the generalized metric", v, 0.0, upper=False)
        else:
            rep.check(k, f"generalized Kaehler pair: {k}", v, 1e-8)
    rep.check("round_trip", "converse formulas reproduce (g, b)", round_trip_residual(s, x),
              1e-8 if ex.Q is None else 1e-5)
    rep.check("eigenbundle", "L+ = {X - i F X} is the common +i eigenbundle", eigenbundle_residual(s, x), 1e-8)
    dj, t30 = pair_characterization(pair, x)
    rep.check("dj", "Bismut-parallel characterization: D J", dj, 1e-5)
    rep.check("torsion_30", "Bismut-parallel characterization: (3,0) torsion", t30, 1e-5)
    return rep


def cmd_flow(args, opts) -> Report:
    from .bismut import pair_characterization
    from .flow import FlowConfig, convergence_ratio, gk_family, run_flow
    ex = _example(args.example, opts, "synthetic_flow_R4")
    if ex.X is None:
        raise UsageError(f"example {ex.name} has no flow vector field")
    t_max = float(opts["t_max"])
    dt = t_max / opts["steps"] if opts["steps"] else float(opts["dt"])
    opts["dt"] = dt
    rep = Report("flow", ex.name, opts)
    inp = ex.flow_input()
    x = ex.samples(opts["samples"], opts["seed"])
    tol_in = ex.tolerances.get("input")
    cfg = FlowConfig(dt=dt, t_max=t_max, samples=opts["samples"], seed=opts["seed"], input_tol=tol_in)
    try:
        res = run_flow(inp, cfg, x)
    except ValidationError as e:
        rep.check("flow_input", "flow input: L_X Q = 0 and L_X I0 = Q F0", e.residual or np.inf,
                  tol_in or ex.chart.tol())
        rep.warn(str(e))
        return rep
    tol_in = tol_in if tol_in is not None else ex.chart.tol()
    rep.check("lie_Q", "flow input: L_X Q = 0", res.input_residuals[0], tol_in)
    rep.check("lie_I", "flow input: L_X I0 = Q F0", res.input_residuals[1], tol_in)
    rtol = ex.tolerances.get("r", ex.chart.tol() + dt**4)
    rep.check("r1", "I_t - I0 = t Q Fbar_t", res.max_residual("r1"), rtol)
    rep.check("r2", "G_t I_t + I0* G_t = 0", res.max_residual("r2"), rtol)
    rep.check("type11", "F_t has type (1,1) for I_t", float(np.max(res.column("type11"))), rtol)
    thr = res.threshold()
    rep.info("positivity_threshold", "first time the averaged form stops being positive", thr)
    n = len(res.records)
    stride = max(1, (n - 1) // 10)
    rows, skipped = [], 0
    for i, r in enumerate(res.records):
        dj = None
        if r.margin > 0 and (i % stride == 0 or i == n - 1):
            try:
                pair = gk_family(inp, r.t, dt, x)
                dj = pair_characterization(pair, x)[0]
            except PositivityError:
                dj = None
        elif r.margin <= 0:
            skipped += 1
        rows.append([r.t, r.r1, r.r2, r.margin, r.type11, dj])
    djs = [row[5] for row in rows if row[5] is not None]
    if djs:
        rep.check("dj", "generalized Kaehler family: Bismut-parallel J", max(djs), ex.tolerances.get("gk", 1e-5))
    if skipped:
        rep.warn(f"GK assembly skipped at {skipped} output times past the positivity threshold t* = {thr}")
    if getattr(args, "convergence", False):
        ratio = convergence_ratio(inp, dt, t_max, x)
        rep.check("convergence_ratio", "halving dt reduces r1 (fourth order)", ratio, 8.0, upper=False)
    rep.table = (["t", "r1", "r2", "margin", "type11", "dj"], rows)
    return rep


def cmd_spinor(args, opts) -> Report:
    from .gcs import groupoid_residual
    from .linalg import maxnorm
    from .spinor import elliptic_chart, elliptic_tensors, sigma_tensor_c, verify_elliptic
    cs = [float(c) for c in (args.c or "0,0.5,1,2").split(",")]
    rep = Report("spinor", "elliptic_Ec", opts)
    zs = [0.5, 0.5j, -1 + 1j, 1.5 - 0.5j, 2.0]
    ws = [0, 1, 1j, -0.7 + 0.3j, 2 - 1j]
    worst = max(verify_elliptic(c, z, w) for c in cs for z in zs for w in ws)
    rep.check("verify_elliptic", "exp(F_c) exp(sigma_0) Omega_0 = exp(sigma_c) Omega_c", worst, 1e-13)
    ch = elliptic_chart(opts["h"])
    x = ch.samples(opts["samples"], opts["seed"])
    e0 = elliptic_tensors(0.0, ch)
    for c in cs:
        ec = elliptic_tensors(c, ch)
        r1, r2 = groupoid_residual(e0.I, ec.I, e0.Q, ec.F, x)
        tol = 100 * opts["h"] ** 2
        rep.check(f"bridge_c{c:g}", "I_c - I_0 = Q F_c and F_c I_c + I_0* F_c = 0", max(r1, r2), tol)
        im = maxnorm(np.imag(sigma_tensor_c(c, x)) - np.imag(sigma_tensor_c(0.0, x)))
        rep.check(f"im_sigma_c{c:g}", "Im sigma_c = Im sigma_0", im, 1e-12)
    return rep


def cmd_zalg(args, opts) -> Report:
    from .zalg import growth_compare, ring_dims
    k_max = int(opts["k_max"])
    if k_max < 3:
        raise UsageError("--k-max must be at least 3")
    rep = Report("zalg", None, opts)
    rows = growth_compare(k_max)
    dims = list(ring_dims(k_max, 3).dims)
    expect = [1] + [3 * k for k in range(1, k_max + 1)]
    rep.check("ring_dims", "A^k = Hom(0,k) has dimension 3k", float(np.max(np.abs(np.subtract(dims, expect)))), 0.5)
    first = next(r for r in rows if r[3] != 0)
    rep.check("first_deficit_degree", "restriction from the plane first loses a section in degree 3",
              abs(first[0] - 3), 0.5)
    rep.check("first_deficit_value", "the restriction kernel in degree 3 is one-dimensional", abs(first[3] - 1), 0.5)
    rep.table = (["k", "dim_A", "dim_plane", "deficit"], rows)
    return rep


def cmd_list(args, opts) -> Report:
    rep = Report("list-examples", None, opts)
    rep.table = (["name"], [[n] for n in ex_mod.names()])
    for n in ex_mod.names():
        rep.info(n, "registered example", n)
    return rep


COMMANDS = {
    "axioms": cmd_axioms,
    "gcs-check": cmd_gcs_check,
    "bismut-check": cmd_bismut_check,
    "gk-assemble": cmd_gk_assemble,
    "flow": cmd_flow,
    "spinor": cmd_spinor,
    "zalg": cmd_zalg,
    "list-examples": cmd_list,
}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="gkflow", description="Verification suites for generalized Kaehler flows.")
    p.add_argument("--version", action="version", version=__version__)
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--example")
    common.add_argument("--h", type=float)
    common.add_argument("--dt", type=float)
    common.add_argument("--t-max", dest="t_max", type=float)
    common.add_argument("--steps", type=int)
    common.add_argument("--samples", type=int)
    common.add_argument("--seed", type=int)
    common.add_argument("--out")
    common.add_argument("--format", choices=["json", "csv", "svg"], default="json")
    common.add_argument("--config")
    sub = p.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sp = sub.add_parser(name, parents=[common])
        if name == "flow":
            sp.add_argument("--convergence", action="store_true", help="also run at dt/2 and record the r1 ratio")
        if name == "gk-assemble":
            sp.add_argument("--t", type=float, help="flow time for flow examples (default 0.5)")
        if name == "spinor":
            sp.add_argument("--c", help="comma-separated c values (default 0,0.5,1,2)")
        if name == "zalg":
            sp.add_argument("--k-max", dest="k_max", type=int)
    return p


def _emit(rep: Report, fmt: str, out: str | None):
    text = json.dumps(rep.as_dict(), indent=2, default=float)
    if fmt == "json":
        if out:
            with open(out, "w", encoding="utf-8") as fh:
                fh.write(text + "\n")
        else:
            print(text)
        return
    if rep.table is None:
        raise UsageError(f"command {rep.command} has no table output")
    header, rows = rep.table
    if fmt == "csv":
        payload = table_csv(header, rows)
    else:
        cols = list(zip(*rows)) if rows else [[]] * len(header)
        series = {h: cols[i] for i, h in enumerate(header) if h in ("r1", "r2", "dj", "deficit", "dim_A")}
        payload = svg_plot(cols[0], series, title=f"{rep.command} {rep.example or ''}".strip())
    if out:
        with open(out, "w", encoding="utf-8") as fh:
            fh.write(payload)
        print(text)
    else:
        sys.stdout.write(payload)


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)
    try:
        opts = resolve_options(args)
        rep = COMMANDS[args.command](args, opts)
        _emit(rep, args.format, args.out)
    except UsageError as e:
        print(f"gkflow: usage error: {e}", file=sys.stderr)
        return 2
    except NumericalAbort as e:
        print(f"gkflow: numerical abort: {e}", file=sys.stderr)
        return 3
    except (ValidationError, PositivityError) as e:
        print(f"gkflow: check failed: {e}", file=sys.stderr)
        return 1
    return 0 if rep.passed else 1


if __name__ == "__main__":
    sys.exit(main())
