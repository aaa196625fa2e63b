"""Command-line front end: exact tables, phase scans, verification, sampling.

Four subcommands share one flag vocabulary:

    gridcast exact     per-layer estimator ratios for one parameter point
    gridcast scan      phase verdicts plus supporting ratio traces on a grid
    gridcast verify    self-contained identity/inequality suites, JSON report
    gridcast simulate  Monte Carlo moments with exact comparison columns

Rationals cross the boundary as "p/q" strings; decimal columns are
renderings only.  Output is CSV with a one-line JSON metadata header
(or a JSON document with --format json) and is byte-stable for a fixed
configuration, except for the timestamp inside the metadata.

Exit codes: 0 success, 1 failed verification, 2 usage error, 3 resource cap.
``GRIDCAST_CACHE_DIR`` names a directory for the optional covariance cache.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import math
import os
import sys
import time
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path

import numpy as np

from . import __version__
from .chains import chain_hit_probabilities, poisson_tail_checks
from .combinat import (
    abelian_square_counts,
    asymptotic_normalizer_ratio,
    f3_by_recurrence,
    f3_envelope_report,
)
from .covariance import (
    ResourceCapError,
    cache_filename,
    finite_layer_covariances,
    load_layer_covariance,
    save_layer_covariance,
)
from .covpoly import closed_form_identity_check, flat_row_identity_check
from .estimators import (
    closed_form_critical_d1,
    optimal_convex,
    optimal_linear,
    single_vertex_ratio,
    window_optimal,
)
from .halfspace import single_vertex_ratio_series
from .phase import phase_verdict
from .poset import ModelKind, ModelSpec, Window, as_fraction, layer_vertices
from .simulate import exact_reference_cov, sample_moments

USAGE_ERROR = 2
CHECK_FAILURE = 1
RESOURCE_CAP = 3

DEFAULT_CAPS = {"layer": 50_000, "cells": 10_000_000}


class UsageError(ValueError):
    pass


# ---------------------------------------------------------------------------
# result tables
# ---------------------------------------------------------------------------

@dataclass
class ResultTable:
    columns: list[str]
    rows: list[dict] = field(default_factory=list)
    metadata: dict = field(default_factory=dict)

    def add(self, **row):
        self.rows.append(row)

    @staticmethod
    def render(value) -> str:
        if isinstance(value, Fraction):
            return f"{value.numerator}/{value.denominator}"
        if isinstance(value, float):
            return repr(value)
        return str(value)

    def to_csv(self) -> str:
        out = io.StringIO()
        out.write("# " + json.dumps(self.metadata, sort_keys=True) + "\n")
        writer = csv.writer(out, lineterminator="\n")
        writer.writerow(self.columns)
        for row in self.rows:
            writer.writerow([self.render(row.get(c, "")) for c in self.columns])
        return out.getvalue()

    def to_json(self) -> str:
        rows = [
            {c: self.render(r.get(c, "")) for c in self.columns} for r in self.rows
        ]
        return json.dumps(
            {"metadata": self.metadata, "rows": rows}, sort_keys=True, indent=1
        ) + "\n"


def _config_hash(payload: dict) -> str:
    blob = json.dumps(payload, sort_keys=True).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


def _metadata(command: str, payload: dict) -> dict:
    return {
        "tool": "gridcast",
        "version": __version__,
        "command": command,
        "config": payload,
        "config_hash": _config_hash(payload),
        "created": time.strftime("%Y-%m-%dT%H:%M:%S", time.gmtime()),
    }


def _emit(table: ResultTable, fmt: str, out: str | None):
    text = table.to_json() if fmt == "json" else table.to_csv()
    if out:
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


# ---------------------------------------------------------------------------
# argument parsing helpers
# ---------------------------------------------------------------------------

def _parse_alphas(raw: str) -> tuple[Fraction, ...]:
    try:
        return tuple(as_fraction(part.strip()) for part in raw.split(","))
    except (ValueError, ZeroDivisionError) as exc:
        raise UsageError(f"cannot parse weights {raw!r}: {exc}") from None


def _parse_model(args) -> ModelSpec:
    alphas = _parse_alphas(args.alpha)
    try:
        if args.model == "finite":
            if len(alphas) != args.d + 1:
                raise UsageError(
                    f"finite model with d={args.d} needs {args.d + 1} weights"
                )
            return ModelSpec.finite(args.d, alphas)
        if len(alphas) != 1:
            raise UsageError("the half-space model takes a single weight")
        return ModelSpec.halfspace(args.d, alphas[0])
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def _parse_t_range(raw: str) -> tuple[int, int]:
    try:
        if ".." in raw:
            lo, hi = raw.split("..", 1)
            lo_i, hi_i = int(lo), int(hi)
        else:
            lo_i = hi_i = int(raw)
    except ValueError:
        raise UsageError(f"cannot parse layer range {raw!r}") from None
    if lo_i < 0 or hi_i < lo_i:
        raise UsageError(f"bad layer range {raw!r}")
    return lo_i, hi_i


def _parse_window(raw: str | None, d: int) -> Window | None:
    if raw is None:
        return None
    try:
        base_raw, width_raw = raw.split(":", 1)
        base = tuple(int(x) for x in base_raw.split(","))
        window = Window(base, int(width_raw))
    except ValueError as exc:
        raise UsageError(f"cannot parse window {raw!r}: {exc}") from None
    if len(window.base) != d + 1:
        raise UsageError(f"window base needs {d + 1} coordinates")
    return window


def _parse_caps(raw: str | None) -> dict:
    caps = dict(DEFAULT_CAPS)
    if not raw:
        return caps
    for part in raw.split(","):
        try:
            key, val = part.split("=", 1)
            if key.strip() not in caps:
                raise UsageError(f"unknown cap {key.strip()!r}")
            caps[key.strip()] = int(val)
        except ValueError:
            raise UsageError(f"cannot parse cap {part!r}") from None
    return caps


# ---------------------------------------------------------------------------
# exact
# ---------------------------------------------------------------------------

def _finite_layers_with_cache(model: ModelSpec, t_lo: int, t_max: int, caps: dict):
    """Exact finite sweep, resuming from / refreshing the optional cache.

    Resuming is only valid from a cached layer at or below the first layer
    the caller consumes, so cached results can never change what is emitted.
    """
    cache_dir = os.environ.get("GRIDCAST_CACHE_DIR")
    resume = None
    path = None
    if cache_dir:
        best = -1
        for t in range(min(t_lo, t_max), -1, -1):
            candidate = Path(cache_dir) / cache_filename(model, t)
            if candidate.exists():
                try:
                    resume = load_layer_covariance(model, candidate)
                    best = t
                except ValueError:
                    resume = None
                break
        path = Path(cache_dir) / cache_filename(model, t_max)
        if best == t_max or path.exists():
            path = None
    last = None
    for lc in finite_layer_covariances(
        model, t_max, "exact", caps["layer"], resume_from=resume
    ):
        last = lc
        yield lc
    if path is not None and last is not None:
        path.parent.mkdir(parents=True, exist_ok=True)
        save_layer_covariance(last, path)


def cmd_exact(args) -> int:
    model = _parse_model(args)
    t_lo, t_hi = _parse_t_range(args.t)
    caps = _parse_caps(args.caps)
    window = _parse_window(args.window, args.d)
    payload = {
        "model": args.model,
        "d": args.d,
        "alpha": args.alpha,
        "t": args.t,
        "mode": args.mode,
        "backend": args.backend,
        "window": args.window,
    }
    table = ResultTable(
        ["t", "mode", "ratio", "ratio_sq_exact", "backend"],
        metadata=_metadata("exact", payload),
    )
    if model.kind is ModelKind.FINITE_ORTHANT:
        if args.mode not in ("unrestricted", "convex"):
            raise UsageError("finite model supports modes: unrestricted, convex")
        if args.backend == "exact":
            layer_iter = _finite_layers_with_cache(model, t_lo, t_hi, caps)
        else:
            layer_iter = finite_layer_covariances(model, t_hi, "float", caps["layer"])
        for lc in layer_iter:
            if lc.t < t_lo:
                continue
            res = optimal_linear(lc) if args.mode == "unrestricted" else optimal_convex(lc)
            table.add(
                t=lc.t,
                mode=args.mode,
                ratio=res.ratio,
                ratio_sq_exact=res.ratio_sq if lc.backend == "exact" else "",
                backend=lc.backend,
            )
    else:
        if args.mode == "single-vertex":
            if args.backend == "float":
                series = single_vertex_ratio_series(model, t_hi)
                for t in range(t_lo, t_hi + 1):
                    table.add(t=t, mode=args.mode, ratio=float(series[t]),
                              ratio_sq_exact="", backend="float")
            else:
                from .halfspace import single_vertex_ratio_sq_exact_upto

                ratios = single_vertex_ratio_sq_exact_upto(model, t_hi)
                for t in range(t_lo, t_hi + 1):
                    rsq = ratios[t]
                    table.add(t=t, mode=args.mode, ratio=math.sqrt(float(rsq)),
                              ratio_sq_exact=rsq, backend="exact")
        elif args.mode == "window":
            if window is None:
                raise UsageError("window mode needs --window base:width")
            for t in range(t_lo, t_hi + 1):
                res = window_optimal(model, t, window, args.backend)
                table.add(
                    t=t,
                    mode=args.mode,
                    ratio=res.ratio,
                    ratio_sq_exact=res.ratio_sq if res.backend == "exact" else "",
                    backend=res.backend,
                )
        else:
            raise UsageError("half-space supports modes: single-vertex, window")
    _emit(table, args.format, args.out)
    return 0


# ---------------------------------------------------------------------------
# scan
# ---------------------------------------------------------------------------

def _trace_summary(vals: list[float], keep: int = 12) -> str:
    if len(vals) <= keep:
        picked = vals
    else:
        idx = np.linspace(0, len(vals) - 1, keep).astype(int)
        picked = [vals[i] for i in idx]
    return ";".join(f"{v:.6g}" for v in picked)


def cmd_scan(args) -> int:
    caps = _parse_caps(args.caps)
    d_list = [int(x) for x in args.d_list.split(",")]
    grid = [g.strip() for g in args.alpha_grid.split(";") if g.strip()]
    if not grid:
        raise UsageError("empty weight grid")
    payload = {
        "model": args.model,
        "d_list": args.d_list,
        "alpha_grid": args.alpha_grid,
        "t_max": args.t_max,
    }
    table = ResultTable(
        ["d", "alpha", "mode", "status", "rule", "final_ratio", "trace"],
        metadata=_metadata("scan", payload),
    )
    for d in d_list:
        for spec in grid:
            alphas = _parse_alphas(spec)
            try:
                if args.model == "finite":
                    if len(alphas) != d + 1:
                        raise UsageError(
                            f"grid point {spec!r} needs {d + 1} weights for d={d}"
                        )
                    model = ModelSpec.finite(d, alphas)
                else:
                    if len(alphas) != 1:
                        raise UsageError("half-space grid points take a single weight")
                    model = ModelSpec.halfspace(d, alphas[0])
            except ValueError as exc:
                raise UsageError(str(exc)) from None
            verdict = phase_verdict(model)
            if model.kind is ModelKind.FINITE_ORTHANT:
                trace = []
                for lc in finite_layer_covariances(
                    model, args.t_max, "float", caps["layer"]
                ):
                    if lc.t >= 1:
                        trace.append(optimal_linear(lc).ratio)
            else:
                trace = single_vertex_ratio_series(model, args.t_max)[1:].tolist()
            for mode in ("reconstruction", "convex", "local", "local-convex",
                         "single-vertex"):
                claim = verdict.claims[mode]
                table.add(
                    d=d,
                    alpha=spec,
                    mode=mode,
                    status=claim.status,
                    rule=claim.rule,
                    final_ratio=trace[-1] if trace else "",
                    trace=_trace_summary(trace),
                )
    _emit(table, args.format, args.out)
    return 0


# ---------------------------------------------------------------------------
# verify
# ---------------------------------------------------------------------------

def _suite_closed_form_d1(args) -> list[dict]:
    t_max = args.t_max or 30
    model = ModelSpec.finite_critical(1)
    checks = []
    for lc in finite_layer_covariances(model, t_max, "exact"):
        res = optimal_linear(lc)
        ratio_sq, coeffs = closed_form_critical_d1(lc.t)
        prop = _proportional(res.coefficients, coeffs)
        ok = res.ratio_sq == ratio_sq and prop
        checks.append(
            {
                "check": f"closed-form-d1/t={lc.t}",
                "ok": bool(ok),
                "witness": {"ratio_sq": ResultTable.render(res.ratio_sq)},
            }
        )
    return checks


def _proportional(a, b) -> bool:
    pairs = [(x, y) for x, y in zip(a, b)]
    anchor = next(((x, y) for x, y in pairs if y != 0), None)
    if anchor is None:
        return False
    ax, ay = anchor
    return all(x * ay == Fraction(y) * ax for x, y in pairs)


def _suite_covpoly(args) -> list[dict]:
    t_max = args.t_max or 10
    checks = []
    model = ModelSpec.finite_critical(1)
    for lc in finite_layer_covariances(model, t_max, "exact"):
        if lc.t < 1:
            continue
        res = closed_form_identity_check(lc.t, lc)
        flat = flat_row_identity_check(lc.t, lc)
        checks.append(
            {
                "check": f"covpoly-identity/t={lc.t}",
                "ok": bool(res.matched and flat),
                "witness": {"worst_mismatch": str(res.worst_mismatch)},
            }
        )
    return checks


def _suite_f3(args) -> list[dict]:
    m_max = args.m_max or 300
    rec = f3_by_recurrence(m_max)
    direct = abelian_square_counts(m_max, 3)
    ok = rec == direct
    return [
        {
            "check": f"f3-recurrence-vs-direct/m<={m_max}",
            "ok": bool(ok),
            "witness": {"m_max": m_max},
        }
    ]


def _suite_f3_bounds(args) -> list[dict]:
    m_max = args.m_max or 1000
    rep = f3_envelope_report(m_max)
    asym = asymptotic_normalizer_ratio(max(m_max, 500), 3)
    return [
        {
            "check": f"f3-envelope/m<={m_max}",
            "ok": bool(rep["lower_ok"] and rep["upper_ok"] and rep["monotone_ok"]),
            "witness": {"asymptotic_ratio": asym},
        }
    ]


def _suite_chain_bound(args) -> list[dict]:
    import random

    from .covariance import finite_layer_covariance
    from .linalg import quadratic_form

    rng = random.Random(args.seed or 20240901)
    checks = []
    for d in (1, 2):
        model = ModelSpec.finite_critical(d)
        for trial in range(10):
            t = rng.randint(1, 6)
            verts = layer_vertices(model, t)
            weights = [Fraction(rng.randint(0, 8)) for _ in verts]
            if sum(weights) == 0:
                weights[0] = Fraction(1)
            total = sum(weights)
            cmap = {v: w / total for v, w in zip(verts, weights)}
            dist = chain_hit_probabilities(cmap, model)
            lc = finite_layer_covariance(model, t)
            var = quadratic_form(lc.sigma, [cmap[v] for v in lc.vertices])
            ok = var >= dist.variance_lower_bound()
            checks.append(
                {
                    "check": f"chain-variance-bound/d={d}/trial={trial}",
                    "ok": bool(ok),
                    "witness": {"t": t},
                }
            )
    return checks


def _suite_poisson(args) -> list[dict]:
    t_max = args.t_max or 100
    results = poisson_tail_checks(t_max)
    ok = all(r.upper_half_ok and r.lower_tail_ok for r in results)
    return [
        {"check": f"poisson-tails/T<={t_max}", "ok": bool(ok), "witness": {}}
    ]


def _suite_mc_oracle(args) -> list[dict]:
    seed = args.seed if args.seed is not None else 20240902
    n = args.samples or 200_000
    checks = []
    configs = [
        (ModelSpec.finite_critical(1), 4, None),
        (ModelSpec.finite(1, (Fraction(3, 4), Fraction(2, 5))), 3, None),
        (ModelSpec.halfspace_critical(1), 3, Window((1, 0), 3)),
        (ModelSpec.halfspace(2, Fraction(2, 5)), 2, Window((0, 0, 0), 2)),
    ]
    for idx, (model, t, window) in enumerate(configs):
        summary = sample_moments(model, t, n, seed + idx, window=window,
                                 max_cells=10**9)
        exact = exact_reference_cov(model, t, window)
        emp = summary.sample_cov()
        se = summary.standard_error(exact)
        z = np.abs(emp - exact) / se
        ok = bool(np.max(z) <= 5.0)
        checks.append(
            {
                "check": f"mc-oracle/config={idx}",
                "ok": ok,
                "witness": {"max_z": float(np.max(z)), "n": n},
            }
        )
    return checks


def _suite_phase(args) -> list[dict]:
    cases = [
        (ModelSpec.finite(1, (1, Fraction(2, 5))), "reconstruction", "impossible"),
        (ModelSpec.finite(1, (1, Fraction(3, 5))), "convex", "possible"),
        (ModelSpec.finite_critical(2), "reconstruction", "impossible"),
        (ModelSpec.halfspace(3, Fraction(1, 4)), "single-vertex", "possible"),
        (ModelSpec.halfspace(1, Fraction(1, 2)), "local", "impossible"),
        (ModelSpec.halfspace(1, Fraction(3, 5)), "single-vertex", "possible"),
        (ModelSpec.halfspace(2, Fraction(1, 5)), "local", "impossible"),
    ]
    checks = []
    for idx, (model, mode, expected) in enumerate(cases):
        verdict = phase_verdict(model)
        checks.append(
            {
                "check": f"phase/case={idx}",
                "ok": bool(verdict.status(mode) == expected),
                "witness": {"mode": mode, "status": verdict.status(mode)},
            }
        )
    return checks


SUITES = {
    "closed-form-d1": _suite_closed_form_d1,
    "covpoly-identity": _suite_covpoly,
    "f3": _suite_f3,
    "f3-bounds": _suite_f3_bounds,
    "chain-bound": _suite_chain_bound,
    "poisson": _suite_poisson,
    "mc-oracle": _suite_mc_oracle,
    "phase": _suite_phase,
}


def cmd_verify(args) -> int:
    names = list(SUITES) if args.suite == "all" else [args.suite]
    for name in names:
        if name not in SUITES:
            raise UsageError(f"unknown suite {name!r}; choose from {sorted(SUITES)}")
    report = {"suites": {}, "ok": True}
    for name in names:
        checks = SUITES[name](args)
        report["suites"][name] = checks
        if not all(c["ok"] for c in checks):
            report["ok"] = False
    text = json.dumps(report, indent=1, sort_keys=True) + "\n"
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    return 0 if report["ok"] else CHECK_FAILURE


# ---------------------------------------------------------------------------
# simulate
# ---------------------------------------------------------------------------

def cmd_simulate(args) -> int:
    model = _parse_model(args)
    t_lo, t_hi = _parse_t_range(args.t)
    if t_lo != t_hi:
        raise UsageError("simulate runs one layer at a time")
    caps = _parse_caps(args.caps)
    window = _parse_window(args.window, args.d)
    if model.kind is ModelKind.HALF_SPACE and window is None:
        raise UsageError("half-space simulation needs --window base:width")
    seed = args.seed if args.seed is not None else 0
    payload = {
        "model": args.model,
        "d": args.d,
        "alpha": args.alpha,
        "t": args.t,
        "samples": args.samples,
        "seed": seed,
        "window": args.window,
    }
    summary = sample_moments(
        model, t_lo, args.samples, seed, window=window, max_cells=caps["cells"]
    )
    exact_available = model.kind is ModelKind.FINITE_ORTHANT or model.d <= 2
    exact = exact_reference_cov(model, t_lo, window) if exact_available else None
    emp = summary.sample_cov()
    labels = ["x0"] + ["(" + ",".join(map(str, v)) + ")" for v in summary.vertices]
    table = ResultTable(
        ["a", "b", "empirical", "exact", "se", "z"],
        metadata=_metadata("simulate", payload),
    )
    se = summary.standard_error(exact) if exact is not None else None
    for i in range(len(labels)):
        for j in range(i, len(labels)):
            row = {
                "a": labels[i],
                "b": labels[j],
                "empirical": float(emp[i, j]),
                "exact": float(exact[i, j]) if exact is not None else "",
                "se": float(se[i, j]) if se is not None else "",
                "z": float(abs(emp[i, j] - exact[i, j]) / se[i, j])
                if exact is not None
                else "",
            }
            table.add(**row)
    _emit(table, args.format, args.out)
    return 0


# ---------------------------------------------------------------------------
# entry point
# ---------------------------------------------------------------------------

def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="gridcast",
        description="Gaussian broadcast on grid posets: exact covariances, "
        "optimal estimators, phase scans.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, need_model=True):
        if need_model:
            p.add_argument("--model", choices=["finite", "halfspace"], required=True)
            p.add_argument("--d", type=int, required=True)
            p.add_argument("--alpha", required=True,
                           help="comma-separated rationals, e.g. 1,1/2")
        p.add_argument("--backend", choices=["exact", "float"], default="exact")
        p.add_argument("--format", choices=["csv", "json"], default="csv")
        p.add_argument("--out", default=None)
        p.add_argument("--caps", default=None,
                       help="e.g. layer=50000,cells=10000000")
        p.add_argument("--seed", type=int, default=None)

    p_exact = sub.add_parser("exact", help="per-layer estimator ratios")
    common(p_exact)
    p_exact.add_argument("--t", required=True, help="layer or range, e.g. 1..30")
    p_exact.add_argument(
        "--mode",
        choices=["unrestricted", "convex", "single-vertex", "window"],
        default="unrestricted",
    )
    p_exact.add_argument("--window", default=None, help="base:width, e.g. 0,0:4")
    p_exact.set_defaults(func=cmd_exact)

    p_scan = sub.add_parser("scan", help="phase verdicts over a weight grid")
    common(p_scan, need_model=False)
    p_scan.add_argument("--model", choices=["finite", "halfspace"], required=True)
    p_scan.add_argument("--d-list", required=True, help="e.g. 1,2")
    p_scan.add_argument(
        "--alpha-grid", required=True,
        help="semicolon-separated weight tuples, e.g. 0.3;0.5;0.7",
    )
    p_scan.add_argument("--t-max", type=int, default=100)
    p_scan.set_defaults(func=cmd_scan)

    p_verify = sub.add_parser("verify", help="run identity/inequality suites")
    common(p_verify, need_model=False)
    p_verify.add_argument("--suite", default="all",
                          help=f"one of {sorted(SUITES)} or 'all'")
    p_verify.add_argument("--t-max", type=int, default=None)
    p_verify.add_argument("--m-max", type=int, default=None)
    p_verify.add_argument("--samples", type=int, default=None)
    p_verify.set_defaults(func=cmd_verify)

    p_sim = sub.add_parser("simulate", help="Monte Carlo moment tables")
    common(p_sim)
    p_sim.add_argument("--t", required=True)
    p_sim.add_argument("--samples", type=int, required=True)
    p_sim.add_argument("--window", default=None, help="base:width")
    p_sim.set_defaults(func=cmd_simulate)
    return parser


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ResourceCapError as exc:
        sys.stderr.write(json.dumps({"error": "resource-cap", "message": str(exc)}) + "\n")
        return RESOURCE_CAP
    except (UsageError, ValueError) as exc:
        sys.stderr.write(json.dumps({"error": "usage", "message": str(exc)}) + "\n")
        return USAGE_ERROR


if __name__ == "__main__":
    sys.exit(main())
