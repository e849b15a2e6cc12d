"""Command-line front end.

Exit codes: 0 ok, 2 configuration error, 3 divergence, 4 I/O error.
PG literals start with a minus sign more often than not, so pass them as
``--pg=-0.8,-0.5,-0.2``.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
from pathlib import Path
from typing import Optional, Sequence

from . import analysis
from .edlm import PGVector
from .errors import ConfigurationError, DegeneratePlantError, MFACError, TraceParseError
from .harness import (builtin_scenario_names, export_csv, import_csv, load_scenario, run,
                      scenario_metrics)

EXIT_OK, EXIT_CONFIG, EXIT_DIVERGED, EXIT_IO = 0, 2, 3, 4
SUMMARY_SCHEMA = "mfac.summary/1"


def parse_pg(text: str, ly: int) -> PGVector:
    try:
        values = [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise ConfigurationError(f"PG literal {text!r} is not a comma-separated list of numbers")
    if len(values) < 2:
        raise ConfigurationError("PG literal needs at least two entries")
    return PGVector.from_list(values, ly)


def parse_grid(text: str) -> list[float]:
    """``start:step:stop`` (inclusive) or a comma-separated list."""
    if ":" in text:
        try:
            start, step, stop = (float(v) for v in text.split(":"))
        except ValueError:
            raise ConfigurationError(f"grid {text!r} is not start:step:stop")
        if step <= 0 or stop < start:
            raise ConfigurationError(f"grid {text!r} is empty")
        n = int(math.floor((stop - start) / step + 1e-9)) + 1
        return [start + i * step for i in range(n)]
    try:
        grid = [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise ConfigurationError(f"grid {text!r} is not a list of numbers")
    if not grid:
        raise ConfigurationError("empty lambda grid")
    return grid


def summary_line(name: str, trace, metrics) -> str:
    return json.dumps({
        "schema": SUMMARY_SCHEMA,
        "scenario": name,
        "status": trace.status,
        "diverged_at": trace.diverged_at,
        "rows": len(trace),
        "rms_error": metrics.rms_error,
        "static_error": metrics.static_error,
        "max_abs_u": metrics.max_abs_u,
        "violations": metrics.violations,
    }, sort_keys=True)


def cmd_simulate(args) -> int:
    scenario = load_scenario(args.scenario)
    trace = run(scenario)
    out = Path(args.out or f"{scenario.name}.csv")
    export_csv(trace, out)
    if len(trace):
        print(summary_line(scenario.name, trace, scenario_metrics(scenario, trace)))
    return EXIT_OK if trace.completed else EXIT_DIVERGED


def format_analysis(pg: PGVector, lam: float, Ts: float) -> str:
    T = analysis.build_T(pg, lam)
    report = analysis.poles(T)
    try:
        err = f"{analysis.static_error_ramp(pg, lam, Ts):.10g}"
    except DegeneratePlantError:
        err = "degenerate"
    roots = ", ".join(f"{r.real:.10g}{r.imag:+.10g}j" for r in report.roots) or "(none)"
    return "\n".join([
        f"lambda: {lam:.10g}",
        "T coefficients (ascending z^-1): " + ", ".join(f"{c:.10g}" for c in T.coefficients),
        f"roots: {roots}",
        f"spectral radius: {report.spectral_radius:.10g}",
        f"verdict: {report.verdict}",
        f"predicted ramp error: {err}",
    ])


def _analyze(args) -> int:
    pg = parse_pg(args.pg, args.ly)
    if args.grid is not None:
        rows = analysis.lambda_sweep(pg, parse_grid(args.grid), args.ts)
        if getattr(args, "out", None):
            with open(args.out, "w", newline="") as fh:
                analysis.write_sweep_csv(rows, fh)
        else:
            analysis.write_sweep_csv(rows, sys.stdout)
        return EXIT_OK
    print(format_analysis(pg, args.lam, args.ts))
    return EXIT_OK


def cmd_static_error(args) -> int:
    pg = parse_pg(args.pg, args.ly)
    if args.grid is not None:
        return _analyze(args)
    value = analysis.static_error_power(args.n, args.lam, pg) if args.n != 1 else None
    if args.n == 1:
        try:
            value = analysis.static_error_ramp(pg, args.lam, args.ts)
        except DegeneratePlantError:
            print("static error: degenerate")
            return EXIT_OK
    print("static error: divergent" if math.isinf(value) else f"static error: {value:.10g}")
    return EXIT_OK


PLOT_TEMPLATE = '''#!/usr/bin/env python3
"""Plot a closed-loop trace written by `mfac simulate`."""
import csv
from pathlib import Path

import matplotlib.pyplot as plt

TRACE = Path(__file__).resolve().parent / {rel!r}
PG_ONLY = {pg_only!r}

with open(TRACE, newline="") as fh:
    rows = list(csv.DictReader(fh))
cols = {{name: [float(r[name]) for r in rows] for name in rows[0]}}
phi_names = [n for n in cols if n.startswith("phi_")]

panels = 1 if PG_ONLY else 3
fig, axes = plt.subplots(panels, 1, sharex=True, figsize=(8, 2.8 * panels), squeeze=False)
axes = axes[:, 0]
if not PG_ONLY:
    axes[0].plot(cols["k"], cols["y_star"], "k--", label="y*")
    axes[0].plot(cols["k"], cols["y"], label="y")
    axes[0].set_ylabel("output")
    axes[0].legend()
    axes[1].plot(cols["k"], cols["u"])
    axes[1].set_ylabel("u")
for name in phi_names:
    axes[-1].plot(cols["k"], cols[name], label=name)
axes[-1].set_ylabel("PG")
axes[-1].legend()
axes[-1].set_xlabel("k")
fig.tight_layout()
plt.show()
'''


def render_plot_script(trace_path: Path, script_path: Path, pg_only: bool = False) -> str:
    rel = os.path.relpath(trace_path.resolve(), script_path.resolve().parent)
    return PLOT_TEMPLATE.format(rel=rel, pg_only=pg_only)


def cmd_emit_plot(args) -> int:
    trace_path = Path(args.trace)
    trace = import_csv(trace_path)
    if len(trace) == 0:
        raise TraceParseError(2, "trace has no rows")
    out = Path(args.out or trace_path.with_suffix(".plot.py"))
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(render_plot_script(trace_path, out, args.pg_only))
    return EXIT_OK


def cmd_list(args) -> int:
    for name in builtin_scenario_names():
        print(name)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="mfac", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", help="run a scenario and write its trace CSV")
    s.add_argument("scenario", help="scenario file or built-in name")
    s.add_argument("-o", "--out", help="trace CSV path (default: <name>.csv)")
    s.set_defaults(func=cmd_simulate)

    def pg_options(q, lam_required=True):
        q.add_argument("--pg", required=True, help="comma-separated PG, e.g. --pg=-0.8,-0.5,-0.2")
        q.add_argument("--ly", type=int, default=1, help="output block length (default 1)")
        group = q.add_mutually_exclusive_group(required=lam_required)
        group.add_argument("--lambda", dest="lam", type=float)
        group.add_argument("--grid", help="lambda grid, start:step:stop or a,b,c")
        q.add_argument("--ts", type=float, default=1.0, help="sample time (default 1)")

    a = sub.add_parser("analyze-poles", help="closed-loop polynomial, poles and verdict")
    pg_options(a)
    a.set_defaults(func=_analyze)

    e = sub.add_parser("analyze-static-error", help="predicted static tracking error")
    pg_options(e)
    e.add_argument("--n", type=int, default=1, help="reference k^n (default 1, ramp)")
    e.set_defaults(func=cmd_static_error)

    w = sub.add_parser("sweep-lambda", help="stability and ramp error over a lambda grid")
    w.add_argument("--pg", required=True)
    w.add_argument("--ly", type=int, default=1)
    w.add_argument("--grid", required=True)
    w.add_argument("--ts", type=float, default=1.0)
    w.add_argument("-o", "--out", help="CSV path (default: stdout)")
    w.set_defaults(func=_analyze, lam=None)

    g = sub.add_parser("emit-plot", help="write a matplotlib script for a trace CSV")
    g.add_argument("trace")
    g.add_argument("-o", "--out", help="script path (default: <trace>.plot.py)")
    g.add_argument("--pg-only", action="store_true", help="only the PG panel")
    g.set_defaults(func=cmd_emit_plot)

    ls = sub.add_parser("list-scenarios", help="names of the built-in scenarios")
    ls.set_defaults(func=cmd_list)
    return p


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (FileNotFoundError, IsADirectoryError, PermissionError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except TraceParseError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (ConfigurationError, MFACError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
