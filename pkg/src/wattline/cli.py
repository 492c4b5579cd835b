"""Command-line entry point: ``wattline sample|integrate|model|analyze|plot``.

Exit codes:
    0   success
    1   other tool error
    2   power source error
    3   format / schema / parse error
    4   sampler lifecycle error
    5   unknown region or ceiling
    6   model / analysis error (domain, fit, ordering, placement, plot)
    64  usage error
    74  I/O error
    127 child executable not found (``sample``)
    otherwise, ``sample`` propagates the child's own non-zero exit status
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import shutil
import subprocess
import sys
from typing import Optional, Sequence

from . import __version__
from .builder import build_model, compare_configs, group_records, place_kernels
from .energy import parse_log, region_report, region_reports
from .errors import AnalysisError, ComparisonError, PlacementError, SchemaError, SourceError, WattlineError
from .formats import coefficients_to_json, load_model, load_platform, read_records, save_model
from .model import GIGA, Kind, Precision, fit_energy_coefficients, ridge_point
from .plot import save_svg
from .sampler import SamplerConfig, VirtualClock, init
from .sources import TraceSpec, load_trace, parse_source_spec

logger = logging.getLogger("wattline")

EXIT_USAGE = 64
EXIT_IO = 74
EXIT_NO_CHILD = 127

_COLORS = {"compute_bound": "32", "power_bound": "31", "on_ridge": "33"}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _use_color(stream) -> bool:
    return not os.environ.get("WATTLINE_NO_COLOR") and hasattr(stream, "isatty") and stream.isatty()


def _paint(text: str, key: Optional[str]) -> str:
    if key in _COLORS and _use_color(sys.stdout):
        return f"\033[{_COLORS[key]}m{text}\033[0m"
    return text


def _emit_json(obj) -> None:
    json.dump(obj, sys.stdout, indent=2)
    sys.stdout.write("\n")


# -- sample ------------------------------------------------------------------


def cmd_sample(args) -> int:
    child = list(args.child)
    if child and child[0] == "--":
        child = child[1:]
    if not child:
        raise _UsageError("sample needs a child command after '--'")
    try:
        spec = parse_source_spec(args.source)
    except AnalysisError as exc:
        raise SourceError(f"bad source spec: {exc}") from None

    if shutil.which(child[0]) is None:
        print(f"wattline: error: child executable not found: {child[0]}", file=sys.stderr)
        return EXIT_NO_CHILD

    clock = None
    duration_us = 0
    if args.virtual_clock:
        clock = VirtualClock()
        if args.virtual_duration_ms is not None:
            duration_us = int(round(args.virtual_duration_ms * 1000))
        elif isinstance(spec, TraceSpec):
            pts = load_trace(spec.path)
            duration_us = pts[-1][0] - pts[0][0]
        else:
            raise _UsageError("--virtual-clock needs --virtual-duration-ms unless the source is a trace")

    config = SamplerConfig(source=spec, output_path=args.out, period_ms=args.period_ms, buffer_capacity=args.buffer)
    name = args.region_name or os.path.basename(child[0])
    sampler = init(config, clock=clock)
    returncode = 0
    try:
        sampler.region_start(name)
        try:
            returncode = subprocess.run(child).returncode
        finally:
            if clock is not None:
                clock.advance(duration_us)
            sampler.region_stop(name)
    finally:
        summary = sampler.finalize()

    if args.json:
        _emit_json(
            {
                "log": str(args.out),
                "region": name,
                "sample_count": summary.sample_count,
                "region_count": summary.region_count,
                "dropped_samples": summary.dropped_samples,
                "source_errors": summary.source_errors,
                "child_exit": returncode,
            }
        )
    else:
        print(f"{args.out}: region {name!r}, {summary.sample_count} samples, {summary.dropped_samples} dropped", file=sys.stderr)
    if summary.source_errors:
        print(f"wattline: warning: {summary.source_errors} failed reads ({summary.first_error})", file=sys.stderr)
        if summary.sample_count == 0:
            return SourceError.exit_code
    if returncode < 0:
        return 128 - returncode
    return returncode


# -- integrate ---------------------------------------------------------------


def cmd_integrate(args) -> int:
    log = parse_log(args.log)
    reports = [region_report(log, args.region)] if args.region else region_reports(log)
    if args.json:
        _emit_json([r.to_json() for r in reports])
        return 0
    print(f"{'region':<20} {'duration_s':>12} {'energy_j':>12} {'avg_w':>10} {'min_w':>10} {'max_w':>10} {'samples':>8}")
    for r in reports:
        flag = " *" if r.boundary_interpolated else ""
        print(
            f"{r.name:<20} {r.duration:>12.6f} {r.energy:>12.6g} {r.avg_power:>10.4g} "
            f"{r.min_power:>10.4g} {r.max_power:>10.4g} {r.sample_count:>8d}{flag}"
        )
    if any(r.boundary_interpolated for r in reports):
        print("* region edge power interpolated from neighbouring samples")
    return 0


# -- model -------------------------------------------------------------------


def cmd_model_build(args) -> int:
    platform = load_platform(args.platform, lenient=args.lenient)
    records = read_records(args.records, lenient=args.lenient)
    precision = Precision.parse(args.precision)
    groups = group_records(records, args.kind, precision)
    if not groups:
        raise SchemaError("records", f"no {precision.value}-precision records to build from")
    model = build_model(platform, groups, args.statistic)
    save_model(model, args.out)
    unit = "J/GFLOP" if model.kind is Kind.COMPUTE else "J/GB"
    top_ridge = ridge_point(model.p_peak, model.top.rate) * GIGA
    if args.json:
        _emit_json({"out": str(args.out), "ceilings": [c.name for c in model.ceilings], "top_ridge": top_ridge, "ridge_unit": unit})
    else:
        print(f"wrote {args.out}: {len(model.ceilings)} ceilings, top ridge {top_ridge:.4g} {unit}")
    return 0


# -- analyze -----------------------------------------------------------------


def _compare(placements, spec: str):
    parts = spec.split(",")
    if len(parts) != 2 or not all(parts):
        raise _UsageError("--compare takes two config labels: A,B")
    before_label, after_label = parts
    by_key = {}
    for p in placements:
        by_key.setdefault((p.kernel_name, p.precision, p.config_label), p)
    deltas = []
    for (kernel, precision, label), before in by_key.items():
        if label != before_label:
            continue
        after = by_key.get((kernel, precision, after_label))
        if after is not None:
            deltas.append(compare_configs(before, after))
    if not deltas:
        raise ComparisonError(f"no kernel has placements for both {before_label!r} and {after_label!r}")
    return deltas


def cmd_analyze(args) -> int:
    records = read_records(args.records, lenient=args.lenient)
    if not records:
        raise SchemaError("records", "records table has no rows")
    result: dict = {}
    if args.fit:
        result["fit"] = coefficients_to_json(fit_energy_coefficients(records, include_constant=not args.no_constant))
    compute_model = load_model(args.model, lenient=args.lenient) if args.model else None
    memory_model = load_model(args.memory_model, lenient=args.lenient) if args.memory_model else None
    if compute_model is not None and compute_model.kind is Kind.MEMORY:
        if memory_model is not None:
            raise PlacementError("--model is a memory model and --memory-model is also given")
        compute_model, memory_model = None, compute_model
    if compute_model is None and memory_model is None:
        if not args.fit:
            raise _UsageError("analyze needs --model/--memory-model, or --fit")
    else:
        ref = compute_model or memory_model
        usable = [r for r in records if r.precision in (ref.precision, Precision.NA) or ref.precision is Precision.NA]
        skipped = len(records) - len(usable)
        if skipped:
            print(f"wattline: note: skipped {skipped} record(s) not in {ref.precision.value} precision", file=sys.stderr)
        placements = place_kernels(compute_model, memory_model, usable, tol=args.tol, ceiling_name=args.ceiling)
        result["placements"] = [p.to_json() for p in placements]
        if args.compare:
            result["comparisons"] = [d.to_json() for d in _compare(placements, args.compare)]
    if args.compare and "placements" not in result:
        raise _UsageError("--compare needs a model")

    if args.json:
        _emit_json(result)
        return 0
    if "fit" in result:
        f = result["fit"]
        print(
            f"fit: eps_flop={f['eps_flop_j_per_flop']:.4g} J/FLOP  eps_mem={f['eps_mem_j_per_byte']:.4g} J/B  "
            f"E0={f['e0_j']:.4g} J  rms={f['residual_rms_j']:.3g} J"
        )
    for p in result.get("placements", []):
        e_w = f"{p['e_w_j_per_flop'] * GIGA:.4g}" if p["e_w_j_per_flop"] is not None else "-"
        e_q = f"{p['e_q_j_per_byte'] * GIGA:.4g}" if p["e_q_j_per_byte"] is not None else "-"
        cls = p["classification"] or "unclassified"
        gap = f"{p['gap']:.3f}" if p["gap"] is not None else "-"
        print(
            f"{p['kernel']:<16} {p['config']:<10} P={p['power_w']:8.4g} W  e_w={e_w:>8} J/GFLOP  "
            f"e_q={e_q:>8} J/GB  gap={gap:>6}  {_paint(cls, p['classification'])}"
        )
    for d in result.get("comparisons", []):
        print(
            f"{d['kernel']}: {d['before']} -> {d['after']}: dP={d['delta_power_w']:+.4g} W  "
            f"EE x{d['ee_ratio']:.3f}  crossed_ridge={'yes' if d['crossed_ridge'] else 'no'}"
        )
    return 0


# -- plot --------------------------------------------------------------------


def cmd_plot(args) -> int:
    model = load_model(args.model, lenient=args.lenient)
    records = read_records(args.records, lenient=args.lenient) if args.records else []
    save_svg(model, args.out, records)
    if args.json:
        _emit_json({"out": str(args.out), "ceilings": len(model.ceilings), "points": len(records)})
    else:
        print(f"wrote {args.out}: {len(model.ceilings)} ceilings, {len(records)} kernel points")
    return 0


# -- wiring ------------------------------------------------------------------


class _UsageError(Exception):
    pass


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="wattline", description="Region-scoped power sampling and power/energy-efficiency rooflines.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("-v", "--verbose", action="store_true", help="debug logging on stderr")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("sample", help="run a child command inside one sampled region")
    s.add_argument("--source", required=True, help="synthetic:constant:<mw> | trace:<path> | rapl:<path>[:max_uj] | cmd:<exe ...>")
    s.add_argument("--period-ms", type=float, default=2.0)
    s.add_argument("--buffer", type=int, default=4096, help="samples buffered between log flushes")
    s.add_argument("--out", required=True, help="sample log to write")
    s.add_argument("--region-name", help="region name (default: child executable basename)")
    s.add_argument("--virtual-clock", action="store_true", help="deterministic virtual time base (for replays)")
    s.add_argument("--virtual-duration-ms", type=float, help="virtual region length (default: trace span)")
    s.add_argument("--json", action="store_true")
    s.add_argument("child", nargs=argparse.REMAINDER)
    s.set_defaults(func=cmd_sample)

    i = sub.add_parser("integrate", help="per-region energy from a sample log")
    i.add_argument("--log", required=True)
    i.add_argument("--region")
    i.add_argument("--json", action="store_true")
    i.set_defaults(func=cmd_integrate)

    m = sub.add_parser("model", help="build roofline model documents")
    msub = m.add_subparsers(dest="model_command", required=True)
    b = msub.add_parser("build", help="build a model from a platform file and a records table")
    b.add_argument("--platform", required=True, help="platform JSON {name, p_peak_w, notes}")
    b.add_argument("--records", required=True, help="records CSV, or - for stdin")
    b.add_argument("--kind", choices=("compute", "memory"), required=True)
    b.add_argument("--precision", choices=("sp", "dp", "single", "double", "n/a"), required=True)
    b.add_argument("--statistic", choices=("median", "max"), default="median")
    b.add_argument("--out", required=True)
    b.add_argument("--lenient", action="store_true", help="ignore unknown keys/columns")
    b.add_argument("--json", action="store_true")
    b.set_defaults(func=cmd_model_build)

    a = sub.add_parser("analyze", help="place kernels on models, compare configs, fit energy coefficients")
    a.add_argument("--model")
    a.add_argument("--memory-model")
    a.add_argument("--records", required=True, help="records CSV, or - for stdin")
    a.add_argument("--compare", metavar="BEFORE,AFTER")
    a.add_argument("--ceiling", help="classify against this ceiling instead of the top one")
    a.add_argument("--tol", type=float, default=0.01, help="relative ridge tolerance for on_ridge")
    a.add_argument("--fit", action="store_true", help="fit E = W*eps_flop + Q*eps_mem + E0")
    a.add_argument("--no-constant", action="store_true", help="fit without the E0 term")
    a.add_argument("--lenient", action="store_true")
    a.add_argument("--json", action="store_true")
    a.set_defaults(func=cmd_analyze)

    pl = sub.add_parser("plot", help="render a model (and kernel points) as SVG")
    pl.add_argument("--model", required=True)
    pl.add_argument("--records")
    pl.add_argument("--out", required=True)
    pl.add_argument("--lenient", action="store_true")
    pl.add_argument("--json", action="store_true")
    pl.set_defaults(func=cmd_plot)
    return p


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="wattline: %(levelname)s: %(message)s")
    try:
        return args.func(args)
    except _UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"wattline: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except WattlineError as exc:
        print(f"wattline: error: {exc}", file=sys.stderr)
        return exc.exit_code
    except OSError as exc:
        print(f"wattline: error: {exc}", file=sys.stderr)
        return EXIT_IO
    except KeyboardInterrupt:
        return 130


if __name__ == "__main__":
    sys.exit(main())
