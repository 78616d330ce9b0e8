"""Command-line surface: plan, sweep, simulate, and day-loop experiments.

Every command that writes an artifact also writes ``<out>.manifest.json``
(or ``manifest.json`` inside a directory output) recording the command line,
input file hashes, seed, tool version, and wall time. Manifests are run
metadata — the artifacts themselves are byte-stable for identical inputs and
seed; the manifest's wall-time field is the one thing that legitimately
differs between reruns.

Exit codes: 0 success, 2 infeasible-but-valid (the planner proved no
configuration exists), 1 any error.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import hashlib
import json
import sys
import time
from pathlib import Path

from . import __version__
from .errors import SliceServeError
from .model import AppSpec, load_app
from .placement import DEFAULT_GEOMETRY, min_gpus, pack
from .planner import (
    ALL_SPACES,
    PlanRequest,
    PlanResult,
    SearchSpace,
    max_demand,
    plan,
    plan_result_to_dict,
)
from .profiles import ProfileTable, load_knobs, load_profile, save_profile, synth_profile
from .simulator import SimOptions, TraceBin, instance_segments, simulate
from .workload import (
    DayOptions,
    TraceShape,
    gen_trace,
    load_trace,
    run_day,
    save_day_report,
    save_trace,
)

__all__ = ["main", "geometry_digest", "SWEEP_COLUMNS", "DAY_LONG_COLUMNS"]

SWEEP_COLUMNS = ("space", "max_demand_rps", "pct_slices_used", "ratio_vs_unopt", "error")
DAY_LONG_COLUMNS = ("bin_index", "metric", "value")
_EXIT_OK, _EXIT_ERROR, _EXIT_INFEASIBLE = 0, 1, 2


def geometry_digest() -> str:
    """Stable fingerprint of the built-in GPU partition geometry."""
    return DEFAULT_GEOMETRY.digest()


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _write_json(path: Path, doc) -> None:
    path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")


def _write_manifest(
    out: Path, argv: list[str], inputs: list[Path], seed: int | None, started: float
) -> None:
    manifest = {
        "command": ["sliceserve", *argv],
        "inputs": {str(p): _sha256(Path(p)) for p in inputs},
        "seed": seed,
        "version": __version__,
        "wall_ms": (time.monotonic() - started) * 1000.0,
    }
    target = out / "manifest.json" if out.is_dir() else out.with_name(out.name + ".manifest.json")
    _write_json(target, manifest)


class _Parser(argparse.ArgumentParser):
    # usage problems are plain errors (exit 1); exit 2 means "proved infeasible"
    def error(self, message):  # noqa: D102 - argparse hook
        self.print_usage(sys.stderr)
        self.exit(_EXIT_ERROR, f"{self.prog}: error: {message}\n")


def _space(text: str) -> SearchSpace:
    try:
        return SearchSpace.from_label(text)
    except SliceServeError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from exc


def _load_inputs(args) -> tuple[AppSpec, ProfileTable]:
    return load_app(args.app), load_profile(args.profile)


def _print_plan_summary(result: PlanResult) -> None:
    if not result.feasible:
        print(f"infeasible: binding constraint = {result.binding_constraint}")
        return
    cfg = result.config
    print(
        f"feasible: objective={result.objective:.6g} a_obj={cfg.a_obj:.6g} "
        f"slices={cfg.total_slices}"
    )
    for (task, variant, seg, batch), count in cfg.m:
        print(f"  {task}: {count} x {variant} on {seg} batch {batch}")


# ------------------------------------------------------------------ commands


def _cmd_plan(args, argv: list[str]) -> int:
    started = time.monotonic()
    app, profile = _load_inputs(args)
    request = PlanRequest(args.demand, args.slices, args.space, args.slack)
    result = plan(app, profile, request)
    _print_plan_summary(result)
    if args.out:
        out = Path(args.out)
        _write_json(out, plan_result_to_dict(result))
        _write_manifest(out, argv, [args.app, args.profile], None, started)
    return _EXIT_OK if result.feasible else _EXIT_INFEASIBLE


def _cmd_sweep(args, argv: list[str]) -> int:
    started = time.monotonic()
    app, profile = _load_inputs(args)
    rows = []
    unopt_demand: float | None = None
    for space in ALL_SPACES:
        label = space.label
        try:
            best = max_demand(app, profile, args.slices, space, args.slack)
            demand = best.demand_rps
            pct = (
                100.0 * best.plan.config.total_slices / args.slices
                if best.plan.config is not None
                else 0.0
            )
            if label == "Unopt":
                unopt_demand = demand
            ratio = "" if not unopt_demand else repr(demand / unopt_demand)
            rows.append([label, repr(demand), repr(pct), ratio, ""])
        except SliceServeError as exc:
            rows.append([label, "", "", "", str(exc)])
    out = Path(args.out)
    with open(out, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(SWEEP_COLUMNS)
        writer.writerows(rows)
    _write_manifest(out, argv, [args.app, args.profile], None, started)
    return _EXIT_OK


def _cmd_simulate(args, argv: list[str]) -> int:
    started = time.monotonic()
    app, profile = _load_inputs(args)
    request = PlanRequest(args.demand, args.slices, args.space, args.slack)
    result = plan(app, profile, request)
    if not result.feasible or result.config is None:
        print(
            f"infeasible at {args.demand} req/s: binding constraint = "
            f"{result.binding_constraint}",
            file=sys.stderr,
        )
        return _EXIT_INFEASIBLE
    segments = instance_segments(result.config)
    deployment = pack(segments, min_gpus(segments))
    events: list[tuple] = []
    options = SimOptions(
        warmup_s=args.warmup,
        event_sink=(lambda *row: events.append(row)) if args.events else None,
    )
    report = simulate(
        app,
        profile,
        result.config,
        deployment,
        TraceBin(args.demand, args.duration),
        args.seed,
        options,
    )
    print(
        f"simulated {report.duration_s:.0f}s at {report.offered_rps:g} req/s: "
        f"violation_rate={report.violation_rate:.4f} "
        f"completed={report.completed_roots}/{report.arrived_roots}"
    )
    out = Path(args.out)
    _write_json(out, {"plan": plan_result_to_dict(result), "report": report.to_dict()})
    if args.events:
        with open(args.events, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(("time_ms", "event", "request_id", "task", "instance", "detail"))
            writer.writerows(events)
    _write_manifest(out, argv, [args.app, args.profile], args.seed, started)
    return _EXIT_OK


def _day_long_rows(results) -> list[list]:
    rows = []
    for res in results:
        rows.append([res.bin_index, "demand_rps", repr(res.demand_rps)])
        rows.append([res.bin_index, "predicted_rps", repr(res.predicted_rps)])
        if res.report is not None:
            rows.append(
                [res.bin_index, "pct_slices_used", repr(100.0 * res.report.slices_used_frac)]
            )
            drop = res.report.accuracy_drop_pct
            rows.append([res.bin_index, "accuracy_drop_pct", "" if drop is None else repr(drop)])
            rows.append([res.bin_index, "violation_rate", repr(res.report.violation_rate)])
        rows.append([res.bin_index, "error", "1" if res.error else "0"])
    return rows


def _cmd_run_day(args, argv: list[str]) -> int:
    started = time.monotonic()
    app, profile = _load_inputs(args)
    trace = load_trace(args.trace, bin_s=args.bin_seconds)
    options = DayOptions(slack=args.slack, bin_sim_s=args.bin_sim_seconds, warmup_s=args.warmup)
    results = run_day(app, profile, trace, args.slices, args.space, args.seed, options)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    save_day_report(out / "day_report.csv", results)
    with open(out / "day_long.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(DAY_LONG_COLUMNS)
        writer.writerows(_day_long_rows(results))
    bins_dir = out / "bins"
    bins_dir.mkdir(exist_ok=True)
    for res in results:
        if res.report is not None:
            _write_json(bins_dir / f"bin_{res.bin_index:03d}.json", res.report.to_dict())
    failures = sum(1 for r in results if r.error)
    print(
        f"ran {len(results)} bins: {failures} failed, reports in {out}",
        file=sys.stdout,
    )
    _write_manifest(out, argv, [args.app, args.profile, args.trace], args.seed, started)
    return _EXIT_OK


def _cmd_gen_profile(args, argv: list[str]) -> int:
    started = time.monotonic()
    app = load_app(args.app)
    knobs = load_knobs(args.knobs)
    if args.seed is not None:
        knobs = dataclasses.replace(knobs, seed=args.seed)
    table = synth_profile(app.graph, knobs)
    out = Path(args.out)
    save_profile(table, out)
    _write_manifest(out, argv, [args.app, args.knobs], args.seed, started)
    return _EXIT_OK


def _cmd_gen_trace(args, argv: list[str]) -> int:
    started = time.monotonic()
    shape = TraceShape(
        amplitude=args.amplitude,
        base=args.base,
        noise_sigma=args.noise,
        bins=args.bins,
        bin_s=args.bin_seconds,
    )
    trace = gen_trace(shape, args.scale, args.seed)
    out = Path(args.out)
    save_trace(out, trace)
    _write_manifest(out, argv, [], args.seed, started)
    return _EXIT_OK


# -------------------------------------------------------------------- parser


def _build_parser() -> _Parser:
    parser = _Parser(prog="sliceserve", description=__doc__.splitlines()[0])
    parser.add_argument(
        "--version",
        action="version",
        version=f"sliceserve {__version__} (geometry {geometry_digest()})",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, trace=False):
        p.add_argument("--app", required=True, help="application spec JSON")
        p.add_argument("--profile", required=True, help="profile table CSV")
        if trace:
            p.add_argument("--trace", required=True, help="demand trace CSV")
        p.add_argument("--slices", type=int, required=True, help="slice budget")
        p.add_argument("--space", type=_space, default=SearchSpace(True, True, True),
                       help="search space label, e.g. Unopt, A, S+T, A+S+T")
        p.add_argument("--slack", type=float, default=0.05, help="capacity slack fraction")

    p = sub.add_parser("plan", help="plan one configuration for a target demand")
    common(p)
    p.add_argument("--demand", type=float, required=True, help="entry demand req/s")
    p.add_argument("--out", help="write plan JSON here")
    p.set_defaults(func=_cmd_plan)

    p = sub.add_parser("sweep", help="max serviceable demand for all 8 search spaces")
    common(p)
    p.add_argument("--out", required=True, help="write sweep CSV here")
    p.set_defaults(func=_cmd_sweep)

    p = sub.add_parser("simulate", help="plan for a demand, then replay it for one bin")
    common(p)
    p.add_argument("--demand", type=float, required=True, help="offered demand req/s")
    p.add_argument("--duration", type=float, default=60.0, help="measured seconds")
    p.add_argument("--warmup", type=float, default=10.0, help="warm-up seconds")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="write plan+report JSON here")
    p.add_argument("--events", help="also write an event-log CSV here")
    p.set_defaults(func=_cmd_simulate)

    p = sub.add_parser("run-day", help="replan and replay a demand trace bin by bin")
    common(p, trace=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--bin-seconds", type=float, default=300.0, help="trace bin width")
    p.add_argument("--bin-sim-seconds", type=float, default=60.0, help="simulated s per bin")
    p.add_argument("--warmup", type=float, default=10.0, help="warm-up seconds per bin")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=_cmd_run_day)

    p = sub.add_parser("gen", help="generate synthetic inputs")
    gen_sub = p.add_subparsers(dest="gen_command", required=True)

    g = gen_sub.add_parser("profile", help="synthesize a profile table for an app")
    g.add_argument("--app", required=True)
    g.add_argument("--knobs", required=True, help="generator knobs JSON")
    g.add_argument("--seed", type=int, default=None, help="override the knobs seed")
    g.add_argument("--out", required=True)
    g.set_defaults(func=_cmd_gen_profile)

    g = gen_sub.add_parser("trace", help="synthesize a diurnal demand trace")
    g.add_argument("--bins", type=int, default=288)
    g.add_argument("--amplitude", type=float, default=0.5)
    g.add_argument("--base", type=float, default=1.0)
    g.add_argument("--noise", type=float, default=0.05)
    g.add_argument("--bin-seconds", type=float, default=300.0)
    g.add_argument("--scale", type=float, required=True, help="peak demand req/s")
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--out", required=True)
    g.set_defaults(func=_cmd_gen_trace)

    return parser


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:]) if argv is None else list(argv)
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args, argv)
    except SliceServeError as exc:
        print(f"sliceserve: error: {exc}", file=sys.stderr)
        return _EXIT_ERROR
    except OSError as exc:
        print(f"sliceserve: error: {exc}", file=sys.stderr)
        return _EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
