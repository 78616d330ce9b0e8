"""Demand traces and the day-long replan/replay loop.

A day of traffic is binned into fixed-width intervals (five minutes by
default). For each bin the loop predicts the coming demand from recent
history, plans a configuration for the prediction, packs it onto GPUs, and
then replays the bin's *actual* demand through the simulator. Prediction is
deliberately simple — the mean of the last five bins plus a slack factor —
so the loop inherits the real system's sensitivity to sharp fluctuations.

When the predicted demand is infeasible under the slice budget, the loop
falls back to the configuration that serves the highest feasible demand
(memoized per run). Edge fan-out factors fed to the planner switch from the
application's static values to rolling means of simulator-measured factors
once five bins of history exist.
"""

from __future__ import annotations

import csv
import math
import statistics
from collections import deque
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .errors import ConfigError, GeometryError, ProfileError
from .model import AppSpec
from .placement import DEFAULT_GEOMETRY, MigGeometry, min_gpus, pack
from .planner import (
    Configuration,
    PlannerOptions,
    PlanRequest,
    PlanResult,
    SearchSpace,
    max_demand,
    plan,
)
from .profiles import ProfileTable
from .simulator import SimOptions, SimReport, TraceBin, instance_segments, simulate

__all__ = [
    "DemandTrace",
    "PredictorState",
    "TraceShape",
    "BinResult",
    "DayOptions",
    "gen_trace",
    "predict",
    "run_day",
    "load_trace",
    "save_trace",
    "save_day_report",
    "DAY_REPORT_COLUMNS",
]

PREDICTOR_WINDOW = 5


@dataclass(frozen=True)
class DemandTrace:
    """Mean request rate per contiguous time bin."""

    bins: tuple[tuple[int, float], ...]
    bin_s: float = 300.0

    def __post_init__(self) -> None:
        if not self.bins:
            raise ConfigError("trace must contain at least one bin")
        if self.bin_s <= 0:
            raise ConfigError("bin width must be positive")
        for pos, (idx, demand) in enumerate(self.bins):
            if idx != pos:
                raise ConfigError(
                    f"bin indices must be contiguous from 0; found {idx} at position {pos}"
                )
            if demand < 0 or not math.isfinite(demand):
                raise ConfigError(f"bin {idx}: demand must be finite and >= 0, got {demand}")

    @property
    def demands(self) -> tuple[float, ...]:
        return tuple(d for _, d in self.bins)

    def __len__(self) -> int:
        return len(self.bins)


@dataclass
class PredictorState:
    """Rolling demand history feeding the per-bin prediction."""

    slack: float = 0.05
    window: deque[float] = field(default_factory=lambda: deque(maxlen=PREDICTOR_WINDOW))

    def observe(self, demand_rps: float) -> None:
        self.window.append(float(demand_rps))


def predict(state: PredictorState) -> float:
    """Mean of the recent window, padded by the slack fraction."""
    if not state.window:
        raise ConfigError("cannot predict demand from empty history")
    return statistics.fmean(state.window) * (1.0 + state.slack)


@dataclass(frozen=True)
class TraceShape:
    """Knobs for the synthetic diurnal demand curve."""

    amplitude: float = 0.5
    base: float = 1.0
    noise_sigma: float = 0.05
    bins: int = 288
    bin_s: float = 300.0

    def __post_init__(self) -> None:
        if self.bins < 1:
            raise ConfigError("trace must have at least one bin")
        if self.noise_sigma < 0:
            raise ConfigError("noise sigma must be >= 0")
        if self.base < 0 or self.amplitude < 0:
            raise ConfigError("base and amplitude must be >= 0")


def gen_trace(shape: TraceShape, scale_to_max_rps: float, seed: int) -> DemandTrace:
    """Sinusoidal day curve plus seeded noise, scaled so the peak bin equals
    ``scale_to_max_rps`` exactly."""
    if scale_to_max_rps < 0:
        raise ConfigError("scale-to-max must be >= 0")
    rng = np.random.default_rng(seed)
    noise = rng.normal(0.0, shape.noise_sigma, shape.bins) if shape.noise_sigma else np.zeros(
        shape.bins
    )
    phase = 2.0 * math.pi * np.arange(shape.bins) / shape.bins
    raw = shape.base + shape.amplitude * np.sin(phase - math.pi / 2.0) + noise
    raw = np.maximum(raw, 0.0)
    peak = float(raw.max())
    if peak <= 0.0:
        raise ConfigError("trace shape is identically zero; cannot scale to a maximum")
    demands = [float(r / peak) * scale_to_max_rps for r in raw]
    return DemandTrace(tuple(enumerate(demands)), bin_s=shape.bin_s)


TRACE_HEADER = ("bin_index", "demand_rps")


def save_trace(path: str | Path, trace: DemandTrace) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(TRACE_HEADER)
        for idx, demand in trace.bins:
            writer.writerow([idx, repr(demand)])


def load_trace(path: str | Path, bin_s: float = 300.0) -> DemandTrace:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or tuple(h.strip() for h in header) != TRACE_HEADER:
            raise ConfigError(f"{path}: expected header {','.join(TRACE_HEADER)}")
        try:
            bins = tuple((int(row[0]), float(row[1])) for row in reader if row)
        except (ValueError, IndexError) as exc:
            raise ConfigError(f"{path}: malformed trace row ({exc})") from exc
    return DemandTrace(bins, bin_s=bin_s)


# --------------------------------------------------------------------------
# Day loop


@dataclass(frozen=True)
class DayOptions:
    """Knobs for the replan/replay loop."""

    slack: float = 0.05
    bin_sim_s: float = 60.0
    warmup_s: float = 10.0
    reconfig_delay_ms: float = 0.0
    planner_options: PlannerOptions | None = None
    sim_options: SimOptions | None = None
    geometry: MigGeometry = DEFAULT_GEOMETRY

    def __post_init__(self) -> None:
        if self.bin_sim_s <= 0:
            raise ConfigError("bin simulation duration must be positive")
        if self.warmup_s < 0 or self.reconfig_delay_ms < 0:
            raise ConfigError("warm-up and reconfiguration delay must be >= 0")


@dataclass(frozen=True)
class BinResult:
    """Outcome of one bin: the plan that served it and the replayed metrics.

    ``error`` is set (and ``plan``/``report`` may be missing) when the bin
    failed structurally; the day loop records the failure and moves on.
    """

    bin_index: int
    demand_rps: float
    predicted_rps: float
    plan: PlanResult | None
    report: SimReport | None
    used_fallback: bool = False
    factors_used: Mapping[tuple[str, str], float] | None = None
    error: str | None = None


def _mean_factors(
    history: Mapping[tuple[str, str], deque[float]],
) -> dict[tuple[str, str], float] | None:
    """Rolling-mean fan-out overrides; only edges with a full window qualify."""
    full = {
        edge: statistics.fmean(values)
        for edge, values in history.items()
        if len(values) == PREDICTOR_WINDOW
    }
    return full or None


def run_day(
    app: AppSpec,
    profile: ProfileTable,
    trace: DemandTrace,
    slice_budget: int,
    space: SearchSpace,
    seed: int,
    options: DayOptions | None = None,
) -> list[BinResult]:
    """Replay a demand trace bin by bin: predict, plan, pack, simulate.

    Each bin is planned against the predicted demand but simulated at the
    bin's actual demand; the gap is what makes prediction lag observable.
    Per-bin failures are recorded in the result row rather than aborting
    the remaining bins. The returned list always has one entry per bin.
    """
    opts = options or DayOptions()
    predictor = PredictorState(slack=opts.slack)
    factor_history: dict[tuple[str, str], deque[float]] = {}
    fallback: PlanResult | None = None
    results: list[BinResult] = []
    sim_base = opts.sim_options or SimOptions()
    warmup_s = opts.warmup_s + opts.reconfig_delay_ms / 1000.0
    sim_opts = replace(sim_base, warmup_s=warmup_s)

    for idx, actual in trace.bins:
        if predictor.window:
            predicted = predict(predictor)
        else:
            # no history yet: bootstrap from the bin's own demand
            predicted = actual * (1.0 + opts.slack)
        factors = _mean_factors(factor_history)
        plan_res: PlanResult | None = None
        report: SimReport | None = None
        used_fallback = False
        error: str | None = None
        try:
            request = PlanRequest(
                demand_rps=predicted,
                slice_budget=slice_budget,
                space=space,
                slack=opts.slack,
                factor_overrides=factors,
            )
            plan_res = plan(app, profile, request, opts.planner_options)
            if not plan_res.feasible:
                if fallback is None:
                    best = max_demand(
                        app, profile, slice_budget, space, opts.slack, opts.planner_options
                    )
                    fallback = best.plan
                plan_res = fallback
                used_fallback = True
            if plan_res.feasible and plan_res.config is not None:
                config = plan_res.config
                segments = instance_segments(config)
                deployment = pack(segments, min_gpus(segments, opts.geometry), opts.geometry)
                report = simulate(
                    app,
                    profile,
                    config,
                    deployment,
                    TraceBin(actual, opts.bin_sim_s),
                    seed + idx,
                    sim_opts,
                )
            else:
                error = "no feasible configuration at any demand"
        except (ConfigError, ProfileError, GeometryError) as exc:
            error = str(exc)
        results.append(
            BinResult(
                bin_index=idx,
                demand_rps=actual,
                predicted_rps=predicted,
                plan=plan_res,
                report=report,
                used_fallback=used_fallback,
                factors_used=factors,
                error=error,
            )
        )
        predictor.observe(actual)
        if report is not None:
            for edge, value in report.edge_factors.items():
                factor_history.setdefault(
                    edge, deque(maxlen=PREDICTOR_WINDOW)
                ).append(value)
    return results


DAY_REPORT_COLUMNS = (
    "bin_index",
    "demand_rps",
    "predicted_rps",
    "feasible",
    "used_fallback",
    "objective",
    "a_obj",
    "planned_slices",
    "gpus_used",
    "slices_used_frac",
    "arrived_roots",
    "completed_roots",
    "dropped_roots",
    "drops_deadline_infeasible",
    "drops_stale",
    "drops_no_capacity",
    "drops_missed",
    "violations",
    "violation_denominator",
    "violation_rate",
    "late_completions",
    "measured_accuracy",
    "accuracy_drop_pct",
    "error",
)


def _day_report_row(res: BinResult) -> list:
    plan_res, report = res.plan, res.report
    config: Configuration | None = plan_res.config if plan_res else None

    def num(value):
        return "" if value is None else repr(value)

    row = [
        res.bin_index,
        repr(res.demand_rps),
        repr(res.predicted_rps),
        int(plan_res.feasible) if plan_res else "",
        int(res.used_fallback),
        num(plan_res.objective if plan_res else None),
        num(config.a_obj if config else None),
        config.total_slices if config else "",
    ]
    if report is None:
        row += [""] * 15
    else:
        row += [
            report.gpus_used,
            repr(report.slices_used_frac),
            report.arrived_roots,
            report.completed_roots,
            report.dropped_roots,
            report.drops_by_cause.get("deadline-infeasible", 0),
            report.drops_by_cause.get("stale", 0),
            report.drops_by_cause.get("no-capacity", 0),
            report.drops_by_cause.get("missed", 0),
            report.violations,
            report.violation_denominator,
            repr(report.violation_rate),
            report.late_completions,
            num(report.measured_accuracy),
            num(report.accuracy_drop_pct),
        ]
    row.append(res.error or "")
    return row


def save_day_report(path: str | Path, results: Sequence[BinResult]) -> None:
    """One CSV row per bin: plan summary plus replay metrics."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(DAY_REPORT_COLUMNS)
        for res in results:
            writer.writerow(_day_report_row(res))
