"""Configuration search: which model variants, on which GPU segments, at which
batch sizes, and how many instances of each.

The solver is a two-stage exact combinatorial search rather than an integer
program. Stage 1 enumerates per-task candidate bundles (multisets of
(variant, segment, batch) tuples with counts) and keeps only the Pareto
frontier over slice cost, capacity, effective accuracy, latency, and per-edge
fan-out. Stage 2 branches over tasks in topological order with latency,
resource, accuracy, and objective bounds. Every accepted configuration is
re-derived from scratch and validated, so the search can only err by missing
a candidate, never by accepting a bad one.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from itertools import product
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import ConfigError
from .model import (
    AppSpec,
    Task,
    TaskGraph,
    max_system_accuracy,
    path_accuracy,
    propagate_demand,
    system_accuracy,
)
from .profiles import Key, ProfileTable, SegmentType, all_segments

__all__ = [
    "SearchSpace",
    "ALL_SPACES",
    "PlanRequest",
    "PlannerOptions",
    "Configuration",
    "derive_configuration",
    "ConstraintVerdict",
    "validate_configuration",
    "SolverStats",
    "PlanResult",
    "plan",
    "plan_uninformed",
    "MaxDemandResult",
    "max_demand",
    "OracleCaps",
    "brute_force_plan",
    "plan_result_to_dict",
]


# --------------------------------------------------------------- search space


@dataclass(frozen=True)
class SearchSpace:
    """Feature toggles restricting what the planner may exploit.

    With accuracy scaling off, each task is pinned to its most accurate
    variant. With spatial partitioning off, only whole GPUs (7g, MPS 1) may
    be used. With task-graph-informed budgeting off, the end-to-end SLOs are
    statically divided per task instead of being optimized jointly.
    """

    accuracy_scaling: bool = False
    spatial_partitioning: bool = False
    task_graph_informed: bool = False

    @property
    def label(self) -> str:
        parts = []
        if self.accuracy_scaling:
            parts.append("A")
        if self.spatial_partitioning:
            parts.append("S")
        if self.task_graph_informed:
            parts.append("T")
        return "+".join(parts) if parts else "Unopt"

    @classmethod
    def from_label(cls, label: str) -> "SearchSpace":
        if label == "Unopt":
            return cls()
        parts = label.split("+")
        known = {"A", "S", "T"}
        if not parts or not set(parts) <= known or len(set(parts)) != len(parts):
            raise ConfigError(f"unknown search space label {label!r}")
        return cls(
            accuracy_scaling="A" in parts,
            spatial_partitioning="S" in parts,
            task_graph_informed="T" in parts,
        )

    def is_subset(self, other: "SearchSpace") -> bool:
        return (
            self.accuracy_scaling <= other.accuracy_scaling
            and self.spatial_partitioning <= other.spatial_partitioning
            and self.task_graph_informed <= other.task_graph_informed
        )


ALL_SPACES: tuple[SearchSpace, ...] = tuple(
    SearchSpace(a, s, t)
    for t, a, s in [
        (False, False, False),
        (True, False, False),
        (False, True, False),
        (True, True, False),
        (False, False, True),
        (True, False, True),
        (False, True, True),
        (True, True, True),
    ]
)


@dataclass(frozen=True)
class PlanRequest:
    demand_rps: float
    slice_budget: int
    space: SearchSpace = SearchSpace(True, True, True)
    slack: float = 0.05
    factor_overrides: Mapping[tuple[str, str], float] | None = None

    def __post_init__(self) -> None:
        if not math.isfinite(self.demand_rps) or self.demand_rps < 0:
            raise ConfigError(f"demand must be finite and non-negative, got {self.demand_rps}")
        if self.slice_budget < 0:
            raise ConfigError(f"slice budget must be non-negative, got {self.slice_budget}")
        if self.slack < 0:
            raise ConfigError(f"slack must be non-negative, got {self.slack}")
        if self.factor_overrides:
            for edge, val in self.factor_overrides.items():
                if val < 0:
                    raise ConfigError(f"factor override for {edge} is negative")


@dataclass(frozen=True)
class PlannerOptions:
    pareto_width: int = 512
    exhaustive_limit: int = 2_000
    eps: float = 1e-9
    mix_fractions: tuple[float, ...] = (0.25, 0.5, 0.75)
    feasible_only: bool = False


# ---------------------------------------------------------------- derivation


def _weighted_mean(pairs: Sequence[tuple[float, float]]) -> float:
    # short-circuit when every value is identical so that single-variant
    # configurations reproduce the raw value bit-for-bit
    first = pairs[0][0]
    if all(v == first for v, _ in pairs):
        return first
    num = 0.0
    den = 0.0
    for v, w in pairs:
        num += v * w
        den += w
    return num / den


@dataclass(frozen=True)
class _TaskStats:
    latency_ms: float
    capacity_rps: float
    accuracy: float
    slices: int
    fanout: tuple[float, ...]  # aligned with sorted successors


def _stats_for_counts(
    task: Task,
    successors: Sequence[str],
    counts: Sequence[tuple[tuple[str, SegmentType, int], int]],
    profile: ProfileTable,
) -> _TaskStats:
    """Aggregate instance counts of one task into its derived quantities.

    ``counts`` must be in canonical (variant, segment, batch) order; both the
    planner's bundle builder and the full derivation funnel through here so
    they agree to the last bit.
    """
    if not counts:
        return _TaskStats(0.0, 0.0, 1.0, 0, tuple(0.0 for _ in successors))
    latency = 0.0
    capacity = 0.0
    slices = 0
    acc_pairs: list[tuple[float, float]] = []
    fan_pairs: list[list[tuple[float, float]]] = [[] for _ in successors]
    for (vid, seg, batch), count in counts:
        entry = profile[(task.id, vid, seg, batch)]
        hput = count * entry.throughput_rps
        latency = max(latency, entry.latency_ms)
        capacity += hput
        slices += count * seg.slice_cost
        variant = task.variant(vid)
        acc_pairs.append((variant.accuracy, hput))
        for j, succ in enumerate(successors):
            fan_pairs[j].append((variant.factors[succ], hput))
    return _TaskStats(
        latency_ms=latency,
        capacity_rps=capacity,
        accuracy=_weighted_mean(acc_pairs),
        slices=slices,
        fanout=tuple(_weighted_mean(p) for p in fan_pairs),
    )


@dataclass(frozen=True, eq=True)
class Configuration:
    """A full instance-count assignment plus everything derived from it."""

    m: tuple[tuple[Key, int], ...]
    entry_demand_rps: float
    latency_ms: dict[str, float]
    capacity_rps: dict[str, float]
    demand_rps: dict[str, float]
    slices: dict[str, int]
    accuracy: dict[str, float]
    fanout: dict[tuple[str, str], float]
    hput: dict[Key, float]
    path_accuracy: dict[tuple[str, ...], float]
    total_slices: int
    a_obj: float
    a_max: float
    objective: float
    structurally_infeasible: tuple[str, ...]

    __hash__ = None  # type: ignore[assignment]

    @property
    def active_keys(self) -> tuple[Key, ...]:
        return tuple(k for k, _ in self.m)


def derive_configuration(
    m: Mapping[Key, int],
    app: AppSpec,
    profile: ProfileTable,
    demand_rps: float,
    factor_overrides: Mapping[tuple[str, str], float] | None = None,
) -> Configuration:
    """Compute every intermediate quantity implied by an instance-count map.

    Tasks that receive demand but have no instances are flagged as
    structurally infeasible rather than raising, so callers can report the
    gap as a constraint verdict.
    """
    graph = app.graph
    known = set(graph.task_ids)
    per_task: dict[str, list[tuple[tuple[str, SegmentType, int], int]]] = {
        t: [] for t in graph.task_ids
    }
    canonical: list[tuple[Key, int]] = []
    for key in sorted(m):
        count = m[key]
        if count < 0 or count != int(count):
            raise ConfigError(f"instance count for {key} must be a non-negative integer")
        if count == 0:
            continue
        task_id, vid, seg, batch = key
        if task_id not in known:
            raise ConfigError(f"unknown task {task_id!r} in configuration")
        profile[key]  # raises ProfileError when the combination is absent
        per_task[task_id].append(((vid, seg, batch), int(count)))
        canonical.append((key, int(count)))

    stats: dict[str, _TaskStats] = {}
    hput: dict[Key, float] = {}
    for t in graph.topological_order:
        task = graph.task(t)
        stats[t] = _stats_for_counts(task, graph.successors[t], per_task[t], profile)
        for (vid, seg, batch), count in per_task[t]:
            key = (t, vid, seg, batch)
            hput[key] = count * profile[key].throughput_rps

    overrides = dict(factor_overrides or {})
    fanout: dict[tuple[str, str], float] = {}
    for t in graph.task_ids:
        for j, succ in enumerate(graph.successors[t]):
            edge = (t, succ)
            fanout[edge] = overrides.get(edge, stats[t].fanout[j])
    demand = propagate_demand(graph, demand_rps, fanout)

    accuracy = {t: stats[t].accuracy for t in graph.task_ids}
    a_max = max_system_accuracy(graph)
    a_obj = system_accuracy(graph, accuracy, a_max)
    total_slices = sum(stats[t].slices for t in graph.task_ids)
    uncovered = tuple(
        t for t in graph.topological_order if demand[t] > 0 and not per_task[t]
    )
    return Configuration(
        m=tuple(canonical),
        entry_demand_rps=float(demand_rps),
        latency_ms={t: stats[t].latency_ms for t in graph.task_ids},
        capacity_rps={t: stats[t].capacity_rps for t in graph.task_ids},
        demand_rps=demand,
        slices={t: stats[t].slices for t in graph.task_ids},
        accuracy=accuracy,
        fanout=fanout,
        hput=hput,
        path_accuracy={p: path_accuracy(p, accuracy) for p in graph.paths},
        total_slices=total_slices,
        a_obj=a_obj,
        a_max=a_max,
        objective=app.alpha * a_obj - app.beta * total_slices,
        structurally_infeasible=uncovered,
    )


# ---------------------------------------------------------------- validation


@dataclass(frozen=True)
class ConstraintVerdict:
    name: str  # latency | throughput | resources | accuracy | coverage
    subject: str
    passed: bool
    margin: float


def validate_configuration(
    config: Configuration,
    app: AppSpec,
    profile: ProfileTable,
    request: PlanRequest,
) -> tuple[ConstraintVerdict, ...]:
    """Constraint verdicts with margins; a negative margin means violated."""
    graph = app.graph
    slo_eff = app.effective_latency_slo_ms
    verdicts: list[ConstraintVerdict] = []
    for p in graph.paths:
        # queueing is modeled as one extra service time per task, hence 2x
        total = sum(2.0 * config.latency_ms[t] for t in p)
        margin = slo_eff - total
        verdicts.append(ConstraintVerdict("latency", "->".join(p), margin >= 0, margin))
    for t in graph.topological_order:
        need = config.demand_rps[t] * (1.0 + request.slack)
        margin = config.capacity_rps[t] - need
        verdicts.append(ConstraintVerdict("throughput", t, margin >= 0, margin))
    margin = float(request.slice_budget - config.total_slices)
    verdicts.append(ConstraintVerdict("resources", "", margin >= 0, margin))
    margin = config.a_obj - app.accuracy_slo
    verdicts.append(ConstraintVerdict("accuracy", "", margin >= 0, margin))
    covered = not config.structurally_infeasible
    verdicts.append(
        ConstraintVerdict(
            "coverage",
            ",".join(config.structurally_infeasible),
            covered,
            0.0 if covered else -float(len(config.structurally_infeasible)),
        )
    )
    return tuple(verdicts)


def _all_pass(verdicts: Iterable[ConstraintVerdict]) -> bool:
    return all(v.passed for v in verdicts)


# ------------------------------------------------------- candidate generation


@dataclass(frozen=True)
class _Bundle:
    """One candidate way to serve a single task."""

    items: tuple[tuple[tuple[str, SegmentType, int], int], ...]
    slices: int
    capacity: float
    accuracy: float
    latency: float
    fanout: tuple[float, ...]


def _restricted_variants(task: Task, accuracy_scaling: bool) -> tuple[str, ...]:
    if accuracy_scaling:
        return tuple(sorted(v.id for v in task.variants))
    return (task.most_accurate.id,)


def _restricted_segments(spatial: bool) -> tuple[SegmentType, ...]:
    if spatial:
        return all_segments()
    return (SegmentType("7g", 1),)


@dataclass(frozen=True)
class _CTuple:
    variant: str
    segment: SegmentType
    batch: int
    latency: float
    hput: float
    accuracy: float
    slices: int


def _tuples_for(
    task: Task,
    profile: ProfileTable,
    variants: Sequence[str],
    segments: Sequence[SegmentType],
) -> list[_CTuple]:
    seg_set = set(segments)
    out: list[_CTuple] = []
    for vid in variants:
        for key in profile.entries_for(task.id, [vid]):
            _, _, seg, batch = key
            if seg not in seg_set:
                continue
            entry = profile[key]
            out.append(
                _CTuple(
                    vid,
                    seg,
                    batch,
                    entry.latency_ms,
                    entry.throughput_rps,
                    task.variant(vid).accuracy,
                    seg.slice_cost,
                )
            )
    out.sort(key=lambda c: (c.variant, c.segment, c.batch))
    return out


def _enumeration_size(tuples: Sequence[_CTuple], s_avail: int, limit: int) -> int:
    """Number of count vectors with total slice cost within budget.

    The count grows monotonically as tuples are added, so the walk stops as
    soon as it exceeds ``limit`` (returning any value past it).
    """
    ways = [0] * (s_avail + 1)
    ways[0] = 1
    for ct in tuples:
        cap = s_avail // ct.slices
        new = [0] * (s_avail + 1)
        for used, w in enumerate(ways):
            if not w:
                continue
            for c in range(cap + 1):
                spent = used + c * ct.slices
                if spent > s_avail:
                    break
                new[spent] += w
        ways = new
        if sum(ways) > limit:
            return limit + 1
    return sum(ways)


def _exhaustive_counts(
    tuples: Sequence[_CTuple], s_avail: int
) -> set[tuple[tuple[int, int], ...]]:
    found: set[tuple[tuple[int, int], ...]] = set()
    picks: list[tuple[int, int]] = []

    def rec(i: int, left: int) -> None:
        if i == len(tuples):
            if picks:
                found.add(tuple(picks))
            return
        rec(i + 1, left)
        cost = tuples[i].slices
        c = 1
        while c * cost <= left:
            picks.append((i, c))
            rec(i + 1, left - c * cost)
            picks.pop()
            c += 1

    rec(0, s_avail)
    return found


_LEVEL_GRID = tuple(q * 2.0**-k for k in range(7) for q in (1.0, 0.75))


def _structured_counts(
    tuples: Sequence[_CTuple],
    demand_upper: float,
    s_avail: int,
    slack: float,
    options: PlannerOptions,
) -> set[tuple[tuple[int, int], ...]]:
    """Heuristic candidate counts used when exhaustive enumeration is too big.

    Emits homogeneous demand covers on a geometric ladder, two-variant
    accuracy mixes over representative tuples, and single-instance bundles.
    """
    found: set[tuple[tuple[int, int], ...]] = set()
    target = demand_upper * (1.0 + slack)
    levels = [target * q for q in _LEVEL_GRID if target > 0]

    def cover(i: int, dem: float) -> tuple[int, int] | None:
        ct = tuples[i]
        count = max(1, math.ceil(dem / ct.hput - 1e-12))
        if count * ct.slices > s_avail:
            return None
        return (i, count)

    for i, ct in enumerate(tuples):
        if ct.slices <= s_avail:
            found.add(((i, 1),))
        for lvl in levels:
            got = cover(i, lvl)
            if got:
                found.add((got,))

    # one representative pair per variant: best capacity per slice, fastest
    by_variant: dict[str, list[int]] = {}
    for i, ct in enumerate(tuples):
        by_variant.setdefault(ct.variant, []).append(i)
    reps: dict[str, list[int]] = {}
    for vid, idxs in by_variant.items():
        best_cap = min(idxs, key=lambda i: (-tuples[i].hput / tuples[i].slices, tuples[i].latency, i))
        best_lat = min(idxs, key=lambda i: (tuples[i].latency, -tuples[i].hput / tuples[i].slices, i))
        reps[vid] = sorted({best_cap, best_lat})

    variants = sorted(by_variant)
    for va, vb in product(variants, variants):
        if va >= vb:
            continue
        for phi in options.mix_fractions:
            for lvl in levels:
                for ia in reps[va]:
                    for ib in reps[vb]:
                        ga = cover(ia, phi * lvl)
                        gb = cover(ib, (1.0 - phi) * lvl)
                        if ga and gb and ga[1] * tuples[ia].slices + gb[1] * tuples[ib].slices <= s_avail:
                            found.add(tuple(sorted((ga, gb))))
    return found


def _pareto_filter(bundles: list[_Bundle], width: int) -> tuple[list[_Bundle], bool]:
    """Drop dominated bundles; cap the frontier at ``width`` entries.

    Dominance is over (slices, latency, every fan-out) minimized and
    (capacity, accuracy) maximized; replacing a dominated bundle with its
    dominator never hurts feasibility or the objective, so this is lossless.
    """
    if not bundles:
        return [], False
    dedup: dict[tuple, _Bundle] = {}
    for b in sorted(bundles, key=lambda b: b.items):
        key = (b.slices, b.capacity, b.accuracy, b.latency, b.fanout)
        dedup.setdefault(key, b)
    cand = sorted(
        dedup.values(),
        key=lambda b: (b.slices, -b.capacity, -b.accuracy, b.latency, b.fanout, b.items),
    )
    arr = np.array(
        [[b.slices, -b.capacity, -b.accuracy, b.latency, *b.fanout] for b in cand]
    )
    kept: list[int] = []
    for i in range(len(cand)):
        if kept:
            block = arr[kept]
            row = arr[i]
            if bool(np.any(np.all(block <= row, axis=1))):
                # lexicographic presort means no kept row can equal this one,
                # so weak dominance here is genuine dominance
                continue
        kept.append(i)
    frontier = [cand[i] for i in kept]
    if len(frontier) <= width:
        return frontier, False
    by_capacity = sorted(frontier, key=lambda b: (-b.capacity, b.slices, b.items))
    take = {id(b) for b in by_capacity[: width // 2]}
    for b in frontier:
        if len(take) >= width:
            break
        take.add(id(b))
    trimmed = [b for b in frontier if id(b) in take]
    return trimmed, True


def _candidate_pool(
    task: Task,
    graph: TaskGraph,
    profile: ProfileTable,
    space: SearchSpace,
    demand_rps: float,
    s_avail: int,
    slack: float,
    overrides: Mapping[tuple[str, str], float],
    options: PlannerOptions,
) -> tuple[list[_Bundle], bool]:
    """Candidate bundles for one task, unioned over every enabled sub-space.

    Building the pool as a union over all (A', S') sub-space restrictions
    makes pools nest across search spaces, which in turn makes max-demand
    monotone in the space toggles regardless of generation heuristics.
    """
    a_values = (False, True) if space.accuracy_scaling else (False,)
    s_values = (False, True) if space.spatial_partitioning else (False,)
    succ = graph.successors[task.id]
    all_counts: set[tuple[tuple[tuple[str, SegmentType, int], int], ...]] = set()
    covered = False
    for a, s in product(a_values, s_values):
        variants = _restricted_variants(task, a)
        segments = _restricted_segments(s)
        tuples = _tuples_for(task, profile, variants, segments)
        if not tuples:
            continue
        covered = True
        r_upper = _demand_upper_bound(graph, demand_rps, variants_flag=a, overrides=overrides)[
            task.id
        ]
        if _enumeration_size(tuples, s_avail, options.exhaustive_limit) <= options.exhaustive_limit:
            counts = _exhaustive_counts(tuples, s_avail)
        else:
            counts = _structured_counts(tuples, r_upper, s_avail, slack, options)
        for cv in counts:
            items = tuple(
                sorted(((tuples[i].variant, tuples[i].segment, tuples[i].batch), c) for i, c in cv)
            )
            all_counts.add(items)
    if not covered:
        raise ConfigError(
            f"profile has no usable entries for task {task.id!r} in the requested space"
        )
    bundles = []
    for items in all_counts:
        st = _stats_for_counts(task, succ, items, profile)
        bundles.append(_Bundle(items, st.slices, st.capacity_rps, st.accuracy, st.latency_ms, st.fanout))
    return _pareto_filter(bundles, options.pareto_width)


def _max_factors(
    graph: TaskGraph,
    accuracy_scaling: bool,
    overrides: Mapping[tuple[str, str], float],
) -> dict[tuple[str, str], float]:
    factors: dict[tuple[str, str], float] = {}
    for t in graph.task_ids:
        task = graph.task(t)
        variants = _restricted_variants(task, accuracy_scaling)
        for succ in graph.successors[t]:
            edge = (t, succ)
            if edge in overrides:
                factors[edge] = overrides[edge]
            else:
                factors[edge] = max(task.variant(v).factors[succ] for v in variants)
    return factors


def _min_factors(
    graph: TaskGraph,
    accuracy_scaling: bool,
    overrides: Mapping[tuple[str, str], float],
) -> dict[tuple[str, str], float]:
    factors: dict[tuple[str, str], float] = {}
    for t in graph.task_ids:
        task = graph.task(t)
        variants = _restricted_variants(task, accuracy_scaling)
        for succ in graph.successors[t]:
            edge = (t, succ)
            if edge in overrides:
                factors[edge] = overrides[edge]
            else:
                factors[edge] = min(task.variant(v).factors[succ] for v in variants)
    return factors


def _demand_upper_bound(
    graph: TaskGraph,
    demand_rps: float,
    variants_flag: bool,
    overrides: Mapping[tuple[str, str], float],
) -> dict[str, float]:
    return propagate_demand(graph, demand_rps, _max_factors(graph, variants_flag, overrides))


# ------------------------------------------------------------------- results


@dataclass(frozen=True)
class SolverStats:
    nodes: int
    wall_ms: float
    pool_sizes: dict[str, int] = field(default_factory=dict)
    truncated_tasks: tuple[str, ...] = ()

    __hash__ = None  # type: ignore[assignment]


@dataclass(frozen=True)
class PlanResult:
    feasible: bool
    config: Configuration | None
    objective: float | None
    a_max: float
    binding_constraint: str | None
    verdicts: tuple[ConstraintVerdict, ...]
    stats: SolverStats

    __hash__ = None  # type: ignore[assignment]


_BINDING_PRIORITY = ("throughput", "latency", "resources", "accuracy", "coverage")


def _binding_from_kills(kills: Mapping[str, int]) -> str:
    best = max(_BINDING_PRIORITY, key=lambda n: (kills.get(n, 0), -_BINDING_PRIORITY.index(n)))
    return best if kills.get(best, 0) else "throughput"


def _binding_from_verdicts(verdicts: Iterable[ConstraintVerdict]) -> str | None:
    failed = [v for v in verdicts if not v.passed]
    if not failed:
        return None
    for name in _BINDING_PRIORITY:
        for v in failed:
            if v.name == name:
                return "throughput" if name == "coverage" else name
    return failed[0].name


# ------------------------------------------------------------ informed search


class _Search:
    def __init__(
        self,
        app: AppSpec,
        profile: ProfileTable,
        request: PlanRequest,
        options: PlannerOptions,
    ):
        self.app = app
        self.graph = app.graph
        self.profile = profile
        self.request = request
        self.options = options
        self.overrides = dict(request.factor_overrides or {})
        self.order = self.graph.topological_order
        self.slo_eff = app.effective_latency_slo_ms
        self.a_max = max_system_accuracy(self.graph)
        self.nodes = 0
        self.kills: list[dict[str, int]] = [dict() for _ in self.order]
        self.deepest_blocked = -1
        self.best: tuple[float, int, tuple, Configuration, tuple] | None = None
        self.failed_leaf: tuple[ConstraintVerdict, ...] | None = None

        self.pools: dict[str, list[_Bundle]] = {}
        self.truncated: list[str] = []
        for t in self.order:
            pool, trunc = _candidate_pool(
                self.graph.task(t),
                self.graph,
                profile,
                request.space,
                request.demand_rps,
                request.slice_budget,
                request.slack,
                self.overrides,
                options,
            )
            self.pools[t] = pool
            if trunc:
                self.truncated.append(t)

        min_f = _min_factors(self.graph, request.space.accuracy_scaling, self.overrides)
        low = propagate_demand(self.graph, request.demand_rps, min_f)
        self.could_zero = {t: low[t] == 0.0 for t in self.order}
        # a task that may see demand but has no affordable bundle kills the
        # whole space: nothing fits the slice budget
        self.dead = next(
            (t for t in self.order if not self.pools[t] and not self.could_zero[t]), None
        )
        if self.dead is not None:
            return
        self.min_lat2 = {
            t: 0.0 if self.could_zero[t] else min(2.0 * b.latency for b in self.pools[t])
            for t in self.order
        }
        self.min_slices = {
            t: 0 if self.could_zero[t] else min(b.slices for b in self.pools[t])
            for t in self.order
        }
        self.acc_ub = {
            t: 1.0 if self.could_zero[t] else max(b.accuracy for b in self.pools[t])
            for t in self.order
        }
        self.future_slices = [0] * (len(self.order) + 1)
        for i in range(len(self.order) - 1, -1, -1):
            self.future_slices[i] = self.future_slices[i + 1] + self.min_slices[self.order[i]]

        self.chosen: dict[str, _Bundle | None] = {}
        self.r_hat: dict[str, float] = {}
        self.acc_map: dict[str, float] = {t: self.acc_ub[t] for t in self.order}

    def _accuracy_ub(self) -> float:
        return system_accuracy(self.graph, self.acc_map, self.a_max)

    def _latency_ok(self, task_id: str, lat2: float) -> bool:
        eps = self.options.eps
        for p in self.graph.paths_through(task_id):
            total = 0.0
            for u in p:
                if u == task_id:
                    total += lat2
                elif u in self.chosen:
                    b = self.chosen[u]
                    total += 2.0 * b.latency if b else 0.0
                else:
                    total += self.min_lat2[u]
            if total > self.slo_eff + eps:
                return False
        return True

    def _demand_at(self, task_id: str) -> float:
        if task_id == self.graph.entry:
            return self.request.demand_rps
        total = 0.0
        for u in self.graph.predecessors[task_id]:
            r_u = self.r_hat[u]
            b = self.chosen[u]
            if b is None or r_u == 0.0:
                continue  # empty bundles are only chosen when nothing flows
            j = self.graph.successors[u].index(task_id)
            fan = self.overrides.get((u, task_id), b.fanout[j])
            total += r_u * fan
        return total

    def _leaf(self) -> bool:
        """Derive and validate the current assignment; True to stop early."""
        m: dict[Key, int] = {}
        for t, b in self.chosen.items():
            if b is None:
                continue
            for (vid, seg, batch), count in b.items:
                m[(t, vid, seg, batch)] = count
        config = derive_configuration(
            m, self.app, self.profile, self.request.demand_rps, self.overrides
        )
        verdicts = validate_configuration(config, self.app, self.profile, self.request)
        if not _all_pass(verdicts):
            self.failed_leaf = verdicts
            return False
        key = (config.objective, -config.total_slices)
        if self.best is None or key > (self.best[0], -self.best[1]) or (
            key == (self.best[0], -self.best[1]) and config.m < self.best[2]
        ):
            self.best = (config.objective, config.total_slices, config.m, config, verdicts)
        return self.options.feasible_only

    def run(self) -> None:
        self._visit(0, 0)

    def _visit(self, i: int, used: int) -> bool:
        if i == len(self.order):
            return self._leaf()
        t = self.order[i]
        self.nodes += 1
        eps = self.options.eps
        r = self._demand_at(t)
        self.r_hat[t] = r
        if r == 0.0:
            # nothing flows here: an empty assignment dominates every bundle
            self.chosen[t] = None
            self.acc_map[t] = 1.0
            stop = self._visit(i + 1, used)
            del self.chosen[t]
            self.acc_map[t] = self.acc_ub[t]
            return stop
        need = r * (1.0 + self.request.slack)
        survivors = 0
        kills = self.kills[i]
        for b in self.pools[t]:
            if b.capacity + eps < need:
                kills["throughput"] = kills.get("throughput", 0) + 1
                continue
            if used + b.slices + self.future_slices[i + 1] > self.request.slice_budget + eps:
                kills["resources"] = kills.get("resources", 0) + 1
                continue
            if not self._latency_ok(t, 2.0 * b.latency):
                kills["latency"] = kills.get("latency", 0) + 1
                continue
            self.acc_map[t] = b.accuracy
            acc_ub = self._accuracy_ub()
            if acc_ub < self.app.accuracy_slo - eps:
                kills["accuracy"] = kills.get("accuracy", 0) + 1
                self.acc_map[t] = self.acc_ub[t]
                continue
            if self.best is not None and not self.options.feasible_only:
                obj_ub = self.app.alpha * acc_ub - self.app.beta * (
                    used + b.slices + self.future_slices[i + 1]
                )
                if obj_ub < self.best[0] - eps:
                    self.acc_map[t] = self.acc_ub[t]
                    survivors += 1  # bound prune, not a constraint kill
                    continue
            survivors += 1
            self.chosen[t] = b
            stop = self._visit(i + 1, used + b.slices)
            del self.chosen[t]
            self.acc_map[t] = self.acc_ub[t]
            if stop:
                return True
        if survivors == 0:
            self.deepest_blocked = max(self.deepest_blocked, i)
        return False


def plan(
    app: AppSpec,
    profile: ProfileTable,
    request: PlanRequest,
    options: PlannerOptions | None = None,
) -> PlanResult:
    """Best instance-count assignment in the requested search space.

    Dispatches to the statically budgeted solver when the space is not
    task-graph informed.
    """
    options = options or PlannerOptions()
    if not request.space.task_graph_informed:
        return plan_uninformed(app, profile, request, options)
    t0 = time.perf_counter()
    search = _Search(app, profile, request, options)
    if search.dead is not None:
        wall = (time.perf_counter() - t0) * 1000.0
        stats = SolverStats(
            nodes=0,
            wall_ms=wall,
            pool_sizes={t: len(p) for t, p in search.pools.items()},
            truncated_tasks=tuple(search.truncated),
        )
        return PlanResult(False, None, None, search.a_max, "resources", (), stats)
    search.run()
    wall = (time.perf_counter() - t0) * 1000.0
    stats = SolverStats(
        nodes=search.nodes,
        wall_ms=wall,
        pool_sizes={t: len(p) for t, p in search.pools.items()},
        truncated_tasks=tuple(search.truncated),
    )
    if search.best is not None:
        _, _, _, config, verdicts = search.best
        return PlanResult(True, config, config.objective, search.a_max, None, verdicts, stats)
    if search.deepest_blocked >= 0:
        binding = _binding_from_kills(search.kills[search.deepest_blocked])
    elif search.failed_leaf is not None:
        binding = _binding_from_verdicts(search.failed_leaf) or "throughput"
    else:
        binding = "throughput"
    return PlanResult(False, None, None, search.a_max, binding, (), stats)


# ---------------------------------------------------------- uninformed search


def _worst_latency(profile: ProfileTable, task: Task, vid: str, segments: Sequence[SegmentType]) -> float:
    seg_set = set(segments)
    worst = 0.0
    for key in profile.entries_for(task.id, [vid]):
        _, _, seg, _ = key
        if seg in seg_set:
            worst = max(worst, profile[key].latency_ms)
    return worst


def plan_uninformed(
    app: AppSpec,
    profile: ProfileTable,
    request: PlanRequest,
    options: PlannerOptions | None = None,
) -> PlanResult:
    """Statically budgeted baseline: split the SLOs per task, solve each task
    alone, and union the results.

    The latency SLO is divided in proportion to each task's worst-case
    latency at its most accurate variant (minimum across paths for shared
    tasks); the slice budget in proportion to estimated demand over best
    single-tuple throughput. The union is re-validated against the real
    joint constraints, so over-optimistic budgeting shows up as infeasible.
    """
    options = options or PlannerOptions()
    if request.space.task_graph_informed:
        raise ConfigError("plan_uninformed requires a space with task_graph_informed=False")
    t0 = time.perf_counter()
    graph = app.graph
    overrides = dict(request.factor_overrides or {})
    slo_eff = app.effective_latency_slo_ms
    segments = _restricted_segments(request.space.spatial_partitioning)

    worst: dict[str, float] = {}
    for t in graph.task_ids:
        task = graph.task(t)
        worst[t] = _worst_latency(profile, task, task.most_accurate.id, segments)
        if worst[t] <= 0.0:
            raise ConfigError(
                f"profile has no usable entries for task {t!r} in the requested space"
            )

    lat_budget: dict[str, float] = {}
    for t in graph.task_ids:
        budgets = []
        for p in graph.paths_through(t):
            total = sum(worst[u] for u in p)
            budgets.append(slo_eff * worst[t] / total)
        lat_budget[t] = min(budgets)

    best_factors = _max_factors(graph, accuracy_scaling=False, overrides=overrides)
    demand_star = propagate_demand(graph, request.demand_rps, best_factors)

    est: dict[str, float] = {}
    min_cost: dict[str, float] = {}
    for t in graph.task_ids:
        task = graph.task(t)
        tuples = _tuples_for(task, profile, (task.most_accurate.id,), segments)
        best = min(tuples, key=lambda c: (-c.hput, c.slices, c.variant, c.segment, c.batch))
        est[t] = demand_star[t] / best.hput * best.slices
        in_space = _tuples_for(
            task, profile, _restricted_variants(task, request.space.accuracy_scaling), segments
        )
        min_cost[t] = min(c.slices for c in in_space)
    total_est = sum(est.values())
    if total_est > 0:
        slice_budget = {t: request.slice_budget * est[t] / total_est for t in graph.task_ids}
    else:
        slice_budget = {t: request.slice_budget / len(graph.task_ids) for t in graph.task_ids}
    # a share too small for even one instance would make the baseline
    # infeasible at every demand; floor each task at its cheapest placement
    # and let the joint re-validation police the true total
    for t in graph.task_ids:
        slice_budget[t] = max(slice_budget[t], min_cost[t])

    max_depth = {t: max(len(p) for p in graph.paths_through(t)) for t in graph.task_ids}
    weight = {
        t: sum(graph.path_fractions[p] for p in graph.paths_through(t)) for t in graph.task_ids
    }

    nodes = 0
    m: dict[Key, int] = {}
    pool_sizes: dict[str, int] = {}
    truncated: list[str] = []
    for t in graph.topological_order:
        task = graph.task(t)
        pool, trunc = _candidate_pool(
            task,
            graph,
            profile,
            request.space,
            request.demand_rps,
            request.slice_budget,
            request.slack,
            overrides,
            options,
        )
        pool_sizes[t] = len(pool)
        if trunc:
            truncated.append(t)
        if demand_star[t] == 0.0:
            continue
        need = demand_star[t] * (1.0 + request.slack)
        floor = task.most_accurate.accuracy * app.accuracy_slo ** (1.0 / max_depth[t])
        kills: dict[str, int] = {}
        best_pick: tuple[float, int, tuple, _Bundle] | None = None
        # filters are exact so the later joint re-validation cannot fail on
        # an epsilon the per-task pass waved through
        for b in pool:
            nodes += 1
            if b.capacity < need:
                kills["throughput"] = kills.get("throughput", 0) + 1
                continue
            if 2.0 * b.latency > lat_budget[t]:
                kills["latency"] = kills.get("latency", 0) + 1
                continue
            if b.slices > slice_budget[t]:
                kills["resources"] = kills.get("resources", 0) + 1
                continue
            if b.accuracy < floor:
                kills["accuracy"] = kills.get("accuracy", 0) + 1
                continue
            score = (app.alpha * weight[t] * b.accuracy - app.beta * b.slices, -b.slices)
            if (
                best_pick is None
                or score > (best_pick[0], -best_pick[1])
                or (score == (best_pick[0], -best_pick[1]) and b.items < best_pick[2])
            ):
                best_pick = (score[0], b.slices, b.items, b)
        if best_pick is None:
            wall = (time.perf_counter() - t0) * 1000.0
            stats = SolverStats(nodes, wall, pool_sizes, tuple(truncated))
            return PlanResult(
                False, None, None, max_system_accuracy(graph), _binding_from_kills(kills), (), stats
            )
        for (vid, seg, batch), count in best_pick[3].items:
            m[(t, vid, seg, batch)] = count

    config = derive_configuration(m, app, profile, request.demand_rps, overrides)
    verdicts = validate_configuration(config, app, profile, request)
    wall = (time.perf_counter() - t0) * 1000.0
    stats = SolverStats(nodes, wall, pool_sizes, tuple(truncated))
    if _all_pass(verdicts):
        return PlanResult(True, config, config.objective, config.a_max, None, verdicts, stats)
    return PlanResult(
        False, config, None, config.a_max, _binding_from_verdicts(verdicts), verdicts, stats
    )


# ----------------------------------------------------------------- max demand


@dataclass(frozen=True)
class MaxDemandResult:
    demand_rps: float
    plan: PlanResult
    probes: int

    __hash__ = None  # type: ignore[assignment]


def max_demand(
    app: AppSpec,
    profile: ProfileTable,
    slice_budget: int,
    space: SearchSpace,
    slack: float = 0.05,
    options: PlannerOptions | None = None,
    rel_tol: float = 1e-3,
) -> MaxDemandResult:
    """Largest serviceable demand for a space, by doubling then bisection."""
    if slice_budget <= 0:
        raise ConfigError(f"slice budget must be positive, got {slice_budget}")
    base = options or PlannerOptions()
    probe_options = PlannerOptions(
        pareto_width=base.pareto_width,
        exhaustive_limit=base.exhaustive_limit,
        eps=base.eps,
        mix_fractions=base.mix_fractions,
        feasible_only=True,
    )
    probes = 0

    def attempt(r: float) -> PlanResult:
        nonlocal probes
        probes += 1
        return plan(app, profile, PlanRequest(r, slice_budget, space, slack), probe_options)

    tiny = 1e-6
    first = attempt(tiny)
    if not first.feasible:
        diag = plan(app, profile, PlanRequest(tiny, slice_budget, space, slack), base)
        return MaxDemandResult(0.0, diag, probes)
    if attempt(1.0).feasible:
        lo, hi = 1.0, 2.0
        while attempt(hi).feasible:
            lo = hi
            hi *= 2.0
            if hi > 2.0**60:
                raise ConfigError("demand search diverged; profile throughput looks unbounded")
    else:
        lo, hi = tiny, 1.0
    while hi - lo > rel_tol * lo:
        mid = (lo + hi) / 2.0
        if mid <= lo or mid >= hi:
            break
        if attempt(mid).feasible:
            lo = mid
        else:
            hi = mid
    final = plan(app, profile, PlanRequest(lo, slice_budget, space, slack), base)
    return MaxDemandResult(lo, final, probes)


# --------------------------------------------------------------------- oracle


@dataclass(frozen=True)
class OracleCaps:
    max_tasks: int = 2
    max_variants: int = 2
    max_segments: int = 2
    max_batches: int = 2
    max_count: int = 3
    max_assignments: int = 2_000_000


def brute_force_plan(
    app: AppSpec,
    profile: ProfileTable,
    request: PlanRequest,
    caps: OracleCaps = OracleCaps(),
) -> PlanResult:
    """Exhaustive reference solver for tiny instances.

    Enumerates every instance-count map within the caps and the slice
    budget, derives and validates each one, and returns the argmax with the
    same tie-break as plan(). Exists to check the search, so it shares only
    the derivation, never the search machinery.
    """
    t0 = time.perf_counter()
    graph = app.graph
    if len(graph.task_ids) > caps.max_tasks:
        raise ConfigError(f"oracle refuses: {len(graph.task_ids)} tasks > cap {caps.max_tasks}")
    keys: list[Key] = []
    for t in graph.task_ids:
        task = graph.task(t)
        variants = _restricted_variants(task, request.space.accuracy_scaling)
        segments = set(_restricted_segments(request.space.spatial_partitioning))
        seen_v: set[str] = set()
        seen_s: set[SegmentType] = set()
        seen_b: set[int] = set()
        for key in profile.entries_for(t, variants):
            _, vid, seg, batch = key
            if seg not in segments:
                continue
            keys.append(key)
            seen_v.add(vid)
            seen_s.add(seg)
            seen_b.add(batch)
        if (
            len(seen_v) > caps.max_variants
            or len(seen_s) > caps.max_segments
            or len(seen_b) > caps.max_batches
        ):
            raise ConfigError(f"oracle refuses: task {t!r} exceeds variant/segment/batch caps")
    keys.sort()

    budget = request.slice_budget
    best: tuple[float, int, tuple, Configuration, tuple] | None = None
    assignments = 0
    counts: dict[Key, int] = {}

    def evaluate() -> None:
        nonlocal best, assignments
        assignments += 1
        if assignments > caps.max_assignments:
            raise ConfigError("oracle refuses: assignment cap exceeded")
        m = {k: c for k, c in counts.items() if c}
        config = derive_configuration(m, app, profile, request.demand_rps, request.factor_overrides)
        verdicts = validate_configuration(config, app, profile, request)
        if not _all_pass(verdicts):
            return
        key = (config.objective, -config.total_slices)
        if best is None or key > (best[0], -best[1]) or (
            key == (best[0], -best[1]) and config.m < best[2]
        ):
            best = (config.objective, config.total_slices, config.m, config, verdicts)

    def rec(i: int, left: int) -> None:
        if i == len(keys):
            evaluate()
            return
        key = keys[i]
        cost = key[2].slice_cost
        cap = min(caps.max_count, left // cost)
        for c in range(cap + 1):
            counts[key] = c
            rec(i + 1, left - c * cost)
        del counts[key]

    rec(0, budget)
    wall = (time.perf_counter() - t0) * 1000.0
    stats = SolverStats(nodes=assignments, wall_ms=wall)
    a_max = max_system_accuracy(graph)
    if best is None:
        return PlanResult(False, None, None, a_max, None, (), stats)
    _, _, _, config, verdicts = best
    return PlanResult(True, config, config.objective, a_max, None, verdicts, stats)


# -------------------------------------------------------------- serialization


def plan_result_to_dict(result: PlanResult) -> dict:
    """JSON-ready view of a plan result.

    Wall time is deliberately omitted so identical inputs serialize
    byte-identically; timing belongs in the run manifest.
    """
    doc: dict = {
        "feasible": result.feasible,
        "objective": result.objective,
        "a_max": result.a_max,
        "binding_constraint": result.binding_constraint,
        "stats": {
            "nodes": result.stats.nodes,
            "pool_sizes": dict(sorted(result.stats.pool_sizes.items())),
            "truncated_tasks": list(result.stats.truncated_tasks),
        },
        "verdicts": [
            {"name": v.name, "subject": v.subject, "passed": v.passed, "margin": v.margin}
            for v in result.verdicts
        ],
    }
    config = result.config
    if config is None:
        doc["config"] = None
        return doc
    doc["config"] = {
        "m": [
            {
                "task": k[0],
                "variant": k[1],
                "mig": k[2].mig,
                "mps": k[2].mps,
                "batch": k[3],
                "count": c,
            }
            for k, c in config.m
        ],
        "entry_demand_rps": config.entry_demand_rps,
        "latency_ms": dict(sorted(config.latency_ms.items())),
        "capacity_rps": dict(sorted(config.capacity_rps.items())),
        "demand_rps": dict(sorted(config.demand_rps.items())),
        "slices": dict(sorted(config.slices.items())),
        "accuracy": dict(sorted(config.accuracy.items())),
        "fanout": [
            {"src": e[0], "dst": e[1], "value": v} for e, v in sorted(config.fanout.items())
        ],
        "path_accuracy": [
            {"path": list(p), "value": v} for p, v in sorted(config.path_accuracy.items())
        ],
        "total_slices": config.total_slices,
        "a_obj": config.a_obj,
        "objective": config.objective,
    }
    return doc
