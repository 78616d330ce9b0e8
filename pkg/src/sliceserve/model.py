"""Application model: task graphs, model variants, and accuracy arithmetic.

An application is a DAG of inference tasks. Each task can be served by one of
several model variants that trade accuracy against cost, and each edge carries
a per-variant multiplicative fan-out factor (expected number of downstream
requests emitted per request served). Requests enter at the unique entry task
and flow to the sinks along weighted paths.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Iterable, Mapping

from .errors import ConfigError, GraphError

__all__ = [
    "ModelVariant",
    "Task",
    "TaskGraph",
    "AppSpec",
    "enumerate_paths",
    "propagate_demand",
    "path_accuracy",
    "system_accuracy",
    "max_system_accuracy",
    "load_app",
    "app_from_dict",
]

_FRACTION_TOL = 1e-9


@dataclass(frozen=True)
class ModelVariant:
    """One servable model for a task.

    ``factors`` maps each downstream task id to the expected number of
    requests this variant emits on that edge per request it serves.
    """

    id: str
    accuracy: float
    factors: Mapping[str, float] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if not 0.0 <= self.accuracy <= 1.0:
            raise ConfigError(f"variant {self.id!r}: accuracy {self.accuracy} outside [0, 1]")
        for dst, f in self.factors.items():
            if f < 0:
                raise ConfigError(f"variant {self.id!r}: factor to {dst!r} is negative ({f})")


@dataclass(frozen=True)
class Task:
    id: str
    variants: tuple[ModelVariant, ...]

    def __post_init__(self) -> None:
        if not self.variants:
            raise ConfigError(f"task {self.id!r} has no variants")
        seen = set()
        for v in self.variants:
            if v.id in seen:
                raise ConfigError(f"task {self.id!r}: duplicate variant {v.id!r}")
            seen.add(v.id)

    def variant(self, variant_id: str) -> ModelVariant:
        for v in self.variants:
            if v.id == variant_id:
                return v
        raise ConfigError(f"task {self.id!r} has no variant {variant_id!r}")

    @property
    def most_accurate(self) -> ModelVariant:
        # ties broken by lexicographically first id for determinism
        return min(self.variants, key=lambda v: (-v.accuracy, v.id))


@dataclass(frozen=True)
class TaskGraph:
    """DAG of tasks with per-path request fractions.

    ``path_fractions`` maps each entry-to-sink path (tuple of task ids) to the
    fraction of requests that take it; fractions must sum to 1.
    """

    tasks: tuple[Task, ...]
    edges: tuple[tuple[str, str], ...]
    path_fractions: Mapping[tuple[str, ...], float]

    def __post_init__(self) -> None:
        ids = [t.id for t in self.tasks]
        if len(set(ids)) != len(ids):
            raise GraphError("duplicate task ids")
        id_set = set(ids)
        for src, dst in self.edges:
            if src not in id_set or dst not in id_set:
                raise GraphError(f"edge ({src!r}, {dst!r}) references unknown task")
            if src == dst:
                raise GraphError(f"self-loop on task {src!r}")
        if len(set(self.edges)) != len(self.edges):
            raise GraphError("duplicate edges")
        # every variant of src must carry a factor for each outgoing edge
        for src, dst in self.edges:
            for v in self.task(src).variants:
                if dst not in v.factors:
                    raise ConfigError(
                        f"variant {v.id!r} of task {src!r} missing factor for edge to {dst!r}"
                    )
        self._check_single_entry()
        self._check_acyclic()
        paths = enumerate_paths(self)
        declared = set(self.path_fractions)
        if declared != set(paths):
            raise ConfigError(
                f"path fractions cover {sorted(declared)} but graph paths are {paths}"
            )
        total = math.fsum(self.path_fractions.values())
        if abs(total - 1.0) > _FRACTION_TOL:
            raise ConfigError(f"path fractions sum to {total}, expected 1")
        for p, f in self.path_fractions.items():
            if not 0.0 <= f <= 1.0:
                raise ConfigError(f"path fraction {f} for {p} outside [0, 1]")
        on_path = {t for p in paths for t in p}
        if on_path != id_set:
            raise GraphError(f"tasks not on any path: {sorted(id_set - on_path)}")

    def _check_single_entry(self) -> None:
        has_pred = {dst for _, dst in self.edges}
        entries = [t.id for t in self.tasks if t.id not in has_pred]
        if len(entries) != 1:
            raise GraphError(f"expected exactly one entry task, found {entries}")

    def _check_acyclic(self) -> None:
        indeg = {t.id: 0 for t in self.tasks}
        for _, dst in self.edges:
            indeg[dst] += 1
        ready = [t.id for t in self.tasks if indeg[t.id] == 0]
        done = 0
        while ready:
            u = ready.pop()
            done += 1
            for src, dst in self.edges:
                if src == u:
                    indeg[dst] -= 1
                    if indeg[dst] == 0:
                        ready.append(dst)
        if done != len(self.tasks):
            stuck = {t for t, d in indeg.items() if d > 0}
            edge = next((e for e in self.edges if e[0] in stuck and e[1] in stuck))
            raise GraphError(f"cycle detected through edge {edge[0]!r} -> {edge[1]!r}")

    def task(self, task_id: str) -> Task:
        for t in self.tasks:
            if t.id == task_id:
                return t
        raise ConfigError(f"unknown task {task_id!r}")

    @cached_property
    def task_ids(self) -> tuple[str, ...]:
        return tuple(t.id for t in self.tasks)

    @cached_property
    def entry(self) -> str:
        has_pred = {dst for _, dst in self.edges}
        return next(t.id for t in self.tasks if t.id not in has_pred)

    @cached_property
    def successors(self) -> dict[str, tuple[str, ...]]:
        succ: dict[str, list[str]] = {t.id: [] for t in self.tasks}
        for src, dst in self.edges:
            succ[src].append(dst)
        return {t: tuple(sorted(s)) for t, s in succ.items()}

    @cached_property
    def predecessors(self) -> dict[str, tuple[str, ...]]:
        pred: dict[str, list[str]] = {t.id: [] for t in self.tasks}
        for src, dst in self.edges:
            pred[dst].append(src)
        return {t: tuple(sorted(p)) for t, p in pred.items()}

    @cached_property
    def topological_order(self) -> tuple[str, ...]:
        indeg = {t.id: len(self.predecessors[t.id]) for t in self.tasks}
        order: list[str] = []
        ready = sorted(t for t, d in indeg.items() if d == 0)
        while ready:
            u = ready.pop(0)
            order.append(u)
            for v in self.successors[u]:
                indeg[v] -= 1
                if indeg[v] == 0:
                    # keep insertion sorted for a deterministic order
                    lo = 0
                    while lo < len(ready) and ready[lo] < v:
                        lo += 1
                    ready.insert(lo, v)
        return tuple(order)

    @cached_property
    def paths(self) -> tuple[tuple[str, ...], ...]:
        return tuple(enumerate_paths(self))

    @cached_property
    def max_path_depth(self) -> int:
        return max(len(p) for p in self.paths)

    def paths_through(self, task_id: str) -> tuple[tuple[str, ...], ...]:
        return tuple(p for p in self.paths if task_id in p)


def enumerate_paths(graph: TaskGraph) -> list[tuple[str, ...]]:
    """All entry-to-sink paths in lexicographic (task id) order."""
    succ: dict[str, list[str]] = {t.id: [] for t in graph.tasks}
    for src, dst in graph.edges:
        succ[src].append(dst)
    for s in succ.values():
        s.sort()
    out: list[tuple[str, ...]] = []

    def walk(node: str, trail: tuple[str, ...]) -> None:
        nxt = succ[node]
        if not nxt:
            out.append(trail)
            return
        for child in nxt:
            walk(child, trail + (child,))

    entry = next(t.id for t in graph.tasks if t.id not in {d for _, d in graph.edges})
    walk(entry, (entry,))
    return out


def propagate_demand(
    graph: TaskGraph,
    demand: float,
    edge_factors: Mapping[tuple[str, str], float],
) -> dict[str, float]:
    """Per-task request rates implied by entry demand and edge factors.

    The entry task receives ``demand``; every other task receives the sum over
    its predecessors of the predecessor's rate times the edge factor.
    """
    if demand < 0:
        raise ConfigError(f"demand must be non-negative, got {demand}")
    rates: dict[str, float] = {}
    for t in graph.topological_order:
        if t == graph.entry:
            rates[t] = float(demand)
            continue
        total = 0.0
        for p in graph.predecessors[t]:
            try:
                f = edge_factors[(p, t)]
            except KeyError:
                raise ConfigError(f"missing edge factor for ({p!r}, {t!r})") from None
            total += rates[p] * f
        rates[t] = total
    return rates


def path_accuracy(path: Iterable[str], task_accuracy: Mapping[str, float]) -> float:
    """Product of per-task accuracies along a path."""
    acc = 1.0
    for t in path:
        acc *= task_accuracy[t]
    return acc


def _weighted_path_sum(graph: TaskGraph, task_accuracy: Mapping[str, float]) -> float:
    # shared by system_accuracy and max_system_accuracy so that the two run
    # the identical float computation and A_obj == 1.0 exactly when every
    # task serves at its maximum accuracy
    total = 0.0
    for p in graph.paths:
        total += graph.path_fractions[p] * path_accuracy(p, task_accuracy)
    return total


def system_accuracy(
    graph: TaskGraph,
    task_accuracy: Mapping[str, float],
    a_max: float,
) -> float:
    """Path-fraction-weighted accuracy normalized by the best attainable."""
    if a_max <= 0:
        raise ConfigError("degenerate application: maximum attainable accuracy is 0")
    return _weighted_path_sum(graph, task_accuracy) / a_max


def max_system_accuracy(graph: TaskGraph) -> float:
    """Weighted path accuracy when every task uses its most accurate variant."""
    best = {t.id: t.most_accurate.accuracy for t in graph.tasks}
    return _weighted_path_sum(graph, best)


@dataclass(frozen=True)
class AppSpec:
    """A task graph plus its serving objectives.

    Latencies are milliseconds; ``accuracy_slo`` is a fraction of the best
    attainable accuracy; ``alpha``/``beta`` weight accuracy against GPU slice
    cost in the planner objective.
    """

    name: str
    graph: TaskGraph
    latency_slo_ms: float
    accuracy_slo: float
    alpha: float = 1.0
    beta: float = 0.035
    staleness_ms: float = 20.0
    hop_latency_ms: float = 10.0

    def __post_init__(self) -> None:
        if self.latency_slo_ms <= 0:
            raise ConfigError("latency SLO must be positive")
        if not 0.0 <= self.accuracy_slo <= 1.0:
            raise ConfigError("accuracy SLO must be in [0, 1]")
        if self.alpha < 0 or self.beta < 0:
            raise ConfigError("objective weights must be non-negative")
        if self.staleness_ms < 0 or self.hop_latency_ms < 0:
            raise ConfigError("staleness and hop latency must be non-negative")

    @property
    def effective_latency_slo_ms(self) -> float:
        """Latency budget left after per-hop communication cost."""
        return self.latency_slo_ms - self.graph.max_path_depth * self.hop_latency_ms


def app_from_dict(doc: Mapping) -> AppSpec:
    """Build an AppSpec from parsed JSON (see bundled apps for the format)."""
    try:
        tasks = tuple(
            Task(
                id=t["id"],
                variants=tuple(
                    ModelVariant(id=v["id"], accuracy=float(v["accuracy"]), factors={})
                    for v in t["variants"]
                ),
            )
            for t in doc["tasks"]
        )
    except KeyError as e:
        raise ConfigError(f"app spec missing key {e}") from None

    # attach per-variant edge factors
    factors: dict[str, dict[str, dict[str, float]]] = {}
    edges: list[tuple[str, str]] = []
    for e in doc.get("edges", []):
        src, dst = e["src"], e["dst"]
        edges.append((src, dst))
        for vid, f in e["factor"].items():
            factors.setdefault(src, {}).setdefault(vid, {})[dst] = float(f)
    rebuilt = []
    for t in tasks:
        vs = []
        for v in t.variants:
            vf = factors.get(t.id, {}).get(v.id, {})
            for _, dst in ((s, d) for s, d in edges if s == t.id):
                if dst not in vf:
                    raise ConfigError(
                        f"edge ({t.id!r}, {dst!r}) missing factor for variant {v.id!r}"
                    )
            vs.append(ModelVariant(id=v.id, accuracy=v.accuracy, factors=vf))
        rebuilt.append(Task(id=t.id, variants=tuple(vs)))

    if "path_fractions" not in doc:
        raise ConfigError("app spec missing path_fractions")
    fractions = {
        tuple(entry["path"]): float(entry["fraction"]) for entry in doc["path_fractions"]
    }
    graph = TaskGraph(tasks=tuple(rebuilt), edges=tuple(edges), path_fractions=fractions)

    slo = doc.get("slo", {})
    obj = doc.get("objective", {})
    return AppSpec(
        name=doc.get("name", "app"),
        graph=graph,
        latency_slo_ms=float(slo["latency_ms"]),
        accuracy_slo=float(slo["accuracy_frac"]),
        alpha=float(obj.get("alpha", 1.0)),
        beta=float(obj.get("beta", 0.035)),
        staleness_ms=float(doc.get("staleness_ms", 20.0)),
        hop_latency_ms=float(doc.get("hop_latency_ms", 10.0)),
    )


def load_app(path: str | Path) -> AppSpec:
    """Load an application spec from a JSON file."""
    with open(path) as f:
        return app_from_dict(json.load(f))
