"""Shared fixtures: small graphs and profile builders used across test modules."""

from __future__ import annotations

import pytest

from sliceserve.model import AppSpec, ModelVariant, Task, TaskGraph
from sliceserve.profiles import ProfileEntry, ProfileTable, SegmentType


def variant(vid: str, acc: float, **factors: float) -> ModelVariant:
    return ModelVariant(id=vid, accuracy=acc, factors=dict(factors))


def chain_graph(
    accs: list[list[float]],
    factors: list[float] | None = None,
    names: list[str] | None = None,
) -> TaskGraph:
    """Linear chain t0 -> t1 -> ... with one variant per accuracy value."""
    n = len(accs)
    names = names or [f"t{i}" for i in range(n)]
    factors = factors if factors is not None else [1.0] * (n - 1)
    tasks = []
    for i, task_accs in enumerate(accs):
        vs = []
        for j, a in enumerate(task_accs):
            f = {names[i + 1]: factors[i]} if i + 1 < n else {}
            vs.append(ModelVariant(id=f"{names[i]}_v{j}", accuracy=a, factors=f))
        tasks.append(Task(id=names[i], variants=tuple(vs)))
    edges = tuple((names[i], names[i + 1]) for i in range(n - 1))
    path = tuple(names)
    return TaskGraph(tasks=tuple(tasks), edges=edges, path_fractions={path: 1.0})


def diamond_graph() -> TaskGraph:
    """t0 fans out to t1 and t2, which join at t3; factors 2/1 and 1/3."""
    t0 = Task("t0", (variant("t0_v0", 0.9, t1=2.0, t2=1.0),))
    t1 = Task("t1", (variant("t1_v0", 0.8, t3=1.0),))
    t2 = Task("t2", (variant("t2_v0", 0.95, t3=3.0),))
    t3 = Task("t3", (variant("t3_v0", 0.85),))
    return TaskGraph(
        tasks=(t0, t1, t2, t3),
        edges=(("t0", "t1"), ("t0", "t2"), ("t1", "t3"), ("t2", "t3")),
        path_fractions={("t0", "t1", "t3"): 0.5, ("t0", "t2", "t3"): 0.5},
    )


def fork_graph(f_left: float = 1.5, f_right: float = 2.0) -> TaskGraph:
    """Detector-style fork: det -> {left, right} with per-variant factors."""
    det = Task(
        "det",
        (
            variant("det_hi", 0.9, left=f_left, right=f_right),
            variant("det_lo", 0.7, left=f_left * 0.8, right=f_right * 0.8),
        ),
    )
    left = Task("left", (variant("left_hi", 0.85), variant("left_lo", 0.7)))
    right = Task("right", (variant("right_hi", 0.8), variant("right_lo", 0.65)))
    total = f_left + f_right
    return TaskGraph(
        tasks=(det, left, right),
        edges=(("det", "left"), ("det", "right")),
        path_fractions={
            ("det", "left"): f_left / total,
            ("det", "right"): f_right / total,
        },
    )


def app_for(graph: TaskGraph, **overrides) -> AppSpec:
    kwargs = dict(
        name="test-app",
        graph=graph,
        latency_slo_ms=650.0,
        accuracy_slo=0.9,
        alpha=1.0,
        beta=0.035,
        staleness_ms=20.0,
        hop_latency_ms=0.0,
    )
    kwargs.update(overrides)
    return AppSpec(**kwargs)


def table_from_rows(rows) -> ProfileTable:
    """rows: (task, variant, mig, mps, batch, latency_ms, throughput_rps)."""
    entries = {}
    for t, v, mig, mps, b, lat, thr in rows:
        entries[(t, v, SegmentType(mig, mps), b)] = ProfileEntry(lat, thr)
    return ProfileTable(entries)


@pytest.fixture
def diamond() -> TaskGraph:
    return diamond_graph()
