"""Discrete-event replay of a planned configuration against offered load.

Requests arrive Poisson at the bin rate, route to the shortest queue among
their task's model processes, and are served in batches: an idle process opens
a batch window on first enqueue and launches when the window reaches the
task's planned latency bound, when the batch fills, or immediately after
finishing a previous batch. Completions spawn sub-requests along the task
graph edges; every hop (including client ingress) costs the application's hop
latency. A request is dropped early when its deadline is unreachable even at
the fastest remaining service, or when it went stale: it spent more than the
staleness bound waiting without a slot in any instance's next batch (waits
inside an open batch window are part of normal service and never go stale).

A segment with MPS concurrency m runs m concurrent model processes; each is
modeled as an independent single-batch server at the segment's profiled
latency. A profile is therefore capacity-consistent when
H(t,v,s,b) <= m * b * 1000 / L(t,v,s,b); the synthetic generator produces
exactly that equality.

Process lanes come online at seeded staggered offsets within their first
full-batch service time (see SimOptions.stagger_start); with a common t=0
start, deterministic service times phase-lock every lane into synchronized
batch waves whose fan-out bursts would swamp downstream queues.
"""

from __future__ import annotations

import heapq
import itertools
import math
from collections import Counter, deque
from dataclasses import dataclass, field
from statistics import fmean
from typing import Callable, Mapping

import numpy as np

from .errors import ConfigError, ProfileError
from .model import AppSpec, max_system_accuracy, path_accuracy
from .placement import DeploymentPlan
from .planner import Configuration
from .profiles import Key, ProfileTable, SegmentType

__all__ = [
    "DROP_CAUSES",
    "TraceBin",
    "SimOptions",
    "Request",
    "InstanceState",
    "RootOutcome",
    "ViolationStats",
    "SimReport",
    "instance_segments",
    "should_early_drop",
    "violation_accounting",
    "measured_accuracy",
    "simulate",
]

DROP_DEADLINE = "deadline-infeasible"
DROP_STALE = "stale"
DROP_NO_CAPACITY = "no-capacity"
DROP_MISSED = "missed"
DROP_CAUSES = (DROP_DEADLINE, DROP_STALE, DROP_NO_CAPACITY, DROP_MISSED)

# event sink rows: (time_ms, event, request_id, task, instance, detail)
EventSink = Callable[[float, str, int, str, str, str], None]


@dataclass(frozen=True)
class TraceBin:
    """Offered load for one simulated interval.

    ``duration_s`` is the measured interval; arrivals additionally cover the
    warm-up that precedes it (see SimOptions).
    """

    rate_rps: float
    duration_s: float

    def __post_init__(self) -> None:
        if not (self.rate_rps >= 0 and math.isfinite(self.rate_rps)):
            raise ConfigError(f"bin rate must be non-negative and finite, got {self.rate_rps}")
        if not (self.duration_s > 0 and math.isfinite(self.duration_s)):
            raise ConfigError(f"bin duration must be positive, got {self.duration_s}")


@dataclass(frozen=True)
class SimOptions:
    """Simulation knobs.

    ``fanout_mode`` selects how edge factors become integer child counts:
    "deterministic" emits floor(F) children plus one more with probability
    frac(F) (no randomness when F is integral); "poisson" samples Poisson(F).

    ``stagger_start`` gives each process lane a seeded random initial busy
    horizon within one full-batch service time, modeling instances that come
    online one by one after a reconfiguration. Without it every lane starts
    idle at t=0 and deterministic service times phase-lock them into
    synchronized batch waves whose fan-out bursts overwhelm downstream queues
    in a way no desynchronized real deployment exhibits.

    ``service_jitter_frac`` perturbs each batch's service time uniformly by
    up to that fraction (mean-preserving, seeded). A small default keeps lane
    phases diffusing so they cannot re-lock into waves mid-run.
    """

    warmup_s: float = 10.0
    fanout_mode: str = "deterministic"
    max_events: int = 5_000_000
    event_sink: EventSink | None = None
    stagger_start: bool = True
    service_jitter_frac: float = 0.05

    def __post_init__(self) -> None:
        if self.warmup_s < 0:
            raise ConfigError(f"warmup must be non-negative, got {self.warmup_s}")
        if self.fanout_mode not in ("deterministic", "poisson"):
            raise ConfigError(f"unknown fanout mode {self.fanout_mode!r}")
        if self.max_events < 1:
            raise ConfigError("max_events must be positive")
        if not 0.0 <= self.service_jitter_frac <= 0.5:
            raise ConfigError("service jitter fraction must be in [0, 0.5]")


@dataclass(slots=True)
class Request:
    """One unit of work at one task; fan-out creates fresh requests downstream.

    ``path`` lists the tasks visited so far with the current task last;
    ``enqueued_ms`` is the enqueue time at the current task. The deadline is
    fixed when the root request arrives and inherited by all descendants.
    ``overflow_since_ms`` is set when the request starts waiting without a
    slot in any instance's next batch; only that wait can make it stale.
    """

    id: int
    root_id: int
    path: tuple[str, ...]
    created_ms: float
    deadline_ms: float
    enqueued_ms: float = 0.0
    overflow_since_ms: float | None = None

    @property
    def task(self) -> str:
        return self.path[-1]


@dataclass(slots=True)
class InstanceState:
    """One model process: a queue, a busy horizon, and an open batch window."""

    index: int
    key: Key
    label: str
    queue: deque = field(default_factory=deque)
    busy_until_ms: float = 0.0
    window_open_ms: float | None = None
    window_gen: int = 0  # invalidates stale window-timeout events


class _RootState:
    __slots__ = (
        "id",
        "created",
        "deadline",
        "outstanding",
        "drop_cause",
        "drop_weights",
        "acc",
        "finish",
        "measured",
    )

    def __init__(self, rid: int, created: float, deadline: float, measured: bool):
        self.id = rid
        self.created = created
        self.deadline = deadline
        self.outstanding = 1
        self.drop_cause: str | None = None
        self.drop_weights: list[int] = []
        self.acc: dict[str, list[float]] = {}  # task -> [accuracy sum, count]
        self.finish: float | None = None
        self.measured = measured


@dataclass(frozen=True)
class RootOutcome:
    """Final classification of one root request."""

    root_id: int
    created_ms: float
    status: str  # "completed" | "dropped" | "missed"
    finish_ms: float | None = None
    late: bool = False
    drop_cause: str | None = None
    drop_weights: tuple[int, ...] = ()
    accuracy: float | None = None


@dataclass(frozen=True)
class ViolationStats:
    violations: int
    denominator: int
    rate: float
    late_completions: int


@dataclass(frozen=True)
class SimReport:
    """Metrics for one simulated bin.

    Conservation totals (arrived/completed/dropped) cover every root request;
    the rate, accuracy, and violation metrics cover roots created after the
    warm-up. ``measured_accuracy`` is normalized by the best attainable system
    accuracy and is None when nothing completed in the measured window.
    """

    offered_rps: float
    duration_s: float
    warmup_s: float
    seed: int
    arrived_roots: int
    completed_roots: int
    dropped_roots: int
    drops_by_cause: Mapping[str, int]
    violations: int
    violation_denominator: int
    violation_rate: float
    late_completions: int
    measured_accuracy: float | None
    accuracy_drop_pct: float | None
    task_arrival_rps: Mapping[str, float]
    edge_factors: Mapping[tuple[str, str], float]
    slices_used_frac: float
    gpus_used: int
    max_queue_len: int
    events_processed: int
    truncated: bool

    def to_dict(self) -> dict:
        return {
            "offered_rps": self.offered_rps,
            "duration_s": self.duration_s,
            "warmup_s": self.warmup_s,
            "seed": self.seed,
            "arrived_roots": self.arrived_roots,
            "completed_roots": self.completed_roots,
            "dropped_roots": self.dropped_roots,
            "drops_by_cause": dict(sorted(self.drops_by_cause.items())),
            "violations": self.violations,
            "violation_denominator": self.violation_denominator,
            "violation_rate": self.violation_rate,
            "late_completions": self.late_completions,
            "measured_accuracy": self.measured_accuracy,
            "accuracy_drop_pct": self.accuracy_drop_pct,
            "task_arrival_rps": dict(sorted(self.task_arrival_rps.items())),
            "edge_factors": {
                f"{src}->{dst}": f
                for (src, dst), f in sorted(self.edge_factors.items())
            },
            "slices_used_frac": self.slices_used_frac,
            "gpus_used": self.gpus_used,
            "max_queue_len": self.max_queue_len,
            "events_processed": self.events_processed,
            "truncated": self.truncated,
        }


def instance_segments(config: Configuration) -> tuple[SegmentType, ...]:
    """The segment multiset a configuration occupies, in canonical order."""
    return tuple(key[2] for key, n in config.m for _ in range(n))


def _fastest_service_ms(profile: ProfileTable, task: str) -> float:
    best = None
    for key in profile.entries_for(task):
        lat = profile[key].latency_ms
        if best is None or lat < best:
            best = lat
    if best is None:
        raise ProfileError(f"no profile entries for task {task!r}")
    return best


def _fastest_remaining_ms(app: AppSpec, profile: ProfileTable) -> dict[str, float]:
    """Lower bound on remaining service time from each task to a sink.

    Assumes fastest variants, no queueing, and one hop of network latency per
    remaining edge.
    """
    graph = app.graph
    rem: dict[str, float] = {}
    for t in reversed(graph.topological_order):
        succ = graph.successors[t]
        tail = min((app.hop_latency_ms + rem[s] for s in succ), default=0.0)
        rem[t] = _fastest_service_ms(profile, t) + tail
    return rem


def _drop_cause(
    deadline_ms: float,
    stale_clock_ms: float,
    now_ms: float,
    remaining_ms: float,
    staleness_ms: float,
) -> str | None:
    if now_ms + remaining_ms > deadline_ms:
        return DROP_DEADLINE
    if now_ms - stale_clock_ms > staleness_ms:
        return DROP_STALE
    return None


def should_early_drop(
    request: Request,
    now_ms: float,
    task: str,
    profile: ProfileTable,
    app: AppSpec,
) -> tuple[bool, str | None]:
    """Drop decision for a request at the head of processing for ``task``.

    Returns (True, cause) when the deadline is unreachable even at the fastest
    remaining service, or when the request has waited beyond the staleness
    bound. The staleness clock is the request's unassigned wait: it starts
    when the request cannot get a slot in any instance's next batch
    (``overflow_since_ms``; ``enqueued_ms`` is used when the stamp is absent,
    which suits callers that track only one wait clock). Requests that held a
    batch slot the whole time are never stale.
    """
    rem = _fastest_remaining_ms(app, profile)[task]
    clock = request.overflow_since_ms
    if clock is None:
        clock = request.enqueued_ms
    cause = _drop_cause(request.deadline_ms, clock, now_ms, rem, app.staleness_ms)
    return cause is not None, cause


def violation_accounting(outcomes: list[RootOutcome]) -> ViolationStats:
    """Latency-SLO violation rate over root outcomes.

    A completed root violates iff it finished past its deadline. An early drop
    counts as its fan-out weight in both the numerator and the denominator; an
    unresolved (missed) root counts as one violation.
    """
    violations = denominator = late = 0
    for o in outcomes:
        if o.status == "completed":
            denominator += 1
            if o.late:
                violations += 1
                late += 1
        elif o.status == "dropped":
            w = sum(o.drop_weights) if o.drop_weights else 1
            violations += w
            denominator += w
        elif o.status == "missed":
            violations += 1
            denominator += 1
        else:
            raise ConfigError(f"unknown outcome status {o.status!r}")
    rate = violations / denominator if denominator else 0.0
    return ViolationStats(violations, denominator, rate, late)


def measured_accuracy(outcomes: list[RootOutcome], app: AppSpec) -> float | None:
    """Mean per-root accuracy over completions, normalized by the best attainable."""
    vals = [o.accuracy for o in outcomes if o.status == "completed" and o.accuracy is not None]
    if not vals:
        return None
    return fmean(vals) / max_system_accuracy(app.graph)


def _check_coverage(config: Configuration, deployment: DeploymentPlan) -> None:
    want = Counter(instance_segments(config))
    have = Counter(deployment.instances)
    if want != have:
        raise ConfigError(
            "deployment does not cover the configuration: "
            f"configuration needs {sorted(map(str, want.elements()))}, "
            f"deployment holds {sorted(map(str, have.elements()))}"
        )
    if not deployment.fully_placed:
        raise ConfigError(
            f"deployment leaves {len(deployment.unplaced)} instance(s) unplaced"
        )


# event kinds, ordered only by (time, seq) in the heap
_EV_ENQ, _EV_WINDOW, _EV_DONE, _EV_WAKE = 0, 1, 2, 3


class _Sim:
    def __init__(
        self,
        app: AppSpec,
        profile: ProfileTable,
        config: Configuration,
        deployment: DeploymentPlan,
        bin: TraceBin,
        seed: int,
        opts: SimOptions,
    ):
        self.app = app
        self.graph = app.graph
        self.profile = profile
        self.config = config
        self.deployment = deployment
        self.bin = bin
        self.seed = seed
        self.opts = opts
        self.rng = np.random.default_rng(seed)
        self.sink = opts.event_sink

        self.warmup_ms = opts.warmup_s * 1000.0
        self.horizon_ms = self.warmup_ms + bin.duration_s * 1000.0
        self.hop_ms = app.hop_latency_ms
        self.rem_min = _fastest_remaining_ms(app, profile)
        self.window_ms = config.latency_ms
        self.acc_of = {
            (t.id, v.id): v.accuracy for t in self.graph.tasks for v in t.variants
        }
        self.fan_of = {
            (t.id, v.id): tuple((dst, v.factors[dst]) for dst in self.graph.successors[t.id])
            for t in self.graph.tasks
            for v in t.variants
        }
        best = {t.id: t.most_accurate.accuracy for t in self.graph.tasks}
        self.path_meta = tuple(
            (p, self.graph.path_fractions[p], path_accuracy(p, best))
            for p in self.graph.paths
        )
        self.best_accuracy = max_system_accuracy(self.graph)

        # per-process servers: one per MPS lane of every deployed instance
        self.by_task: dict[str, list[InstanceState]] = {}
        idx = 0
        for key, n in config.m:
            t, v, s, b = key
            for _ in range(n * s.mps):
                inst = InstanceState(index=idx, key=key, label=f"{t}/{v}/{s}/b{b}#{idx}")
                self.by_task.setdefault(t, []).append(inst)
                idx += 1

        # service latency by actual batch size: smallest profiled batch >= size
        self.svc: dict[Key, tuple[float, ...]] = {}
        for key, _ in config.m:
            t, v, s, b = key
            lats = []
            for size in range(1, b + 1):
                sb = profile.service_batch(t, v, s, size)
                lats.append(profile[(t, v, s, sb)].latency_ms)
            self.svc[key] = tuple(lats)

        self.heap: list = []
        self.seq = itertools.count()
        self.sub_id = itertools.count()
        self.roots: list[_RootState] = []
        self.task_arrivals: Counter = Counter()
        self.task_completions: Counter = Counter()
        self.edge_children: Counter = Counter()
        self.max_queue = 0
        self.processed = 0
        self.truncated = False

    def _push(self, time_ms: float, kind: int, payload) -> None:
        heapq.heappush(self.heap, (time_ms, next(self.seq), kind, payload))

    def _in_window(self, time_ms: float) -> bool:
        return self.warmup_ms <= time_ms < self.horizon_ms

    def _seed_arrivals(self) -> None:
        rate = self.bin.rate_rps
        if rate <= 0:
            return
        scale = 1000.0 / rate
        t = float(self.rng.exponential(scale))
        entry = self.graph.entry
        while t < self.horizon_ms:
            rid = len(self.roots)
            root = _RootState(rid, t, t + self.app.latency_slo_ms, t >= self.warmup_ms)
            self.roots.append(root)
            req = Request(
                id=next(self.sub_id),
                root_id=rid,
                path=(entry,),
                created_ms=t,
                deadline_ms=root.deadline,
            )
            if self.sink is not None:
                self.sink(t, "arrive", req.id, entry, "", f"root={rid}")
            self._push(t + self.hop_ms, _EV_ENQ, req)
            t += float(self.rng.exponential(scale))

    def _seed_stagger(self) -> None:
        # drawn after the arrival stream so a seed's arrivals do not depend
        # on the configuration under test
        if not self.opts.stagger_start:
            return
        for insts in self.by_task.values():
            for inst in insts:
                full = self.svc[inst.key][inst.key[3] - 1]
                start = float(self.rng.uniform(0.0, full))
                if start > 0.0:
                    inst.busy_until_ms = start
                    self._push(start, _EV_WAKE, inst)

    def _sample_fanout(self, factor: float) -> int:
        if self.opts.fanout_mode == "poisson":
            return int(self.rng.poisson(factor))
        base = int(factor)
        frac = factor - base
        if frac <= 0.0:
            return base
        return base + (1 if self.rng.random() < frac else 0)

    def _drop(self, req: Request, now: float, serving: tuple[str, str] | None, cause: str) -> None:
        root = self.roots[req.root_id]
        if root.drop_cause is None:
            root.drop_cause = cause
        weight = 1
        if serving is not None:
            fans = self.fan_of[serving]
            if fans:
                weight = max(1, math.ceil(math.fsum(f for _, f in fans) / len(fans)))
        root.drop_weights.append(weight)
        root.outstanding -= 1
        if self.sink is not None:
            inst = "" if serving is None else f"{serving[0]}/{serving[1]}"
            self.sink(now, "drop", req.id, req.task, inst, cause)

    def _enqueue(self, req: Request, now: float) -> None:
        task = req.task
        if self._in_window(now):
            self.task_arrivals[task] += 1
        insts = self.by_task.get(task)
        if not insts:
            self._drop(req, now, None, DROP_NO_CAPACITY)
            return
        inst = min(insts, key=lambda i: (len(i.queue), i.index))
        req.enqueued_ms = now
        # beyond the instance's next-batch capacity (and, being the shortest
        # queue, everyone else's too): the staleness clock starts ticking
        req.overflow_since_ms = now if len(inst.queue) >= inst.key[3] else None
        inst.queue.append(req)
        if len(inst.queue) > self.max_queue:
            self.max_queue = len(inst.queue)
        if self.sink is not None:
            self.sink(now, "enqueue", req.id, task, inst.label, f"queue={len(inst.queue)}")
        if inst.busy_until_ms <= now:
            if len(inst.queue) >= inst.key[3]:
                self._launch(inst, now)
            elif inst.window_open_ms is None:
                inst.window_open_ms = now
                inst.window_gen += 1
                self._push(now + self.window_ms[task], _EV_WINDOW, (inst, inst.window_gen))

    def _launch(self, inst: InstanceState, now: float) -> None:
        inst.window_gen += 1
        inst.window_open_ms = None
        t, v, s, b = inst.key
        staleness = self.app.staleness_ms
        rem = self.rem_min[t]
        batch: list[Request] = []
        queue = inst.queue
        while queue and len(batch) < b:
            req = queue.popleft()
            clock = req.overflow_since_ms if req.overflow_since_ms is not None else now
            cause = _drop_cause(req.deadline_ms, clock, now, rem, staleness)
            if cause is not None:
                self._drop(req, now, (t, v), cause)
            else:
                batch.append(req)
        if not batch:
            return
        latency = self.svc[inst.key][len(batch) - 1]
        jitter = self.opts.service_jitter_frac
        if jitter > 0.0:
            latency *= 1.0 + jitter * (2.0 * float(self.rng.random()) - 1.0)
        inst.busy_until_ms = now + latency
        self._push(now + latency, _EV_DONE, (inst, tuple(batch)))
        if self.sink is not None:
            self.sink(now, "launch", batch[0].id, t, inst.label, f"batch={len(batch)}")

    def _done(self, inst: InstanceState, batch: tuple[Request, ...], now: float) -> None:
        t, v, s, b = inst.key
        accuracy = self.acc_of[(t, v)]
        fans = self.fan_of[(t, v)]
        in_window = self._in_window(now)
        for req in batch:
            root = self.roots[req.root_id]
            cell = root.acc.setdefault(t, [0.0, 0])
            cell[0] += accuracy
            cell[1] += 1
            if in_window:
                self.task_completions[t] += 1
            spawned = 0
            for dst, factor in fans:
                n = self._sample_fanout(factor)
                if in_window:
                    self.edge_children[(t, dst)] += n
                spawned += n
                for _ in range(n):
                    child = Request(
                        id=next(self.sub_id),
                        root_id=req.root_id,
                        path=req.path + (dst,),
                        created_ms=req.created_ms,
                        deadline_ms=req.deadline_ms,
                    )
                    self._push(now + self.hop_ms, _EV_ENQ, child)
            root.outstanding += spawned - 1
            if self.sink is not None:
                self.sink(now, "complete", req.id, t, inst.label, "")
            if root.outstanding == 0 and root.drop_cause is None and root.finish is None:
                root.finish = now
                if self.sink is not None:
                    late = "late" if now > root.deadline else "ontime"
                    self.sink(now, "root_done", root.id, "", "", late)
        if inst.busy_until_ms <= now and inst.queue:
            self._launch(inst, now)

    def run(self) -> SimReport:
        self._seed_arrivals()
        self._seed_stagger()
        heap = self.heap
        while heap:
            if self.processed >= self.opts.max_events:
                self.truncated = True
                break
            now, _, kind, payload = heapq.heappop(heap)
            self.processed += 1
            if kind == _EV_ENQ:
                self._enqueue(payload, now)
            elif kind == _EV_DONE:
                inst, batch = payload
                self._done(inst, batch, now)
            elif kind == _EV_WAKE:  # process comes online; serve any backlog
                if payload.busy_until_ms <= now and payload.queue:
                    self._launch(payload, now)
            else:  # window timeout; ignore when superseded or the process is busy
                inst, gen = payload
                if inst.window_gen == gen and inst.busy_until_ms <= now and inst.queue:
                    self._launch(inst, now)
        return self._report()

    def _root_accuracy(self, root: "_RootState") -> float | None:
        """Path-fraction-weighted accuracy realized by one completed root.

        Weighted the same way the planner weights paths, restricted to the
        paths this root actually traversed (sampled fan-out can skip a
        branch), and rescaled so a wholly most-accurate root scores the
        graph's best attainable accuracy.
        """
        means = {t: total / count for t, (total, count) in root.acc.items()}
        num = den = 0.0
        for p, frac, best_pas in self.path_meta:
            if all(t in means for t in p):
                num += frac * path_accuracy(p, means)
                den += frac * best_pas
        if den <= 0.0:
            return None
        return self.best_accuracy * num / den

    def _report(self) -> SimReport:
        completed = dropped = 0
        drops_by_cause = {c: 0 for c in DROP_CAUSES}
        measured: list[RootOutcome] = []
        for root in self.roots:
            accuracy = None
            if root.drop_cause is not None:
                status, cause = "dropped", root.drop_cause
                dropped += 1
                drops_by_cause[cause] += 1
            elif root.finish is not None:
                status, cause = "completed", None
                completed += 1
                accuracy = self._root_accuracy(root)
            else:
                status, cause = "missed", DROP_MISSED
                dropped += 1
                drops_by_cause[DROP_MISSED] += 1
            if root.measured:
                measured.append(
                    RootOutcome(
                        root_id=root.id,
                        created_ms=root.created,
                        status=status,
                        finish_ms=root.finish,
                        late=root.finish is not None and root.finish > root.deadline,
                        drop_cause=cause,
                        drop_weights=tuple(root.drop_weights),
                        accuracy=accuracy,
                    )
                )
        stats = violation_accounting(measured)
        acc = measured_accuracy(measured, self.app)
        duration = self.bin.duration_s
        rates = {t: self.task_arrivals.get(t, 0) / duration for t in self.graph.task_ids}
        factors = {}
        for src, dst in self.graph.edges:
            parents = self.task_completions.get(src, 0)
            if parents > 0:
                factors[(src, dst)] = self.edge_children.get((src, dst), 0) / parents
        gpu_count = self.deployment.gpu_count
        frac = self.config.total_slices / (7.0 * gpu_count) if gpu_count else 0.0
        return SimReport(
            offered_rps=self.bin.rate_rps,
            duration_s=duration,
            warmup_s=self.opts.warmup_s,
            seed=self.seed,
            arrived_roots=len(self.roots),
            completed_roots=completed,
            dropped_roots=dropped,
            drops_by_cause=drops_by_cause,
            violations=stats.violations,
            violation_denominator=stats.denominator,
            violation_rate=stats.rate,
            late_completions=stats.late_completions,
            measured_accuracy=acc,
            accuracy_drop_pct=None if acc is None else (1.0 - acc) * 100.0,
            task_arrival_rps=rates,
            edge_factors=factors,
            slices_used_frac=frac,
            gpus_used=self.deployment.gpus_used(),
            max_queue_len=self.max_queue,
            events_processed=self.processed,
            truncated=self.truncated,
        )


def simulate(
    app: AppSpec,
    profile: ProfileTable,
    config: Configuration,
    deployment: DeploymentPlan,
    bin: TraceBin,
    seed: int,
    options: SimOptions | None = None,
) -> SimReport:
    """Replay one trace bin through a deployed configuration.

    The configuration may be best-effort (e.g. a fallback plan for demand it
    cannot fully serve); the deployment must place exactly its instances.
    """
    opts = options or SimOptions()
    _check_coverage(config, deployment)
    return _Sim(app, profile, config, deployment, bin, seed, opts).run()
