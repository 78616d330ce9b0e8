"""Latency/throughput profiles of model instances on GPU segments.

A GPU segment is a MIG partition profile plus an MPS concurrency level. A
profile table maps (task, variant, segment, batch) to measured (or synthetic)
p95 latency and sustained throughput. Absent entries mean the combination is
infeasible and must never be selected.
"""

from __future__ import annotations

import csv
import json
import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator, Mapping

import numpy as np

from .errors import ConfigError, ProfileError
from .model import TaskGraph

__all__ = [
    "MIG_SLICE_COST",
    "BATCH_SIZES",
    "MPS_LEVELS",
    "SegmentType",
    "all_segments",
    "ProfileEntry",
    "ProfileTable",
    "load_profile",
    "save_profile",
    "SynthKnobs",
    "load_knobs",
    "synth_profile",
]

# compute-slice cost of each MIG partition profile on a 7-slice GPU
MIG_SLICE_COST: dict[str, int] = {"1g": 1, "1g_me": 1, "2g": 2, "3g": 3, "4g": 4, "7g": 7}
BATCH_SIZES: tuple[int, ...] = (1, 2, 4, 8, 16, 32, 64, 128)
MPS_LEVELS: tuple[int, ...] = (1, 2, 3, 4)


@dataclass(frozen=True, order=True)
class SegmentType:
    """A MIG profile plus MPS concurrency, e.g. 2g at concurrency 4."""

    mig: str
    mps: int

    def __post_init__(self) -> None:
        if self.mig not in MIG_SLICE_COST:
            raise ConfigError(f"unknown MIG profile {self.mig!r}")
        if self.mps not in MPS_LEVELS:
            raise ConfigError(f"MPS concurrency {self.mps} outside {MPS_LEVELS}")

    @property
    def slice_cost(self) -> int:
        return MIG_SLICE_COST[self.mig]

    def __str__(self) -> str:
        return f"{self.mig}/mps{self.mps}"


def all_segments(
    migs: Iterable[str] = tuple(MIG_SLICE_COST),
    mps_levels: Iterable[int] = MPS_LEVELS,
) -> tuple[SegmentType, ...]:
    return tuple(SegmentType(m, k) for m in migs for k in mps_levels)


@dataclass(frozen=True)
class ProfileEntry:
    latency_ms: float
    throughput_rps: float


Key = tuple[str, str, SegmentType, int]  # (task, variant, segment, batch)


def _canonical(keys: Iterable[Key]) -> list[Key]:
    return sorted(keys, key=lambda k: (k[0], k[1], k[2].mig, k[2].mps, k[3]))


class ProfileTable:
    """Immutable mapping from (task, variant, segment, batch) to measurements.

    Validates on construction: positive latency and throughput, batch sizes
    from the supported domain, and latency non-decreasing in batch size for a
    fixed (task, variant, segment).
    """

    def __init__(self, entries: Mapping[Key, ProfileEntry]):
        self._entries: dict[Key, ProfileEntry] = dict(entries)
        self._validate()
        self._by_tvs: dict[tuple[str, str, SegmentType], list[int]] = {}
        for (t, v, s, b) in self._entries:
            self._by_tvs.setdefault((t, v, s), []).append(b)
        for bs in self._by_tvs.values():
            bs.sort()

    def _validate(self) -> None:
        for key, e in self._entries.items():
            t, v, s, b = key
            if b not in BATCH_SIZES:
                raise ProfileError(f"{t}/{v}/{s}: batch {b} outside supported domain {BATCH_SIZES}")
            if not (e.latency_ms > 0 and math.isfinite(e.latency_ms)):
                raise ProfileError(f"{t}/{v}/{s}/b{b}: latency must be positive, got {e.latency_ms}")
            if not (e.throughput_rps > 0 and math.isfinite(e.throughput_rps)):
                raise ProfileError(
                    f"{t}/{v}/{s}/b{b}: throughput must be positive, got {e.throughput_rps}"
                )
        series: dict[tuple[str, str, SegmentType], list[tuple[int, float]]] = {}
        for (t, v, s, b), e in self._entries.items():
            series.setdefault((t, v, s), []).append((b, e.latency_ms))
        for (t, v, s), pts in series.items():
            pts.sort()
            for (b1, l1), (b2, l2) in zip(pts, pts[1:]):
                if l2 < l1:
                    raise ProfileError(
                        f"{t}/{v}/{s}: latency decreases from batch {b1} ({l1} ms) "
                        f"to batch {b2} ({l2} ms)"
                    )

    def __len__(self) -> int:
        return len(self._entries)

    def __contains__(self, key: Key) -> bool:
        return key in self._entries

    def __iter__(self) -> Iterator[Key]:
        return iter(_canonical(self._entries))

    def __eq__(self, other: object) -> bool:
        return isinstance(other, ProfileTable) and self._entries == other._entries

    def get(self, key: Key) -> ProfileEntry | None:
        return self._entries.get(key)

    def __getitem__(self, key: Key) -> ProfileEntry:
        try:
            return self._entries[key]
        except KeyError:
            t, v, s, b = key
            raise ProfileError(f"no profile entry for {t}/{v}/{s}/b{b}") from None

    @property
    def tasks(self) -> tuple[str, ...]:
        return tuple(sorted({k[0] for k in self._entries}))

    def variants(self, task: str) -> tuple[str, ...]:
        return tuple(sorted({k[1] for k in self._entries if k[0] == task}))

    def segments(self, task: str, variant: str) -> tuple[SegmentType, ...]:
        segs = {k[2] for k in self._entries if k[0] == task and k[1] == variant}
        return tuple(sorted(segs, key=lambda s: (s.mig, s.mps)))

    def batches(self, task: str, variant: str, segment: SegmentType) -> tuple[int, ...]:
        return tuple(self._by_tvs.get((task, variant, segment), ()))

    def entries_for(self, task: str, variants: Iterable[str] | None = None) -> list[Key]:
        allowed = None if variants is None else set(variants)
        keys = [k for k in self._entries if k[0] == task and (allowed is None or k[1] in allowed)]
        return _canonical(keys)

    def service_batch(self, task: str, variant: str, segment: SegmentType, size: int) -> int:
        """Smallest profiled batch that can serve ``size`` requests at once."""
        for b in self._by_tvs.get((task, variant, segment), ()):
            if b >= size:
                return b
        raise ProfileError(f"no profiled batch >= {size} for {task}/{variant}/{segment}")

    def best_latency(self, task: str) -> float:
        """Fastest single-request latency over the task's variants and segments."""
        best = None
        for (t, v, s, b), e in self._entries.items():
            if t == task and b == 1:
                if best is None or e.latency_ms < best:
                    best = e.latency_ms
        if best is None:
            raise ProfileError(f"no batch-1 profile entries for task {task!r}")
        return best

    def refine(self, key: Key, latency_ms: float, weight: float = 0.2) -> "ProfileTable":
        """Fold an observed latency into the table with an exponential update.

        new = (1 - weight) * old + weight * observed. If the update would break
        batch monotonicity for the entry's (task, variant, segment) series, the
        value is clamped into the feasible interval and a warning is issued.
        """
        if key not in self._entries:
            raise ProfileError(f"cannot refine absent entry {key}")
        if not 0.0 < weight <= 1.0:
            raise ProfileError(f"refine weight must be in (0, 1], got {weight}")
        if not (latency_ms > 0 and math.isfinite(latency_ms)):
            raise ProfileError(f"observed latency must be positive, got {latency_ms}")
        t, v, s, b = key
        old = self._entries[key]
        updated = (1.0 - weight) * old.latency_ms + weight * latency_ms
        batches = self._by_tvs[(t, v, s)]
        i = batches.index(b)
        lo = self._entries[(t, v, s, batches[i - 1])].latency_ms if i > 0 else None
        hi = self._entries[(t, v, s, batches[i + 1])].latency_ms if i + 1 < len(batches) else None
        clamped = updated
        if lo is not None and clamped < lo:
            clamped = lo
        if hi is not None and clamped > hi:
            clamped = hi
        if clamped != updated:
            warnings.warn(
                f"refined latency for {t}/{v}/{s}/b{b} clamped from {updated:.6g} to "
                f"{clamped:.6g} ms to preserve batch monotonicity",
                stacklevel=2,
            )
        entries = dict(self._entries)
        entries[key] = ProfileEntry(latency_ms=clamped, throughput_rps=old.throughput_rps)
        return ProfileTable(entries)


_CSV_FIELDS = ("task", "variant", "mig", "mps", "batch", "latency_ms", "throughput_rps")


def load_profile(path: str | Path) -> ProfileTable:
    """Read a profile table from CSV, reporting bad rows by line number."""
    entries: dict[Key, ProfileEntry] = {}
    with open(path, newline="") as f:
        reader = csv.DictReader(f)
        if reader.fieldnames is None or tuple(reader.fieldnames) != _CSV_FIELDS:
            raise ProfileError(
                f"{path}: expected header {','.join(_CSV_FIELDS)}, got {reader.fieldnames}"
            )
        for row in reader:
            line = reader.line_num
            try:
                seg = SegmentType(row["mig"], int(row["mps"]))
                key = (row["task"], row["variant"], seg, int(row["batch"]))
                entry = ProfileEntry(float(row["latency_ms"]), float(row["throughput_rps"]))
            except (KeyError, ValueError, TypeError, ConfigError) as e:
                raise ProfileError(f"{path}:{line}: bad row: {e}") from None
            if key in entries:
                raise ProfileError(f"{path}:{line}: duplicate entry for {key}")
            entries[key] = entry
    try:
        return ProfileTable(entries)
    except ProfileError as e:
        raise ProfileError(f"{path}: {e}") from None


def save_profile(table: ProfileTable, path: str | Path) -> None:
    """Write a profile table as CSV in canonical key order."""
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(_CSV_FIELDS)
        for t, v, s, b in table:
            e = table[(t, v, s, b)]
            writer.writerow([t, v, s.mig, s.mps, b, repr(e.latency_ms), repr(e.throughput_rps)])


@dataclass(frozen=True)
class SynthKnobs:
    """Scaling knobs for the synthetic profile generator.

    ``base_latency_ms`` is per-variant batch-1 latency on a single slice with
    no sharing. Latency grows as batch**gamma_batch, shrinks as
    slices**gamma_slices, and degrades by (1 + delta*(mps-1)) under MPS
    sharing; throughput is mps * batch / latency.
    """

    base_latency_ms: Mapping[str, float]
    gamma_batch: float = 0.7
    gamma_slices: float = 0.65
    delta: float = 0.15
    jitter_sigma: float = 0.0
    seed: int = 0
    min_slices: Mapping[str, int] = field(default_factory=dict)
    segments: tuple[SegmentType, ...] = all_segments()
    batches: tuple[int, ...] = BATCH_SIZES

    def __post_init__(self) -> None:
        if not 0.0 < self.gamma_slices <= 1.0:
            raise ConfigError(f"gamma_slices must be in (0, 1], got {self.gamma_slices}")
        if not 0.0 < self.gamma_batch <= 1.0:
            raise ConfigError(f"gamma_batch must be in (0, 1], got {self.gamma_batch}")
        if not 0.0 <= self.delta <= 1.0:
            raise ConfigError(f"delta must be in [0, 1], got {self.delta}")
        if self.jitter_sigma < 0:
            raise ConfigError("jitter_sigma must be non-negative")
        for v, ms in self.base_latency_ms.items():
            if ms <= 0:
                raise ConfigError(f"base latency for {v!r} must be positive")
        for b in self.batches:
            if b not in BATCH_SIZES:
                raise ConfigError(f"batch {b} outside supported domain {BATCH_SIZES}")


def load_knobs(path: str | Path) -> SynthKnobs:
    """Load generator knobs from JSON."""
    with open(path) as f:
        doc = json.load(f)
    kwargs = {}
    if "segments" in doc:
        kwargs["segments"] = tuple(SegmentType(s["mig"], int(s["mps"])) for s in doc["segments"])
    if "batches" in doc:
        kwargs["batches"] = tuple(int(b) for b in doc["batches"])
    return SynthKnobs(
        base_latency_ms={k: float(v) for k, v in doc["base_latency_ms"].items()},
        gamma_batch=float(doc.get("gamma_batch", 0.7)),
        gamma_slices=float(doc.get("gamma_slices", 0.65)),
        delta=float(doc.get("delta", 0.15)),
        jitter_sigma=float(doc.get("jitter_sigma", 0.0)),
        seed=int(doc.get("seed", 0)),
        min_slices={k: int(v) for k, v in doc.get("min_slices", {}).items()},
        **kwargs,
    )


def synth_profile(graph: TaskGraph, knobs: SynthKnobs) -> ProfileTable:
    """Generate a deterministic synthetic profile table for a task graph.

    Per-(task, variant, segment) jitter is constant across batch sizes so the
    batch-monotonicity invariant holds for every generated entry; the same
    seed always yields a bit-identical table.
    """
    rng = np.random.default_rng(knobs.seed)
    entries: dict[Key, ProfileEntry] = {}
    pairs = [(t.id, v.id) for t in graph.tasks for v in t.variants]
    for task, variant in sorted(pairs):
        try:
            base = knobs.base_latency_ms[variant]
        except KeyError:
            raise ConfigError(f"no base latency for variant {variant!r}") from None
        floor = knobs.min_slices.get(variant, 1)
        for seg in sorted(knobs.segments, key=lambda s: (s.mig, s.mps)):
            jitter = float(np.exp(rng.normal(0.0, knobs.jitter_sigma))) if knobs.jitter_sigma else 1.0
            if seg.slice_cost < floor:
                continue  # model does not fit: entry stays absent
            eff = seg.slice_cost ** knobs.gamma_slices
            contention = 1.0 + knobs.delta * (seg.mps - 1)
            for b in knobs.batches:
                lat = base * (b ** knobs.gamma_batch) / eff * contention * jitter
                thr = 1000.0 * b * seg.mps / lat
                entries[(task, variant, seg, b)] = ProfileEntry(lat, thr)
    return ProfileTable(entries)
