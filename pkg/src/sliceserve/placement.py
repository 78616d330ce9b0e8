"""Packing MIG partitions onto physical GPUs.

A partition profile may only start at fixed slice offsets and blocks a fixed
footprint of slices from that start (the footprint can exceed the profile's
compute-slice cost, which is where fragmentation comes from). Packing is a
deterministic greedy first-fit over instances sorted by decreasing footprint.
"""

from __future__ import annotations

import hashlib
import json
import string
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

from .errors import GeometryError
from .profiles import MIG_SLICE_COST, SegmentType

__all__ = [
    "MigGeometry",
    "DEFAULT_GEOMETRY",
    "load_geometry",
    "Placement",
    "DeploymentPlan",
    "pack",
    "min_gpus",
    "render_plan",
]


@dataclass(frozen=True)
class MigGeometry:
    """Allowed start offsets and footprint widths per MIG profile."""

    slices_per_gpu: int = 7
    placements: Mapping[str, Mapping[int, int]] = field(default_factory=dict)

    def __post_init__(self) -> None:
        missing = set(MIG_SLICE_COST) - set(self.placements)
        if missing:
            raise GeometryError(f"geometry missing profiles: {sorted(missing)}")
        for mig, starts in self.placements.items():
            if mig not in MIG_SLICE_COST:
                raise GeometryError(f"geometry lists unknown profile {mig!r}")
            if not starts:
                raise GeometryError(f"profile {mig!r} has no allowed starts")
            for start, width in starts.items():
                if width < 1:
                    raise GeometryError(f"{mig!r} at start {start}: width {width} < 1")
                if start < 0 or start + width > self.slices_per_gpu:
                    raise GeometryError(
                        f"{mig!r} at start {start} width {width} exceeds "
                        f"{self.slices_per_gpu} slices"
                    )
                if width < MIG_SLICE_COST[mig]:
                    raise GeometryError(
                        f"{mig!r} at start {start}: footprint {width} below "
                        f"compute cost {MIG_SLICE_COST[mig]}"
                    )

    def starts(self, mig: str) -> list[tuple[int, int]]:
        """(start, width) options for a profile, lowest start first."""
        return sorted(self.placements[mig].items())

    def min_width(self, mig: str) -> int:
        return min(self.placements[mig].values())

    def max_width(self, mig: str) -> int:
        return max(self.placements[mig].values())

    def canonical_json(self) -> str:
        doc = {
            "slices_per_gpu": self.slices_per_gpu,
            "profiles": {
                m: {str(s): w for s, w in sorted(self.placements[m].items())}
                for m in sorted(self.placements)
            },
        }
        return json.dumps(doc, sort_keys=True, separators=(",", ":"))

    def digest(self) -> str:
        return hashlib.sha256(self.canonical_json().encode()).hexdigest()[:12]


DEFAULT_GEOMETRY = MigGeometry(
    slices_per_gpu=7,
    placements={
        "1g": {0: 1, 1: 1, 2: 1, 3: 1, 4: 1, 5: 1, 6: 1},
        # the double-memory 1-slice profile blocks its neighbour slice except
        # at the top edge, where only the last slice remains
        "1g_me": {0: 2, 2: 2, 4: 2, 6: 1},
        "2g": {0: 2, 2: 2, 4: 2},
        "3g": {0: 4, 4: 3},
        "4g": {0: 4},
        "7g": {0: 7},
    },
)


def load_geometry(path: str | Path) -> MigGeometry:
    """Load a geometry override table from JSON."""
    with open(path) as f:
        doc = json.load(f)
    try:
        placements = {
            mig: {int(s): int(w) for s, w in starts.items()}
            for mig, starts in doc["profiles"].items()
        }
        return MigGeometry(
            slices_per_gpu=int(doc.get("slices_per_gpu", 7)), placements=placements
        )
    except (KeyError, TypeError, ValueError, AttributeError) as e:
        raise GeometryError(f"{path}: bad geometry file: {e}") from None


@dataclass(frozen=True)
class Placement:
    instance: int  # index into the packed instance list
    mig: str
    gpu: int
    start: int
    width: int


@dataclass(frozen=True)
class DeploymentPlan:
    gpu_count: int
    placements: tuple[Placement, ...]
    unplaced: tuple[int, ...]
    instances: tuple[SegmentType, ...]

    @property
    def fully_placed(self) -> bool:
        return not self.unplaced

    @property
    def footprint_slices(self) -> int:
        return sum(p.width for p in self.placements)

    @property
    def compute_slices(self) -> int:
        return sum(MIG_SLICE_COST[p.mig] for p in self.placements)

    def gpus_used(self) -> int:
        return len({p.gpu for p in self.placements})


def _sort_order(instances: Sequence[SegmentType], geometry: MigGeometry) -> list[int]:
    # biggest footprints first; stable on original index for determinism
    return sorted(
        range(len(instances)),
        key=lambda i: (
            -geometry.max_width(instances[i].mig),
            -MIG_SLICE_COST[instances[i].mig],
            instances[i].mig,
            i,
        ),
    )


def pack(
    instances: Iterable[SegmentType],
    gpu_count: int,
    geometry: MigGeometry = DEFAULT_GEOMETRY,
    node_budget: int = 500_000,
) -> DeploymentPlan:
    """First-fit-decreasing placement of instances onto ``gpu_count`` GPUs.

    When greedy placement leaves instances over, a budgeted backtracking
    search tries to realize an exact packing at the same count, so any count
    ``min_gpus`` declares sufficient is one ``pack`` can actually place.
    Instances that still fit nowhere are returned in ``unplaced`` rather than
    raising; MPS concurrency shares a placement, so it never affects packing.
    """
    inst = tuple(instances)
    if gpu_count < 0:
        raise GeometryError(f"gpu_count must be non-negative, got {gpu_count}")
    free: list[list[bool]] = [[True] * geometry.slices_per_gpu for _ in range(gpu_count)]
    placements: list[Placement] = []
    unplaced: list[int] = []
    order = _sort_order(inst, geometry)
    for idx in order:
        mig = inst[idx].mig
        spot = None
        for gpu in range(gpu_count):
            for start, width in geometry.starts(mig):
                if all(free[gpu][start : start + width]):
                    spot = (gpu, start, width)
                    break
            if spot:
                break
        if spot is None:
            unplaced.append(idx)
            continue
        gpu, start, width = spot
        for c in range(start, start + width):
            free[gpu][c] = False
        placements.append(Placement(instance=idx, mig=mig, gpu=gpu, start=start, width=width))
    if unplaced and gpu_count > 0:
        migs = [inst[i].mig for i in order]
        exact = _exact_pack(migs, gpu_count, geometry, node_budget)
        if exact is not None:
            placements = [
                Placement(instance=order[j], mig=migs[j], gpu=g, start=s, width=w)
                for j, (g, s, w) in enumerate(exact)
            ]
            unplaced = []
    placements.sort(key=lambda p: (p.gpu, p.start))
    return DeploymentPlan(
        gpu_count=gpu_count,
        placements=tuple(placements),
        unplaced=tuple(sorted(unplaced)),
        instances=inst,
    )


def _exact_pack(
    migs: Sequence[str], gpu_count: int, geometry: MigGeometry, node_budget: int
) -> list[tuple[int, int, int]] | None:
    """Backtracking placement; (gpu, start, width) per instance in input
    order, or None when infeasible or the node budget runs out.

    Instances must come pre-sorted; identical profiles are forced into
    non-decreasing (gpu, start) positions and fresh GPUs are tried at most
    once, which keeps ≤6-instance searches tiny.
    """
    full = (1 << geometry.slices_per_gpu) - 1
    free = [full] * gpu_count
    masks = {
        mig: [(s, w, ((1 << w) - 1) << s) for s, w in geometry.starts(mig)]
        for mig in set(migs)
    }
    chosen: list[tuple[int, int, int]] = []
    nodes = 0
    exhausted = False

    def place(i: int, floor_gpu: int, floor_start: int) -> bool:
        nonlocal nodes, exhausted
        if i == len(migs):
            return True
        nodes += 1
        if nodes > node_budget:
            exhausted = True
            return False
        same_as_prev = i > 0 and migs[i] == migs[i - 1]
        used_hi = max((g for g in range(gpu_count) if free[g] != full), default=-1)
        for gpu in range(gpu_count):
            if gpu > used_hi + 1:
                break  # all further GPUs are empty and interchangeable
            for start, width, mask in masks[migs[i]]:
                if same_as_prev and (gpu, start) < (floor_gpu, floor_start):
                    continue
                if free[gpu] & mask == mask:
                    free[gpu] &= ~mask
                    chosen.append((gpu, start, width))
                    if place(i + 1, gpu, start):
                        return True
                    chosen.pop()
                    free[gpu] |= mask
                    if exhausted:
                        return False
        return False

    return chosen if place(0, 0, 0) else None


def min_gpus(
    instances: Iterable[SegmentType],
    geometry: MigGeometry = DEFAULT_GEOMETRY,
    node_budget: int = 500_000,
) -> int:
    """Smallest GPU count that fits all instances.

    Exact (backtracking) for small instance counts; once the search budget is
    exhausted the greedy packer's count is used instead.
    """
    inst = tuple(instances)
    if not inst:
        return 0
    for seg in inst:
        if pack([seg], 1, geometry).unplaced:
            raise GeometryError(f"instance {seg} does not fit an empty GPU")
    total = sum(geometry.min_width(s.mig) for s in inst)
    lo = max(1, -(-total // geometry.slices_per_gpu))
    for n in range(lo, len(inst) + 1):
        if pack(inst, n, geometry, node_budget).fully_placed:
            return n
    return len(inst)


_GLYPHS = string.ascii_lowercase + string.ascii_uppercase + string.digits


def render_plan(plan: DeploymentPlan, geometry: MigGeometry = DEFAULT_GEOMETRY) -> str:
    """Fixed-width text map, one GPU per row, one character per slice."""
    rows = []
    for gpu in range(plan.gpu_count):
        cells = ["."] * geometry.slices_per_gpu
        for p in plan.placements:
            if p.gpu != gpu:
                continue
            glyph = _GLYPHS[p.instance % len(_GLYPHS)]
            for c in range(p.start, p.start + p.width):
                cells[c] = glyph
        rows.append(f"gpu{gpu} |{''.join(cells)}|")
    if plan.unplaced:
        rows.append("unplaced: " + ", ".join(str(plan.instances[i]) for i in plan.unplaced))
    return "\n".join(rows)
