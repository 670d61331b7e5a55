"""Time-window selection, labeled/unlabeled split, and assignment of the
unlabeled pool into prioritized disjoint sets by uncertainty and diversity.

Set 1 carries the highest priority: every top-1 class is represented in it
and, within a class, lower-probability (more uncertain) samples always land
in lower-numbered sets.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from datetime import datetime
from typing import Iterable, Protocol, Sequence

from .domain import EmbeddingRecord, WindowSelection
from .errors import UnknownNode

DEFAULT_MAX_SAMPLES_PER_RUN = 15000

RULE_ALL_TO_FIRST = "all_to_first"   # fewer samples than sets
RULE_ONE_PER_SET = "one_per_set"     # exactly as many samples as sets
RULE_DEAL_BALANCED = "deal_balanced" # more samples than sets


@dataclass(frozen=True)
class PartitionConfig:
    """Caps how many samples one AL run may process."""

    n_smax: int = DEFAULT_MAX_SAMPLES_PER_RUN

    def __post_init__(self) -> None:
        if self.n_smax < 1:
            raise ValueError(f"n_smax must be >= 1, got {self.n_smax}")


@dataclass(frozen=True)
class Assignment:
    audio_id: str
    set_index: int  # 1-based; 1 is the highest priority
    rule: str
    spilled: bool = False


@dataclass
class PartitionPlan:
    """Ordered disjoint sets with per-sample assignment provenance."""

    n_ds: int
    sets: list[set[str]]
    class_buckets: dict[int, int]
    assignments: dict[str, Assignment] = field(default_factory=dict)

    @property
    def spill_count(self) -> int:
        """Samples that the per-run cap pushed out of their rule's set."""
        return sum(1 for a in self.assignments.values() if a.spilled)

    def set_sizes(self) -> list[int]:
        return [len(s) for s in self.sets]

    def member_set(self, audio_id: str) -> int:
        return self.assignments[audio_id].set_index

    def all_members(self) -> set[str]:
        union: set[str] = set()
        for s in self.sets:
            union |= s
        return union


class WindowCatalog(Protocol):
    """What the partitioner needs from the audio catalog."""

    def has_node(self, node_id: str) -> bool: ...

    def audio_ids_in_window(
        self, node_id: str, window_start: datetime, window_end: datetime
    ) -> list[str]: ...


def select_window(
    catalog: WindowCatalog, node_id: str, window_start: datetime, window_end: datetime
) -> set[str]:
    """Audios of one node recorded in the half-open interval [start, end)."""
    if window_start >= window_end:
        raise ValueError("window_start must precede window_end")
    if not catalog.has_node(node_id):
        raise UnknownNode(f"node {node_id!r} is not in the catalog")
    return set(catalog.audio_ids_in_window(node_id, window_start, window_end))


def split_labeled(s_w: Iterable[str], labeled_ids: Iterable[str]) -> tuple[set[str], set[str]]:
    """Split the window set into (labeled medoid candidates, unlabeled rest)."""
    s_w = set(s_w)
    labeled = set(labeled_ids)
    s_wm = s_w & labeled
    return s_wm, s_w - s_wm


def build_window_selection(
    node_id: str,
    window_start: datetime,
    window_end: datetime,
    s_w: Iterable[str],
    labeled_ids: Iterable[str],
) -> WindowSelection:
    s_w = frozenset(s_w)
    s_wm, s_wnh = split_labeled(s_w, labeled_ids)
    return WindowSelection(
        node_id=node_id,
        window_start=window_start,
        window_end=window_end,
        s_w=s_w,
        s_wm=frozenset(s_wm),
        s_wnh=frozenset(s_wnh),
    )


def num_disjoint_sets(pool_size: int, config: PartitionConfig) -> int:
    """How many disjoint sets the unlabeled pool splits into.

    Ceiling division so the base allocation never pushes one set past the
    per-run cap; an empty pool yields zero sets.
    """
    if pool_size < 0:
        raise ValueError(f"pool_size must be >= 0, got {pool_size}")
    if pool_size == 0:
        return 0
    return max(1, math.ceil(pool_size / config.n_smax))


def assign_disjoint_sets(
    records: Sequence[EmbeddingRecord],
    n_ds: int,
    n_smax: int | None = None,
) -> PartitionPlan:
    """Distribute unlabeled records into ``n_ds`` prioritized disjoint sets.

    Per top-1 class, samples sorted by ascending top-1 probability are
    placed so that more uncertain samples land in lower-numbered sets:

    - fewer samples than sets: all go to set 1;
    - exactly as many: the k-th most uncertain goes to set k;
    - more: dealt in ascending-probability blocks, the first
      ``count mod n_ds`` sets receiving one extra sample.

    When ``n_smax`` is given and rule-crowded set 1 exceeds it, the
    least-uncertain samples that rule one placed there spill to set 2 (and
    onward), keeping per-class probability monotonicity intact.
    """
    if n_ds < 1:
        raise ValueError(f"n_ds must be >= 1, got {n_ds}")

    by_class: dict[int, list[EmbeddingRecord]] = {}
    for rec in records:
        by_class.setdefault(rec.top1_class, []).append(rec)

    sets: list[set[str]] = [set() for _ in range(n_ds)]
    assignments: dict[str, Assignment] = {}
    class_buckets: dict[int, int] = {}

    for cls in sorted(by_class):
        members = sorted(by_class[cls], key=lambda r: (r.top1_prob, r.audio_id))
        count = len(members)
        class_buckets[cls] = count
        if count < n_ds:
            for rec in members:
                sets[0].add(rec.audio_id)
                assignments[rec.audio_id] = Assignment(rec.audio_id, 1, RULE_ALL_TO_FIRST)
        elif count == n_ds:
            for j, rec in enumerate(members, start=1):
                sets[j - 1].add(rec.audio_id)
                assignments[rec.audio_id] = Assignment(rec.audio_id, j, RULE_ONE_PER_SET)
        else:
            base, extra = divmod(count, n_ds)
            cursor = 0
            for j in range(1, n_ds + 1):
                take = base + (1 if j <= extra else 0)
                for rec in members[cursor : cursor + take]:
                    sets[j - 1].add(rec.audio_id)
                    assignments[rec.audio_id] = Assignment(rec.audio_id, j, RULE_DEAL_BALANCED)
                cursor += take

    plan = PartitionPlan(n_ds=n_ds, sets=sets, class_buckets=class_buckets, assignments=assignments)
    if n_smax is not None:
        _spill_crowded_sets(plan, {r.audio_id: r for r in records}, n_smax)
    return plan


def _spill_crowded_sets(
    plan: PartitionPlan, by_id: dict[str, EmbeddingRecord], n_smax: int
) -> None:
    # Only rule-one samples move: they are the ones that crowded set 1 past
    # the cap, and taking the highest-probability slice keeps each class's
    # probability ordering across sets intact.
    for j in range(len(plan.sets) - 1):
        excess = len(plan.sets[j]) - n_smax
        if excess <= 0:
            continue
        movable = [
            aid
            for aid in plan.sets[j]
            if plan.assignments[aid].rule == RULE_ALL_TO_FIRST
        ]
        # least uncertain first: probability descending, id ascending
        movable.sort(key=lambda a: (-by_id[a].top1_prob, a))
        for aid in movable[:excess]:
            plan.sets[j].discard(aid)
            plan.sets[j + 1].add(aid)
            old = plan.assignments[aid]
            plan.assignments[aid] = Assignment(aid, j + 2, old.rule, spilled=True)


def check_plan_invariants(plan: PartitionPlan, records: Sequence[EmbeddingRecord]) -> None:
    """Raise AssertionError when disjointness, coverage, or per-class
    probability monotonicity is violated. Used by tests and the CLI audit."""
    seen: set[str] = set()
    for s in plan.sets:
        overlap = seen & s
        assert not overlap, f"sets overlap on {sorted(overlap)[:3]}"
        seen |= s
    expected = {r.audio_id for r in records}
    assert seen == expected, "union of sets does not equal the input pool"

    by_id = {r.audio_id: r for r in records}
    per_class_minmax: dict[tuple[int, int], list[float]] = {}
    for aid, assignment in plan.assignments.items():
        rec = by_id[aid]
        key = (rec.top1_class, assignment.set_index)
        per_class_minmax.setdefault(key, []).append(rec.top1_prob)
    for cls in {r.top1_class for r in records}:
        indices = sorted(j for (c, j) in per_class_minmax if c == cls)
        for lo, hi in zip(indices, indices[1:]):
            assert max(per_class_minmax[(cls, lo)]) <= min(per_class_minmax[(cls, hi)]) + 1e-12, (
                f"class {cls}: probability ordering broken between sets {lo} and {hi}"
            )
