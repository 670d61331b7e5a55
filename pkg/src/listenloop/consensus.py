"""Turning multi-labeler annotations into medoid labels.

A class becomes the audio's medoid label when at least two thirds of the
group's members annotated it; a labeler marking the same class several
times still counts once toward qualification, though every annotation's
span counts toward the longest-duration tie-break.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence

from .domain import ChunkAnnotation, LabelerGroup
from .errors import ForeignLabeler

DOUBT_RESOLUTION_PERIOD = 10

DECIDED_UNIQUE = "unique_qualifier"
DECIDED_DURATION = "longest_duration"
DECIDED_NONE = "none"


@dataclass(frozen=True)
class ConsensusOutcome:
    audio_id: str
    medoid_class: int | None
    agreement: float
    qualifying_classes: tuple[int, ...]
    decided_by: str

    def __post_init__(self) -> None:
        if (self.medoid_class is None) != (len(self.qualifying_classes) == 0):
            raise ValueError("medoid_class must be absent exactly when nothing qualifies")


def qualification_threshold(group_size: int) -> int:
    """Distinct members needed for a class to qualify: ceil of 2/3 of the group."""
    if group_size < 1:
        raise ValueError(f"group_size must be >= 1, got {group_size}")
    return math.ceil(2 * group_size / 3)


def compute_consensus(
    annotations: Sequence[ChunkAnnotation],
    group: LabelerGroup,
    doubt_class_id: int | None = None,
) -> ConsensusOutcome:
    """Consensus for one audio from one group's annotations.

    Qualification counts distinct labelers per class; among multiple
    qualifiers the greatest summed annotated duration wins (spans summed
    across all annotations, overlaps not merged), exact duration ties going
    to the lowest class id. The Doubt class never qualifies. Agreement is
    the best per-class share of the group, Doubt included.
    """
    audio_id = annotations[0].audio_id if annotations else ""
    labelers_by_class: dict[int, set[str]] = {}
    duration_by_class: dict[int, float] = {}
    for ann in annotations:
        if ann.labeler_id not in group.labeler_ids:
            raise ForeignLabeler(
                f"labeler {ann.labeler_id!r} is not in group {group.group_id!r}"
            )
        if ann.audio_id != audio_id:
            raise ValueError("annotations for several audios passed to one consensus call")
        labelers_by_class.setdefault(ann.class_id, set()).add(ann.labeler_id)
        duration_by_class[ann.class_id] = duration_by_class.get(ann.class_id, 0.0) + ann.span

    agreement = 0.0
    if labelers_by_class:
        agreement = max(len(v) for v in labelers_by_class.values()) / group.size

    threshold = qualification_threshold(group.size)
    qualifiers = [
        cls
        for cls, members in labelers_by_class.items()
        if cls != doubt_class_id and len(members) >= threshold
    ]
    qualifiers.sort(key=lambda cls: (-duration_by_class[cls], cls))

    if not qualifiers:
        return ConsensusOutcome(audio_id, None, agreement, (), DECIDED_NONE)
    decided_by = DECIDED_UNIQUE if len(qualifiers) == 1 else DECIDED_DURATION
    return ConsensusOutcome(audio_id, qualifiers[0], agreement, tuple(qualifiers), decided_by)


def is_doubt_iteration(iteration_index: int, period: int = DOUBT_RESOLUTION_PERIOD) -> bool:
    """True on every ``period``-th labeling iteration (doubt sessions are
    interleaved and do not advance the counter themselves)."""
    if iteration_index < 1:
        raise ValueError(f"iteration_index must be >= 1, got {iteration_index}")
    return iteration_index % period == 0


@dataclass(frozen=True)
class DoubtItem:
    chunk_id: int
    audio_id: str
    labeler_id: str
    onset: float
    offset: float


def build_doubt_worklist(
    labeler_id: str,
    history: Iterable[DoubtItem],
) -> list[DoubtItem]:
    """The labeler's unresolved Doubt chunks, oldest first.

    ``history`` holds every chunk still carrying the Doubt class; a chunk
    leaves the worklist when its class is re-labeled to something else.
    """
    mine = [item for item in history if item.labeler_id == labeler_id]
    mine.sort(key=lambda item: item.chunk_id)
    return mine


@dataclass(frozen=True)
class ConsensusRun:
    iteration_id: str
    outcomes: tuple[ConsensusOutcome, ...]
    promoted: int

    @property
    def consensus_yield(self) -> float:
        return self.promoted / len(self.outcomes) if self.outcomes else 0.0


def run_consensus_for_iteration(db, iteration_id: str) -> ConsensusRun:
    """Compute consensus for every proposal of one iteration and promote
    the qualifying audios to medoids, atomically."""
    doubt_id = db.doubt_class_id()
    groups = {g.group_id: g for g in db.labeler_groups()}
    outcomes: list[ConsensusOutcome] = []
    for proposal in db.iteration_proposals(iteration_id):
        group = groups.get(proposal.assigned_group)
        if group is None:
            continue
        annotations = [
            a
            for a in db.annotations_for_audio(proposal.audio_id)
            if a.labeler_id in group.labeler_ids
        ]
        outcomes.append(compute_consensus(annotations, group, doubt_id) if annotations
                        else ConsensusOutcome(proposal.audio_id, None, 0.0, (), DECIDED_NONE))
    promoted = db.promote_outcomes(outcomes, iteration_id)
    return ConsensusRun(iteration_id, tuple(outcomes), promoted)
