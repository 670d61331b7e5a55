"""Shared vocabulary types and validation used by every other module.

All types here are immutable values: safe to share between threads and to
use as dict keys / set members where hashable.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from datetime import datetime, timezone
from typing import Iterable, Mapping

import numpy as np

from .errors import InactiveClass, OutOfRangeTimes, UnknownClass

DOUBT_NAME = "Doubt"
DEFAULT_CHUNK_SECONDS = 10.0


@dataclass(frozen=True)
class EmbeddingRecord:
    """Fixed-dimension feature vector plus the upstream tagger's top-1 call.

    The vector dimension is a catalog property: all records loaded into one
    pool must share it. ``top1_class`` lives in the upstream tagger's class
    space (an opaque integer), not in the labeling ontology.
    """

    audio_id: str
    vector: np.ndarray
    top1_class: int
    top1_prob: float

    def __post_init__(self) -> None:
        vec = np.asarray(self.vector, dtype=np.float32)
        object.__setattr__(self, "vector", vec)
        if vec.ndim != 1 or vec.size == 0:
            raise ValueError(f"embedding vector must be 1-D and non-empty, got shape {vec.shape}")
        if not np.all(np.isfinite(vec)):
            raise ValueError(f"embedding for {self.audio_id} contains non-finite values")
        if not 0.0 <= self.top1_prob <= 1.0:
            raise ValueError(f"top1_prob must be in [0, 1], got {self.top1_prob}")

    @property
    def dim(self) -> int:
        return int(self.vector.shape[0])


@dataclass(frozen=True)
class AudioRecord:
    """Catalog metadata for one recorded chunk (no waveform data)."""

    audio_id: str
    filename: str
    node_id: str
    recorded_at: datetime
    duration: float = DEFAULT_CHUNK_SECONDS
    sampling_rate: int = 44100
    bits_per_sample: int = 16
    channels: int = 1
    path_id: int | None = None

    def __post_init__(self) -> None:
        if self.duration <= 0:
            raise ValueError(f"duration must be positive, got {self.duration}")
        if self.recorded_at.tzinfo is None:
            object.__setattr__(self, "recorded_at", self.recorded_at.replace(tzinfo=timezone.utc))


@dataclass(frozen=True)
class ChunkAnnotation:
    """One labeler's strong label (class + onset/offset) on one audio."""

    audio_id: str
    labeler_id: str
    class_id: int
    onset: float
    offset: float
    chunk_id: int | None = None

    @property
    def span(self) -> float:
        return self.offset - self.onset


@dataclass(frozen=True)
class OntologyClass:
    class_id: int
    name: str
    origin: str = "seed"  # "seed" | "suggested"
    active: bool = True

    @property
    def is_doubt(self) -> bool:
        return self.name == DOUBT_NAME


@dataclass(frozen=True)
class LabelerGroup:
    group_id: str
    labeler_ids: frozenset[str]

    def __post_init__(self) -> None:
        members = frozenset(self.labeler_ids)
        if not members:
            raise ValueError(f"group {self.group_id} has no members")
        object.__setattr__(self, "labeler_ids", members)

    @property
    def size(self) -> int:
        return len(self.labeler_ids)


@dataclass(frozen=True)
class WindowSelection:
    """The window's sample set and its labeled/unlabeled split.

    Construction enforces the set identity: the full set is exactly the
    disjoint union of the labeled (medoid-candidate) and unlabeled parts.
    """

    node_id: str
    window_start: datetime
    window_end: datetime
    s_w: frozenset[str]
    s_wm: frozenset[str]
    s_wnh: frozenset[str]

    def __post_init__(self) -> None:
        s_w = frozenset(self.s_w)
        s_wm = frozenset(self.s_wm)
        s_wnh = frozenset(self.s_wnh)
        if s_wm & s_wnh:
            raise ValueError("labeled and unlabeled subsets overlap")
        if s_wm | s_wnh != s_w:
            raise ValueError("labeled/unlabeled split does not cover the window set")
        object.__setattr__(self, "s_w", s_w)
        object.__setattr__(self, "s_wm", s_wm)
        object.__setattr__(self, "s_wnh", s_wnh)

    @property
    def labeled_pct(self) -> float:
        """Share of the window that already carries a consensus label."""
        if not self.s_w:
            return 0.0
        return len(self.s_wm) / len(self.s_w)


@dataclass(frozen=True)
class Ontology:
    """Lookup view over the current set of ontology classes."""

    classes: tuple[OntologyClass, ...] = field(default_factory=tuple)

    def __post_init__(self) -> None:
        object.__setattr__(self, "classes", tuple(self.classes))
        names = [c.name for c in self.classes if c.active]
        if len(names) != len(set(names)):
            raise ValueError("active ontology class names must be unique")

    def get(self, class_id: int) -> OntologyClass | None:
        for cls in self.classes:
            if cls.class_id == class_id:
                return cls
        return None

    @property
    def doubt_class_id(self) -> int | None:
        for cls in self.classes:
            if cls.is_doubt and cls.active:
                return cls.class_id
        return None

    @classmethod
    def of(cls, entries: Iterable[OntologyClass]) -> "Ontology":
        return cls(tuple(entries))


def validate_annotation(
    annotation: ChunkAnnotation,
    audio: AudioRecord,
    ontology: Ontology | Mapping[int, OntologyClass],
) -> ChunkAnnotation:
    """Check one annotation against the audio bounds and the ontology.

    Returns the annotation unchanged when valid; raises otherwise.
    """
    if not (0 <= annotation.onset < annotation.offset <= audio.duration):
        raise OutOfRangeTimes(
            f"onset/offset ({annotation.onset}, {annotation.offset}) outside "
            f"[0, {audio.duration}] or inverted for audio {audio.audio_id}"
        )
    if isinstance(ontology, Ontology):
        cls = ontology.get(annotation.class_id)
    else:
        cls = ontology.get(annotation.class_id)
    if cls is None:
        raise UnknownClass(f"class {annotation.class_id} is not in the ontology")
    if not cls.active:
        raise InactiveClass(f"class {annotation.class_id} ({cls.name}) is inactive")
    return annotation
