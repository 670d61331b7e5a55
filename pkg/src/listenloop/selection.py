"""Sample-selection machinery: medoid pools, label propagation, the
bootstrap proposal of cluster medoids, and mismatch-first committee
selection with farthest-point diversity ordering."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

import numpy as np

from .domain import EmbeddingRecord
from .errors import BudgetExceedsPool, EmptyMedoidPool
from .kmedoids import k_medoids

PROV_MAL_MEDOID = "mal_medoid"
PROV_MISMATCH = "mismatch"
PROV_UNCERTAINTY_FILL = "uncertainty_fill"
PROV_RANDOM_BASELINE = "random_baseline"


@dataclass(frozen=True)
class MedoidEntry:
    audio_id: str
    class_id: int
    vector: np.ndarray


@dataclass(frozen=True)
class LabeledAudio:
    """A consensus-labeled audio with the iteration seq that promoted it."""

    audio_id: str
    class_id: int
    promoted_seq: int


@dataclass
class MedoidPool:
    entries: list[MedoidEntry]
    capacity: int

    def __post_init__(self) -> None:
        if self.capacity < 1:
            raise ValueError(f"medoid capacity must be >= 1, got {self.capacity}")
        if len(self.entries) > self.capacity:
            raise ValueError(f"{len(self.entries)} entries exceed capacity {self.capacity}")

    def __len__(self) -> int:
        return len(self.entries)

    @property
    def audio_ids(self) -> list[str]:
        return [e.audio_id for e in self.entries]


@dataclass(frozen=True)
class CommitteePrediction:
    audio_id: str
    propagated_class: int
    classifier_class: int
    classifier_confidence: float

    def __post_init__(self) -> None:
        if not 0.0 <= self.classifier_confidence <= 1.0:
            raise ValueError(f"confidence must be in [0, 1], got {self.classifier_confidence}")

    @property
    def mismatch(self) -> bool:
        return self.propagated_class != self.classifier_class


@dataclass(frozen=True)
class Proposal:
    audio_id: str
    rank: int
    provenance: str
    assigned_group: str | None = None


@dataclass
class ProposalBatch:
    iteration_id: str
    proposals: list[Proposal]
    budget: int

    def __post_init__(self) -> None:
        if self.budget < 1:
            raise ValueError(f"budget must be >= 1, got {self.budget}")
        if len(self.proposals) > self.budget:
            raise ValueError(f"{len(self.proposals)} proposals exceed budget {self.budget}")
        ids = [p.audio_id for p in self.proposals]
        if len(ids) != len(set(ids)):
            raise ValueError("duplicate audio in proposal batch")

    @property
    def audio_ids(self) -> list[str]:
        return [p.audio_id for p in self.proposals]

    def provenance_counts(self) -> dict[str, int]:
        counts: dict[str, int] = {}
        for p in self.proposals:
            counts[p.provenance] = counts.get(p.provenance, 0) + 1
        return counts


def nearest_medoid(
    vectors: np.ndarray, medoid_vectors: np.ndarray, chunk: int = 512
) -> tuple[np.ndarray, np.ndarray]:
    """Index of the nearest medoid and the squared distance, per row.

    Distances are accumulated per pair with the direct (x - m)^2 sum so
    exact ties resolve identically to a naive scan; chunking keeps memory
    bounded for large pools.
    """
    x = np.asarray(vectors, dtype=np.float64)
    m = np.asarray(medoid_vectors, dtype=np.float64)
    indices = np.empty(x.shape[0], dtype=np.int64)
    dists = np.empty(x.shape[0], dtype=np.float64)
    for start in range(0, x.shape[0], chunk):
        block = x[start : start + chunk]
        diff = block[:, None, :] - m[None, :, :]
        d2 = np.einsum("ijk,ijk->ij", diff, diff)
        indices[start : start + chunk] = np.argmin(d2, axis=1)
        dists[start : start + chunk] = d2[np.arange(block.shape[0]), indices[start : start + chunk]]
    return indices, dists


def propagate_labels(
    pool: MedoidPool, records: Sequence[EmbeddingRecord]
) -> dict[str, int]:
    """Give every record the class of its nearest medoid.

    Exact distance ties go to the medoid with the lowest audio id.
    """
    if not pool.entries:
        raise EmptyMedoidPool("cannot propagate labels from an empty medoid pool")
    if not records:
        return {}
    entries = sorted(pool.entries, key=lambda e: e.audio_id)
    medoid_vectors = np.stack([e.vector for e in entries]).astype(np.float64)
    vectors = np.stack([r.vector for r in records]).astype(np.float64)
    indices, _ = nearest_medoid(vectors, medoid_vectors)
    return {rec.audio_id: entries[idx].class_id for rec, idx in zip(records, indices)}


def propagation_distances(
    pool: MedoidPool, records: Sequence[EmbeddingRecord]
) -> dict[str, float]:
    """Euclidean distance from each record to its nearest medoid."""
    if not pool.entries:
        raise EmptyMedoidPool("cannot measure distances against an empty medoid pool")
    if not records:
        return {}
    entries = sorted(pool.entries, key=lambda e: e.audio_id)
    medoid_vectors = np.stack([e.vector for e in entries]).astype(np.float64)
    vectors = np.stack([r.vector for r in records]).astype(np.float64)
    _, d2 = nearest_medoid(vectors, medoid_vectors)
    return {rec.audio_id: float(np.sqrt(d)) for rec, d in zip(records, d2)}


def select_medoids(
    window_labeled: Sequence[LabeledAudio],
    same_node_other_windows: Sequence[LabeledAudio],
    other_nodes: Sequence[LabeledAudio],
    n_mmax: int,
    vectors: Mapping[str, np.ndarray],
) -> MedoidPool:
    """Fill the medoid pool in strict tier order up to its capacity.

    Within a tier the most recently promoted labels win, ties broken by
    audio id. Labeled audios without a loaded embedding are skipped: they
    cannot serve as propagation anchors.
    """
    entries: list[MedoidEntry] = []
    for tier in (window_labeled, same_node_other_windows, other_nodes):
        for item in sorted(tier, key=lambda a: (-a.promoted_seq, a.audio_id)):
            if len(entries) >= n_mmax:
                break
            vec = vectors.get(item.audio_id)
            if vec is None:
                continue
            entries.append(MedoidEntry(item.audio_id, item.class_id, np.asarray(vec)))
        if len(entries) >= n_mmax:
            break
    return MedoidPool(entries=entries, capacity=n_mmax)


def mal_bootstrap(
    records: Sequence[EmbeddingRecord],
    k: int,
    iteration_id: str,
    budget: int | None = None,
    seed: int = 0,
) -> ProposalBatch:
    """First-iteration proposal: the k medoids of the unlabeled pool."""
    if k > len(records):
        raise BudgetExceedsPool(f"k={k} exceeds pool of {len(records)} records")
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    ordered = sorted(records, key=lambda r: r.audio_id)
    points = np.stack([r.vector for r in ordered]).astype(np.float64)
    result = k_medoids(points, k, seed=seed)
    proposals = [
        Proposal(audio_id=ordered[idx].audio_id, rank=rank, provenance=PROV_MAL_MEDOID)
        for rank, idx in enumerate(result.medoid_indices, start=1)
    ]
    return ProposalBatch(iteration_id=iteration_id, proposals=proposals, budget=budget or k)


def mismatch_first_select(
    predictions: Sequence[CommitteePrediction],
    already_selected: Iterable[str],
    budget: int,
    vectors: Mapping[str, np.ndarray],
    medoid_ids: Iterable[str] = (),
    iteration_id: str = "",
) -> ProposalBatch:
    """Committee selection: disagreements first, diversity-ordered.

    Mismatch candidates are taken by greedy farthest-point order against
    everything already anchoring the space (previous proposals, medoids,
    and picks made so far). Leftover budget is filled with the matched
    samples the classifier is least sure about. Previously proposed audios
    are never proposed again.
    """
    if budget < 1:
        raise ValueError(f"budget must be >= 1, got {budget}")
    already = set(already_selected)
    candidates = [p for p in predictions if p.audio_id not in already]

    mismatches = [p for p in candidates if p.mismatch]
    matches = [p for p in candidates if not p.mismatch]

    reference = [vectors[a] for a in sorted(already) if a in vectors]
    reference += [vectors[m] for m in sorted(set(medoid_ids)) if m in vectors]

    picked: list[Proposal] = []
    if mismatches:
        ids = sorted(p.audio_id for p in mismatches)
        points = np.stack([vectors[a] for a in ids]).astype(np.float64)
        chosen = _farthest_point_order(points, reference, min(budget, len(ids)))
        picked += [
            Proposal(audio_id=ids[i], rank=rank, provenance=PROV_MISMATCH)
            for rank, i in enumerate(chosen, start=1)
        ]

    if len(picked) < budget and matches:
        fill = sorted(matches, key=lambda p: (p.classifier_confidence, p.audio_id))
        for pred in fill[: budget - len(picked)]:
            picked.append(
                Proposal(
                    audio_id=pred.audio_id,
                    rank=len(picked) + 1,
                    provenance=PROV_UNCERTAINTY_FILL,
                )
            )
    return ProposalBatch(iteration_id=iteration_id, proposals=picked, budget=budget)


def _farthest_point_order(
    points: np.ndarray, reference: Sequence[np.ndarray], count: int
) -> list[int]:
    """Greedy farthest-point-first ordering of ``points``.

    Each step picks the point with the largest distance to the nearest of
    (reference points + points picked so far); ties go to the lowest index.
    With no reference at all the first pick is index 0.
    """
    n = points.shape[0]
    if reference:
        ref = np.stack(reference).astype(np.float64)
        _, d2 = nearest_medoid(points, ref)
        nearest = d2
    else:
        nearest = np.full(n, np.inf)

    chosen: list[int] = []
    available = np.ones(n, dtype=bool)
    for _ in range(min(count, n)):
        masked = np.where(available, nearest, -np.inf)
        if np.all(np.isinf(masked)) and masked.max() == np.inf:
            idx = int(np.flatnonzero(available)[0])
        else:
            idx = int(np.argmax(masked))
        chosen.append(idx)
        available[idx] = False
        diff = points - points[idx]
        d2_new = np.einsum("ij,ij->i", diff, diff)
        np.minimum(nearest, d2_new, out=nearest)
    return chosen
