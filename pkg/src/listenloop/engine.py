"""Iteration orchestration: window selection, partitioning, medoid-pool
assembly, and the bootstrap/committee proposal paths, committed atomically.

One iteration runs at a time per window (single-writer contract); replaying
a committed iteration id returns the stored record without recomputation.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass, field, replace
from datetime import datetime, timezone
from typing import Sequence

import numpy as np

from .classifier import DEFAULT_L2, DEFAULT_MAX_ITER, DEFAULT_TOL, train_committee_classifier
from .domain import EmbeddingRecord, WindowSelection
from .errors import IterationInProgress, MissingSidecar, SingleClassDegenerate
from .ingestion import EmbeddingPool
from .partition import (
    DEFAULT_MAX_SAMPLES_PER_RUN,
    PartitionConfig,
    PartitionPlan,
    assign_disjoint_sets,
    build_window_selection,
    num_disjoint_sets,
    select_window,
)
from .persistence import Database, ProposalRow
from .selection import (
    PROV_RANDOM_BASELINE,
    CommitteePrediction,
    LabeledAudio,
    MedoidPool,
    Proposal,
    ProposalBatch,
    mal_bootstrap,
    mismatch_first_select,
    propagate_labels,
    propagation_distances,
    select_medoids,
)

DEFAULT_BUDGET = 400
DEFAULT_MAX_MEDOIDS = 5000

PATH_BOOTSTRAP = "bootstrap"
PATH_COMMITTEE = "committee"
PATH_RANDOM = "random"

STRATEGY_MAL_MF = "mal_mf"
STRATEGY_RANDOM = "random"


@dataclass(frozen=True)
class EngineConfig:
    budget: int = DEFAULT_BUDGET
    n_smax: int = DEFAULT_MAX_SAMPLES_PER_RUN
    n_mmax: int = DEFAULT_MAX_MEDOIDS
    seed: int = 0
    l2: float = DEFAULT_L2
    classifier_max_iter: int = DEFAULT_MAX_ITER
    classifier_tol: float = DEFAULT_TOL

    def __post_init__(self) -> None:
        if self.budget < 1 or self.n_smax < 1 or self.n_mmax < 1:
            raise ValueError("budget, n_smax and n_mmax must all be >= 1")


@dataclass
class ClassifierDiagnostics:
    trained: bool = False
    fallback: bool = False
    n_train: int = 0
    n_classes: int = 0
    iterations: int = 0
    grad_norm: float = 0.0
    train_accuracy: float = 0.0

    def to_dict(self) -> dict:
        return {
            "trained": self.trained, "fallback": self.fallback, "n_train": self.n_train,
            "n_classes": self.n_classes, "iterations": self.iterations,
            "grad_norm": self.grad_norm, "train_accuracy": self.train_accuracy,
        }


@dataclass
class IterationRecord:
    """Full proposal-side bookkeeping of one AL iteration."""

    iteration_id: str
    seq: int
    node_id: str
    window_start: datetime
    window_end: datetime
    selection: WindowSelection
    n_ds: int
    processed_sets: list[int]
    pool_members: dict[str, int]  # audio_id -> disjoint-set index it came from
    medoid_ids: list[str]
    path: str
    batch: ProposalBatch
    classifier: ClassifierDiagnostics | None = None
    fold_count: int = 0
    created_at: datetime = field(default_factory=lambda: datetime.now(timezone.utc))

    @property
    def labeled_pct(self) -> float:
        return self.selection.labeled_pct

    def summary(self) -> dict:
        return {
            "iteration_id": self.iteration_id,
            "seq": self.seq,
            "node_id": self.node_id,
            "window_start": self.window_start.isoformat(),
            "window_end": self.window_end.isoformat(),
            "s_w": len(self.selection.s_w),
            "s_wm": len(self.selection.s_wm),
            "s_wnh": len(self.selection.s_wnh),
            "labeled_pct": self.labeled_pct,
            "n_ds": self.n_ds,
            "processed_sets": self.processed_sets,
            "medoid_count": len(self.medoid_ids),
            "path": self.path,
            "proposal_count": len(self.batch.proposals),
            "provenance_counts": self.batch.provenance_counts(),
            "classifier": self.classifier.to_dict() if self.classifier else None,
        }


class ActiveLearningEngine:
    """Drives AL iterations against one catalog and one embedding pool."""

    def __init__(self, db: Database, pool: EmbeddingPool, config: EngineConfig | None = None):
        self.db = db
        self.pool = pool
        self.config = config or EngineConfig()
        self._window_locks: dict[tuple[str, int, int], threading.Lock] = {}
        self._registry_lock = threading.Lock()

    def window_lock(self, node_id: str, start: datetime, end: datetime) -> threading.Lock:
        key = (node_id, int(start.timestamp()), int(end.timestamp()))
        with self._registry_lock:
            return self._window_locks.setdefault(key, threading.Lock())

    def run_iteration(
        self,
        node_id: str,
        window_start: datetime,
        window_end: datetime,
        budget: int | None = None,
        iteration_id: str | None = None,
        strategy: str = STRATEGY_MAL_MF,
    ) -> IterationRecord:
        if iteration_id is not None and self.db.iteration_exists(iteration_id):
            return self.replay(iteration_id)
        lock = self.window_lock(node_id, window_start, window_end)
        if not lock.acquire(blocking=False):
            raise IterationInProgress(
                f"an iteration is already running for {node_id} "
                f"[{window_start.isoformat()}, {window_end.isoformat()})"
            )
        try:
            return self._run_locked(
                node_id, window_start, window_end, budget, iteration_id, strategy
            )
        finally:
            lock.release()

    # -- internals ---------------------------------------------------------

    def _run_locked(
        self,
        node_id: str,
        window_start: datetime,
        window_end: datetime,
        budget: int | None,
        iteration_id: str | None,
        strategy: str,
    ) -> IterationRecord:
        budget = budget or self.config.budget
        if budget < 1:
            raise ValueError(f"budget must be >= 1, got {budget}")
        if strategy not in (STRATEGY_MAL_MF, STRATEGY_RANDOM):
            raise ValueError(f"unknown strategy {strategy!r}")

        s_w = select_window(self.db, node_id, window_start, window_end)
        if not s_w:
            raise ValueError(f"window contains no audios for node {node_id!r}")
        missing = [a for a in sorted(s_w) if a not in self.pool]
        if missing:
            raise MissingSidecar(
                f"{len(missing)} window audios lack embeddings, first: {missing[0]!r}"
            )

        labeled = self.db.labeled_audios()
        selection = build_window_selection(
            node_id, window_start, window_end, s_w, (l.audio_id for l in labeled)
        )

        unlabeled_records = self.pool.subset(sorted(selection.s_wnh))
        n_ds = num_disjoint_sets(len(unlabeled_records), PartitionConfig(self.config.n_smax))
        plan: PartitionPlan | None = None
        if n_ds > 0:
            plan = assign_disjoint_sets(unlabeled_records, n_ds, n_smax=self.config.n_smax)

        already_proposed = self.db.proposed_audio_ids()
        processed_sets, pool_members, candidates = self._gather_candidates(
            plan, already_proposed, budget
        )

        seq = self.db.next_iteration_seq()
        iteration_id = iteration_id or f"it{seq:04d}"
        groups = self.db.labeler_groups()

        if strategy == STRATEGY_RANDOM:
            path = PATH_RANDOM
            medoid_pool = MedoidPool(entries=[], capacity=self.config.n_mmax)
            batch = self._random_batch(candidates, budget, iteration_id, seq)
            diagnostics = None
        else:
            medoid_pool = self._assemble_medoids(selection)
            if len(medoid_pool) == 0:
                path = PATH_BOOTSTRAP
                batch, diagnostics = self._bootstrap_batch(candidates, budget, iteration_id), None
            else:
                path = PATH_COMMITTEE
                batch, diagnostics = self._committee_batch(
                    candidates, medoid_pool, already_proposed, budget, iteration_id
                )

        batch = self._assign_groups(batch, groups)
        record = IterationRecord(
            iteration_id=iteration_id,
            seq=seq,
            node_id=node_id,
            window_start=window_start,
            window_end=window_end,
            selection=selection,
            n_ds=n_ds,
            processed_sets=processed_sets,
            pool_members=pool_members,
            medoid_ids=medoid_pool.audio_ids,
            path=path,
            batch=batch,
            classifier=diagnostics,
            fold_count=len(groups),
        )
        self._commit(record, medoid_pool)
        return record

    def _gather_candidates(
        self,
        plan: PartitionPlan | None,
        already_proposed: set[str],
        budget: int,
    ) -> tuple[list[int], dict[str, int], list[EmbeddingRecord]]:
        """Consume disjoint sets in priority order until the budget is coverable.

        Sets whose fresh members are exhausted are skipped; when the top set
        cannot fill the budget on its own, the next set joins the processed
        pool so batches stay full while candidates remain anywhere.
        """
        processed: list[int] = []
        members: dict[str, int] = {}
        fresh: list[str] = []
        if plan is not None:
            for index, bucket in enumerate(plan.sets, start=1):
                new = sorted(a for a in bucket if a not in already_proposed)
                if not new:
                    continue
                processed.append(index)
                for audio_id in sorted(bucket):
                    members[audio_id] = index
                fresh.extend(new)
                if len(fresh) >= budget:
                    break
        return processed, members, self.pool.subset(sorted(fresh))

    def _assemble_medoids(self, selection: WindowSelection) -> MedoidPool:
        window_tier: list[LabeledAudio] = []
        node_tier: list[LabeledAudio] = []
        other_tier: list[LabeledAudio] = []
        for audio_id, class_id, promoted_seq, node_id, _ in self.db.labeled_audio_details():
            entry = LabeledAudio(audio_id, class_id, promoted_seq)
            if audio_id in selection.s_wm:
                window_tier.append(entry)
            elif node_id == selection.node_id:
                node_tier.append(entry)
            else:
                other_tier.append(entry)
        vectors = {
            a.audio_id: self.pool[a.audio_id].vector
            for a in (*window_tier, *node_tier, *other_tier)
            if a.audio_id in self.pool
        }
        return select_medoids(window_tier, node_tier, other_tier, self.config.n_mmax, vectors)

    def _bootstrap_batch(
        self, candidates: Sequence[EmbeddingRecord], budget: int, iteration_id: str
    ) -> ProposalBatch:
        if not candidates:
            return ProposalBatch(iteration_id=iteration_id, proposals=[], budget=budget)
        k = min(budget, len(candidates))
        return mal_bootstrap(candidates, k, iteration_id, budget=budget, seed=self.config.seed)

    def _committee_batch(
        self,
        candidates: Sequence[EmbeddingRecord],
        medoid_pool: MedoidPool,
        already_proposed: set[str],
        budget: int,
        iteration_id: str,
    ) -> tuple[ProposalBatch, ClassifierDiagnostics]:
        diagnostics = ClassifierDiagnostics()
        if not candidates:
            return (
                ProposalBatch(iteration_id=iteration_id, proposals=[], budget=budget),
                diagnostics,
            )
        propagated = propagate_labels(medoid_pool, candidates)

        labeled = [l for l in self.db.labeled_audios() if l.audio_id in self.pool]
        labeled.sort(key=lambda l: l.audio_id)
        features = np.stack([self.pool[l.audio_id].vector for l in labeled])
        targets = np.array([l.class_id for l in labeled])
        diagnostics.n_train = len(labeled)
        diagnostics.n_classes = len(set(targets.tolist()))

        vectors = np.stack([c.vector for c in candidates]).astype(np.float64)
        try:
            model = train_committee_classifier(
                features, targets,
                l2=self.config.l2,
                max_iter=self.config.classifier_max_iter,
                tol=self.config.classifier_tol,
            )
            diagnostics.trained = True
            diagnostics.iterations = model.n_iter
            diagnostics.grad_norm = model.grad_norm
            diagnostics.train_accuracy = model.train_accuracy
            predicted = model.predict(vectors)
            confidence = model.confidence(vectors)
            predictions = [
                CommitteePrediction(
                    audio_id=c.audio_id,
                    propagated_class=propagated[c.audio_id],
                    classifier_class=int(predicted[i]),
                    classifier_confidence=float(confidence[i]),
                )
                for i, c in enumerate(candidates)
            ]
        except SingleClassDegenerate:
            # propagation-only committee: nothing to disagree with, so rank
            # by how far a candidate sits from its nearest medoid
            diagnostics.fallback = True
            distances = propagation_distances(medoid_pool, candidates)
            predictions = [
                CommitteePrediction(
                    audio_id=c.audio_id,
                    propagated_class=propagated[c.audio_id],
                    classifier_class=propagated[c.audio_id],
                    classifier_confidence=1.0 / (1.0 + distances[c.audio_id]),
                )
                for c in candidates
            ]

        vector_lookup = {c.audio_id: c.vector for c in candidates}
        for audio_id in already_proposed | set(medoid_pool.audio_ids):
            if audio_id in self.pool:
                vector_lookup[audio_id] = self.pool[audio_id].vector
        batch = mismatch_first_select(
            predictions,
            already_selected=already_proposed,
            budget=budget,
            vectors=vector_lookup,
            medoid_ids=medoid_pool.audio_ids,
            iteration_id=iteration_id,
        )
        return batch, diagnostics

    def _random_batch(
        self, candidates: Sequence[EmbeddingRecord], budget: int, iteration_id: str, seq: int
    ) -> ProposalBatch:
        ids = sorted(c.audio_id for c in candidates)
        rng = np.random.default_rng([self.config.seed, seq])
        take = min(budget, len(ids))
        chosen = rng.choice(len(ids), size=take, replace=False)
        proposals = [
            Proposal(audio_id=ids[int(i)], rank=rank, provenance=PROV_RANDOM_BASELINE)
            for rank, i in enumerate(chosen, start=1)
        ]
        return ProposalBatch(iteration_id=iteration_id, proposals=proposals, budget=budget)

    def _assign_groups(self, batch: ProposalBatch, groups) -> ProposalBatch:
        if not groups:
            return batch
        ordered = sorted(g.group_id for g in groups)
        proposals = [
            replace(p, assigned_group=ordered[(p.rank - 1) % len(ordered)])
            for p in batch.proposals
        ]
        return ProposalBatch(
            iteration_id=batch.iteration_id, proposals=proposals, budget=batch.budget
        )

    def _commit(self, record: IterationRecord, medoid_pool: MedoidPool) -> None:
        header = {
            "iteration_id": record.iteration_id,
            "seq": record.seq,
            "node_id": record.node_id,
            "window_start": record.window_start,
            "window_end": record.window_end,
            "audio_count": len(record.selection.s_w),
            "fold_count": record.fold_count,
            "created_at": record.created_at.isoformat(),
            "labeled_pct": record.labeled_pct,
            "n_ds": record.n_ds,
            "budget": record.batch.budget,
            "path": record.path,
            "diag": {
                "processed_sets": record.processed_sets,
                "classifier": record.classifier.to_dict() if record.classifier else None,
            },
        }
        proposal_rows = [
            ProposalRow(
                iteration_id=record.iteration_id,
                audio_id=p.audio_id,
                label=None,
                labeler_count=0,
                agreement_pct=0.0,
                filename=f"{p.audio_id}.wav",
                node_id=record.node_id,
                rank=p.rank,
                provenance=p.provenance,
                assigned_group=p.assigned_group,
                promoted_seq=None,
            )
            for p in record.batch.proposals
        ]
        pool_rows = sorted(record.pool_members.items())
        medoid_rows = [(e.audio_id, e.class_id) for e in medoid_pool.entries]
        self.db.commit_iteration(header, proposal_rows, pool_rows, medoid_rows)

    def replay(self, iteration_id: str) -> IterationRecord:
        """Reconstruct a committed iteration from storage (idempotent rerun)."""
        header = self.db.get_iteration(iteration_id)
        if header is None:
            raise ValueError(f"iteration {iteration_id!r} was never committed")
        proposals = self.db.iteration_proposals(iteration_id)
        pool_rows = self.db.iteration_pool_rows(iteration_id)
        medoid_rows = self.db.iteration_medoid_rows(iteration_id)
        window_ids = set(
            self.db.audio_ids_in_window(
                header["node_id"], header["window_start"], header["window_end"]
            )
        )
        medoid_ids = [audio_id for audio_id, _ in medoid_rows]
        # labeled-at-the-time: promotions carry the seq of the iteration that
        # produced them, so anything promoted by an earlier seq was in s_wm
        labeled_then = {
            l.audio_id for l in self.db.labeled_audios() if l.promoted_seq < header["seq"]
        }
        selection = build_window_selection(
            header["node_id"], header["window_start"], header["window_end"],
            window_ids, labeled_then,
        )
        diag = header.get("diag") or {}
        clf = diag.get("classifier")
        batch = ProposalBatch(
            iteration_id=iteration_id,
            proposals=[
                Proposal(
                    audio_id=p.audio_id, rank=p.rank, provenance=p.provenance,
                    assigned_group=p.assigned_group,
                )
                for p in proposals
            ],
            budget=header["budget"],
        )
        return IterationRecord(
            iteration_id=iteration_id,
            seq=header["seq"],
            node_id=header["node_id"],
            window_start=header["window_start"],
            window_end=header["window_end"],
            selection=selection,
            n_ds=header["n_ds"],
            processed_sets=list(diag.get("processed_sets") or []),
            pool_members=dict(pool_rows),
            medoid_ids=medoid_ids,
            path=header["path"],
            batch=batch,
            classifier=ClassifierDiagnostics(**clf) if clf else None,
            fold_count=header["fold_count"],
        )
