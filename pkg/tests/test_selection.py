from __future__ import annotations

import numpy as np
import pytest

from listenloop.domain import EmbeddingRecord
from listenloop.errors import BudgetExceedsPool, EmptyMedoidPool
from listenloop.selection import (
    PROV_MAL_MEDOID,
    PROV_MISMATCH,
    PROV_UNCERTAINTY_FILL,
    CommitteePrediction,
    LabeledAudio,
    MedoidEntry,
    MedoidPool,
    Proposal,
    ProposalBatch,
    mal_bootstrap,
    mismatch_first_select,
    propagate_labels,
    select_medoids,
)

from .oracles import greedy_diversity_order, nearest_medoid_scan


def rec(audio_id, vector, cls=0, prob=0.5):
    return EmbeddingRecord(audio_id, np.asarray(vector, dtype=np.float32), cls, prob)


def medoid(audio_id, cls, vector):
    return MedoidEntry(audio_id, cls, np.asarray(vector, dtype=np.float64))


class TestPropagation:
    def test_single_medoid_dominates(self):
        pool = MedoidPool([medoid("m1", 7, [0.0, 0.0])], capacity=10)
        records = [rec("a", [1, 2]), rec("b", [5, 5])]
        assert propagate_labels(pool, records) == {"a": 7, "b": 7}

    def test_coincident_record_gets_that_medoid(self):
        pool = MedoidPool(
            [medoid("m1", 1, [0.0, 0.0]), medoid("m2", 2, [4.0, 4.0])], capacity=10
        )
        assert propagate_labels(pool, [rec("a", [4, 4])]) == {"a": 2}

    def test_matches_brute_force_scan(self):
        rng = np.random.default_rng(12)
        medoids = [medoid(f"m{i}", i, rng.normal(size=5)) for i in range(7)]
        pool = MedoidPool(medoids, capacity=10)
        records = [rec(f"r{i:03d}", rng.normal(size=5)) for i in range(100)]
        got = propagate_labels(pool, records)
        oracle_medoids = [(m.audio_id, m.class_id, m.vector.tolist()) for m in medoids]
        for record in records:
            _, expected_cls = nearest_medoid_scan(record.vector.tolist(), oracle_medoids)
            assert got[record.audio_id] == expected_cls

    def test_exact_tie_goes_to_lowest_audio_id(self):
        pool = MedoidPool(
            [medoid("zz", 1, [1.0, 0.0]), medoid("aa", 2, [-1.0, 0.0])], capacity=10
        )
        # record equidistant from both medoids
        assert propagate_labels(pool, [rec("x", [0.0, 3.0])]) == {"x": 2}

    def test_empty_pool_rejected(self):
        with pytest.raises(EmptyMedoidPool):
            propagate_labels(MedoidPool([], capacity=5), [rec("a", [1, 2])])

    def test_invariant_under_power_of_two_scaling(self):
        rng = np.random.default_rng(3)
        medoids = [medoid(f"m{i}", i, rng.normal(size=4)) for i in range(5)]
        records = [rec(f"r{i}", rng.normal(size=4)) for i in range(40)]
        base = propagate_labels(MedoidPool(medoids, capacity=9), records)
        scaled_medoids = [medoid(m.audio_id, m.class_id, m.vector * 4.0) for m in medoids]
        scaled_records = [rec(r.audio_id, r.vector * 4.0) for r in records]
        scaled = propagate_labels(MedoidPool(scaled_medoids, capacity=9), scaled_records)
        assert base == scaled


class TestSelectMedoids:
    def entries(self, prefix, n, seq=1):
        return [LabeledAudio(f"{prefix}{i}", i % 3, promoted_seq=seq) for i in range(n)]

    def vectors_for(self, *tiers):
        return {a.audio_id: np.zeros(3) for tier in tiers for a in tier}

    def test_tier_one_saturates(self):
        t1 = self.entries("w", 6)
        pool = select_medoids(t1, self.entries("n", 4), self.entries("o", 4), 5,
                              self.vectors_for(t1, self.entries("n", 4), self.entries("o", 4)))
        assert len(pool) == 5
        assert all(e.audio_id.startswith("w") for e in pool.entries)

    def test_counting_across_tiers(self):
        t1, t2, t3 = self.entries("w", 2), self.entries("n", 3), self.entries("o", 5)
        pool = select_medoids(t1, t2, t3, 4, self.vectors_for(t1, t2, t3))
        assert [e.audio_id[0] for e in pool.entries] == ["w", "w", "n", "n"]

    def test_all_tiers_empty(self):
        pool = select_medoids([], [], [], 4, {})
        assert len(pool) == 0

    def test_newest_consensus_first_within_tier(self):
        t1 = [
            LabeledAudio("old", 0, promoted_seq=1),
            LabeledAudio("newer", 1, promoted_seq=5),
            LabeledAudio("newest", 2, promoted_seq=9),
        ]
        pool = select_medoids(t1, [], [], 2, {a.audio_id: np.zeros(2) for a in t1})
        assert [e.audio_id for e in pool.entries] == ["newest", "newer"]

    def test_missing_embeddings_skipped(self):
        t1 = self.entries("w", 3)
        vectors = {"w0": np.zeros(2)}
        pool = select_medoids(t1, [], [], 5, vectors)
        assert pool.audio_ids == ["w0"]


class TestMalBootstrap:
    def test_budget_equals_pool_proposes_everything(self):
        records = [rec(f"r{i}", [i, 0]) for i in range(4)]
        batch = mal_bootstrap(records, 4, "it1")
        assert sorted(batch.audio_ids) == [f"r{i}" for i in range(4)]
        assert all(p.provenance == PROV_MAL_MEDOID for p in batch.proposals)

    def test_budget_exceeds_pool(self):
        with pytest.raises(BudgetExceedsPool):
            mal_bootstrap([rec("a", [0, 0])], 2, "it1")

    def test_three_clusters_one_proposal_each(self):
        rng = np.random.default_rng(5)
        records = []
        for c, center in enumerate([[0, 0], [12, 0], [0, 12]]):
            for i in range(5):
                records.append(rec(f"c{c}_{i}", center + 0.3 * rng.normal(size=2)))
        batch = mal_bootstrap(records, 3, "it1", seed=1)
        assert {a.split("_")[0] for a in batch.audio_ids} == {"c0", "c1", "c2"}

    def test_deterministic(self):
        rng = np.random.default_rng(6)
        records = [rec(f"r{i:02d}", rng.normal(size=3)) for i in range(20)]
        a = mal_bootstrap(records, 5, "it1", seed=3)
        b = mal_bootstrap(records, 5, "it1", seed=3)
        assert a.audio_ids == b.audio_ids


def pred(audio_id, propagated, classified, confidence):
    return CommitteePrediction(audio_id, propagated, classified, confidence)


class TestMismatchFirst:
    def test_all_agree_pure_uncertainty_fill(self):
        predictions = [pred(f"a{i}", 1, 1, 0.5 + 0.1 * i) for i in range(4)]
        vectors = {f"a{i}": np.array([float(i), 0.0]) for i in range(4)}
        batch = mismatch_first_select(predictions, set(), 3, vectors)
        assert all(p.provenance == PROV_UNCERTAINTY_FILL for p in batch.proposals)
        # ascending confidence
        assert batch.audio_ids == ["a0", "a1", "a2"]

    def test_saturated_mismatches_pure_mismatch(self):
        predictions = [pred(f"a{i}", 1, 2, 0.9) for i in range(5)]
        vectors = {f"a{i}": np.array([float(i), 0.0]) for i in range(5)}
        batch = mismatch_first_select(predictions, set(), 3, vectors)
        assert len(batch.proposals) == 3
        assert all(p.provenance == PROV_MISMATCH for p in batch.proposals)

    def test_far_mismatch_ranks_before_near_one(self):
        # one mismatch next to the medoid, one far away
        predictions = [pred("near", 1, 2, 0.9), pred("far", 1, 2, 0.9)]
        vectors = {
            "near": np.array([0.5, 0.0]),
            "far": np.array([9.0, 0.0]),
            "medoid": np.array([0.0, 0.0]),
        }
        batch = mismatch_first_select(
            predictions, set(), 2, vectors, medoid_ids=["medoid"]
        )
        assert batch.audio_ids == ["far", "near"]

    def test_matches_greedy_oracle(self):
        rng = np.random.default_rng(9)
        ids = [f"x{i}" for i in range(10)]
        vectors = {a: rng.normal(size=3) for a in ids}
        medoids = {"m1": rng.normal(size=3), "m2": rng.normal(size=3)}
        vectors.update(medoids)
        predictions = [pred(a, 1, 2, 0.5) for a in ids]
        batch = mismatch_first_select(
            predictions, set(), 10, vectors, medoid_ids=list(medoids)
        )
        expected = greedy_diversity_order(
            [(a, vectors[a].tolist()) for a in ids],
            [medoids["m1"].tolist(), medoids["m2"].tolist()],
            10,
        )
        assert batch.audio_ids == expected

    def test_never_reproposes(self):
        predictions = [pred("a", 1, 2, 0.5), pred("b", 1, 2, 0.5), pred("c", 1, 1, 0.4)]
        vectors = {k: np.array([float(i), 1.0]) for i, k in enumerate("abc")}
        batch = mismatch_first_select(predictions, {"a", "c"}, 3, vectors)
        assert batch.audio_ids == ["b"]

    def test_mixed_provenance_ordering(self):
        predictions = [
            pred("mm", 1, 2, 0.9),
            pred("fill1", 1, 1, 0.2),
            pred("fill2", 1, 1, 0.8),
        ]
        vectors = {
            "mm": np.array([1.0, 0.0]),
            "fill1": np.array([2.0, 0.0]),
            "fill2": np.array([3.0, 0.0]),
        }
        batch = mismatch_first_select(predictions, set(), 2, vectors)
        assert [(p.audio_id, p.provenance) for p in batch.proposals] == [
            ("mm", PROV_MISMATCH),
            ("fill1", PROV_UNCERTAINTY_FILL),
        ]


class TestProposalBatch:
    def test_duplicates_rejected(self):
        with pytest.raises(ValueError):
            ProposalBatch("it", [
                Proposal("a", 1, PROV_MISMATCH), Proposal("a", 2, PROV_MISMATCH)
            ], budget=5)

    def test_budget_cap(self):
        with pytest.raises(ValueError):
            ProposalBatch("it", [
                Proposal("a", 1, PROV_MISMATCH), Proposal("b", 2, PROV_MISMATCH)
            ], budget=1)

    def test_provenance_counts(self):
        batch = ProposalBatch("it", [
            Proposal("a", 1, PROV_MISMATCH),
            Proposal("b", 2, PROV_UNCERTAINTY_FILL),
            Proposal("c", 3, PROV_MISMATCH),
        ], budget=5)
        assert batch.provenance_counts() == {PROV_MISMATCH: 2, PROV_UNCERTAINTY_FILL: 1}
