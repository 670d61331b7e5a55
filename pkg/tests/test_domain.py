from __future__ import annotations

from datetime import datetime, timezone

import numpy as np
import pytest
from hypothesis import given, strategies as st

from listenloop.domain import (
    AudioRecord,
    ChunkAnnotation,
    EmbeddingRecord,
    LabelerGroup,
    Ontology,
    OntologyClass,
    WindowSelection,
    validate_annotation,
)
from listenloop.errors import InactiveClass, OutOfRangeTimes, UnknownClass

UTC = timezone.utc


def make_audio(duration=10.0):
    return AudioRecord(
        audio_id="port03_20240108T000010Z",
        filename="port03_20240108T000010Z.wav",
        node_id="port03",
        recorded_at=datetime(2024, 1, 8, 0, 0, 10, tzinfo=UTC),
        duration=duration,
    )


ONTOLOGY = Ontology.of([
    OntologyClass(class_id=1, name="Doubt"),
    OntologyClass(class_id=2, name="Ship horn"),
    OntologyClass(class_id=3, name="Crane", active=False),
])


class TestValidateAnnotation:
    def test_full_span_label_is_valid(self):
        ann = ChunkAnnotation("port03_20240108T000010Z", "ana", 2, onset=0.0, offset=10.0)
        assert validate_annotation(ann, make_audio(), ONTOLOGY) is ann

    def test_inverted_interval_rejected(self):
        ann = ChunkAnnotation("port03_20240108T000010Z", "ana", 2, onset=4.0, offset=3.0)
        with pytest.raises(OutOfRangeTimes):
            validate_annotation(ann, make_audio(), ONTOLOGY)

    def test_offset_past_duration_rejected(self):
        ann = ChunkAnnotation("port03_20240108T000010Z", "ana", 2, onset=0.0, offset=10.5)
        with pytest.raises(OutOfRangeTimes):
            validate_annotation(ann, make_audio(), ONTOLOGY)

    def test_negative_onset_rejected(self):
        ann = ChunkAnnotation("port03_20240108T000010Z", "ana", 2, onset=-0.1, offset=5.0)
        with pytest.raises(OutOfRangeTimes):
            validate_annotation(ann, make_audio(), ONTOLOGY)

    def test_unknown_class_rejected(self):
        ann = ChunkAnnotation("port03_20240108T000010Z", "ana", 99, onset=0.0, offset=5.0)
        with pytest.raises(UnknownClass):
            validate_annotation(ann, make_audio(), ONTOLOGY)

    def test_inactive_class_rejected(self):
        ann = ChunkAnnotation("port03_20240108T000010Z", "ana", 3, onset=0.0, offset=5.0)
        with pytest.raises(InactiveClass):
            validate_annotation(ann, make_audio(), ONTOLOGY)


class TestEmbeddingRecord:
    def test_prob_bounds_enforced(self):
        with pytest.raises(ValueError):
            EmbeddingRecord("a", np.zeros(4), 0, 1.2)

    def test_non_finite_vector_rejected(self):
        with pytest.raises(ValueError):
            EmbeddingRecord("a", np.array([0.0, np.nan]), 0, 0.5)

    def test_vector_coerced_to_float32(self):
        rec = EmbeddingRecord("a", [1.0, 2.0, 3.0], 0, 0.5)
        assert rec.vector.dtype == np.float32
        assert rec.dim == 3


class TestWindowSelection:
    def test_split_identity_enforced_on_overlap(self):
        with pytest.raises(ValueError):
            WindowSelection(
                "port03", datetime(2024, 1, 8, tzinfo=UTC), datetime(2024, 1, 9, tzinfo=UTC),
                s_w=frozenset({"a", "b"}), s_wm=frozenset({"a"}), s_wnh=frozenset({"a", "b"}),
            )

    def test_split_identity_enforced_on_coverage(self):
        with pytest.raises(ValueError):
            WindowSelection(
                "port03", datetime(2024, 1, 8, tzinfo=UTC), datetime(2024, 1, 9, tzinfo=UTC),
                s_w=frozenset({"a", "b", "c"}), s_wm=frozenset({"a"}), s_wnh=frozenset({"b"}),
            )

    def test_labeled_pct(self):
        sel = WindowSelection(
            "port03", datetime(2024, 1, 8, tzinfo=UTC), datetime(2024, 1, 9, tzinfo=UTC),
            s_w=frozenset({"a", "b", "c", "d"}), s_wm=frozenset({"a"}),
            s_wnh=frozenset({"b", "c", "d"}),
        )
        assert sel.labeled_pct == 0.25

    @given(
        ids=st.sets(st.text(alphabet="abcdefgh", min_size=1, max_size=4), max_size=12),
        picks=st.data(),
    )
    def test_identity_holds_for_any_split(self, ids, picks):
        labeled = picks.draw(st.sets(st.sampled_from(sorted(ids)) if ids else st.nothing(),
                                     max_size=len(ids)))
        sel = WindowSelection(
            "n", datetime(2024, 1, 8, tzinfo=UTC), datetime(2024, 1, 9, tzinfo=UTC),
            s_w=frozenset(ids), s_wm=frozenset(labeled), s_wnh=frozenset(ids - labeled),
        )
        assert sel.s_wm | sel.s_wnh == sel.s_w
        assert not (sel.s_wm & sel.s_wnh)


class TestGroupsAndOntology:
    def test_empty_group_rejected(self):
        with pytest.raises(ValueError):
            LabelerGroup("g1", frozenset())

    def test_duplicate_active_names_rejected(self):
        with pytest.raises(ValueError):
            Ontology.of([
                OntologyClass(1, "Ship horn"),
                OntologyClass(2, "Ship horn"),
            ])

    def test_inactive_duplicate_allowed(self):
        ontology = Ontology.of([
            OntologyClass(1, "Ship horn", active=False),
            OntologyClass(2, "Ship horn"),
        ])
        assert ontology.get(2).active
