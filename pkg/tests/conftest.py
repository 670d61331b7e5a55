from __future__ import annotations

from datetime import datetime, timezone

import pytest

from listenloop.domain import AudioRecord
from listenloop.ingestion import EmbeddingPool, generate_synthetic_pool, parse_chunk_filename
from listenloop.persistence import Database

WINDOW_START = datetime(2024, 1, 8, tzinfo=timezone.utc)
WINDOW_END = datetime(2024, 1, 9, tzinfo=timezone.utc)


def make_catalog(
    records,
    groups: dict[str, list[str]] | None = None,
    k_classes: int = 0,
    path: str = ":memory:",
) -> tuple[Database, dict[int, int]]:
    """A migrated store holding the given records' audios, optional labeler
    groups, and one ontology class per synthetic truth class."""
    db = Database(path)
    db.migrate()
    audios = []
    for rec in records:
        filename = rec.audio_id + ".wav"
        node_id, recorded_at = parse_chunk_filename(filename)
        db.register_node(node_id)
        audios.append(AudioRecord(
            audio_id=rec.audio_id, filename=filename, node_id=node_id, recorded_at=recorded_at,
        ))
    db.add_audios(audios)
    class_ids = {k: db.add_class(f"class-{k:02d}") for k in range(k_classes)}
    for group_id, labelers in (groups or {}).items():
        for labeler in labelers:
            db.add_labeler(labeler, group_id)
    return db, class_ids


@pytest.fixture
def small_world():
    """Three-cluster pool, catalog, two labeler groups; the workhorse setup."""
    records, truth = generate_synthetic_pool(3, 30, 8, 0.35, seed=11)
    db, class_ids = make_catalog(
        records,
        groups={"g1": ["ana", "ben", "cam"], "g2": ["dee", "eli"]},
        k_classes=3,
    )
    return {
        "records": records,
        "truth": truth,
        "db": db,
        "class_ids": class_ids,
        "pool": EmbeddingPool(records),
    }
