"""Durable relational storage for the audio catalog and the AL bookkeeping.

Backed by a single-file embedded SQLite store behind a thin port so a
server-based engine could substitute in deployment. Writes are serialized;
iteration commits and annotation batches are transactional (all-or-nothing
at every write boundary, which the tests exercise via the fault hook).
"""

from __future__ import annotations

import csv
import json
import sqlite3
import threading
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path
from typing import Callable, Iterable, Sequence, TextIO

from .consensus import DoubtItem, compute_consensus
from .domain import (
    DOUBT_NAME,
    AudioRecord,
    ChunkAnnotation,
    LabelerGroup,
    Ontology,
    OntologyClass,
    validate_annotation,
)
from .errors import (
    DuplicateName,
    IncompatibleVersion,
    PersistenceFailure,
    UnknownAudio,
    UnknownClass,
    UnknownLabeler,
)
from .selection import LabeledAudio

SCHEMA_VERSION = 1

_SCHEMA = """
CREATE TABLE projects (
    project_id INTEGER PRIMARY KEY,
    name TEXT NOT NULL UNIQUE
);
CREATE TABLE sources (
    source_id INTEGER PRIMARY KEY,
    name TEXT NOT NULL UNIQUE,
    project_id INTEGER NOT NULL REFERENCES projects(project_id)
);
CREATE TABLE node_types (
    node_type_id INTEGER PRIMARY KEY,
    name TEXT NOT NULL UNIQUE
);
CREATE TABLE nodes (
    node_id TEXT PRIMARY KEY,
    source_id INTEGER NOT NULL REFERENCES sources(source_id),
    node_type_id INTEGER NOT NULL REFERENCES node_types(node_type_id)
);
CREATE TABLE paths (
    path_id INTEGER PRIMARY KEY,
    root TEXT NOT NULL UNIQUE
);
CREATE TABLE ontology (
    class_id INTEGER PRIMARY KEY,
    name TEXT NOT NULL,
    origin TEXT NOT NULL DEFAULT 'seed',
    active INTEGER NOT NULL DEFAULT 1,
    available_from_seq INTEGER NOT NULL DEFAULT 0
);
CREATE TABLE labeler_groups (
    group_id TEXT PRIMARY KEY
);
CREATE TABLE labelers (
    labeler_id TEXT PRIMARY KEY,
    group_id TEXT REFERENCES labeler_groups(group_id)
);
CREATE TABLE audios (
    audio_id TEXT PRIMARY KEY,
    filename TEXT NOT NULL,
    node_id TEXT NOT NULL REFERENCES nodes(node_id),
    path_id INTEGER REFERENCES paths(path_id),
    recorded_at INTEGER NOT NULL,
    duration REAL NOT NULL CHECK (duration > 0),
    sampling_rate INTEGER NOT NULL,
    bits_per_sample INTEGER NOT NULL,
    channels INTEGER NOT NULL,
    UNIQUE (node_id, filename)
);
CREATE INDEX idx_audios_window ON audios(node_id, recorded_at);
CREATE TABLE chunks (
    chunk_id INTEGER PRIMARY KEY AUTOINCREMENT,
    audio_id TEXT NOT NULL REFERENCES audios(audio_id),
    class_id INTEGER NOT NULL REFERENCES ontology(class_id),
    labeler_id TEXT NOT NULL REFERENCES labelers(labeler_id),
    onset REAL NOT NULL CHECK (onset >= 0),
    offset REAL NOT NULL,
    CHECK (offset > onset)
);
CREATE INDEX idx_chunks_audio ON chunks(audio_id);
CREATE INDEX idx_chunks_labeler ON chunks(labeler_id, class_id);
CREATE TABLE al_preprocessing (
    iteration_id TEXT PRIMARY KEY,
    seq INTEGER NOT NULL UNIQUE,
    node_id TEXT NOT NULL REFERENCES nodes(node_id),
    window_start INTEGER NOT NULL,
    window_end INTEGER NOT NULL,
    audio_count INTEGER NOT NULL,
    fold_count INTEGER NOT NULL,
    created_at TEXT NOT NULL,
    labeled_pct REAL NOT NULL,
    n_ds INTEGER NOT NULL,
    budget INTEGER NOT NULL,
    path TEXT NOT NULL,
    diag TEXT
);
CREATE TABLE wavs_proposed (
    id INTEGER PRIMARY KEY AUTOINCREMENT,
    iteration_id TEXT NOT NULL REFERENCES al_preprocessing(iteration_id),
    audio_id TEXT NOT NULL UNIQUE REFERENCES audios(audio_id),
    label INTEGER REFERENCES ontology(class_id),
    labeler_count INTEGER NOT NULL DEFAULT 0,
    agreement_pct REAL NOT NULL DEFAULT 0,
    filename TEXT NOT NULL,
    node_id TEXT NOT NULL,
    rank INTEGER NOT NULL,
    provenance TEXT NOT NULL,
    assigned_group TEXT REFERENCES labeler_groups(group_id),
    promoted_seq INTEGER
);
CREATE INDEX idx_proposed_iteration ON wavs_proposed(iteration_id, rank);
CREATE TABLE iteration_pool (
    iteration_id TEXT NOT NULL REFERENCES al_preprocessing(iteration_id),
    audio_id TEXT NOT NULL REFERENCES audios(audio_id),
    set_index INTEGER NOT NULL,
    PRIMARY KEY (iteration_id, audio_id)
);
CREATE TABLE iteration_medoids (
    iteration_id TEXT NOT NULL REFERENCES al_preprocessing(iteration_id),
    audio_id TEXT NOT NULL REFERENCES audios(audio_id),
    class_id INTEGER NOT NULL REFERENCES ontology(class_id),
    PRIMARY KEY (iteration_id, audio_id)
);
CREATE TABLE suggestions (
    suggestion_id INTEGER PRIMARY KEY AUTOINCREMENT,
    name TEXT NOT NULL UNIQUE,
    status TEXT NOT NULL DEFAULT 'pending',
    class_id INTEGER REFERENCES ontology(class_id)
);
CREATE TABLE suggestion_credits (
    suggestion_id INTEGER NOT NULL REFERENCES suggestions(suggestion_id),
    labeler_id TEXT NOT NULL REFERENCES labelers(labeler_id),
    PRIMARY KEY (suggestion_id, labeler_id)
);
"""

_EXPORTABLE_TABLES = (
    "projects", "sources", "node_types", "nodes", "paths", "ontology",
    "labeler_groups", "labelers", "audios", "chunks", "al_preprocessing",
    "wavs_proposed", "iteration_pool", "iteration_medoids", "suggestions",
    "suggestion_credits",
)


def _epoch(dt: datetime) -> int:
    if dt.tzinfo is None:
        dt = dt.replace(tzinfo=timezone.utc)
    return int(dt.timestamp())


def _utc(epoch: int) -> datetime:
    return datetime.fromtimestamp(epoch, tz=timezone.utc)


@dataclass(frozen=True)
class ProposalRow:
    iteration_id: str
    audio_id: str
    label: int | None
    labeler_count: int
    agreement_pct: float
    filename: str
    node_id: str
    rank: int
    provenance: str
    assigned_group: str | None
    promoted_seq: int | None


class Database:
    """Storage port over one SQLite file (or ':memory:' for tests)."""

    def __init__(self, path: str | Path = ":memory:") -> None:
        self.path = str(path)
        self._conn = sqlite3.connect(self.path, isolation_level=None, check_same_thread=False)
        self._conn.execute("PRAGMA foreign_keys = ON")
        self._lock = threading.RLock()
        # Test seam: called before every write inside a transaction so fault
        # injection can prove the all-or-nothing contract.
        self.write_boundary_hook: Callable[[], None] | None = None

    def close(self) -> None:
        self._conn.close()

    # -- plumbing ---------------------------------------------------------

    def _boundary(self) -> None:
        if self.write_boundary_hook is not None:
            self.write_boundary_hook()

    def _transaction(self):
        return _Transaction(self)

    # -- schema -----------------------------------------------------------

    def migrate(self) -> int:
        """Create or upgrade the schema; a no-op at the current version."""
        with self._lock:
            (version,) = self._conn.execute("PRAGMA user_version").fetchone()
            if version > SCHEMA_VERSION:
                raise IncompatibleVersion(
                    f"store is at schema v{version}, this build understands v{SCHEMA_VERSION}"
                )
            if version == SCHEMA_VERSION:
                return version
            with self._transaction():
                for statement in _SCHEMA.split(";\n"):
                    if statement.strip():
                        self._conn.execute(statement)
                self._conn.execute(
                    "INSERT INTO ontology(name, origin, active, available_from_seq) VALUES (?, 'seed', 1, 0)",
                    (DOUBT_NAME,),
                )
                self._conn.execute(f"PRAGMA user_version = {SCHEMA_VERSION}")
            return SCHEMA_VERSION

    # -- catalog registration ----------------------------------------------

    def ensure_project(self, name: str = "default") -> int:
        return self._ensure("projects", "project_id", "name", name, {"name": name})

    def ensure_source(self, name: str = "default", project: str = "default") -> int:
        project_id = self.ensure_project(project)
        return self._ensure(
            "sources", "source_id", "name", name, {"name": name, "project_id": project_id}
        )

    def ensure_node_type(self, name: str = "mains") -> int:
        return self._ensure("node_types", "node_type_id", "name", name, {"name": name})

    def ensure_path(self, root: str) -> int:
        return self._ensure("paths", "path_id", "root", root, {"root": root})

    def _ensure(self, table: str, pk: str, key_col: str, key: str, values: dict) -> int:
        with self._lock:
            row = self._conn.execute(
                f"SELECT {pk} FROM {table} WHERE {key_col} = ?", (key,)
            ).fetchone()
            if row:
                return int(row[0])
            cols = ", ".join(values)
            marks = ", ".join("?" for _ in values)
            cur = self._conn.execute(
                f"INSERT INTO {table}({cols}) VALUES ({marks})", tuple(values.values())
            )
            return int(cur.lastrowid)

    def register_node(self, node_id: str, source: str = "default", node_type: str = "mains") -> None:
        with self._lock:
            source_id = self.ensure_source(source)
            type_id = self.ensure_node_type(node_type)
            self._conn.execute(
                "INSERT OR IGNORE INTO nodes(node_id, source_id, node_type_id) VALUES (?, ?, ?)",
                (node_id, source_id, type_id),
            )

    def has_node(self, node_id: str) -> bool:
        row = self._conn.execute("SELECT 1 FROM nodes WHERE node_id = ?", (node_id,)).fetchone()
        return row is not None

    def add_audio(self, audio: AudioRecord) -> None:
        self.add_audios([audio])

    def add_audios(self, audios: Iterable[AudioRecord]) -> int:
        rows = [
            (
                a.audio_id, a.filename, a.node_id, a.path_id, _epoch(a.recorded_at),
                a.duration, a.sampling_rate, a.bits_per_sample, a.channels,
            )
            for a in audios
        ]
        with self._lock, self._transaction():
            self._boundary()
            self._conn.executemany(
                "INSERT OR IGNORE INTO audios(audio_id, filename, node_id, path_id, recorded_at,"
                " duration, sampling_rate, bits_per_sample, channels)"
                " VALUES (?, ?, ?, ?, ?, ?, ?, ?, ?)",
                rows,
            )
        return len(rows)

    def get_audio(self, audio_id: str) -> AudioRecord | None:
        row = self._conn.execute(
            "SELECT audio_id, filename, node_id, path_id, recorded_at, duration,"
            " sampling_rate, bits_per_sample, channels FROM audios WHERE audio_id = ?",
            (audio_id,),
        ).fetchone()
        if row is None:
            return None
        return AudioRecord(
            audio_id=row[0], filename=row[1], node_id=row[2], path_id=row[3],
            recorded_at=_utc(row[4]), duration=row[5], sampling_rate=row[6],
            bits_per_sample=row[7], channels=row[8],
        )

    def audio_count(self) -> int:
        return int(self._conn.execute("SELECT COUNT(*) FROM audios").fetchone()[0])

    def audio_ids_in_window(
        self, node_id: str, window_start: datetime, window_end: datetime
    ) -> list[str]:
        rows = self._conn.execute(
            "SELECT audio_id FROM audios WHERE node_id = ? AND recorded_at >= ? AND recorded_at < ?"
            " ORDER BY audio_id",
            (node_id, _epoch(window_start), _epoch(window_end)),
        ).fetchall()
        return [r[0] for r in rows]

    # -- labelers and groups -------------------------------------------------

    def add_group(self, group_id: str) -> None:
        with self._lock:
            self._conn.execute(
                "INSERT OR IGNORE INTO labeler_groups(group_id) VALUES (?)", (group_id,)
            )

    def add_labeler(self, labeler_id: str, group_id: str | None = None) -> None:
        with self._lock:
            if group_id is not None:
                self.add_group(group_id)
            self._conn.execute(
                "INSERT OR REPLACE INTO labelers(labeler_id, group_id) VALUES (?, ?)",
                (labeler_id, group_id),
            )

    def has_labeler(self, labeler_id: str) -> bool:
        return (
            self._conn.execute(
                "SELECT 1 FROM labelers WHERE labeler_id = ?", (labeler_id,)
            ).fetchone()
            is not None
        )

    def group_of(self, labeler_id: str) -> str | None:
        row = self._conn.execute(
            "SELECT group_id FROM labelers WHERE labeler_id = ?", (labeler_id,)
        ).fetchone()
        return row[0] if row else None

    def labeler_groups(self) -> list[LabelerGroup]:
        rows = self._conn.execute(
            "SELECT group_id, labeler_id FROM labelers WHERE group_id IS NOT NULL"
            " ORDER BY group_id, labeler_id"
        ).fetchall()
        members: dict[str, set[str]] = {}
        for group_id, labeler_id in rows:
            members.setdefault(group_id, set()).add(labeler_id)
        return [LabelerGroup(g, frozenset(m)) for g, m in sorted(members.items())]

    def get_group(self, group_id: str) -> LabelerGroup | None:
        for group in self.labeler_groups():
            if group.group_id == group_id:
                return group
        return None

    # -- ontology -------------------------------------------------------------

    def add_class(
        self, name: str, origin: str = "seed", available_from_seq: int = 0
    ) -> int:
        with self._lock:
            row = self._conn.execute(
                "SELECT class_id FROM ontology WHERE name = ? AND active = 1", (name,)
            ).fetchone()
            if row:
                raise DuplicateName(f"active ontology class {name!r} already exists")
            cur = self._conn.execute(
                "INSERT INTO ontology(name, origin, active, available_from_seq) VALUES (?, ?, 1, ?)",
                (name, origin, available_from_seq),
            )
            return int(cur.lastrowid)

    def ontology(self) -> Ontology:
        rows = self._conn.execute(
            "SELECT class_id, name, origin, active FROM ontology ORDER BY class_id"
        ).fetchall()
        return Ontology.of(
            OntologyClass(class_id=r[0], name=r[1], origin=r[2], active=bool(r[3])) for r in rows
        )

    def ontology_available_at(self, seq: int) -> Ontology:
        rows = self._conn.execute(
            "SELECT class_id, name, origin, active FROM ontology"
            " WHERE active = 1 AND available_from_seq <= ? ORDER BY class_id",
            (seq,),
        ).fetchall()
        return Ontology.of(
            OntologyClass(class_id=r[0], name=r[1], origin=r[2], active=bool(r[3])) for r in rows
        )

    def class_available_from(self, class_id: int) -> int | None:
        row = self._conn.execute(
            "SELECT available_from_seq FROM ontology WHERE class_id = ?", (class_id,)
        ).fetchone()
        return int(row[0]) if row else None

    def doubt_class_id(self) -> int:
        row = self._conn.execute(
            "SELECT class_id FROM ontology WHERE name = ? AND active = 1", (DOUBT_NAME,)
        ).fetchone()
        if row is None:
            raise PersistenceFailure("reserved Doubt class missing; run migrate()")
        return int(row[0])

    # -- ontology suggestions ---------------------------------------------------

    def suggest_class(self, labeler_id: str, name: str) -> int:
        """File (or co-sign) a suggestion; duplicate active names are rejected."""
        name = name.strip()
        if not name:
            raise ValueError("suggested name must be non-empty")
        with self._lock:
            if not self.has_labeler(labeler_id):
                raise UnknownLabeler(f"labeler {labeler_id!r} is not registered")
            active = self._conn.execute(
                "SELECT 1 FROM ontology WHERE name = ? AND active = 1", (name,)
            ).fetchone()
            if active:
                raise DuplicateName(f"class {name!r} is already active")
            row = self._conn.execute(
                "SELECT suggestion_id FROM suggestions WHERE name = ?", (name,)
            ).fetchone()
            if row:
                suggestion_id = int(row[0])
            else:
                cur = self._conn.execute(
                    "INSERT INTO suggestions(name, status) VALUES (?, 'pending')", (name,)
                )
                suggestion_id = int(cur.lastrowid)
            self._conn.execute(
                "INSERT OR IGNORE INTO suggestion_credits(suggestion_id, labeler_id) VALUES (?, ?)",
                (suggestion_id, labeler_id),
            )
            return suggestion_id

    def approve_suggestion(self, suggestion_id: int) -> int:
        """Create the class; it becomes usable from the next created iteration."""
        with self._lock:
            row = self._conn.execute(
                "SELECT name, status, class_id FROM suggestions WHERE suggestion_id = ?",
                (suggestion_id,),
            ).fetchone()
            if row is None:
                raise PersistenceFailure(f"suggestion {suggestion_id} does not exist")
            name, status, class_id = row
            if status == "approved" and class_id is not None:
                return int(class_id)
            available_from = self.next_iteration_seq()
            class_id = self.add_class(name, origin="suggested", available_from_seq=available_from)
            self._conn.execute(
                "UPDATE suggestions SET status = 'approved', class_id = ? WHERE suggestion_id = ?",
                (class_id, suggestion_id),
            )
            return class_id

    def pending_suggestions(self) -> list[tuple[int, str, list[str]]]:
        rows = self._conn.execute(
            "SELECT s.suggestion_id, s.name, c.labeler_id FROM suggestions s"
            " LEFT JOIN suggestion_credits c ON c.suggestion_id = s.suggestion_id"
            " WHERE s.status = 'pending' ORDER BY s.suggestion_id, c.labeler_id"
        ).fetchall()
        out: dict[int, tuple[str, list[str]]] = {}
        for sid, name, labeler in rows:
            entry = out.setdefault(int(sid), (name, []))
            if labeler:
                entry[1].append(labeler)
        return [(sid, name, credits) for sid, (name, credits) in out.items()]

    # -- iterations ----------------------------------------------------------

    def next_iteration_seq(self) -> int:
        row = self._conn.execute("SELECT COALESCE(MAX(seq), 0) FROM al_preprocessing").fetchone()
        return int(row[0]) + 1

    def iteration_exists(self, iteration_id: str) -> bool:
        return (
            self._conn.execute(
                "SELECT 1 FROM al_preprocessing WHERE iteration_id = ?", (iteration_id,)
            ).fetchone()
            is not None
        )

    def get_iteration(self, iteration_id: str) -> dict | None:
        row = self._conn.execute(
            "SELECT iteration_id, seq, node_id, window_start, window_end, audio_count,"
            " fold_count, created_at, labeled_pct, n_ds, budget, path, diag"
            " FROM al_preprocessing WHERE iteration_id = ?",
            (iteration_id,),
        ).fetchone()
        if row is None:
            return None
        return {
            "iteration_id": row[0], "seq": row[1], "node_id": row[2],
            "window_start": _utc(row[3]), "window_end": _utc(row[4]),
            "audio_count": row[5], "fold_count": row[6], "created_at": row[7],
            "labeled_pct": row[8], "n_ds": row[9], "budget": row[10],
            "path": row[11], "diag": json.loads(row[12]) if row[12] else None,
        }

    def iterations(self) -> list[dict]:
        rows = self._conn.execute(
            "SELECT iteration_id FROM al_preprocessing ORDER BY seq"
        ).fetchall()
        return [self.get_iteration(r[0]) for r in rows]

    def commit_iteration(
        self,
        header: dict,
        proposals: Sequence[ProposalRow],
        pool_rows: Sequence[tuple[str, int]],
        medoid_rows: Sequence[tuple[str, int]],
    ) -> str:
        """Write one iteration atomically; replaying a committed id is a no-op."""
        iteration_id = header["iteration_id"]
        with self._lock:
            if self.iteration_exists(iteration_id):
                return iteration_id
            with self._transaction():
                self._boundary()
                self._conn.execute(
                    "INSERT INTO al_preprocessing(iteration_id, seq, node_id, window_start,"
                    " window_end, audio_count, fold_count, created_at, labeled_pct, n_ds,"
                    " budget, path, diag) VALUES (?, ?, ?, ?, ?, ?, ?, ?, ?, ?, ?, ?, ?)",
                    (
                        iteration_id, header["seq"], header["node_id"],
                        _epoch(header["window_start"]), _epoch(header["window_end"]),
                        header["audio_count"], header["fold_count"], header["created_at"],
                        header["labeled_pct"], header["n_ds"], header["budget"],
                        header["path"], json.dumps(header.get("diag")),
                    ),
                )
                for row in proposals:
                    self._boundary()
                    self._conn.execute(
                        "INSERT INTO wavs_proposed(iteration_id, audio_id, label, labeler_count,"
                        " agreement_pct, filename, node_id, rank, provenance, assigned_group,"
                        " promoted_seq) VALUES (?, ?, ?, ?, ?, ?, ?, ?, ?, ?, ?)",
                        (
                            row.iteration_id, row.audio_id, row.label, row.labeler_count,
                            row.agreement_pct, row.filename, row.node_id, row.rank,
                            row.provenance, row.assigned_group, row.promoted_seq,
                        ),
                    )
                self._boundary()
                self._conn.executemany(
                    "INSERT INTO iteration_pool(iteration_id, audio_id, set_index) VALUES (?, ?, ?)",
                    [(iteration_id, audio_id, set_index) for audio_id, set_index in pool_rows],
                )
                self._boundary()
                self._conn.executemany(
                    "INSERT INTO iteration_medoids(iteration_id, audio_id, class_id) VALUES (?, ?, ?)",
                    [(iteration_id, audio_id, class_id) for audio_id, class_id in medoid_rows],
                )
            return iteration_id

    def iteration_proposals(self, iteration_id: str) -> list[ProposalRow]:
        rows = self._conn.execute(
            "SELECT iteration_id, audio_id, label, labeler_count, agreement_pct, filename,"
            " node_id, rank, provenance, assigned_group, promoted_seq"
            " FROM wavs_proposed WHERE iteration_id = ? ORDER BY rank",
            (iteration_id,),
        ).fetchall()
        return [ProposalRow(*row) for row in rows]

    def proposal_for_audio(self, audio_id: str) -> ProposalRow | None:
        row = self._conn.execute(
            "SELECT iteration_id, audio_id, label, labeler_count, agreement_pct, filename,"
            " node_id, rank, provenance, assigned_group, promoted_seq"
            " FROM wavs_proposed WHERE audio_id = ?",
            (audio_id,),
        ).fetchone()
        return ProposalRow(*row) if row else None

    def proposed_audio_ids(self) -> set[str]:
        rows = self._conn.execute("SELECT audio_id FROM wavs_proposed").fetchall()
        return {r[0] for r in rows}

    def iteration_pool_rows(self, iteration_id: str) -> list[tuple[str, int]]:
        rows = self._conn.execute(
            "SELECT audio_id, set_index FROM iteration_pool WHERE iteration_id = ? ORDER BY audio_id",
            (iteration_id,),
        ).fetchall()
        return [(r[0], r[1]) for r in rows]

    def iteration_medoid_rows(self, iteration_id: str) -> list[tuple[str, int]]:
        rows = self._conn.execute(
            "SELECT audio_id, class_id FROM iteration_medoids WHERE iteration_id = ? ORDER BY audio_id",
            (iteration_id,),
        ).fetchall()
        return [(r[0], r[1]) for r in rows]

    # -- labels and annotations ------------------------------------------------

    def labeled_audios(self) -> list[LabeledAudio]:
        """Every audio carrying a consensus medoid label."""
        rows = self._conn.execute(
            "SELECT audio_id, label, promoted_seq FROM wavs_proposed WHERE label IS NOT NULL"
        ).fetchall()
        return [LabeledAudio(r[0], int(r[1]), int(r[2] or 0)) for r in rows]

    def labeled_audio_details(self) -> list[tuple[str, int, int, str, int]]:
        """(audio_id, class_id, promoted_seq, node_id, recorded_at) per labeled audio."""
        rows = self._conn.execute(
            "SELECT w.audio_id, w.label, COALESCE(w.promoted_seq, 0), a.node_id, a.recorded_at"
            " FROM wavs_proposed w JOIN audios a ON a.audio_id = w.audio_id"
            " WHERE w.label IS NOT NULL"
        ).fetchall()
        return [(r[0], int(r[1]), int(r[2]), r[3], int(r[4])) for r in rows]

    def record_annotations(self, batch: Sequence[ChunkAnnotation]) -> int:
        """Append validated annotations and refresh proposal agreement fields."""
        if not batch:
            return 0
        ontology = self.ontology()
        audios: dict[str, AudioRecord] = {}
        for ann in batch:
            if ann.audio_id not in audios:
                audio = self.get_audio(ann.audio_id)
                if audio is None:
                    raise UnknownAudio(f"audio {ann.audio_id!r} is not in the catalog")
                audios[ann.audio_id] = audio
            if not self.has_labeler(ann.labeler_id):
                raise UnknownLabeler(f"labeler {ann.labeler_id!r} is not registered")
            validate_annotation(ann, audios[ann.audio_id], ontology)
            # classes never become usable mid-iteration: a suggested class is
            # annotatable only on proposals of iterations created after approval
            proposal = self.proposal_for_audio(ann.audio_id)
            if proposal is not None:
                iteration = self.get_iteration(proposal.iteration_id)
                available_from = self.class_available_from(ann.class_id)
                if (
                    iteration is not None
                    and available_from is not None
                    and available_from > iteration["seq"]
                ):
                    raise UnknownClass(
                        f"class {ann.class_id} only becomes available from iteration"
                        f" {available_from}, audio was proposed in iteration {iteration['seq']}"
                    )
        with self._lock, self._transaction():
            for ann in batch:
                self._boundary()
                self._conn.execute(
                    "INSERT INTO chunks(audio_id, class_id, labeler_id, onset, offset)"
                    " VALUES (?, ?, ?, ?, ?)",
                    (ann.audio_id, ann.class_id, ann.labeler_id, ann.onset, ann.offset),
                )
            for audio_id in sorted({a.audio_id for a in batch}):
                self._refresh_agreement(audio_id)
        return len(batch)

    def _refresh_agreement(self, audio_id: str) -> None:
        proposal = self.proposal_for_audio(audio_id)
        if proposal is None:
            return
        annotations = self.annotations_for_audio(audio_id)
        group = self.get_group(proposal.assigned_group) if proposal.assigned_group else None
        if group is None and annotations:
            group_id = self.group_of(annotations[0].labeler_id)
            group = self.get_group(group_id) if group_id else None
        if group is None:
            return
        scoped = [a for a in annotations if a.labeler_id in group.labeler_ids]
        labeler_count = len({a.labeler_id for a in scoped})
        agreement = 0.0
        if scoped:
            outcome = compute_consensus(scoped, group, self.doubt_class_id())
            agreement = outcome.agreement
        self._boundary()
        self._conn.execute(
            "UPDATE wavs_proposed SET labeler_count = ?, agreement_pct = ? WHERE audio_id = ?",
            (labeler_count, agreement * 100.0, audio_id),
        )

    def annotations_for_audio(self, audio_id: str) -> list[ChunkAnnotation]:
        rows = self._conn.execute(
            "SELECT chunk_id, audio_id, labeler_id, class_id, onset, offset FROM chunks"
            " WHERE audio_id = ? ORDER BY chunk_id",
            (audio_id,),
        ).fetchall()
        return [
            ChunkAnnotation(
                chunk_id=r[0], audio_id=r[1], labeler_id=r[2], class_id=r[3],
                onset=r[4], offset=r[5],
            )
            for r in rows
        ]

    def annotated_audio_ids(self, labeler_id: str) -> set[str]:
        rows = self._conn.execute(
            "SELECT DISTINCT audio_id FROM chunks WHERE labeler_id = ?", (labeler_id,)
        ).fetchall()
        return {r[0] for r in rows}

    # -- consensus promotion -----------------------------------------------------

    def promote_outcomes(
        self, outcomes: Sequence, iteration_id: str
    ) -> int:
        """Apply consensus outcomes to the proposal rows, atomically.

        Audios that gained a medoid class enter the labeled set used by
        future window splits; the rest stay unlabeled and re-proposable
        only through future partitions.
        """
        iteration = self.get_iteration(iteration_id)
        if iteration is None:
            raise PersistenceFailure(f"iteration {iteration_id!r} does not exist")
        seq = iteration["seq"]
        promoted = 0
        with self._lock, self._transaction():
            for outcome in outcomes:
                self._boundary()
                if outcome.medoid_class is not None:
                    self._conn.execute(
                        "UPDATE wavs_proposed SET label = ?, agreement_pct = ?, promoted_seq = ?"
                        " WHERE audio_id = ?",
                        (outcome.medoid_class, outcome.agreement * 100.0, seq, outcome.audio_id),
                    )
                    promoted += 1
                else:
                    self._conn.execute(
                        "UPDATE wavs_proposed SET label = NULL, agreement_pct = ?, promoted_seq = NULL"
                        " WHERE audio_id = ?",
                        (outcome.agreement * 100.0, outcome.audio_id),
                    )
        return promoted

    # -- doubt workflow ------------------------------------------------------------

    def doubt_items(self) -> list[DoubtItem]:
        doubt_id = self.doubt_class_id()
        rows = self._conn.execute(
            "SELECT chunk_id, audio_id, labeler_id, onset, offset FROM chunks"
            " WHERE class_id = ? ORDER BY chunk_id",
            (doubt_id,),
        ).fetchall()
        return [DoubtItem(*row) for row in rows]

    def resolve_doubt(
        self,
        chunk_id: int,
        class_id: int,
        onset: float | None = None,
        offset: float | None = None,
    ) -> ChunkAnnotation:
        """Re-label one Doubt chunk and re-run consensus for its audio."""
        row = self._conn.execute(
            "SELECT audio_id, labeler_id, onset, offset FROM chunks WHERE chunk_id = ?",
            (chunk_id,),
        ).fetchone()
        if row is None:
            raise UnknownAudio(f"chunk {chunk_id} does not exist")
        audio_id, labeler_id, old_onset, old_offset = row
        audio = self.get_audio(audio_id)
        updated = ChunkAnnotation(
            chunk_id=chunk_id, audio_id=audio_id, labeler_id=labeler_id, class_id=class_id,
            onset=onset if onset is not None else old_onset,
            offset=offset if offset is not None else old_offset,
        )
        validate_annotation(updated, audio, self.ontology())
        with self._lock, self._transaction():
            self._boundary()
            self._conn.execute(
                "UPDATE chunks SET class_id = ?, onset = ?, offset = ? WHERE chunk_id = ?",
                (updated.class_id, updated.onset, updated.offset, chunk_id),
            )
            self._refresh_consensus(audio_id)
        return updated

    def _refresh_consensus(self, audio_id: str) -> None:
        proposal = self.proposal_for_audio(audio_id)
        if proposal is None or proposal.assigned_group is None:
            return
        group = self.get_group(proposal.assigned_group)
        if group is None:
            return
        annotations = [
            a for a in self.annotations_for_audio(audio_id) if a.labeler_id in group.labeler_ids
        ]
        outcome = compute_consensus(annotations, group, self.doubt_class_id())
        iteration = self.get_iteration(proposal.iteration_id)
        seq = iteration["seq"] if iteration else None
        self._boundary()
        if outcome.medoid_class is not None:
            self._conn.execute(
                "UPDATE wavs_proposed SET label = ?, agreement_pct = ?, promoted_seq = ?,"
                " labeler_count = ? WHERE audio_id = ?",
                (
                    outcome.medoid_class, outcome.agreement * 100.0, seq,
                    len({a.labeler_id for a in annotations}), audio_id,
                ),
            )
        else:
            self._conn.execute(
                "UPDATE wavs_proposed SET label = NULL, agreement_pct = ?, promoted_seq = NULL,"
                " labeler_count = ? WHERE audio_id = ?",
                (outcome.agreement * 100.0, len({a.labeler_id for a in annotations}), audio_id),
            )

    # -- reporting ------------------------------------------------------------------

    def tag_frequency_histogram(self, top: int | None = None) -> list[tuple[int, str, int]]:
        """Chunk counts per ontology class, most frequent first."""
        rows = self._conn.execute(
            "SELECT c.class_id, o.name, COUNT(*) AS n FROM chunks c"
            " JOIN ontology o ON o.class_id = c.class_id"
            " GROUP BY c.class_id ORDER BY n DESC, o.name ASC"
        ).fetchall()
        rows = [(int(r[0]), r[1], int(r[2])) for r in rows]
        return rows[:top] if top is not None else rows

    def export_table(self, table: str, stream: TextIO) -> int:
        """Line-oriented dump of one table for audits."""
        if table not in _EXPORTABLE_TABLES:
            raise ValueError(f"unknown table {table!r}")
        cursor = self._conn.execute(f"SELECT * FROM {table}")
        writer = csv.writer(stream)
        writer.writerow([c[0] for c in cursor.description])
        count = 0
        for row in cursor:
            writer.writerow(row)
            count += 1
        return count

    def integrity_report(self) -> list[str]:
        """Foreign-key and consistency violations, empty when healthy."""
        problems = [str(row) for row in self._conn.execute("PRAGMA foreign_key_check")]
        status = self._conn.execute("PRAGMA integrity_check").fetchone()[0]
        if status != "ok":
            problems.append(status)
        return problems


class _Transaction:
    def __init__(self, db: Database) -> None:
        self.db = db

    def __enter__(self) -> "_Transaction":
        self.db._conn.execute("BEGIN IMMEDIATE")
        return self

    def __exit__(self, exc_type, exc, tb) -> bool:
        if exc_type is None:
            self.db._conn.execute("COMMIT")
            return False
        self.db._conn.execute("ROLLBACK")
        if issubclass(exc_type, PersistenceFailure):
            return False
        raise PersistenceFailure(f"transaction rolled back: {exc}") from exc
