"""Catalog ingestion: chunk filename convention, embedding sidecar IO,
and synthetic pool generation for closed-loop testing.

The pretrained tagger is strictly upstream of this package: embeddings and
top-1 predictions arrive as precomputed sidecar artifacts and are treated
as immutable per audio.
"""

from __future__ import annotations

import io
import re
import struct
from dataclasses import dataclass
from datetime import datetime, timezone
from typing import BinaryIO, Iterable, Sequence, TextIO

import numpy as np

from .domain import EmbeddingRecord
from .errors import (
    BadMagic,
    ClassOutOfRange,
    DimensionMismatch,
    MalformedFilename,
    ProbOutOfRange,
    TruncatedStream,
)

SIDECAR_MAGIC = b"EMBS"
SIDECAR_VERSION = 1
_HEADER = struct.Struct("<4sIIII")  # magic, version, dim, record count, class count

_FILENAME_RE = re.compile(r"^(?P<node>.+)_(?P<stamp>\d{8}T\d{6})Z\.wav$")


def parse_chunk_filename(filename: str) -> tuple[str, datetime]:
    """Extract (node_id, recorded_at UTC) from a ``<node>_<YYYYMMDD>T<HHMMSS>Z.wav`` name."""
    m = _FILENAME_RE.match(filename)
    if not m:
        raise MalformedFilename(f"filename {filename!r} does not match the chunk convention")
    try:
        stamp = datetime.strptime(m.group("stamp"), "%Y%m%dT%H%M%S")
    except ValueError as exc:
        raise MalformedFilename(f"filename {filename!r} carries an impossible date: {exc}") from exc
    return m.group("node"), stamp.replace(tzinfo=timezone.utc)


def format_chunk_filename(node_id: str, recorded_at: datetime) -> str:
    """Inverse of :func:`parse_chunk_filename`; the pair round-trips exactly."""
    if not node_id or "/" in node_id or "\\" in node_id:
        raise MalformedFilename(f"node id {node_id!r} is empty or contains path separators")
    if recorded_at.tzinfo is not None:
        recorded_at = recorded_at.astimezone(timezone.utc)
    return f"{node_id}_{recorded_at.strftime('%Y%m%dT%H%M%S')}Z.wav"


def audio_id_for(filename: str) -> str:
    """Catalog-wide audio identifier: the chunk filename without extension."""
    return filename[:-4] if filename.endswith(".wav") else filename


@dataclass(frozen=True)
class EmbeddingSidecarHeader:
    magic: bytes
    version: int
    dim: int
    record_count: int
    class_count: int

    def __post_init__(self) -> None:
        if self.magic != SIDECAR_MAGIC:
            raise BadMagic(f"expected magic {SIDECAR_MAGIC!r}, got {self.magic!r}")
        if self.dim <= 0:
            raise DimensionMismatch(f"header dimension must be positive, got {self.dim}")
        if self.record_count < 0 or self.class_count <= 0:
            raise TruncatedStream("header counts out of range")


def write_sidecar(records: Sequence[EmbeddingRecord], stream: BinaryIO, class_count: int) -> None:
    """Serialize records in the compact little-endian sidecar layout.

    Layout: header, then per record a length-prefixed UTF-8 filename,
    ``dim`` float32 values, the top-1 class as u32 and the top-1
    probability as float32. Bit-exact: write then load is the identity.
    """
    if records:
        dim = records[0].dim
        for rec in records:
            if rec.dim != dim:
                raise DimensionMismatch(
                    f"record {rec.audio_id} has dim {rec.dim}, pool declares {dim}"
                )
            if not 0 <= rec.top1_class < class_count:
                raise ClassOutOfRange(
                    f"record {rec.audio_id} top-1 class {rec.top1_class} >= {class_count}"
                )
    else:
        dim = 1
    stream.write(_HEADER.pack(SIDECAR_MAGIC, SIDECAR_VERSION, dim, len(records), class_count))
    for rec in records:
        name = f"{rec.audio_id}.wav".encode("utf-8")
        stream.write(struct.pack("<I", len(name)))
        stream.write(name)
        stream.write(rec.vector.astype("<f4").tobytes())
        stream.write(struct.pack("<If", rec.top1_class, float(np.float32(rec.top1_prob))))


def load_sidecar(stream: BinaryIO) -> list[EmbeddingRecord]:
    """Read a sidecar stream back into embedding records.

    Raises BadMagic / TruncatedStream / DimensionMismatch / ProbOutOfRange /
    ClassOutOfRange on malformed input; never returns a partial list.
    """
    raw = stream.read(_HEADER.size)
    if len(raw) < _HEADER.size:
        raise TruncatedStream("stream shorter than the sidecar header")
    magic, version, dim, count, class_count = _HEADER.unpack(raw)
    if magic != SIDECAR_MAGIC:
        raise BadMagic(f"expected magic {SIDECAR_MAGIC!r}, got {magic!r}")
    if version != SIDECAR_VERSION:
        raise BadMagic(f"unsupported sidecar version {version}")
    header = EmbeddingSidecarHeader(magic, version, dim, count, class_count)

    def take(n: int) -> bytes:
        chunk = stream.read(n)
        if len(chunk) < n:
            raise TruncatedStream(f"stream cut short: wanted {n} bytes, got {len(chunk)}")
        return chunk

    records: list[EmbeddingRecord] = []
    for _ in range(header.record_count):
        (name_len,) = struct.unpack("<I", take(4))
        filename = take(name_len).decode("utf-8")
        vector = np.frombuffer(take(4 * header.dim), dtype="<f4").copy()
        top1_class, top1_prob = struct.unpack("<If", take(8))
        if not 0.0 <= top1_prob <= 1.0:
            raise ProbOutOfRange(f"record {filename}: top-1 prob {top1_prob} outside [0, 1]")
        if top1_class >= header.class_count:
            raise ClassOutOfRange(
                f"record {filename}: class {top1_class} >= {header.class_count}"
            )
        records.append(
            EmbeddingRecord(
                audio_id=audio_id_for(filename),
                vector=vector,
                top1_class=int(top1_class),
                top1_prob=float(top1_prob),
            )
        )
    return records


def write_manifest(records: Sequence[EmbeddingRecord], stream: TextIO) -> None:
    """Line-oriented text variant: ``filename,class_id,prob,v1,...,vd``."""
    for rec in records:
        values = ",".join(repr(float(v)) for v in rec.vector)
        stream.write(f"{rec.audio_id}.wav,{rec.top1_class},{repr(float(np.float32(rec.top1_prob)))},{values}\n")


def load_manifest(stream: TextIO) -> list[EmbeddingRecord]:
    """Parse the text manifest variant ('.' decimal separator)."""
    records: list[EmbeddingRecord] = []
    dim: int | None = None
    for lineno, line in enumerate(stream, start=1):
        line = line.strip()
        if not line:
            continue
        parts = line.split(",")
        if len(parts) < 4:
            raise TruncatedStream(f"manifest line {lineno} has too few fields")
        filename, class_id, prob = parts[0], int(parts[1]), float(parts[2])
        vector = np.array([float(v) for v in parts[3:]], dtype=np.float32)
        if dim is None:
            dim = vector.size
        elif vector.size != dim:
            raise DimensionMismatch(f"manifest line {lineno}: dim {vector.size} != {dim}")
        if not 0.0 <= prob <= 1.0:
            raise ProbOutOfRange(f"manifest line {lineno}: prob {prob} outside [0, 1]")
        records.append(EmbeddingRecord(audio_id_for(filename), vector, class_id, prob))
    return records


class EmbeddingPool:
    """In-memory lookup of embedding records, all sharing one dimension."""

    def __init__(self, records: Iterable[EmbeddingRecord] = ()) -> None:
        self._records: dict[str, EmbeddingRecord] = {}
        self._dim: int | None = None
        self.extend(records)

    def extend(self, records: Iterable[EmbeddingRecord]) -> None:
        for rec in records:
            if self._dim is None:
                self._dim = rec.dim
            elif rec.dim != self._dim:
                raise DimensionMismatch(
                    f"record {rec.audio_id} has dim {rec.dim}, pool holds {self._dim}"
                )
            self._records[rec.audio_id] = rec

    @property
    def dim(self) -> int | None:
        return self._dim

    def __len__(self) -> int:
        return len(self._records)

    def __contains__(self, audio_id: str) -> bool:
        return audio_id in self._records

    def get(self, audio_id: str) -> EmbeddingRecord | None:
        return self._records.get(audio_id)

    def __getitem__(self, audio_id: str) -> EmbeddingRecord:
        return self._records[audio_id]

    def records(self) -> list[EmbeddingRecord]:
        return list(self._records.values())

    def subset(self, audio_ids: Iterable[str]) -> list[EmbeddingRecord]:
        return [self._records[a] for a in audio_ids if a in self._records]

    def vectors(self, audio_ids: Sequence[str]) -> np.ndarray:
        return np.stack([self._records[a].vector for a in audio_ids])


def generate_synthetic_pool(
    k_classes: int,
    per_class: int,
    dim: int,
    spread: float,
    seed: int,
    node_id: str = "sim00",
    start: datetime | None = None,
) -> tuple[list[EmbeddingRecord], dict[str, int]]:
    """Isotropic Gaussian clusters with tagger-style top-1 calls attached.

    Cluster centers are drawn once from a unit Gaussian; each record's
    top-1 class is its nearest center and its top-1 probability a softmax
    over negative center distances, so shrinking ``spread`` drives the
    top-1 call toward the true label. Deterministic given ``seed``.
    """
    if k_classes < 1 or per_class < 1 or dim < 2:
        raise ValueError("need k_classes >= 1, per_class >= 1, dim >= 2")
    rng = np.random.default_rng(seed)
    centers = rng.normal(0.0, 1.0, size=(k_classes, dim)).astype(np.float32)
    if start is None:
        start = datetime(2024, 1, 8, tzinfo=timezone.utc)

    records: list[EmbeddingRecord] = []
    true_labels: dict[str, int] = {}
    idx = 0
    for cls in range(k_classes):
        points = centers[cls] + spread * rng.normal(0.0, 1.0, size=(per_class, dim))
        points = points.astype(np.float32)
        # distances to every center decide the synthetic top-1 call
        d2 = ((points[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2)
        dist = np.sqrt(d2)
        top1 = np.argmin(dist, axis=1)
        logits = -dist
        logits -= logits.max(axis=1, keepdims=True)
        probs = np.exp(logits)
        probs /= probs.sum(axis=1, keepdims=True)
        for row in range(per_class):
            stamp = datetime.fromtimestamp(start.timestamp() + 10 * idx, tz=timezone.utc)
            filename = format_chunk_filename(node_id, stamp)
            audio_id = audio_id_for(filename)
            records.append(
                EmbeddingRecord(
                    audio_id=audio_id,
                    vector=points[row],
                    top1_class=int(top1[row]),
                    top1_prob=float(probs[row, top1[row]]),
                )
            )
            true_labels[audio_id] = cls
            idx += 1
    return records, true_labels


def dump_sidecar_bytes(records: Sequence[EmbeddingRecord], class_count: int) -> bytes:
    buf = io.BytesIO()
    write_sidecar(records, buf, class_count)
    return buf.getvalue()
