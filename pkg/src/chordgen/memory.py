"""The melody-chord memory: build, persist, and query with exact top-K
cosine retrieval.

Persistence format ("RERM"):

    magic    4 bytes  b"RERM"
    version  u16 LE
    meta     u32 LE length + JSON (corpus hash, encoder version, entry count)
    records  entry count times:
                 256 x f32 LE embedding values
                 u32 LE length + JSON payload (chords, melody, source)
    checksum 32 bytes, SHA-256 of all preceding bytes

Retrieval is an exact full scan; at memory sizes up to ~1e5 x 256 dims this
is fast, deterministic, and trivially checkable against a brute-force sort.
"""

from __future__ import annotations

import hashlib
import json
import logging
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .encoder import EMBEDDING_DIM, ENCODER_VERSION, Embedding, cosine, encode
from .ingest import SegmentedPair
from .serialize import (
    melody_from_obj,
    melody_to_obj,
    progression_from_obj,
    progression_to_obj,
)
from .theory import ChordProgression, MelodySegment

log = logging.getLogger(__name__)

MAGIC = b"RERM"
FORMAT_VERSION = 1


class MemoryFormatError(ValueError):
    """Memory file that cannot be read."""


class VersionMismatchError(MemoryFormatError):
    pass


class ChecksumError(MemoryFormatError):
    pass


class TruncatedFileError(MemoryFormatError):
    pass


class EmptyMemoryError(ValueError):
    """No usable entries (all pairs skipped, or retrieval form an empty memory)."""


@dataclass(frozen=True)
class MemoryEntry:
    embedding: Embedding
    chords: ChordProgression
    melody: MelodySegment
    source: tuple  # (song id, start bar)

    def __post_init__(self):
        if self.embedding.is_zero:
            raise ValueError("memory entries must not carry the zero embedding")
        if self.chords.total_beats != self.melody.total_beats:
            raise ValueError(f"entry {self.source}: chord grid does not match melody span")


@dataclass(frozen=True)
class MemoryMetadata:
    corpus_hash: str
    encoder_version: str
    entry_count: int
    skipped_count: int = 0


@dataclass(frozen=True)
class Retrieval:
    entry: MemoryEntry
    similarity: float


@dataclass
class Memory:
    entries: tuple
    metadata: MemoryMetadata
    _matrix: np.ndarray = field(init=False, repr=False, compare=False)
    _norms: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        self.entries = tuple(self.entries)
        if len(self.entries) != self.metadata.entry_count:
            raise ValueError(
                f"metadata says {self.metadata.entry_count} entries, got {len(self.entries)}"
            )
        if self.entries:
            self._matrix = np.stack([e.embedding.values for e in self.entries])
            self._norms = np.array([e.embedding.norm for e in self.entries])
        else:
            self._matrix = np.zeros((0, EMBEDDING_DIM))
            self._norms = np.zeros(0)

    def __len__(self) -> int:
        return len(self.entries)

    def __eq__(self, other):
        if not isinstance(other, Memory):
            return NotImplemented
        return self.entries == other.entries and self.metadata == other.metadata


def _entry_payload(entry: MemoryEntry) -> bytes:
    obj = {
        "chords": progression_to_obj(entry.chords),
        "melody": melody_to_obj(entry.melody),
        "source": [entry.source[0], entry.source[1]],
    }
    return json.dumps(obj, sort_keys=True, separators=(",", ":")).encode("utf-8")


def _entry_from_payload(payload: bytes, embedding: Embedding) -> MemoryEntry:
    obj = json.loads(payload.decode("utf-8"))
    return MemoryEntry(
        embedding=embedding,
        chords=progression_from_obj(obj["chords"]),
        melody=melody_from_obj(obj["melody"]),
        source=(obj["source"][0], int(obj["source"][1])),
    )


def build_memory(pairs: Sequence[SegmentedPair]) -> Memory:
    """One entry per pair with a non-zero embedding; all-rest pairs are skipped."""
    entries = []
    skipped = 0
    hasher = hashlib.sha256()
    for pair in pairs:
        embedding = encode(pair.melody)
        if embedding.is_zero:
            skipped += 1
            continue
        entry = MemoryEntry(
            embedding=embedding,
            chords=pair.chords,
            melody=pair.melody,
            source=pair.source,
        )
        hasher.update(embedding.values.astype("<f4").tobytes())
        hasher.update(_entry_payload(entry))
        entries.append(entry)
    if skipped:
        log.info("skipped %d all-rest pairs while building memory", skipped)
    if not entries:
        raise EmptyMemoryError("no pairs produced a usable embedding")
    metadata = MemoryMetadata(
        corpus_hash=hasher.hexdigest(),
        encoder_version=ENCODER_VERSION,
        entry_count=len(entries),
        skipped_count=skipped,
    )
    return Memory(entries=tuple(entries), metadata=metadata)


def retrieve(memory: Memory, query: Embedding, k: int = 100) -> list:
    """Exact top-k by cosine similarity, ties broken by (song id, start bar)."""
    if k < 1:
        raise ValueError("k must be at least 1")
    if len(memory) == 0:
        raise EmptyMemoryError("cannot retrieve from an empty memory")
    if query.is_zero:
        raise ValueError("query melody is empty; nothing to retrieve for")
    sims = (memory._matrix @ query.values) / (memory._norms * query.norm)
    order = sorted(
        range(len(memory)),
        key=lambda i: (-sims[i], memory.entries[i].source[0], memory.entries[i].source[1]),
    )
    return [
        Retrieval(entry=memory.entries[i], similarity=float(sims[i]))
        for i in order[: min(k, len(memory))]
    ]


def save_memory(memory: Memory, path) -> None:
    buf = bytearray()
    buf += MAGIC
    buf += struct.pack("<H", FORMAT_VERSION)
    meta = json.dumps(
        {
            "corpus_hash": memory.metadata.corpus_hash,
            "encoder_version": memory.metadata.encoder_version,
            "entry_count": memory.metadata.entry_count,
            "skipped_count": memory.metadata.skipped_count,
        },
        sort_keys=True,
        separators=(",", ":"),
    ).encode("utf-8")
    buf += struct.pack("<I", len(meta)) + meta
    for entry in memory.entries:
        buf += entry.embedding.values.astype("<f4").tobytes()
        payload = _entry_payload(entry)
        buf += struct.pack("<I", len(payload)) + payload
    buf += hashlib.sha256(bytes(buf)).digest()
    Path(path).write_bytes(bytes(buf))


def load_memory(path) -> Memory:
    data = Path(path).read_bytes()
    if len(data) < 32:
        raise TruncatedFileError("file too short to contain a checksum")
    # Structural errors (magic, version, truncation) are reported before the
    # checksum so a flipped version byte reads as a version mismatch and a
    # truncated record names its entry.
    body, checksum = data[:-32], data[-32:]

    pos = 0

    def take(n: int, what: str) -> bytes:
        nonlocal pos
        if pos + n > len(body):
            raise TruncatedFileError(f"truncated while reading {what}")
        out = body[pos : pos + n]
        pos += n
        return out

    if take(4, "magic") != MAGIC:
        raise MemoryFormatError(f"bad magic; expected {MAGIC!r}")
    (version,) = struct.unpack("<H", take(2, "version"))
    if version != FORMAT_VERSION:
        raise VersionMismatchError(
            f"unsupported format version {version}, expected {FORMAT_VERSION}"
        )
    (meta_len,) = struct.unpack("<I", take(4, "metadata length"))
    try:
        meta_obj = json.loads(take(meta_len, "metadata").decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise MemoryFormatError(f"unreadable metadata block: {exc}") from None
    metadata = MemoryMetadata(
        corpus_hash=meta_obj["corpus_hash"],
        encoder_version=meta_obj["encoder_version"],
        entry_count=int(meta_obj["entry_count"]),
        skipped_count=int(meta_obj.get("skipped_count", 0)),
    )

    entries = []
    for i in range(metadata.entry_count):
        raw = take(EMBEDDING_DIM * 4, f"entry {i} embedding")
        values = np.frombuffer(raw, dtype="<f4").astype(np.float64)
        (payload_len,) = struct.unpack("<I", take(4, f"entry {i} payload length"))
        payload = take(payload_len, f"entry {i} payload")
        try:
            entries.append(_entry_from_payload(payload, Embedding.from_values(values)))
        except (KeyError, ValueError, json.JSONDecodeError) as exc:
            raise MemoryFormatError(f"entry {i}: unreadable payload: {exc}") from None
    if pos != len(body):
        raise MemoryFormatError(f"{len(body) - pos} trailing bytes after the last entry")
    if hashlib.sha256(body).digest() != checksum:
        raise ChecksumError("checksum mismatch; file is corrupted")
    return Memory(entries=tuple(entries), metadata=metadata)


def self_similarity(memory: Memory, segment: MelodySegment) -> Optional[float]:
    """Cosine between a segment and its stored twin, if present (diagnostics)."""
    query = encode(segment)
    for entry in memory.entries:
        if entry.melody == segment:
            return cosine(query, entry.embedding)
    return None
