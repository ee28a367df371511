from fractions import Fraction

import numpy as np
import pytest

from chordgen import (
    EmptyMemoryError,
    Memory,
    MemoryEntry,
    build_memory,
    load_memory,
    retrieve,
    save_memory,
)
from chordgen.encoder import EMBEDDING_DIM, Embedding, encode
from chordgen.ingest import SegmentedPair
from chordgen.memory import (
    ChecksumError,
    MemoryMetadata,
    TruncatedFileError,
    VersionMismatchError,
)

from conftest import make_progression, make_segment, random_progression, random_segment


def make_pair(notes, source=("song", 0), num_bars=4):
    melody = make_segment(notes, num_bars=num_bars)
    chords = make_progression(["C:maj"] * num_bars)
    return SegmentedPair(melody=melody, chords=chords, source=source)


def random_entry(rng, source) -> MemoryEntry:
    values = rng.standard_normal(EMBEDDING_DIM).astype(np.float32).astype(np.float64)
    values = np.abs(values)  # keep cosines in the encoder's non-negative regime
    melody = make_segment([(60, 0, 1)], num_bars=4)
    chords = make_progression(["C:maj"] * 4)
    return MemoryEntry(
        embedding=Embedding.from_values(values), chords=chords, melody=melody, source=source
    )


def memory_from_entries(entries) -> Memory:
    meta = MemoryMetadata(corpus_hash="test", encoder_version="test", entry_count=len(entries))
    return Memory(entries=tuple(entries), metadata=meta)


def brute_force_rank(memory: Memory, query: Embedding):
    """Independent full sort over per-entry dot products."""
    sims = []
    for entry in memory.entries:
        sims.append(
            float(np.dot(entry.embedding.values, query.values))
            / (entry.embedding.norm * query.norm)
        )
    order = sorted(
        range(len(memory)),
        key=lambda i: (-sims[i], memory.entries[i].source[0], memory.entries[i].source[1]),
    )
    return order, sims


class TestBuildMemory:
    def test_ten_valid_pairs(self):
        pairs = [make_pair([(60 + i, 0, 1)], source=("s", i)) for i in range(10)]
        memory = build_memory(pairs)
        assert len(memory) == 10
        assert memory.metadata.skipped_count == 0

    def test_all_rest_pairs_skipped(self):
        pairs = [make_pair([(60 + i, 0, 1)], source=("s", i)) for i in range(8)]
        pairs += [make_pair([], source=("rest", i)) for i in range(2)]
        memory = build_memory(pairs)
        assert len(memory) == 8
        assert memory.metadata.skipped_count == 2

    def test_no_pairs_is_an_error(self):
        with pytest.raises(EmptyMemoryError):
            build_memory([])
        with pytest.raises(EmptyMemoryError):
            build_memory([make_pair([], source=("rest", 0))])


class TestRetrieve:
    def test_self_retrieval_ranks_first(self):
        pairs = [make_pair([(60 + i, 0, 1), (62 + i, 2, 1)], source=("s", i)) for i in range(12)]
        memory = build_memory(pairs)
        query = encode(pairs[3].melody)
        results = retrieve(memory, query, k=5)
        assert results[0].entry.source == ("s", 3)
        assert results[0].similarity == pytest.approx(1.0, abs=1e-9)

    def test_k_clamps_to_memory_size(self, rng):
        memory = memory_from_entries([random_entry(rng, ("s", i)) for i in range(8)])
        results = retrieve(memory, Embedding.from_values(np.abs(rng.standard_normal(256))), k=1000)
        assert len(results) == 8

    def test_matches_brute_force(self, rng):
        memory = memory_from_entries([random_entry(rng, ("s", i)) for i in range(20)])
        query = Embedding.from_values(np.abs(rng.standard_normal(256)))
        results = retrieve(memory, query, k=5)
        order, sims = brute_force_rank(memory, query)
        assert [r.entry.source for r in results] == [
            memory.entries[i].source for i in order[:5]
        ]
        for r, i in zip(results, order):
            assert r.similarity == pytest.approx(sims[i], abs=1e-12)

    def test_duplicate_embeddings_tie_break_by_provenance(self, rng):
        base = random_entry(rng, ("b", 5))
        dup1 = MemoryEntry(base.embedding, base.chords, base.melody, ("a", 9))
        dup2 = MemoryEntry(base.embedding, base.chords, base.melody, ("a", 2))
        other = random_entry(rng, ("z", 0))
        memory = memory_from_entries([base, dup1, dup2, other])
        results = retrieve(memory, base.embedding, k=3)
        assert [r.entry.source for r in results] == [("a", 2), ("a", 9), ("b", 5)]

    def test_monotone_prefix(self, rng):
        memory = memory_from_entries([random_entry(rng, ("s", i)) for i in range(30)])
        query = Embedding.from_values(np.abs(rng.standard_normal(256)))
        previous = [r.entry.source for r in retrieve(memory, query, k=1)]
        for k in range(2, 31):
            current = [r.entry.source for r in retrieve(memory, query, k=k)]
            assert current[: len(previous)] == previous
            previous = current

    def test_zero_query_rejected(self, rng):
        memory = memory_from_entries([random_entry(rng, ("s", 0))])
        with pytest.raises(ValueError, match="empty"):
            retrieve(memory, Embedding.zero(), k=1)

    def test_similarities_sorted_descending(self, rng):
        memory = memory_from_entries([random_entry(rng, ("s", i)) for i in range(25)])
        query = Embedding.from_values(np.abs(rng.standard_normal(256)))
        results = retrieve(memory, query, k=25)
        sims = [r.similarity for r in results]
        assert sims == sorted(sims, reverse=True)


class TestPersistence:
    def _memory(self, rng, n=3) -> Memory:
        pairs = [
            SegmentedPair(
                melody=random_segment(rng),
                chords=random_progression(rng, 4),
                source=(f"song-{i}", (i * 8) % 32),
            )
            for i in range(n)
        ]
        pairs = [p for p in pairs if not p.melody.is_empty()]
        return build_memory(pairs)

    def test_round_trip_equality(self, tmp_path, rng):
        memory = self._memory(rng, 5)
        path = tmp_path / "m.rerm"
        save_memory(memory, path)
        assert load_memory(path) == memory

    def test_round_trip_embeddings_bit_exact(self, tmp_path, rng):
        memory = self._memory(rng, 4)
        path = tmp_path / "m.rerm"
        save_memory(memory, path)
        loaded = load_memory(path)
        for a, b in zip(memory.entries, loaded.entries):
            assert np.array_equal(a.embedding.values, b.embedding.values)
            assert a.embedding.norm == b.embedding.norm

    def test_version_flip_raises_version_mismatch(self, tmp_path, rng):
        path = tmp_path / "m.rerm"
        save_memory(self._memory(rng), path)
        data = bytearray(path.read_bytes())
        data[4] ^= 0xFF  # low byte of the little-endian version
        path.write_bytes(bytes(data))
        with pytest.raises(VersionMismatchError):
            load_memory(path)

    def test_truncated_embedding_names_entry(self, tmp_path, rng):
        memory = self._memory(rng, 3)
        path = tmp_path / "m.rerm"
        save_memory(memory, path)
        data = path.read_bytes()
        # Cut inside the final entry's embedding block (before its payload).
        payloads = [len(e.embedding.values) for e in memory.entries]
        assert payloads
        path.write_bytes(data[: len(data) - 1200])
        with pytest.raises(TruncatedFileError, match=r"entry \d"):
            load_memory(path)

    def test_flipped_payload_byte_fails_checksum_or_payload(self, tmp_path, rng):
        path = tmp_path / "m.rerm"
        save_memory(self._memory(rng), path)
        data = bytearray(path.read_bytes())
        data[len(data) // 2] ^= 0x01
        path.write_bytes(bytes(data))
        with pytest.raises(ValueError):  # checksum or payload error, both documented
            load_memory(path)

    def test_checksum_error_on_benign_embedding_flip(self, tmp_path, rng):
        memory = self._memory(rng, 3)
        path = tmp_path / "m.rerm"
        save_memory(memory, path)
        data = bytearray(path.read_bytes())
        # Locate the first entry's embedding block: after magic+version+meta.
        import json as _json
        import struct as _struct

        meta_len = _struct.unpack("<I", bytes(data[6:10]))[0]
        emb_start = 10 + meta_len
        data[emb_start] ^= 0x01  # perturb one mantissa bit; structure intact
        path.write_bytes(bytes(data))
        with pytest.raises(ChecksumError):
            load_memory(path)
