"""Deterministic 256-dimensional melody embeddings, cosine-comparable.

Feature layout (one block per line; each block is L1-normalized on its own,
then the whole vector is L2-normalized):

    [0,   192)  per-bar duration-weighted pitch-class histograms, bars 0-15
    [192, 204)  whole-segment duration-weighted pitch-class histogram
    [204, 229)  melodic-interval histogram over successive notes, bins -12..+12
    [229, 241)  onset-position histogram within the bar, 12 subdivisions
    [241, 256)  reserved zeros

Values are quantized to float32 (the persistence precision) so embeddings
round-trip bit-exactly through the memory file format. An all-rest segment
yields the flagged zero embedding.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .theory import MelodySegment

EMBEDDING_DIM = 256
ENCODER_VERSION = "chroma-interval-onset/1"

_BAR_BLOCK = slice(0, 192)
_GLOBAL_CHROMA = slice(192, 204)
_INTERVALS = slice(204, 229)
_ONSETS = slice(229, 241)


@dataclass(frozen=True)
class Embedding:
    """A unit-norm 256-vector; `is_zero` marks the degenerate all-rest case."""

    values: np.ndarray
    norm: float
    is_zero: bool = False

    def __post_init__(self):
        if self.values.shape != (EMBEDDING_DIM,):
            raise ValueError(f"embedding must have {EMBEDDING_DIM} dimensions")

    def __eq__(self, other):
        if not isinstance(other, Embedding):
            return NotImplemented
        return self.is_zero == other.is_zero and np.array_equal(self.values, other.values)

    @classmethod
    def zero(cls) -> "Embedding":
        return cls(values=np.zeros(EMBEDDING_DIM, dtype=np.float64), norm=0.0, is_zero=True)

    @classmethod
    def from_values(cls, values: np.ndarray) -> "Embedding":
        values = np.asarray(values, dtype=np.float64)
        norm = float(np.linalg.norm(values))
        if norm == 0.0:
            return cls.zero()
        return cls(values=values, norm=norm)


def _l1_normalize_block(vec: np.ndarray, block: slice) -> None:
    total = vec[block].sum()
    if total > 0:
        vec[block] /= total


def encode(segment: MelodySegment) -> Embedding:
    """Map a melody segment to its feature embedding (pure, bit-deterministic)."""
    if segment.is_empty():
        return Embedding.zero()

    features = np.zeros(EMBEDDING_DIM, dtype=np.float64)
    bpb = segment.beats_per_bar

    for note in segment.notes:
        pc = note.pitch_class
        # Split the note's duration across the bars it overlaps.
        bar = int(note.onset_beats // bpb)
        while True:
            bar_start = Fraction(bar * bpb)
            bar_end = bar_start + bpb
            overlap = min(note.end_beats, bar_end) - max(note.onset_beats, bar_start)
            if overlap <= 0:
                break
            if bar < 16:
                features[bar * 12 + pc] += float(overlap)
            features[192 + pc] += float(overlap)
            bar += 1
        position = (note.onset_beats % bpb) / bpb
        subdivision = min(int(position * 12), 11)
        features[229 + subdivision] += 1.0

    for prev, nxt in zip(segment.notes, segment.notes[1:]):
        interval = max(-12, min(12, nxt.pitch - prev.pitch))
        features[204 + interval + 12] += 1.0

    for bar in range(16):
        _l1_normalize_block(features, slice(bar * 12, bar * 12 + 12))
    for block in (_GLOBAL_CHROMA, _INTERVALS, _ONSETS):
        _l1_normalize_block(features, block)

    norm = np.linalg.norm(features)
    if norm == 0.0:
        return Embedding.zero()
    features /= norm
    # Quantize through float32: the memory file stores f32, and round-trip
    # equality requires the in-memory values to already sit on that grid.
    features = features.astype(np.float32).astype(np.float64)
    return Embedding.from_values(features)


def cosine(a: Embedding, b: Embedding) -> float:
    """dot(a, b) / (|a| |b|); defined as 0.0 when either side is the zero embedding."""
    if a.is_zero or b.is_zero:
        return 0.0
    return float(a.values @ b.values) / (a.norm * b.norm)
