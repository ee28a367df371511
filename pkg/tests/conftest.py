"""Shared builders for tests."""

from __future__ import annotations

from fractions import Fraction

import numpy as np
import pytest

from chordgen import (
    ChordProgression,
    ChordSymbol,
    Key,
    MelodyNote,
    MelodySegment,
    Mode,
    default_phrase_boundaries,
)


def make_segment(
    notes,
    beats_per_bar: int = 4,
    num_bars: int = None,
    key: Key = Key(0, Mode.MAJOR),
    phrases=None,
) -> MelodySegment:
    """notes: iterable of (pitch, onset, duration) triples in beats."""
    built = tuple(
        MelodyNote(pitch=p, onset_beats=Fraction(o), duration_beats=Fraction(d))
        for p, o, d in notes
    )
    if num_bars is None:
        end = max((n.end_beats for n in built), default=Fraction(beats_per_bar))
        num_bars = max(1, -(-int(end) // beats_per_bar))
    if phrases is None:
        phrases = default_phrase_boundaries(num_bars)
    return MelodySegment(
        notes=built,
        key=key,
        beats_per_bar=beats_per_bar,
        num_bars=num_bars,
        phrase_boundaries=tuple(phrases),
    )


def make_progression(symbols, slot_duration=4, start=0) -> ChordProgression:
    return ChordProgression(
        slots=tuple(ChordSymbol.parse(s) for s in symbols),
        slot_duration_beats=Fraction(slot_duration),
        start_beat=Fraction(start),
    )


def random_segment(rng: np.random.Generator, num_bars: int = 4, beats_per_bar: int = 4):
    """A random but valid melody segment for property tests."""
    notes = []
    beat = Fraction(0)
    total = num_bars * beats_per_bar
    while beat < total:
        dur = Fraction(int(rng.integers(1, 5)), 2)
        dur = min(dur, Fraction(total) - beat)
        if rng.random() < 0.85:  # occasional rests
            pitch = int(rng.integers(48, 84))
            notes.append((pitch, beat, dur))
        beat += dur
    key = Key(int(rng.integers(0, 12)), Mode.MAJOR if rng.random() < 0.5 else Mode.MINOR)
    return make_segment(notes, beats_per_bar=beats_per_bar, num_bars=num_bars, key=key)


def random_progression(rng: np.random.Generator, n_slots: int, slot_duration=4):
    from chordgen import CHORD_VOCABULARY

    return ChordProgression(
        slots=tuple(CHORD_VOCABULARY[int(i)] for i in rng.integers(0, 48, size=n_slots)),
        slot_duration_beats=Fraction(slot_duration),
        start_beat=Fraction(0),
    )


@pytest.fixture
def rng():
    return np.random.default_rng(20240811)
