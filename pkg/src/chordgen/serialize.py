"""Exact JSON-object codecs for core types.

Used by the memory file format and the service/CLI payloads. Beat values
are written as ints or "num/den" strings so round-trips are lossless.
"""

from __future__ import annotations

from fractions import Fraction

from .theory import (
    ChordProgression,
    ChordSymbol,
    Key,
    MelodyNote,
    MelodySegment,
    Mode,
)


def beat_to_obj(value: Fraction):
    return int(value) if value.denominator == 1 else f"{value.numerator}/{value.denominator}"


def beat_from_obj(obj) -> Fraction:
    return Fraction(obj)


def key_to_obj(key: Key) -> dict:
    return {"tonic": key.tonic, "mode": key.mode.value}


def key_from_obj(obj) -> Key:
    return Key(int(obj["tonic"]), Mode(obj["mode"]))


def melody_to_obj(segment: MelodySegment) -> dict:
    return {
        "notes": [
            [n.pitch, beat_to_obj(n.onset_beats), beat_to_obj(n.duration_beats)]
            for n in segment.notes
        ],
        "key": key_to_obj(segment.key),
        "beats_per_bar": segment.beats_per_bar,
        "num_bars": segment.num_bars,
        "phrases": list(segment.phrase_boundaries),
    }


def melody_from_obj(obj) -> MelodySegment:
    return MelodySegment(
        notes=tuple(
            MelodyNote(pitch=p, onset_beats=beat_from_obj(on), duration_beats=beat_from_obj(d))
            for p, on, d in obj["notes"]
        ),
        key=key_from_obj(obj["key"]),
        beats_per_bar=int(obj["beats_per_bar"]),
        num_bars=int(obj["num_bars"]),
        phrase_boundaries=tuple(obj["phrases"]),
    )


def progression_to_obj(progression: ChordProgression) -> dict:
    return {
        "slots": [chord.index for chord in progression.slots],
        "slot_duration_beats": beat_to_obj(progression.slot_duration_beats),
        "start_beat": beat_to_obj(progression.start_beat),
    }


def progression_from_obj(obj) -> ChordProgression:
    return ChordProgression(
        slots=tuple(ChordSymbol.from_index(i) for i in obj["slots"]),
        slot_duration_beats=beat_from_obj(obj["slot_duration_beats"]),
        start_beat=beat_from_obj(obj["start_beat"]),
    )
