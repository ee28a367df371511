"""Core symbolic-music types and pure chord/key arithmetic.

Pitch classes are plain integers 0-11 with C = 0. Chords are one of 48
categories (12 roots x 4 triad qualities). Beat positions and durations
are `fractions.Fraction` values so slot alignment stays exact; floating
point only enters downstream (embeddings, costs, scores).
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field, replace
from fractions import Fraction
from typing import Iterable, Optional, Sequence, Union

BeatLike = Union[int, Fraction]

PITCH_CLASS_NAMES = ["C", "C#", "D", "D#", "E", "F", "F#", "G", "G#", "A", "A#", "B"]

MAJOR_SCALE = (0, 2, 4, 5, 7, 9, 11)
NATURAL_MINOR_SCALE = (0, 2, 3, 5, 7, 8, 10)


class Mode(enum.Enum):
    MAJOR = "major"
    MINOR = "minor"


class ChordQuality(enum.Enum):
    """Triad quality; `ordinal` fixes the chord-index layout root*4 + ordinal."""

    MAJOR = ("maj", 0, (0, 4, 7))
    MINOR = ("min", 1, (0, 3, 7))
    DIMINISHED = ("dim", 2, (0, 3, 6))
    AUGMENTED = ("aug", 3, (0, 4, 8))

    def __init__(self, label: str, ordinal: int, intervals: tuple):
        self.label = label
        self.ordinal = ordinal
        self.intervals = intervals

    @classmethod
    def from_label(cls, label: str) -> "ChordQuality":
        for q in cls:
            if q.label == label:
                return q
        raise ValueError(f"unknown chord quality {label!r}")

    @classmethod
    def from_ordinal(cls, ordinal: int) -> "ChordQuality":
        for q in cls:
            if q.ordinal == ordinal:
                return q
        raise ValueError(f"chord quality ordinal out of range: {ordinal}")


# Diatonic triad quality per scale degree (0-based), by mode.
_MAJOR_DEGREE_QUALITIES = (
    ChordQuality.MAJOR, ChordQuality.MINOR, ChordQuality.MINOR, ChordQuality.MAJOR,
    ChordQuality.MAJOR, ChordQuality.MINOR, ChordQuality.DIMINISHED,
)
_MINOR_DEGREE_QUALITIES = (
    ChordQuality.MINOR, ChordQuality.DIMINISHED, ChordQuality.MAJOR, ChordQuality.MINOR,
    ChordQuality.MINOR, ChordQuality.MAJOR, ChordQuality.MAJOR,
)


def pitch_class(value: int) -> int:
    """Normalize an integer to a pitch class in [0, 11]."""
    return value % 12


def pitch_class_name(pc: int) -> str:
    return PITCH_CLASS_NAMES[pitch_class(pc)]


def parse_pitch_class(name: str) -> int:
    """Parse a canonical (sharps-only) pitch-class name such as "F#"."""
    try:
        return PITCH_CLASS_NAMES.index(name)
    except ValueError:
        raise ValueError(f"unknown pitch class {name!r}") from None


@dataclass(frozen=True)
class Key:
    tonic: int
    mode: Mode

    def __post_init__(self):
        if not 0 <= self.tonic <= 11:
            raise ValueError(f"key tonic must be a pitch class 0-11, got {self.tonic}")

    @property
    def scale(self) -> tuple:
        base = MAJOR_SCALE if self.mode is Mode.MAJOR else NATURAL_MINOR_SCALE
        return tuple((self.tonic + step) % 12 for step in base)

    def transpose(self, semitones: int) -> "Key":
        return Key((self.tonic + semitones) % 12, self.mode)

    def __str__(self) -> str:
        return f"{pitch_class_name(self.tonic)} {self.mode.value}"


@dataclass(frozen=True, order=True)
class ChordSymbol:
    root: int
    quality: ChordQuality = field(compare=False)
    # order=True compares by (root, _ordinal) so sorting matches the chord index.
    _ordinal: int = field(init=False, repr=False)

    def __post_init__(self):
        if not 0 <= self.root <= 11:
            raise ValueError(f"chord root must be a pitch class 0-11, got {self.root}")
        object.__setattr__(self, "_ordinal", self.quality.ordinal)

    @property
    def index(self) -> int:
        """Position in the 48-chord vocabulary: root*4 + quality ordinal."""
        return self.root * 4 + self.quality.ordinal

    @classmethod
    def from_index(cls, index: int) -> "ChordSymbol":
        if not 0 <= index <= 47:
            raise ValueError(f"chord index must be in [0, 47], got {index}")
        return cls(index // 4, ChordQuality.from_ordinal(index % 4))

    @classmethod
    def parse(cls, text: str) -> "ChordSymbol":
        """Parse the canonical `<ROOT>:<quality>` form, e.g. "C:maj", "F#:dim"."""
        root_name, sep, quality_label = text.partition(":")
        if not sep:
            raise ValueError(f"malformed chord symbol {text!r}, expected '<ROOT>:<quality>'")
        return cls(parse_pitch_class(root_name), ChordQuality.from_label(quality_label))

    def transpose(self, semitones: int) -> "ChordSymbol":
        return ChordSymbol((self.root + semitones) % 12, self.quality)

    def __str__(self) -> str:
        return f"{pitch_class_name(self.root)}:{self.quality.label}"


CHORD_VOCABULARY = tuple(ChordSymbol.from_index(i) for i in range(48))


def chord_pitch_classes(chord: ChordSymbol) -> frozenset:
    """The chord's three pitch classes: root plus quality-specific third and fifth."""
    return frozenset((chord.root + iv) % 12 for iv in chord.quality.intervals)


def roman_degree(chord: ChordSymbol, key: Key) -> Optional[int]:
    """Diatonic scale degree (1-7) of the chord in the key, or None.

    A chord is diatonic when its root sits on a scale step and its quality
    matches the diatonic triad built there. Minor keys use the natural-minor
    set with one exception: a major triad on degree 5 (the harmonic-minor
    dominant) also counts as degree 5, so V->i cadences are recognizable.
    """
    steps = MAJOR_SCALE if key.mode is Mode.MAJOR else NATURAL_MINOR_SCALE
    qualities = _MAJOR_DEGREE_QUALITIES if key.mode is Mode.MAJOR else _MINOR_DEGREE_QUALITIES
    offset = (chord.root - key.tonic) % 12
    for degree, step in enumerate(steps):
        if offset == step:
            if chord.quality is qualities[degree]:
                return degree + 1
            if (
                key.mode is Mode.MINOR
                and degree == 4
                and chord.quality is ChordQuality.MAJOR
            ):
                return 5
            return None
    return None


def roman_numeral(chord: ChordSymbol, key: Key) -> Optional[str]:
    """Display form of roman_degree: "V", "ii", "vii°", "III+"."""
    degree = roman_degree(chord, key)
    if degree is None:
        return None
    numeral = ("I", "II", "III", "IV", "V", "VI", "VII")[degree - 1]
    if chord.quality is ChordQuality.MAJOR:
        return numeral
    if chord.quality is ChordQuality.MINOR:
        return numeral.lower()
    if chord.quality is ChordQuality.DIMINISHED:
        return numeral.lower() + "°"
    return numeral + "+"


def _as_fraction(value: BeatLike) -> Fraction:
    return value if isinstance(value, Fraction) else Fraction(value)


@dataclass(frozen=True)
class ChordProgression:
    """Chords on a uniform slot grid: `slots[i]` sounds for `slot_duration_beats`
    starting at `start_beat + i * slot_duration_beats`."""

    slots: tuple
    slot_duration_beats: Fraction
    start_beat: Fraction = Fraction(0)

    def __post_init__(self):
        object.__setattr__(self, "slots", tuple(self.slots))
        object.__setattr__(self, "slot_duration_beats", _as_fraction(self.slot_duration_beats))
        object.__setattr__(self, "start_beat", _as_fraction(self.start_beat))
        if not self.slots:
            raise ValueError("progression must have at least one slot")
        if self.slot_duration_beats <= 0:
            raise ValueError("slot duration must be positive")
        if self.start_beat < 0:
            raise ValueError("start beat must be non-negative")

    def __len__(self) -> int:
        return len(self.slots)

    @property
    def total_beats(self) -> Fraction:
        return self.slot_duration_beats * len(self.slots)

    @property
    def end_beat(self) -> Fraction:
        return self.start_beat + self.total_beats

    def slot_start(self, i: int) -> Fraction:
        return self.start_beat + i * self.slot_duration_beats

    def transpose(self, semitones: int) -> "ChordProgression":
        return replace(self, slots=tuple(c.transpose(semitones) for c in self.slots))

    def covers_whole_bars(self, beats_per_bar: int) -> bool:
        return (
            self.start_beat % beats_per_bar == 0
            and self.total_beats % beats_per_bar == 0
        )

    def __str__(self) -> str:
        return " ".join(str(c) for c in self.slots)


@dataclass(frozen=True)
class MelodyNote:
    pitch: int
    onset_beats: Fraction
    duration_beats: Fraction
    # Derived, cached at construction (hot in per-slot overlap walks).
    end_beats: Fraction = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "onset_beats", _as_fraction(self.onset_beats))
        object.__setattr__(self, "duration_beats", _as_fraction(self.duration_beats))
        if not 0 <= self.pitch <= 127:
            raise ValueError(f"MIDI pitch out of range [0, 127]: {self.pitch}")
        if self.onset_beats < 0:
            raise ValueError("note onset must be non-negative")
        if self.duration_beats <= 0:
            raise ValueError("note duration must be positive")
        object.__setattr__(self, "end_beats", self.onset_beats + self.duration_beats)

    @property
    def pitch_class(self) -> int:
        return self.pitch % 12


@dataclass(frozen=True)
class MelodySegment:
    """A timed note sequence with key, meter, bar count and phrase boundaries.

    `phrase_boundaries` are bar indices, strictly increasing, always
    containing 0 and `num_bars`; every note must lie inside the segment.
    """

    notes: tuple
    key: Key
    beats_per_bar: int
    num_bars: int
    phrase_boundaries: tuple

    def __post_init__(self):
        notes = tuple(sorted(self.notes, key=lambda n: (n.onset_beats, n.pitch)))
        object.__setattr__(self, "notes", notes)
        object.__setattr__(self, "phrase_boundaries", tuple(self.phrase_boundaries))
        if self.beats_per_bar <= 0:
            raise ValueError("beats_per_bar must be positive")
        if self.num_bars <= 0:
            raise ValueError("num_bars must be positive")
        total = self.total_beats
        for note in notes:
            if note.onset_beats >= total:
                raise ValueError(
                    f"note onset {note.onset_beats} outside segment of {total} beats"
                )
            if note.end_beats > total:
                raise ValueError(
                    f"note ending at {note.end_beats} overruns segment of {total} beats"
                )
        pb = self.phrase_boundaries
        if not pb or pb[0] != 0 or pb[-1] != self.num_bars:
            raise ValueError("phrase boundaries must start at 0 and end at num_bars")
        if any(later <= earlier for earlier, later in zip(pb, pb[1:])):
            raise ValueError("phrase boundaries must be strictly increasing")

    @property
    def total_beats(self) -> Fraction:
        return Fraction(self.num_bars * self.beats_per_bar)

    def is_empty(self) -> bool:
        return not self.notes


def default_phrase_boundaries(num_bars: int, phrase_bars: int = 4) -> tuple:
    """Every `phrase_bars` bars, always including 0 and num_bars."""
    bounds = list(range(0, num_bars, phrase_bars))
    bounds.append(num_bars)
    return tuple(dict.fromkeys(bounds))


def transpose_segment(segment: MelodySegment, semitones: int) -> MelodySegment:
    """Shift every pitch by `semitones` and the key tonic mod 12; timing unchanged."""
    notes = []
    for note in segment.notes:
        pitch = note.pitch + semitones
        if not 0 <= pitch <= 127:
            raise ValueError(
                f"transposition by {semitones} takes pitch {note.pitch} out of [0, 127]"
            )
        notes.append(replace(note, pitch=pitch))
    return replace(segment, notes=tuple(notes), key=segment.key.transpose(semitones))


def slot_pitch_weights(
    segment: MelodySegment,
    slot_starts: Sequence[Fraction],
    slot_duration: Fraction,
) -> list:
    """Per-slot duration weights by pitch class.

    Returns one dict {pitch_class: beats} per slot, where a note contributes
    the length of its overlap with the slot window. Slot starts must be
    ascending and uniformly spaced by slot_duration (a grid).
    """
    out = [dict() for _ in slot_starts]
    if not slot_starts:
        return out
    grid_origin = slot_starts[0]
    n = len(slot_starts)
    for note in segment.notes:
        if note.end_beats <= grid_origin:
            continue
        first = max(int((note.onset_beats - grid_origin) // slot_duration), 0)
        pc = note.pitch_class
        for i in range(first, n):
            start = slot_starts[i]
            if start >= note.end_beats:
                break
            overlap = min(note.end_beats, start + slot_duration) - max(
                note.onset_beats, start
            )
            if overlap > 0:
                out[i][pc] = out[i].get(pc, Fraction(0)) + overlap
    return out
