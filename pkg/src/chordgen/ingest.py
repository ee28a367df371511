"""Melody/chord ingestion: SMF and corpus-JSON parsing, song segmentation,
and template-correlation key detection.

Corpus JSON schema (top-level array, one object per song):

    {
      "id": "song-1",
      "beats_per_bar": 4,
      "key": {"tonic": 0, "mode": "major"},          // optional
      "phrases": [0, 4, 8],                           // optional, bar indices
      "notes":  [{"pitch": 60, "onset": "1/2", "dur": 1}, ...],
      "chords": [{"symbol": "C:maj", "start_beat": 0, "dur_beats": 4}, ...]
    }

Onsets and durations are either JSON numbers or exact "num/den" strings.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, replace
from fractions import Fraction
from typing import Optional

import numpy as np

from . import smf as smf_mod
from .theory import (
    ChordProgression,
    ChordSymbol,
    Key,
    MelodyNote,
    MelodySegment,
    Mode,
    default_phrase_boundaries,
)

log = logging.getLogger(__name__)


class CorpusFormatError(ValueError):
    """Corpus JSON that violates the schema; message is path-qualified."""


@dataclass(frozen=True)
class Song:
    """A full-length melody with optional aligned chord annotations."""

    id: str
    melody: MelodySegment
    chords: Optional[ChordProgression]
    metadata: dict

    def __post_init__(self):
        if self.chords is not None:
            if not self.chords.covers_whole_bars(self.melody.beats_per_bar):
                raise ValueError(f"song {self.id!r}: chord grid does not cover whole bars")
            if self.chords.end_beat > self.melody.total_beats:
                raise ValueError(f"song {self.id!r}: chords overrun the melody bar span")


@dataclass(frozen=True)
class SegmentedPair:
    """One memory unit: a melody window and the chords sounding under it."""

    melody: MelodySegment
    chords: ChordProgression
    source: tuple  # (song id, start bar)

    def __post_init__(self):
        span_beats = self.melody.total_beats
        if self.chords.total_beats != span_beats:
            raise ValueError(
                f"segment {self.source}: chords cover {self.chords.total_beats} beats, "
                f"melody covers {span_beats}"
            )


# --- beat value parsing ------------------------------------------------------


def parse_beat_value(value, path: str) -> Fraction:
    if isinstance(value, bool):
        raise CorpusFormatError(f"{path}: expected a number or 'num/den' string")
    if isinstance(value, int):
        return Fraction(value)
    if isinstance(value, float):
        return Fraction(value).limit_denominator(1_000_000)
    if isinstance(value, str):
        try:
            return Fraction(value)
        except (ValueError, ZeroDivisionError):
            raise CorpusFormatError(f"{path}: malformed rational {value!r}") from None
    raise CorpusFormatError(f"{path}: expected a number or 'num/den' string")


def format_beat_value(value: Fraction):
    return int(value) if value.denominator == 1 else f"{value.numerator}/{value.denominator}"


# --- corpus JSON -------------------------------------------------------------


def parse_corpus_json(text: str) -> list:
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise CorpusFormatError(f"corpus is not valid JSON: {exc}") from None
    if not isinstance(raw, list):
        raise CorpusFormatError("corpus root must be an array of songs")
    return [_parse_song(obj, f"songs[{i}]") for i, obj in enumerate(raw)]


def _require(obj: dict, name: str, path: str):
    if name not in obj:
        raise CorpusFormatError(f"{path}.{name}: missing required field")
    return obj[name]


def _parse_song(obj, path: str) -> Song:
    if not isinstance(obj, dict):
        raise CorpusFormatError(f"{path}: expected an object")
    song_id = _require(obj, "id", path)
    if not isinstance(song_id, str) or not song_id:
        raise CorpusFormatError(f"{path}.id: expected a non-empty string")
    beats_per_bar = _require(obj, "beats_per_bar", path)
    if not isinstance(beats_per_bar, int) or isinstance(beats_per_bar, bool) or beats_per_bar <= 0:
        raise CorpusFormatError(f"{path}.beats_per_bar: expected a positive integer")

    notes_raw = _require(obj, "notes", path)
    if not isinstance(notes_raw, list):
        raise CorpusFormatError(f"{path}.notes: expected an array")
    notes = []
    for j, note_obj in enumerate(notes_raw):
        note_path = f"{path}.notes[{j}]"
        if not isinstance(note_obj, dict):
            raise CorpusFormatError(f"{note_path}: expected an object")
        pitch = _require(note_obj, "pitch", note_path)
        if not isinstance(pitch, int) or isinstance(pitch, bool) or not 0 <= pitch <= 127:
            raise CorpusFormatError(f"{note_path}.pitch: expected an integer in [0, 127]")
        onset = parse_beat_value(_require(note_obj, "onset", note_path), f"{note_path}.onset")
        dur = parse_beat_value(_require(note_obj, "dur", note_path), f"{note_path}.dur")
        if onset < 0:
            raise CorpusFormatError(f"{note_path}.onset: must be non-negative")
        if dur <= 0:
            raise CorpusFormatError(f"{note_path}.dur: must be positive")
        notes.append(MelodyNote(pitch=pitch, onset_beats=onset, duration_beats=dur))

    chords = None
    if obj.get("chords"):
        chords = _parse_chord_list(obj["chords"], f"{path}.chords")

    end_beats = [n.end_beats for n in notes]
    if chords is not None:
        end_beats.append(chords.end_beat)
    if not end_beats:
        raise CorpusFormatError(f"{path}: song has neither notes nor chords")
    num_bars = max(1, math.ceil(max(end_beats) / beats_per_bar))

    phrases = obj.get("phrases")
    if phrases is not None:
        if not isinstance(phrases, list) or not all(
            isinstance(b, int) and not isinstance(b, bool) for b in phrases
        ):
            raise CorpusFormatError(f"{path}.phrases: expected an array of bar indices")
        bounds = sorted(set(phrases) | {0, num_bars})
        if bounds[0] < 0 or bounds[-1] > num_bars:
            raise CorpusFormatError(f"{path}.phrases: bar indices must lie in [0, {num_bars}]")
        phrase_boundaries = tuple(bounds)
    else:
        phrase_boundaries = default_phrase_boundaries(num_bars)

    key_obj = obj.get("key")
    melody_kwargs = dict(
        notes=tuple(notes),
        beats_per_bar=beats_per_bar,
        num_bars=num_bars,
        phrase_boundaries=phrase_boundaries,
    )
    if key_obj is not None:
        key_path = f"{path}.key"
        if not isinstance(key_obj, dict):
            raise CorpusFormatError(f"{key_path}: expected an object")
        tonic = _require(key_obj, "tonic", key_path)
        mode_str = _require(key_obj, "mode", key_path)
        if not isinstance(tonic, int) or isinstance(tonic, bool) or not 0 <= tonic <= 11:
            raise CorpusFormatError(f"{key_path}.tonic: expected an integer in [0, 11]")
        if mode_str not in ("major", "minor"):
            raise CorpusFormatError(f"{key_path}.mode: expected 'major' or 'minor'")
        key = Key(tonic, Mode(mode_str))
    elif notes:
        key = detect_key(MelodySegment(key=Key(0, Mode.MAJOR), **melody_kwargs))
    else:
        key = Key(0, Mode.MAJOR)

    melody = MelodySegment(key=key, **melody_kwargs)
    metadata = {str(k): str(v) for k, v in obj.get("metadata", {}).items()}
    return Song(id=song_id, melody=melody, chords=chords, metadata=metadata)


def _parse_chord_list(raw, path: str) -> ChordProgression:
    if not isinstance(raw, list) or not raw:
        raise CorpusFormatError(f"{path}: expected a non-empty array")
    spans = []
    for j, chord_obj in enumerate(raw):
        chord_path = f"{path}[{j}]"
        if not isinstance(chord_obj, dict):
            raise CorpusFormatError(f"{chord_path}: expected an object")
        symbol = _require(chord_obj, "symbol", chord_path)
        try:
            chord = ChordSymbol.parse(symbol)
        except (ValueError, TypeError) as exc:
            raise CorpusFormatError(f"{chord_path}.symbol: {exc}") from None
        start = parse_beat_value(
            _require(chord_obj, "start_beat", chord_path), f"{chord_path}.start_beat"
        )
        dur = parse_beat_value(
            _require(chord_obj, "dur_beats", chord_path), f"{chord_path}.dur_beats"
        )
        if start < 0:
            raise CorpusFormatError(f"{chord_path}.start_beat: must be non-negative")
        if dur <= 0:
            raise CorpusFormatError(f"{chord_path}.dur_beats: must be positive")
        spans.append((start, dur, chord, chord_path))

    spans.sort(key=lambda s: s[0])
    for (s1, d1, _, p1), (s2, _, _, p2) in zip(spans, spans[1:]):
        if s1 + d1 > s2:
            raise CorpusFormatError(f"{p2}: overlaps the previous chord slot ({p1})")
        if s1 + d1 < s2:
            raise CorpusFormatError(f"{p2}: gap after {p1}; chords must tile contiguously")

    # Re-grid to the finest uniform slot: gcd of the start offset and durations.
    start_beat = spans[0][0]
    slot = spans[0][1]
    for _, dur, _, _ in spans[1:]:
        slot = Fraction(math.gcd(slot.numerator * dur.denominator, dur.numerator * slot.denominator),
                        slot.denominator * dur.denominator)
    slots = []
    for _, dur, chord, chord_path in spans:
        count = dur / slot
        slots.extend([chord] * int(count))
    return ChordProgression(slots=tuple(slots), slot_duration_beats=slot, start_beat=start_beat)


def parse_melody_obj(obj, path: str = "melody") -> MelodySegment:
    """Parse a bare melody payload (the corpus note schema without id/chords).

    Accepts {"notes": [...], "beats_per_bar": int, "key"?: {...},
    "phrases"?: [...]}; the key is detected when absent.
    """
    if not isinstance(obj, dict):
        raise CorpusFormatError(f"{path}: expected an object")
    song_obj = dict(obj)
    song_obj.setdefault("id", "melody")
    song_obj.pop("chords", None)
    if song_obj.get("notes") == []:
        bpb = song_obj.get("beats_per_bar")
        if not isinstance(bpb, int) or isinstance(bpb, bool) or bpb <= 0:
            raise CorpusFormatError(f"{path}.beats_per_bar: expected a positive integer")
        return MelodySegment(
            notes=(),
            key=Key(0, Mode.MAJOR),
            beats_per_bar=bpb,
            num_bars=1,
            phrase_boundaries=(0, 1),
        )
    song = _parse_song(song_obj, path)
    return song.melody


def serialize_corpus_json(songs, indent: Optional[int] = None) -> str:
    return json.dumps([song_to_obj(song) for song in songs], indent=indent)


def song_to_obj(song: Song) -> dict:
    obj = {
        "id": song.id,
        "beats_per_bar": song.melody.beats_per_bar,
        "key": {"tonic": song.melody.key.tonic, "mode": song.melody.key.mode.value},
        "phrases": list(song.melody.phrase_boundaries),
        "notes": [
            {
                "pitch": n.pitch,
                "onset": format_beat_value(n.onset_beats),
                "dur": format_beat_value(n.duration_beats),
            }
            for n in song.melody.notes
        ],
    }
    if song.chords is not None:
        obj["chords"] = [
            {
                "symbol": str(chord),
                "start_beat": format_beat_value(song.chords.slot_start(i)),
                "dur_beats": format_beat_value(song.chords.slot_duration_beats),
            }
            for i, chord in enumerate(song.chords.slots)
        ]
    if song.metadata:
        obj["metadata"] = dict(song.metadata)
    return obj


# --- SMF ----------------------------------------------------------------------


def parse_smf(data: bytes, song_id: str = "smf") -> Song:
    """Parse a format-0/1 SMF into a Song.

    The melody comes from the densest non-chordal track (overlaps trimmed to
    the next onset); meter from the first time-signature event (default 4/4);
    key from the key-signature event, else detected from the melody. A
    block-triad chord track, when present, becomes the song's progression.
    """
    smf = smf_mod.parse_smf_bytes(data)
    numerator, _ = smf.time_signature
    beats_per_bar = max(1, numerator)
    tpb = smf.ticks_per_beat

    melody_idx = smf_mod.melody_track_index(smf)
    notes = (
        smf_mod.monophonic_notes(smf.tracks[melody_idx], tpb) if melody_idx is not None else []
    )
    chords = smf_mod.decode_chord_track(smf)

    ends = [n.end_beats for n in notes]
    if chords is not None:
        ends.append(chords.end_beat)
    num_bars = max(1, math.ceil(max(ends) / beats_per_bar)) if ends else 1
    phrase_boundaries = default_phrase_boundaries(num_bars)

    base = MelodySegment(
        notes=tuple(notes),
        key=smf.key_signature or Key(0, Mode.MAJOR),
        beats_per_bar=beats_per_bar,
        num_bars=num_bars,
        phrase_boundaries=phrase_boundaries,
    )
    if smf.key_signature is None and notes:
        base = replace(base, key=detect_key(base))

    metadata = {"format": str(smf.format), "division": str(smf.division)}
    if smf.tempo_us_per_quarter is not None:
        metadata["tempo_us_per_quarter"] = str(smf.tempo_us_per_quarter)
    return Song(id=song_id, melody=base, chords=chords, metadata=metadata)


def song_to_smf(song: Song) -> bytes:
    return smf_mod.build_smf(
        song.melody.notes,
        beats_per_bar=song.melody.beats_per_bar,
        key=song.melody.key,
        chords=song.chords,
    )


# --- segmentation ---------------------------------------------------------------


def segment(song: Song, window_bars: int = 16, hop_bars: int = 8) -> list:
    """Slide a window of `window_bars` with stride `hop_bars` over the song.

    A final shorter window is emitted when it has at least 4 bars and one
    note. Songs shorter than 4 bars yield an empty list. Phrase boundaries
    are inherited (clipped and re-based); requires chord annotations.
    """
    if window_bars < 4:
        raise ValueError("window_bars must be at least 4")
    if not 1 <= hop_bars <= window_bars:
        raise ValueError("hop_bars must be in [1, window_bars]")
    if song.chords is None:
        raise ValueError(f"song {song.id!r} has no chord annotations to segment")

    melody = song.melody
    num_bars = melody.num_bars
    pairs = []
    for start in range(0, num_bars, hop_bars):
        end = min(start + window_bars, num_bars)
        win_bars = end - start
        if win_bars < 4:
            continue
        window = _melody_window(melody, start, end)
        is_trailing = win_bars < window_bars
        if is_trailing and window.is_empty():
            continue
        chords = _chords_window(song.chords, melody.beats_per_bar, start, end)
        if chords is not None:
            pairs.append(SegmentedPair(melody=window, chords=chords, source=(song.id, start)))
    return pairs


def _melody_window(melody: MelodySegment, start_bar: int, end_bar: int) -> MelodySegment:
    bpb = melody.beats_per_bar
    start_beats = Fraction(start_bar * bpb)
    end_beats = Fraction(end_bar * bpb)
    notes = []
    for note in melody.notes:
        if start_beats <= note.onset_beats < end_beats:
            duration = min(note.duration_beats, end_beats - note.onset_beats)
            notes.append(
                replace(note, onset_beats=note.onset_beats - start_beats, duration_beats=duration)
            )
    bounds = sorted(
        {b - start_bar for b in melody.phrase_boundaries if start_bar <= b <= end_bar}
        | {0, end_bar - start_bar}
    )
    return MelodySegment(
        notes=tuple(notes),
        key=melody.key,
        beats_per_bar=bpb,
        num_bars=end_bar - start_bar,
        phrase_boundaries=tuple(bounds),
    )


def _chords_window(chords: ChordProgression, beats_per_bar: int, start_bar: int, end_bar: int):
    start_beats = Fraction(start_bar * beats_per_bar)
    end_beats = Fraction(end_bar * beats_per_bar)
    slots = []
    for i, chord in enumerate(chords.slots):
        s = chords.slot_start(i)
        if start_beats <= s < end_beats:
            slots.append(chord)
    if not slots:
        return None
    expected = (end_beats - start_beats) / chords.slot_duration_beats
    if len(slots) != expected:
        return None  # progression does not span the window; skip this segment
    return ChordProgression(
        slots=tuple(slots),
        slot_duration_beats=chords.slot_duration_beats,
        start_beat=Fraction(0),
    )


# --- key detection ----------------------------------------------------------------

# Krumhansl-Schmuckler style key profiles (index = scale degree from tonic).
MAJOR_KEY_PROFILE = np.array(
    [6.35, 2.23, 3.48, 2.33, 4.38, 4.09, 2.52, 5.19, 2.39, 3.66, 2.29, 2.88]
)
MINOR_KEY_PROFILE = np.array(
    [6.33, 2.68, 3.52, 5.38, 2.60, 3.53, 2.54, 4.75, 3.98, 2.69, 3.34, 3.17]
)


def pitch_class_histogram(melody: MelodySegment) -> np.ndarray:
    """Duration-weighted pitch-class histogram (12 raw beat weights)."""
    hist = np.zeros(12)
    for note in melody.notes:
        hist[note.pitch_class] += float(note.duration_beats)
    return hist


def _pearson(x: np.ndarray, y: np.ndarray) -> float:
    xd = x - x.mean()
    yd = y - y.mean()
    denom = math.sqrt(float(xd @ xd) * float(yd @ yd))
    if denom == 0.0:
        return 0.0
    return float(xd @ yd) / denom


def detect_key(melody: MelodySegment) -> Key:
    """Best of 24 (tonic, mode) candidates by Pearson correlation between the
    duration-weighted pitch-class histogram and the rotated key profile.

    Ties break to the lower tonic, major before minor.
    """
    if melody.is_empty():
        raise ValueError("cannot detect the key of an empty melody")
    hist = pitch_class_histogram(melody)
    best: Optional[tuple] = None
    for mode, profile in ((Mode.MAJOR, MAJOR_KEY_PROFILE), (Mode.MINOR, MINOR_KEY_PROFILE)):
        for tonic in range(12):
            template = np.roll(profile, tonic)
            score = _pearson(hist, template)
            rank = (score, -tonic, 1 if mode is Mode.MAJOR else 0)
            if best is None or rank > best[0]:
                best = (rank, Key(tonic, mode))
    return best[1]
