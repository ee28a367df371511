"""Standard MIDI File reading and writing (formats 0 and 1).

The reader extracts a monophonic melody line, the first time signature,
an optional key signature, and (when present) a block-triad chord track.
The writer produces the complementary layout: one meta track, one melody
track, and optionally one chord track voiced as root-position triads, so
note-level content round-trips through read/write.

Byte layout follows the MIDI 1.0 file specification: "MThd"/"MTrk"
chunks, big-endian lengths, variable-length delta times, running status.
"""

from __future__ import annotations

import logging
import struct
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Optional

from .theory import (
    CHORD_VOCABULARY,
    ChordProgression,
    ChordSymbol,
    Key,
    MelodyNote,
    Mode,
    chord_pitch_classes,
)

log = logging.getLogger(__name__)

HEADER_MAGIC = b"MThd"
TRACK_MAGIC = b"MTrk"

META_TIME_SIGNATURE = 0x58
META_KEY_SIGNATURE = 0x59
META_SET_TEMPO = 0x51
META_END_OF_TRACK = 0x2F

# Data-byte count per channel-message status nibble.
_CHANNEL_DATA_BYTES = {0x80: 2, 0x90: 2, 0xA0: 2, 0xB0: 2, 0xC0: 1, 0xD0: 1, 0xE0: 2}


class SmfError(ValueError):
    """Malformed or unsupported Standard MIDI File input."""


@dataclass
class RawNote:
    pitch: int
    onset_ticks: int
    duration_ticks: int


@dataclass
class SmfTrack:
    notes: list = field(default_factory=list)


@dataclass
class SmfData:
    """Decoded SMF content in tick units, before beat conversion."""

    format: int
    division: int
    tracks: list
    time_signature: tuple = (4, 4)
    key_signature: Optional[Key] = None
    tempo_us_per_quarter: Optional[int] = None

    @property
    def ticks_per_beat(self) -> Fraction:
        # One beat is the time-signature denominator unit (4/den quarter notes).
        numerator, denominator = self.time_signature
        return Fraction(self.division * 4, denominator)


class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def read(self, n: int, what: str) -> bytes:
        if self.pos + n > len(self.data):
            raise SmfError(f"truncated file while reading {what}")
        chunk = self.data[self.pos : self.pos + n]
        self.pos += n
        return chunk

    def read_u32(self, what: str) -> int:
        return struct.unpack(">I", self.read(4, what))[0]

    def read_u16(self, what: str) -> int:
        return struct.unpack(">H", self.read(2, what))[0]

    def read_byte(self, what: str) -> int:
        return self.read(1, what)[0]

    def read_varlen(self, what: str) -> int:
        value = 0
        for _ in range(4):
            byte = self.read_byte(what)
            value = (value << 7) | (byte & 0x7F)
            if not byte & 0x80:
                return value
        raise SmfError(f"variable-length quantity too long in {what}")

    @property
    def exhausted(self) -> bool:
        return self.pos >= len(self.data)


def parse_smf_bytes(data: bytes) -> SmfData:
    """Decode chunks, delta times and events into per-track tick-level notes."""
    reader = _Reader(data)
    magic = reader.read(4, "header magic")
    if magic != HEADER_MAGIC:
        raise SmfError(f"bad magic {magic!r}, expected {HEADER_MAGIC!r}")
    header_len = reader.read_u32("header length")
    if header_len < 6:
        raise SmfError(f"header chunk too short: {header_len}")
    fmt = reader.read_u16("format")
    ntrks = reader.read_u16("track count")
    division = reader.read_u16("division")
    reader.read(header_len - 6, "header padding")
    if fmt not in (0, 1):
        raise SmfError(f"unsupported SMF format {fmt}")
    if division & 0x8000:
        raise SmfError("SMPTE time division is not supported")
    if division == 0:
        raise SmfError("division must be positive")

    smf = SmfData(format=fmt, division=division, tracks=[])
    seen_time_signature = False
    tracks_read = 0
    while tracks_read < ntrks and not reader.exhausted:
        chunk_type = reader.read(4, "chunk type")
        chunk_len = reader.read_u32("chunk length")
        body = reader.read(chunk_len, f"chunk {chunk_type!r}")
        if chunk_type != TRACK_MAGIC:
            continue  # alien chunks are skipped per the SMF spec
        track, meta = _parse_track(body, track_index=tracks_read)
        smf.tracks.append(track)
        tracks_read += 1
        if meta.time_signature is not None and not seen_time_signature:
            smf.time_signature = meta.time_signature
            seen_time_signature = True
        if meta.key_signature is not None and smf.key_signature is None:
            smf.key_signature = meta.key_signature
        if meta.tempo is not None and smf.tempo_us_per_quarter is None:
            smf.tempo_us_per_quarter = meta.tempo
    if tracks_read < ntrks:
        raise SmfError(f"expected {ntrks} tracks, found {tracks_read}")
    return smf


@dataclass
class _TrackMeta:
    time_signature: Optional[tuple] = None
    key_signature: Optional[Key] = None
    tempo: Optional[int] = None


def _parse_track(body: bytes, track_index: int):
    reader = _Reader(body)
    track = SmfTrack()
    meta = _TrackMeta()
    ticks = 0
    running_status: Optional[int] = None
    open_notes: dict = {}  # pitch -> list of onset ticks (FIFO)

    def close_note(pitch: int, at_ticks: int):
        onsets = open_notes.get(pitch)
        if not onsets:
            return False
        onset = onsets.pop(0)
        duration = max(at_ticks - onset, 0)
        track.notes.append(RawNote(pitch, onset, duration))
        return True

    while not reader.exhausted:
        ticks += reader.read_varlen("delta time")
        first = reader.read_byte("event status")
        if first == 0xFF:
            running_status = None
            meta_type = reader.read_byte("meta type")
            length = reader.read_varlen("meta length")
            payload = reader.read(length, "meta payload")
            if meta_type == META_END_OF_TRACK:
                break
            elif meta_type == META_TIME_SIGNATURE and len(payload) >= 2:
                meta.time_signature = (payload[0], 1 << payload[1])
            elif meta_type == META_KEY_SIGNATURE and len(payload) >= 2:
                meta.key_signature = _key_from_signature(payload[0], payload[1])
            elif meta_type == META_SET_TEMPO and len(payload) >= 3:
                meta.tempo = (payload[0] << 16) | (payload[1] << 8) | payload[2]
            continue
        if first in (0xF0, 0xF7):
            running_status = None
            length = reader.read_varlen("sysex length")
            reader.read(length, "sysex payload")
            continue
        if first & 0x80:
            status = first
            running_status = status
            data0 = reader.read_byte("event data")
        else:
            if running_status is None:
                raise SmfError(
                    f"track {track_index}: data byte 0x{first:02x} with no running status"
                )
            status = running_status
            data0 = first
        kind = status & 0xF0
        n_data = _CHANNEL_DATA_BYTES.get(kind)
        if n_data is None:
            raise SmfError(f"track {track_index}: unexpected status byte 0x{status:02x}")
        data1 = reader.read_byte("event data") if n_data == 2 else 0
        if kind == 0x90 and data1 > 0:
            open_notes.setdefault(data0, []).append(ticks)
        elif kind == 0x80 or (kind == 0x90 and data1 == 0):
            if not close_note(data0, ticks):
                log.warning(
                    "track %d: note-off for pitch %d without matching note-on",
                    track_index,
                    data0,
                )

    for pitch, onsets in sorted(open_notes.items()):
        for onset in onsets:
            log.warning(
                "track %d: note-on pitch %d at tick %d has no note-off; closing at track end",
                track_index,
                pitch,
                onset,
            )
            track.notes.append(RawNote(pitch, onset, max(ticks - onset, 0)))
    track.notes.sort(key=lambda n: (n.onset_ticks, n.pitch))
    return track, meta


def _key_from_signature(sf_byte: int, mi: int) -> Key:
    sf = sf_byte - 256 if sf_byte > 127 else sf_byte
    if mi not in (0, 1) or not -7 <= sf <= 7:
        raise SmfError(f"invalid key signature (sf={sf}, mi={mi})")
    if mi == 0:
        return Key((sf * 7) % 12, Mode.MAJOR)
    return Key((9 + sf * 7) % 12, Mode.MINOR)


def melody_track_index(smf: SmfData) -> Optional[int]:
    """The track with the most note events that is not chord-like."""
    best = None
    for i, track in enumerate(smf.tracks):
        if not track.notes or _looks_like_chord_track(track):
            continue
        if best is None or len(track.notes) > len(smf.tracks[best].notes):
            best = i
    if best is None:
        # All-chordal file: fall back to the densest track of any kind.
        candidates = [i for i, t in enumerate(smf.tracks) if t.notes]
        if not candidates:
            return None
        best = max(candidates, key=lambda i: len(smf.tracks[i].notes))
    return best


def _looks_like_chord_track(track: SmfTrack) -> bool:
    onsets: dict = {}
    for note in track.notes:
        onsets.setdefault(note.onset_ticks, 0)
        onsets[note.onset_ticks] += 1
    if not onsets:
        return False
    chordal = sum(1 for n in onsets.values() if n >= 3)
    return chordal * 2 >= len(onsets)


def monophonic_notes(track: SmfTrack, ticks_per_beat: Fraction) -> list:
    """Convert raw ticks to beats, trimming overlaps to the next onset.

    Simultaneous onsets keep only the highest pitch.
    """
    picked: list = []
    for note in sorted(track.notes, key=lambda n: (n.onset_ticks, -n.pitch)):
        if picked and picked[-1].onset_ticks == note.onset_ticks:
            continue
        picked.append(note)
    notes = []
    for i, note in enumerate(picked):
        duration = note.duration_ticks
        if i + 1 < len(picked):
            duration = min(duration, picked[i + 1].onset_ticks - note.onset_ticks)
        if duration <= 0:
            continue
        notes.append(
            MelodyNote(
                pitch=note.pitch,
                onset_beats=Fraction(note.onset_ticks) / ticks_per_beat,
                duration_beats=Fraction(duration) / ticks_per_beat,
            )
        )
    return notes


_TRIAD_BY_PCS = {chord_pitch_classes(c): c for c in CHORD_VOCABULARY}


def decode_chord_track(smf: SmfData) -> Optional[ChordProgression]:
    """Decode the first chord-like track as a progression of block triads.

    Returns None unless every onset group forms one of the 48 triads and the
    groups sit on a uniform grid (as produced by `build_smf`).
    """
    index = next(
        (i for i, t in enumerate(smf.tracks) if t.notes and _looks_like_chord_track(t)),
        None,
    )
    if index is None:
        return None
    groups: dict = {}
    for note in smf.tracks[index].notes:
        groups.setdefault(note.onset_ticks, []).append(note)
    onsets = sorted(groups)
    chords = []
    for onset in onsets:
        pcs = frozenset(n.pitch % 12 for n in groups[onset])
        chord = _TRIAD_BY_PCS.get(pcs)
        if chord is None:
            return None
        chords.append(chord)
    if len(onsets) >= 2:
        spacing = {b - a for a, b in zip(onsets, onsets[1:])}
        if len(spacing) != 1:
            return None
        duration_ticks = spacing.pop()
    else:
        duration_ticks = max(n.duration_ticks for n in groups[onsets[0]])
        if duration_ticks <= 0:
            return None
    tpb = smf.ticks_per_beat
    return ChordProgression(
        slots=tuple(chords),
        slot_duration_beats=Fraction(duration_ticks) / tpb,
        start_beat=Fraction(onsets[0]) / tpb,
    )


# --- writing ---------------------------------------------------------------


def _varlen(value: int) -> bytes:
    out = [value & 0x7F]
    value >>= 7
    while value:
        out.append((value & 0x7F) | 0x80)
        value >>= 7
    return bytes(reversed(out))


def _track_chunk(events: list) -> bytes:
    """events: list of (abs_ticks, payload bytes), payload includes status."""
    events = sorted(events, key=lambda e: e[0])
    body = bytearray()
    prev = 0
    for ticks, payload in events:
        body += _varlen(ticks - prev)
        body += payload
        prev = ticks
    body += _varlen(0) + bytes([0xFF, META_END_OF_TRACK, 0x00])
    return TRACK_MAGIC + struct.pack(">I", len(body)) + bytes(body)


def _key_signature_bytes(key: Key) -> Optional[bytes]:
    # Invert tonic -> sf on the circle of fifths; prefer |sf| <= 6.
    for sf in range(-6, 7):
        tonic = (sf * 7) % 12 if key.mode is Mode.MAJOR else (9 + sf * 7) % 12
        if tonic == key.tonic:
            mi = 0 if key.mode is Mode.MAJOR else 1
            return bytes([0xFF, META_KEY_SIGNATURE, 0x02, sf & 0xFF, mi])
    return None


def build_smf(
    notes,
    beats_per_bar: int,
    key: Optional[Key] = None,
    chords: Optional[ChordProgression] = None,
    division: int = 480,
    tempo_us_per_quarter: int = 500_000,
    velocity: int = 80,
) -> bytes:
    """Serialize a melody (and optional chord track) as a format-1 SMF.

    Beat positions are denominator units of a {beats_per_bar}/4 meter, so
    one beat equals one quarter note at `division` ticks.
    """
    ticks_per_beat = division  # denominator fixed at 4

    def to_ticks(beats: Fraction) -> int:
        ticks = Fraction(beats) * ticks_per_beat
        if ticks.denominator != 1:
            raise ValueError(f"beat position {beats} is not representable at division {division}")
        return int(ticks)

    meta_events = [
        (0, bytes([0xFF, META_SET_TEMPO, 0x03]) + tempo_us_per_quarter.to_bytes(3, "big")),
        (0, bytes([0xFF, META_TIME_SIGNATURE, 0x04, beats_per_bar, 2, 24, 8])),
    ]
    if key is not None:
        ks = _key_signature_bytes(key)
        if ks is not None:
            meta_events.append((0, ks))

    melody_events = []
    for note in notes:
        on = to_ticks(note.onset_beats)
        off = to_ticks(note.end_beats)
        melody_events.append((on, bytes([0x90, note.pitch, velocity])))
        melody_events.append((off, bytes([0x80, note.pitch, 0])))

    chunks = [_track_chunk(meta_events), _track_chunk(melody_events)]
    if chords is not None:
        chord_events = []
        for i, chord in enumerate(chords.slots):
            on = to_ticks(chords.slot_start(i))
            off = to_ticks(chords.slot_start(i) + chords.slot_duration_beats)
            for pitch in triad_voicing(chord):
                chord_events.append((on, bytes([0x90, pitch, velocity])))
                chord_events.append((off, bytes([0x80, pitch, 0])))
        chunks.append(_track_chunk(chord_events))

    header = HEADER_MAGIC + struct.pack(">IHHH", 6, 1, len(chunks), division)
    return header + b"".join(chunks)


def triad_voicing(chord: ChordSymbol, octave: int = 4) -> tuple:
    """Root-position triad pitches with the root in the given octave (C4 = 60)."""
    base = 12 * (octave + 1) + chord.root
    return tuple(base + iv for iv in chord.quality.intervals)
