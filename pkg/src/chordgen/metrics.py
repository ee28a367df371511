"""Objective harmonization metrics.

Diversity / transition structure: chord histogram entropy (CHE), chord
coverage (CC), chord tonal distance (CTD). Melody-chord compatibility:
pitch consonance score (PCS), melody-chord tonal distance (MCTD), and the
chord-tone to non-chord-tone ratio (CTnCTR). CHE/CC/CTD are also reported
as signed deltas against a ground-truth progression.
"""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass, replace
from typing import Optional

import numpy as np

from .theory import (
    ChordProgression,
    ChordSymbol,
    MelodySegment,
    chord_pitch_classes,
)

# Tonnetz circle radii: fifths, minor thirds, major thirds.
_R_FIFTH = 1.0
_R_MINOR_THIRD = 1.0
_R_MAJOR_THIRD = 0.5

# Consonant intervals above the chord root; the fourth scores zero.
_CONSONANT_INTERVALS = frozenset({0, 3, 4, 7, 8, 9})
_NEUTRAL_INTERVAL = 5

# A non-chord tone is "proper" when the next note is at most this far away.
_PROPER_STEP_SEMITONES = 2


@dataclass(frozen=True)
class MetricReport:
    che: float
    cc: float  # integer per progression, fractional once aggregated
    ctd: float
    pcs: float
    mctd: float
    ctnctr: float
    delta_che: Optional[float] = None
    delta_cc: Optional[float] = None
    delta_ctd: Optional[float] = None

    def as_dict(self) -> dict:
        out = {
            "che": self.che,
            "cc": self.cc,
            "ctd": self.ctd,
            "pcs": self.pcs,
            "mctd": self.mctd,
            "ctnctr": self.ctnctr,
        }
        if self.delta_che is not None:
            out.update(
                {"delta_che": self.delta_che, "delta_cc": self.delta_cc, "delta_ctd": self.delta_ctd}
            )
        return out


def che(progression: ChordProgression) -> float:
    """Shannon entropy (natural log) of the per-slot chord label histogram."""
    counts = Counter(progression.slots)
    total = len(progression.slots)
    return -sum((n / total) * math.log(n / total) for n in counts.values())


def cc(progression: ChordProgression) -> int:
    """Number of distinct chord labels used."""
    return len(set(progression.slots))


def tonal_centroid(weights) -> np.ndarray:
    """Weighted 6-D tonnetz centroid of a pitch-class distribution.

    `weights` is a mapping pc -> weight or a 12-element sequence. Each class
    contributes w * (sin, cos) points on the circles of fifths, minor
    thirds, and major thirds, normalized by total weight.
    """
    if isinstance(weights, dict):
        vec = np.zeros(12)
        for pc, w in weights.items():
            vec[pc % 12] += float(w)
    else:
        vec = np.asarray(weights, dtype=np.float64)
        if vec.shape != (12,):
            raise ValueError("expected 12 pitch-class weights")
    total = vec.sum()
    if total <= 0:
        raise ValueError("pitch-class weights must not be all zero")
    p = np.arange(12)
    basis = np.stack(
        [
            _R_FIFTH * np.sin(p * (7.0 * math.pi / 6.0)),
            _R_FIFTH * np.cos(p * (7.0 * math.pi / 6.0)),
            _R_MINOR_THIRD * np.sin(p * (3.0 * math.pi / 2.0)),
            _R_MINOR_THIRD * np.cos(p * (3.0 * math.pi / 2.0)),
            _R_MAJOR_THIRD * np.sin(p * (2.0 * math.pi / 3.0)),
            _R_MAJOR_THIRD * np.cos(p * (2.0 * math.pi / 3.0)),
        ]
    )
    return (basis @ vec) / total


_CHORD_CENTROIDS: dict = {}
_PC_CENTROIDS: dict = {}


def chord_centroid(chord: ChordSymbol) -> np.ndarray:
    cached = _CHORD_CENTROIDS.get(chord)
    if cached is None:
        cached = tonal_centroid({pc: 1.0 for pc in chord_pitch_classes(chord)})
        _CHORD_CENTROIDS[chord] = cached
    return cached


def _pc_centroid(pc: int) -> np.ndarray:
    cached = _PC_CENTROIDS.get(pc)
    if cached is None:
        cached = tonal_centroid({pc: 1.0})
        _PC_CENTROIDS[pc] = cached
    return cached


def ctd(progression: ChordProgression) -> float:
    """Mean Euclidean tonnetz distance between consecutive chords."""
    if len(progression) < 2:
        raise ValueError("CTD requires at least two slots")
    centroids = [chord_centroid(c) for c in progression.slots]
    distances = [
        float(np.linalg.norm(b - a)) for a, b in zip(centroids, centroids[1:])
    ]
    return sum(distances) / len(distances)


def _note_slot_overlaps(melody: MelodySegment, progression: ChordProgression) -> list:
    """(note index, note, chord, overlap-beats float) per note/slot intersection.

    Boundary comparisons run on exact Fractions; only the emitted overlap
    weight is converted to float.
    """
    out = []
    dur = progression.slot_duration_beats
    n = len(progression)
    for index, note in enumerate(melody.notes):
        first = int(max(note.onset_beats - progression.start_beat, 0) // dur)
        for i in range(first, n):
            start = progression.slot_start(i)
            if start >= note.end_beats:
                break
            overlap = min(note.end_beats, start + dur) - max(note.onset_beats, start)
            if overlap > 0:
                out.append((index, note, progression.slots[i], float(overlap)))
    return out


def _pcs_from_overlaps(overlaps) -> float:
    score = 0.0
    total = 0.0
    for _, note, chord, weight in overlaps:
        interval = (note.pitch_class - chord.root) % 12
        if interval in _CONSONANT_INTERVALS:
            score += weight
        elif interval != _NEUTRAL_INTERVAL:
            score -= weight
        total += weight
    if total == 0.0:
        raise ValueError("melody does not overlap the progression")
    return score / total


def _mctd_from_overlaps(overlaps) -> float:
    total = 0.0
    acc = 0.0
    for _, note, chord, weight in overlaps:
        distance = float(np.linalg.norm(_pc_centroid(note.pitch_class) - chord_centroid(chord)))
        acc += weight * distance
        total += weight
    if total == 0.0:
        raise ValueError("melody does not overlap the progression")
    return acc / total


def _ctnctr_from_overlaps(melody: MelodySegment, overlaps) -> float:
    notes = melody.notes
    proper = [
        abs(notes[i + 1].pitch - notes[i].pitch) <= _PROPER_STEP_SEMITONES
        for i in range(len(notes) - 1)
    ] + [False]  # the final note has no successor and is never proper
    n_c = 0.0
    n_n = 0.0
    n_p = 0.0
    for index, note, chord, weight in overlaps:
        if note.pitch_class in chord_pitch_classes(chord):
            n_c += weight
        else:
            n_n += weight
            if proper[index]:
                n_p += weight
    if n_n == 0.0:
        return 1.0
    return (n_c + n_p) / (n_c + n_n)


def pcs(melody: MelodySegment, progression: ChordProgression) -> float:
    """Duration-weighted consonance of melody pitch classes against chord roots.

    +1 for intervals {0,3,4,7,8,9} above the root, 0 for the fourth, -1
    otherwise.
    """
    if melody.is_empty():
        raise ValueError("PCS requires a non-empty melody")
    return _pcs_from_overlaps(_note_slot_overlaps(melody, progression))


def mctd(melody: MelodySegment, progression: ChordProgression) -> float:
    """Duration-weighted mean tonnetz distance from each note to its chord."""
    if melody.is_empty():
        raise ValueError("MCTD requires a non-empty melody")
    return _mctd_from_overlaps(_note_slot_overlaps(melody, progression))


def ctnctr(melody: MelodySegment, progression: ChordProgression) -> float:
    """(n_c + n_p) / (n_c + n_n) over note durations.

    n_c: chord-tone time; n_n: non-chord-tone time; n_p: non-chord-tone time
    whose note resolves to a next note within two semitones. All chord tones
    yields 1.0 by convention.
    """
    if melody.is_empty():
        raise ValueError("CTnCTR requires a non-empty melody")
    return _ctnctr_from_overlaps(melody, _note_slot_overlaps(melody, progression))


def compute_report(melody: MelodySegment, progression: ChordProgression) -> MetricReport:
    if melody.is_empty():
        raise ValueError("metrics require a non-empty melody")
    overlaps = _note_slot_overlaps(melody, progression)
    return MetricReport(
        che=che(progression),
        cc=cc(progression),
        ctd=ctd(progression) if len(progression) >= 2 else 0.0,
        pcs=_pcs_from_overlaps(overlaps),
        mctd=_mctd_from_overlaps(overlaps),
        ctnctr=_ctnctr_from_overlaps(melody, overlaps),
    )


def delta_report(system: MetricReport, ground_truth: MetricReport) -> MetricReport:
    """System metrics annotated with signed CHE/CC/CTD differences vs ground truth."""
    return replace(
        system,
        delta_che=system.che - ground_truth.che,
        delta_cc=float(system.cc - ground_truth.cc),
        delta_ctd=system.ctd - ground_truth.ctd,
    )


def aggregate_reports(reports) -> MetricReport:
    """Mean of each field; delta fields are averaged when present on all rows."""
    reports = list(reports)
    if not reports:
        raise ValueError("nothing to aggregate")
    n = len(reports)

    def mean(name):
        return sum(getattr(r, name) for r in reports) / n

    has_deltas = all(r.delta_che is not None for r in reports)
    return MetricReport(
        che=mean("che"),
        cc=mean("cc"),
        ctd=mean("ctd"),
        pcs=mean("pcs"),
        mctd=mean("mctd"),
        ctnctr=mean("ctnctr"),
        delta_che=mean("delta_che") if has_deltas else None,
        delta_cc=mean("delta_cc") if has_deltas else None,
        delta_ctd=mean("delta_ctd") if has_deltas else None,
    )
