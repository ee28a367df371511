"""Project a retrieved chord progression onto the music-theoretic feasible
set by minimizing a weighted modification cost with a Viterbi lattice.

The cost of a candidate sequence C against the retrieved reference C_r is

    d(C, C_r) = sum_t [ w_sub * (C_t != C_r_t)
                        + w_tonal * tonal_alignment_cost(C_t, slot_t)
                        + w_cad  * cadence_cost_t(C) ]
                + sum_t w_reg * transition_cost(C_{t-1}, C_t)

minimized over all |V|^n sequences on the reference's slot grid, subject to
a hard per-slot mask: a chord is infeasible at a non-empty slot when its
tonal alignment cost exceeds `tonal_hard_threshold`. A slot where every
chord is masked is relaxed (soft costs only) and recorded, never an error.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from fractions import Fraction
from typing import Mapping, Optional, Sequence

import numpy as np

from .theory import (
    CHORD_VOCABULARY,
    ChordProgression,
    ChordSymbol,
    Key,
    MelodySegment,
    chord_pitch_classes,
    roman_degree,
    slot_pitch_weights,
)

DEFAULT_TONAL_HARD_THRESHOLD = 0.999

# Rule-derived transition table constants (key-relative, corpus-independent).
_DESCENDING_FIFTH_COST = 0.0
_DIATONIC_COST = 0.1
_ONE_FOREIGN_COST = 0.4
_BOTH_FOREIGN_COST = 0.8
_SELF_TRANSITION_COST = 0.05

# Cadence rule table: phrase openings reward the tonic, phrase endings reward
# an authentic close, with partial credit for ending on tonic or dominant.
_NON_TONIC_START_COST = 0.5
_WEAK_CADENCE_COST = 0.25
_NO_CADENCE_COST = 0.75


@dataclass(frozen=True)
class EditConfig:
    w_sub: float = 1.0
    w_tonal: float = 2.0
    w_cad: float = 1.0
    w_reg: float = 1.0
    style: float = 0.3
    tonal_hard_threshold: float = DEFAULT_TONAL_HARD_THRESHOLD

    def __post_init__(self):
        for name in ("w_sub", "w_tonal", "w_cad", "w_reg"):
            value = getattr(self, name)
            if not np.isfinite(value) or value < 0:
                raise ValueError(f"{name} must be finite and >= 0, got {value}")
        if not 0.0 <= self.style <= 1.0:
            raise ValueError(f"style must be in [0, 1], got {self.style}")
        if not 0.0 < self.tonal_hard_threshold <= 1.0:
            raise ValueError(
                f"tonal_hard_threshold must be in (0, 1], got {self.tonal_hard_threshold}"
            )


@dataclass(frozen=True)
class EditResult:
    chords: ChordProgression
    cost: float
    breakdown: tuple  # one {substitution, tonal, cadence, regularization} dict per slot
    changed_slots: tuple
    relaxed_slots: tuple = ()
    reference: Optional[ChordProgression] = None  # the progression that was edited


def tonal_alignment_cost(chord: ChordSymbol, slot_weights: Mapping[int, object]) -> float:
    """Duration-weighted fraction of slot melody time outside the chord's triad.

    `slot_weights` maps pitch class to beat weight; an empty slot costs 0.
    """
    total = 0.0
    outside = 0.0
    tones = chord_pitch_classes(chord)
    for pc, weight in slot_weights.items():
        w = float(weight)
        total += w
        if pc % 12 not in tones:
            outside += w
    if total == 0.0:
        return 0.0
    return outside / total


def transition_cost(prev: ChordSymbol, next: ChordSymbol, key: Key, style: float) -> float:
    """Key-relative transition plausibility cost.

    0 for diatonic descending-fifth motion, 0.1 for other diatonic pairs;
    0.4 / 0.8 surcharges when one / both endpoints leave the key, scaled by
    (1 - style); repeating the same chord adds 0.05.
    """
    if not 0.0 <= style <= 1.0:
        raise ValueError(f"style must be in [0, 1], got {style}")
    prev_diatonic = roman_degree(prev, key) is not None
    next_diatonic = roman_degree(next, key) is not None
    if prev_diatonic and next_diatonic:
        if (prev.root - next.root) % 12 == 7:
            cost = _DESCENDING_FIFTH_COST
        else:
            cost = _DIATONIC_COST
    elif prev_diatonic or next_diatonic:
        cost = _ONE_FOREIGN_COST * (1.0 - style)
    else:
        cost = _BOTH_FOREIGN_COST * (1.0 - style)
    if prev == next:
        cost += _SELF_TRANSITION_COST
    return cost


def _phrase_slot_spans(
    progression_len: int,
    slot_duration: Fraction,
    beats_per_bar: int,
    phrase_boundaries: Sequence[int],
) -> list:
    """Map phrase bar ranges to (first_slot, last_slot) pairs on the grid."""
    spans = []
    for b_start, b_end in zip(phrase_boundaries, phrase_boundaries[1:]):
        start_beats = Fraction(b_start * beats_per_bar)
        end_beats = Fraction(b_end * beats_per_bar)
        first = None
        last = None
        for t in range(progression_len):
            s = t * slot_duration
            if s < start_beats:
                continue
            if s >= end_beats:
                break
            if first is None:
                first = t
            last = t
        if first is not None:
            spans.append((first, last))
    return spans


def cadence_costs(
    progression: ChordProgression,
    key: Key,
    phrase_boundaries: Sequence[int],
    beats_per_bar: int,
) -> np.ndarray:
    """Unweighted per-slot cadence costs for a concrete progression.

    Phrase-opening slots cost 0 on the tonic, else 0.5. Phrase-final slots
    cost 0 on an authentic V->I close, 0.25 when ending on I or V without
    it, else 0.75. Interior slots cost 0.
    """
    n = len(progression)
    costs = np.zeros(n)
    degrees = [roman_degree(c, key) for c in progression.slots]
    for first, last in _phrase_slot_spans(
        n, progression.slot_duration_beats, beats_per_bar, phrase_boundaries
    ):
        if degrees[first] != 1:
            costs[first] += _NON_TONIC_START_COST
        prev_degree = degrees[last - 1] if last >= 1 else None
        if prev_degree == 5 and degrees[last] == 1:
            pass  # authentic cadence
        elif degrees[last] in (1, 5):
            costs[last] += _WEAK_CADENCE_COST
        else:
            costs[last] += _NO_CADENCE_COST
    return costs


class EditLattice:
    """Precomputed Viterbi lattice for one melody/grid/config combination.

    The per-candidate part of the cost (the substitution indicator) is added
    in `project`, so the K retrieved candidates of one query share the
    expensive tonal/cadence/transition tables. Results are identical to
    building the lattice per candidate.
    """

    def __init__(
        self,
        melody: MelodySegment,
        slot_duration: Fraction,
        num_slots: int,
        config: EditConfig,
        vocabulary: Sequence[ChordSymbol] = CHORD_VOCABULARY,
    ):
        if num_slots * slot_duration != melody.total_beats:
            raise ValueError(
                f"slot grid ({num_slots} x {slot_duration}) does not cover the "
                f"melody's {melody.total_beats} beats"
            )
        self.melody = melody
        self.config = config
        self.vocabulary = tuple(vocabulary)
        self.slot_duration = Fraction(slot_duration)
        self.num_slots = num_slots
        key = melody.key
        n, V = num_slots, len(self.vocabulary)

        slot_starts = [i * self.slot_duration for i in range(n)]
        weights = slot_pitch_weights(melody, slot_starts, self.slot_duration)
        self.slot_nonempty = np.array([bool(w) for w in weights])

        tone_mask = np.zeros((V, 12))
        for c, chord in enumerate(self.vocabulary):
            for pc in chord_pitch_classes(chord):
                tone_mask[c, pc] = 1.0
        weight_matrix = np.zeros((n, 12))
        for t, slot in enumerate(weights):
            for pc, w in slot.items():
                weight_matrix[t, pc] = float(w)
        totals = weight_matrix.sum(axis=1)
        self.tonal = np.zeros((n, V))
        nonzero = totals > 0
        self.tonal[nonzero] = 1.0 - (weight_matrix[nonzero] @ tone_mask.T) / totals[
            nonzero, None
        ]

        self.infeasible = (self.tonal > config.tonal_hard_threshold) & self.slot_nonempty[:, None]
        self.relaxed_slots = tuple(
            int(t) for t in range(n) if self.infeasible[t].all()
        )
        self.infeasible[list(self.relaxed_slots)] = False

        degrees = np.array(
            [roman_degree(c, key) or 0 for c in self.vocabulary], dtype=int
        )
        # Vectorized transition table; entries equal transition_cost() exactly.
        diatonic = degrees > 0
        both = diatonic[:, None] & diatonic[None, :]
        one = diatonic[:, None] ^ diatonic[None, :]
        roots = np.array([c.root for c in self.vocabulary])
        descending_fifth = (roots[:, None] - roots[None, :]) % 12 == 7
        table = np.where(
            both & descending_fifth,
            _DESCENDING_FIFTH_COST,
            np.where(
                both,
                _DIATONIC_COST,
                np.where(
                    one,
                    _ONE_FOREIGN_COST * (1.0 - config.style),
                    _BOTH_FOREIGN_COST * (1.0 - config.style),
                ),
            ),
        )
        if len(set(self.vocabulary)) == V:
            same = np.eye(V, dtype=bool)
        else:
            same = np.array([[a == b for b in self.vocabulary] for a in self.vocabulary])
        self.transition = config.w_reg * (table + np.where(same, _SELF_TRANSITION_COST, 0.0))

        # Pairwise cadence matrix for phrase-final slots with a predecessor.
        is_tonic = degrees == 1
        is_dominant = degrees == 5
        pair = np.where(is_tonic[None, :], _WEAK_CADENCE_COST, _NO_CADENCE_COST)
        pair = np.where(is_dominant[None, :] & ~is_tonic[None, :], _WEAK_CADENCE_COST, pair)
        pair = np.where(is_dominant[:, None] & is_tonic[None, :], 0.0, pair)
        self.cadence_pair = config.w_cad * pair
        # Final-slot cadence cost when the slot has no predecessor.
        self.cadence_final_solo = config.w_cad * np.where(
            is_tonic | is_dominant, _WEAK_CADENCE_COST, _NO_CADENCE_COST
        )
        self.cadence_start = config.w_cad * np.where(is_tonic, 0.0, _NON_TONIC_START_COST)

        spans = _phrase_slot_spans(
            n, self.slot_duration, melody.beats_per_bar, melody.phrase_boundaries
        )
        self.phrase_start_slots = sorted({first for first, _ in spans})
        self.phrase_final_slots = sorted({last for _, last in spans})

        # Candidate-independent emission: tonal plus slot-local cadence terms.
        self.base_emission = config.w_tonal * self.tonal
        for t in self.phrase_start_slots:
            self.base_emission[t] += self.cadence_start
        if 0 in self.phrase_final_slots:
            self.base_emission[0] += self.cadence_final_solo

        self._index_of = {chord: i for i, chord in enumerate(self.vocabulary)}

    def project(self, retrieved: ChordProgression) -> EditResult:
        """Exact minimizer of the modification cost for one retrieved candidate."""
        if len(retrieved) != self.num_slots or retrieved.slot_duration_beats != self.slot_duration:
            raise ValueError(
                f"retrieved grid ({len(retrieved)} x {retrieved.slot_duration_beats}) does "
                f"not match the lattice grid ({self.num_slots} x {self.slot_duration})"
            )
        cfg = self.config
        n, V = self.num_slots, len(self.vocabulary)
        ref = np.array(
            [self._index_of.get(chord, -1) for chord in retrieved.slots], dtype=int
        )

        emission = self.base_emission.copy()
        emission += cfg.w_sub
        for t in range(n):
            if ref[t] >= 0:
                emission[t, ref[t]] -= cfg.w_sub
        emission[self.infeasible] = np.inf

        phrase_final = set(self.phrase_final_slots)
        dp = emission[0].copy()
        backpointers = np.zeros((n, V), dtype=int)
        for t in range(1, n):
            pair = self.transition
            if t in phrase_final:
                pair = pair + self.cadence_pair
            scores = dp[:, None] + pair
            backpointers[t] = np.argmin(scores, axis=0)  # first min = lowest chord index
            dp = scores[backpointers[t], np.arange(V)] + emission[t]

        best_end = int(np.argmin(dp))
        states = [best_end]
        for t in range(n - 1, 0, -1):
            states.append(int(backpointers[t, states[-1]]))
        states.reverse()

        chords = tuple(self.vocabulary[s] for s in states)
        progression = replace(retrieved, slots=chords)
        breakdown = self._breakdown(states, ref)
        cost = float(sum(sum(slot.values()) for slot in breakdown))
        changed = tuple(t for t in range(n) if states[t] != ref[t])
        return EditResult(
            chords=progression,
            cost=cost,
            breakdown=tuple(breakdown),
            changed_slots=changed,
            relaxed_slots=self.relaxed_slots,
            reference=retrieved,
        )

    def _breakdown(self, states: Sequence[int], ref: np.ndarray) -> list:
        cfg = self.config
        out = []
        for t, state in enumerate(states):
            slot = {
                "substitution": cfg.w_sub * float(state != ref[t]),
                "tonal": cfg.w_tonal * float(self.tonal[t, state]),
                "cadence": 0.0,
                "regularization": 0.0,
            }
            if t in self.phrase_start_slots:
                slot["cadence"] += float(self.cadence_start[state])
            if t in self.phrase_final_slots:
                if t == 0:
                    slot["cadence"] += float(self.cadence_final_solo[state])
                else:
                    slot["cadence"] += float(self.cadence_pair[states[t - 1], state])
            if t >= 1:
                # Table lookup; entries equal w_reg * transition_cost() exactly.
                slot["regularization"] = float(self.transition[states[t - 1], state])
            out.append(slot)
        return out

    def sequence_cost(self, progression: ChordProgression, retrieved: ChordProgression) -> float:
        """Cost of an arbitrary feasible-or-not sequence (diagnostics, tests)."""
        states = [self._index_of[c] for c in progression.slots]
        ref = np.array([self._index_of.get(c, -1) for c in retrieved.slots], dtype=int)
        return float(sum(sum(slot.values()) for slot in self._breakdown(states, ref)))


def edit(
    retrieved: ChordProgression,
    melody: MelodySegment,
    config: EditConfig = EditConfig(),
    vocabulary: Sequence[ChordSymbol] = CHORD_VOCABULARY,
) -> EditResult:
    """Project one retrieved progression onto the feasible set for a melody.

    The slot grid is inherited from `retrieved`, which must start at beat 0
    and span the melody's bars exactly.
    """
    if retrieved.start_beat != 0:
        raise ValueError("retrieved progression must start at beat 0 of the melody")
    lattice = EditLattice(
        melody=melody,
        slot_duration=retrieved.slot_duration_beats,
        num_slots=len(retrieved),
        config=config,
        vocabulary=vocabulary,
    )
    return lattice.project(retrieved)
