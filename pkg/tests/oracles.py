"""Independent reference implementations used to check optimized paths.

The editing oracle never touches the Viterbi lattice: per-slot and per-pair
cost tables are probed from the public scalar cost functions (which have
their own hand-computed example tests) and combined by literal enumeration
over every possible chord sequence.
"""

from __future__ import annotations

from dataclasses import replace
from fractions import Fraction

import numpy as np

from chordgen import ChordProgression, MelodySegment, cadence_costs, transition_cost
from chordgen.editor import EditConfig, tonal_alignment_cost
from chordgen.theory import CHORD_VOCABULARY, slot_pitch_weights


def reference_sequence_cost(
    chords,
    retrieved: ChordProgression,
    melody: MelodySegment,
    config: EditConfig,
) -> float:
    """Literal scalar evaluation of the documented modification cost."""
    n = len(retrieved)
    dur = retrieved.slot_duration_beats
    weights = slot_pitch_weights(melody, [i * dur for i in range(n)], dur)
    key = melody.key
    total = 0.0
    for t, chord in enumerate(chords):
        if chord != retrieved.slots[t]:
            total += config.w_sub
        total += config.w_tonal * tonal_alignment_cost(chord, weights[t])
    probe = replace(retrieved, slots=tuple(chords))
    total += config.w_cad * float(
        cadence_costs(probe, key, melody.phrase_boundaries, melody.beats_per_bar).sum()
    )
    for t in range(1, n):
        total += config.w_reg * transition_cost(chords[t - 1], chords[t], key, config.style)
    return total


def _probe_cadence_tables(key, vocabulary):
    """Extract start / final-pair / final-solo cost tables by probing
    cadence_costs with tiny constructed progressions."""
    V = len(vocabulary)
    start = np.zeros(V)
    solo = np.zeros(V)
    for c, chord in enumerate(vocabulary):
        one = ChordProgression(slots=(chord,), slot_duration_beats=Fraction(4))
        costs = cadence_costs(one, key, (0, 1), 4)
        # The single slot is both phrase start and phrase final.
        two = ChordProgression(slots=(chord, chord), slot_duration_beats=Fraction(2))
        two_costs = cadence_costs(two, key, (0, 1), 4)
        start[c] = two_costs[0]
        solo[c] = costs[0] - two_costs[0]
    pair = np.zeros((V, V))
    for i, prev in enumerate(vocabulary):
        for j, nxt in enumerate(vocabulary):
            two = ChordProgression(slots=(prev, nxt), slot_duration_beats=Fraction(2))
            pair[i, j] = cadence_costs(two, key, (0, 1), 4)[1]
    return start, pair, solo


def brute_force_edit(
    retrieved: ChordProgression,
    melody: MelodySegment,
    config: EditConfig,
    vocabulary=CHORD_VOCABULARY,
):
    """Exhaustive minimum of the modification cost over |V|^n sequences.

    Returns (best_cost, best_chords). Mirrors the hard feasibility mask and
    its relax-on-dead-slot fallback from the documented contract.
    """
    vocabulary = tuple(vocabulary)
    n = len(retrieved)
    V = len(vocabulary)
    dur = retrieved.slot_duration_beats
    key = melody.key
    weights = slot_pitch_weights(melody, [i * dur for i in range(n)], dur)

    emission = np.zeros((n, V))
    tonal = np.zeros((n, V))
    for t in range(n):
        for c, chord in enumerate(vocabulary):
            tonal[t, c] = tonal_alignment_cost(chord, weights[t])
            emission[t, c] = config.w_tonal * tonal[t, c] + config.w_sub * (
                chord != retrieved.slots[t]
            )
    for t in range(n):
        if not weights[t]:
            continue
        mask = tonal[t] > config.tonal_hard_threshold
        if mask.all():
            continue  # dead slot: relax, leave soft costs only
        emission[t, mask] = np.inf

    transition = np.zeros((V, V))
    for i, prev in enumerate(vocabulary):
        for j, nxt in enumerate(vocabulary):
            transition[i, j] = config.w_reg * transition_cost(prev, nxt, key, config.style)

    cad_start, cad_pair, cad_solo = _probe_cadence_tables(key, vocabulary)
    cad_start = config.w_cad * cad_start
    cad_pair = config.w_cad * cad_pair
    cad_solo = config.w_cad * cad_solo

    # Phrase-to-slot mapping recomputed from first principles.
    starts, finals = set(), set()
    bpb = melody.beats_per_bar
    for b0, b1 in zip(melody.phrase_boundaries, melody.phrase_boundaries[1:]):
        in_phrase = [
            t for t in range(n) if b0 * bpb <= t * dur < b1 * bpb
        ]
        if in_phrase:
            starts.add(in_phrase[0])
            finals.add(in_phrase[-1])

    # total[i0, ..., i_{n-1}] assembled by broadcasting one axis per slot.
    shape = (V,) * n

    def lift(vec, axis):
        dims = [1] * n
        dims[axis] = V
        return vec.reshape(dims)

    def lift2(mat, axis):
        dims = [1] * n
        dims[axis] = V
        dims[axis + 1] = V
        return mat.reshape(dims)

    total = np.zeros(shape)
    for t in range(n):
        total = total + lift(emission[t], t)
    for t in range(1, n):
        total = total + lift2(transition, t - 1)
    for t in starts:
        total = total + lift(cad_start, t)
    for t in finals:
        if t == 0:
            total = total + lift(cad_solo, 0)
        else:
            total = total + lift2(cad_pair, t - 1)

    flat = int(np.argmin(total))
    best_cost = float(total.reshape(-1)[flat])
    indices = np.unravel_index(flat, shape)
    best_chords = tuple(vocabulary[int(i)] for i in indices)
    return best_cost, best_chords
