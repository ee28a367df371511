"""JSON payload shapes shared by the CLI result files and the HTTP service.

Candidate payloads carry everything an inspector needs: retrieved and
edited chords, change set, per-slot cost breakdown, and the full score
decomposition.
"""

from __future__ import annotations

from .pipeline import HarmonizationResult
from .reranker import RankedCandidate
from .serialize import beat_to_obj, key_to_obj, melody_to_obj
from .theory import ChordProgression, MelodySegment


def progression_to_payload(progression: ChordProgression) -> dict:
    return {
        "symbols": [str(c) for c in progression.slots],
        "slots": [c.index for c in progression.slots],
        "slot_duration_beats": beat_to_obj(progression.slot_duration_beats),
        "start_beat": beat_to_obj(progression.start_beat),
    }


def melody_to_payload(melody: MelodySegment) -> dict:
    return {
        "notes": [
            {
                "pitch": n.pitch,
                "onset": beat_to_obj(n.onset_beats),
                "dur": beat_to_obj(n.duration_beats),
            }
            for n in melody.notes
        ],
        "beats_per_bar": melody.beats_per_bar,
        "num_bars": melody.num_bars,
        "key": key_to_obj(melody.key),
        "phrases": list(melody.phrase_boundaries),
    }


def candidate_to_payload(candidate: RankedCandidate) -> dict:
    retrieval = candidate.retrieval
    payload = {
        "score": candidate.score,
        "s_ret": candidate.s_ret,
        "s_edit": candidate.s_edit,
        "cost": candidate.edit.cost,
        "edited": progression_to_payload(candidate.edit.chords),
        "retrieved_aligned": (
            progression_to_payload(candidate.edit.reference)
            if candidate.edit.reference is not None
            else None
        ),
        "changed_slots": list(candidate.edit.changed_slots),
        "relaxed_slots": list(candidate.edit.relaxed_slots),
        "breakdown": [dict(slot) for slot in candidate.edit.breakdown],
    }
    if retrieval is not None:
        payload["source"] = {
            "song_id": retrieval.entry.source[0],
            "start_bar": retrieval.entry.source[1],
        }
        payload["similarity"] = retrieval.similarity
        payload["retrieved"] = progression_to_payload(retrieval.entry.chords)
        payload["retrieved_melody"] = melody_to_obj(retrieval.entry.melody)
    else:
        payload["source"] = None
        payload["similarity"] = None
        payload["retrieved"] = None
    return payload


def result_to_payload(result: HarmonizationResult) -> dict:
    return {
        "final": candidate_to_payload(result.final),
        "candidates": [candidate_to_payload(c) for c in result.all_candidates],
        "relaxed_slots": list(result.relaxed_slots),
        "timing": dict(result.timing),
    }
