"""End-to-end harmonization pipeline and evaluation harness.

One harmonize call runs encode -> retrieve -> edit (per candidate) ->
rerank -> argmax. Ablation variants remove one stage each; the evaluation
harness scores outputs with the metrics module against ground truth and
renders per-segment and aggregate CSV rows.
"""

from __future__ import annotations

import enum
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from fractions import Fraction
from typing import Optional, Sequence

import numpy as np

from .editor import EditConfig, EditLattice, EditResult
from .encoder import encode
from .ingest import SegmentedPair, Song, segment
from .memory import Memory, retrieve
from .metrics import MetricReport, aggregate_reports, compute_report, delta_report
from .reranker import RankedCandidate, RerankConfig, rerank
from .theory import (
    CHORD_VOCABULARY,
    ChordProgression,
    ChordSymbol,
    ChordQuality,
    Key,
    MelodyNote,
    MelodySegment,
    Mode,
    default_phrase_boundaries,
)


class Ablation(enum.Enum):
    FULL = "full"
    NO_RETRIEVAL = "no_retrieval"
    NO_EDITOR = "no_editor"
    NO_RERANKING = "no_reranking"
    RANDOM = "random"


@dataclass(frozen=True)
class PipelineConfig:
    k: int = 100
    edit: EditConfig = EditConfig()
    rerank: RerankConfig = RerankConfig()
    ablation: Ablation = Ablation.FULL
    seed: int = 0
    candidate_cap: int = 20
    threads: int = 1

    def __post_init__(self):
        if self.k < 1:
            raise ValueError(f"k must be >= 1, got {self.k}")
        if self.candidate_cap < 1:
            raise ValueError(f"candidate_cap must be >= 1, got {self.candidate_cap}")
        if self.threads < 1:
            raise ValueError(f"threads must be >= 1, got {self.threads}")

    @classmethod
    def from_dict(cls, obj: dict) -> "PipelineConfig":
        kwargs = {}
        for name in ("k", "seed", "candidate_cap", "threads"):
            if name in obj:
                kwargs[name] = int(obj[name])
        if "ablation" in obj:
            kwargs["ablation"] = Ablation(obj["ablation"])
        if "edit" in obj:
            kwargs["edit"] = EditConfig(**obj["edit"])
        rerank_obj = dict(obj.get("rerank", {}))
        if "lambda" in rerank_obj:  # accept the bare name used in config files
            rerank_obj["lambda_"] = rerank_obj.pop("lambda")
        if rerank_obj:
            kwargs["rerank"] = RerankConfig(**rerank_obj)
        return cls(**kwargs)

    def to_dict(self) -> dict:
        return {
            "k": self.k,
            "seed": self.seed,
            "candidate_cap": self.candidate_cap,
            "threads": self.threads,
            "ablation": self.ablation.value,
            "edit": {
                "w_sub": self.edit.w_sub,
                "w_tonal": self.edit.w_tonal,
                "w_cad": self.edit.w_cad,
                "w_reg": self.edit.w_reg,
                "style": self.edit.style,
                "tonal_hard_threshold": self.edit.tonal_hard_threshold,
            },
            "rerank": {"lambda": self.rerank.lambda_, "gamma": self.rerank.gamma},
        }


@dataclass(frozen=True)
class HarmonizationResult:
    final: RankedCandidate
    all_candidates: tuple
    timing: dict = field(compare=False)  # stage -> seconds; diagnostic only
    relaxed_slots: tuple = ()

    def __post_init__(self):
        if self.all_candidates and self.final is not self.all_candidates[0]:
            raise ValueError("final candidate must head the ranked list")


def regrid_to_melody(progression: ChordProgression, melody: MelodySegment) -> ChordProgression:
    """Crop or tile a retrieved progression onto the query's bars.

    A progression that already spans the melody (from beat 0) is kept as is;
    otherwise the query gets one slot per bar and slot i takes the retrieved
    chord at position i (wrapping when the retrieval is shorter).
    """
    if progression.start_beat == 0 and progression.total_beats == melody.total_beats:
        return progression
    n = melody.num_bars
    slots = tuple(progression.slots[i % len(progression.slots)] for i in range(n))
    return ChordProgression(
        slots=slots,
        slot_duration_beats=Fraction(melody.beats_per_bar),
        start_beat=Fraction(0),
    )


def _edit_candidates(
    melody: MelodySegment,
    progressions: Sequence[ChordProgression],
    config: EditConfig,
    threads: int,
) -> list:
    """Project every candidate; lattices are shared per distinct slot grid."""
    lattices: dict = {}
    for prog in progressions:
        grid = (prog.slot_duration_beats, len(prog))
        if grid not in lattices:
            lattices[grid] = EditLattice(
                melody=melody,
                slot_duration=prog.slot_duration_beats,
                num_slots=len(prog),
                config=config,
            )

    def project(prog: ChordProgression) -> EditResult:
        return lattices[(prog.slot_duration_beats, len(prog))].project(prog)

    if threads > 1 and len(progressions) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(project, progressions))
    return [project(p) for p in progressions]


def _passthrough_result(progression: ChordProgression) -> EditResult:
    """A zero-cost EditResult for variants that skip the editing stage."""
    breakdown = tuple(
        {"substitution": 0.0, "tonal": 0.0, "cadence": 0.0, "regularization": 0.0}
        for _ in progression.slots
    )
    return EditResult(
        chords=progression,
        cost=0.0,
        breakdown=breakdown,
        changed_slots=(),
        relaxed_slots=(),
        reference=progression,
    )


def _random_progressions(
    melody: MelodySegment, count: int, seed: int, vocabulary=CHORD_VOCABULARY
) -> list:
    rng = np.random.default_rng(seed)
    n = melody.num_bars
    out = []
    for _ in range(count):
        indices = rng.integers(0, len(vocabulary), size=n)
        out.append(
            ChordProgression(
                slots=tuple(vocabulary[i] for i in indices),
                slot_duration_beats=Fraction(melody.beats_per_bar),
                start_beat=Fraction(0),
            )
        )
    return out


def harmonize(
    melody: MelodySegment, memory: Memory, config: PipelineConfig = PipelineConfig()
) -> HarmonizationResult:
    """Full pipeline: retrieve top-K, edit each candidate, rerank, pick argmax."""
    if melody.is_empty():
        raise ValueError("cannot harmonize an empty melody")
    timing = {}

    t0 = time.perf_counter()
    query = encode(melody)
    timing["encode"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    retrievals = retrieve(memory, query, k=config.k)
    timing["retrieve"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    progressions = [regrid_to_melody(r.entry.chords, melody) for r in retrievals]
    edits = _edit_candidates(melody, progressions, config.edit, config.threads)
    timing["edit"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    ranked = rerank(list(zip(retrievals, edits)), config.rerank)
    timing["rerank"] = time.perf_counter() - t0

    return HarmonizationResult(
        final=ranked[0],
        all_candidates=tuple(ranked[: config.candidate_cap]),
        timing=timing,
        relaxed_slots=ranked[0].edit.relaxed_slots,
    )


def run_ablation(
    melody: MelodySegment, memory: Memory, config: PipelineConfig
) -> HarmonizationResult:
    """Run the variant selected by config.ablation (FULL delegates to harmonize)."""
    if config.ablation is Ablation.FULL:
        return harmonize(melody, memory, config)
    if melody.is_empty():
        raise ValueError("cannot harmonize an empty melody")
    timing = {}

    if config.ablation is Ablation.NO_RETRIEVAL:
        t0 = time.perf_counter()
        progressions = _random_progressions(melody, config.k, config.seed)
        timing["candidates"] = time.perf_counter() - t0
        t0 = time.perf_counter()
        edits = _edit_candidates(melody, progressions, config.edit, config.threads)
        timing["edit"] = time.perf_counter() - t0
        t0 = time.perf_counter()
        ranked = rerank([(None, e) for e in edits], config.rerank)
        timing["rerank"] = time.perf_counter() - t0

    elif config.ablation is Ablation.NO_EDITOR:
        t0 = time.perf_counter()
        query = encode(melody)
        retrievals = retrieve(memory, query, k=config.k)
        timing["retrieve"] = time.perf_counter() - t0
        t0 = time.perf_counter()
        passthrough = [
            _passthrough_result(regrid_to_melody(r.entry.chords, melody)) for r in retrievals
        ]
        ranked = rerank(list(zip(retrievals, passthrough)), config.rerank)
        timing["rerank"] = time.perf_counter() - t0

    elif config.ablation is Ablation.NO_RERANKING:
        t0 = time.perf_counter()
        query = encode(melody)
        retrievals = retrieve(memory, query, k=1)
        timing["retrieve"] = time.perf_counter() - t0
        t0 = time.perf_counter()
        progressions = [regrid_to_melody(retrievals[0].entry.chords, melody)]
        edits = _edit_candidates(melody, progressions, config.edit, config.threads)
        timing["edit"] = time.perf_counter() - t0
        ranked = rerank([(retrievals[0], edits[0])], config.rerank)

    elif config.ablation is Ablation.RANDOM:
        t0 = time.perf_counter()
        progression = _random_progressions(melody, 1, config.seed)[0]
        ranked = rerank([(None, _passthrough_result(progression))], config.rerank)
        timing["candidates"] = time.perf_counter() - t0

    else:  # pragma: no cover
        raise ValueError(f"unknown ablation {config.ablation}")

    return HarmonizationResult(
        final=ranked[0],
        all_candidates=tuple(ranked[: config.candidate_cap]),
        timing=timing,
        relaxed_slots=ranked[0].edit.relaxed_slots,
    )


# --- synthetic corpus ---------------------------------------------------------

# Degree usage across each template family is kept close to uniform so
# generated segments exercise the whole diatonic vocabulary.
_MAJOR_TEMPLATES = (
    (1, 4, 5, 1),
    (2, 5, 1, 6),
    (3, 6, 2, 5),
    (4, 7, 1, 3),
    (6, 2, 7, 5),
    (1, 7, 6, 5),
    (3, 4, 5, 6),
    (7, 3, 2, 4),
    (5, 6, 4, 2),
    (6, 3, 7, 4),
)
_MINOR_TEMPLATES = (
    (1, 4, 5, 1),
    (2, 5, 1, 6),
    (3, 6, 2, 5),
    (4, 7, 3, 6),
    (6, 2, 7, 5),
    (1, 7, 6, 5),
    (5, 3, 4, 2),
    (7, 4, 2, 3),
)


def _diatonic_chord(key: Key, degree: int) -> ChordSymbol:
    """Triad on a scale degree; minor keys take the harmonic-minor dominant."""
    steps = (0, 2, 4, 5, 7, 9, 11) if key.mode is Mode.MAJOR else (0, 2, 3, 5, 7, 8, 10)
    qualities_major = ("maj", "min", "min", "maj", "maj", "min", "dim")
    qualities_minor = ("min", "dim", "maj", "min", "maj", "maj", "maj")
    root = (key.tonic + steps[degree - 1]) % 12
    labels = qualities_major if key.mode is Mode.MAJOR else qualities_minor
    return ChordSymbol(root, ChordQuality.from_label(labels[degree - 1]))


def generate_synthetic_corpus(num_songs: int, seed: int) -> list:
    """Deterministic template-grammar songs: diatonic chords, one per bar,
    melodies sounding chord tones on strong beats with stepwise passing tones."""
    if num_songs < 1:
        raise ValueError("num_songs must be >= 1")
    rng = np.random.default_rng(seed)
    songs = []
    for i in range(num_songs):
        tonic = int(rng.integers(0, 12))
        mode = Mode.MAJOR if rng.random() < 0.7 else Mode.MINOR
        key = Key(tonic, mode)
        num_bars = int(rng.choice([16, 20, 24, 28, 32]))
        beats_per_bar = 4
        templates = _MAJOR_TEMPLATES if mode is Mode.MAJOR else _MINOR_TEMPLATES

        degrees = []
        deck = list(rng.permutation(len(templates)))
        for phrase in range(num_bars // 4):
            # Cycle a shuffled deck so consecutive phrases differ.
            degrees.extend(templates[deck[phrase % len(deck)]])
        # Close the song on an authentic cadence so ground truth is well formed.
        degrees[-2:] = [5, 1]
        chords = tuple(_diatonic_chord(key, d) for d in degrees)
        progression = ChordProgression(
            slots=chords, slot_duration_beats=Fraction(beats_per_bar), start_beat=Fraction(0)
        )

        notes = []
        center = 60 + (tonic if tonic <= 6 else tonic - 12)
        prev_pitch = center + 4
        scale = sorted((key.tonic + s) % 12 for s in ((0, 2, 4, 5, 7, 9, 11)
                       if mode is Mode.MAJOR else (0, 2, 3, 5, 7, 8, 10)))
        for bar in range(num_bars):
            chord = chords[bar]
            tones = sorted((chord.root + iv) % 12 for iv in chord.quality.intervals)
            for beat in range(beats_per_bar):
                onset = Fraction(bar * beats_per_bar + beat)
                if beat % 2 == 0:
                    # Strong beats: the chord tone nearest the previous pitch.
                    candidates = [
                        pitch
                        for octave in (-1, 0, 1)
                        for pc in tones
                        for pitch in [center + 12 * octave + ((pc - center) % 12)]
                        if 40 <= pitch <= 84
                    ]
                    pitch = min(candidates, key=lambda p: (abs(p - prev_pitch), p))
                    notes.append(MelodyNote(pitch, onset, Fraction(1)))
                    prev_pitch = pitch
                elif rng.random() < 0.7:
                    # Weak beats: stepwise passing or neighbor tones.
                    step_up = rng.random() < 0.5
                    neighbor_pc = _scale_neighbor(scale, prev_pitch % 12, step_up)
                    neighbor = prev_pitch + (
                        (neighbor_pc - prev_pitch) % 12
                        if step_up
                        else -((prev_pitch - neighbor_pc) % 12)
                    )
                    if 40 <= neighbor <= 84 and neighbor != prev_pitch:
                        notes.append(MelodyNote(neighbor, onset, Fraction(1)))
                        prev_pitch = neighbor

        melody = MelodySegment(
            notes=tuple(notes),
            key=key,
            beats_per_bar=beats_per_bar,
            num_bars=num_bars,
            phrase_boundaries=default_phrase_boundaries(num_bars),
        )
        songs.append(
            Song(
                id=f"synth-{seed}-{i:04d}",
                melody=melody,
                chords=progression,
                metadata={"generator": "template-grammar", "seed": str(seed)},
            )
        )
    return songs


def _scale_neighbor(scale: list, pc: int, upward: bool) -> int:
    if pc in scale:
        idx = scale.index(pc)
        return scale[(idx + 1) % len(scale)] if upward else scale[idx - 1]
    shifted = (pc + 1) % 12 if upward else (pc - 1) % 12
    while shifted not in scale:
        shifted = (shifted + 1) % 12 if upward else (shifted - 1) % 12
    return shifted


# --- evaluation ----------------------------------------------------------------


@dataclass(frozen=True)
class EvaluationRow:
    segment_id: str
    report: MetricReport


@dataclass(frozen=True)
class EvaluationResult:
    rows: tuple
    aggregate: MetricReport
    ground_truth: MetricReport
    failures: int
    relaxed_slot_rate: float


def evaluation_pairs(songs: Sequence[Song], window_bars: int = 16, hop_bars: int = 16) -> list:
    """Non-overlapping query segments with their ground-truth chords."""
    pairs = []
    for song in songs:
        pairs.extend(segment(song, window_bars=window_bars, hop_bars=hop_bars))
    return pairs


def evaluate(
    pairs: Sequence[SegmentedPair],
    memory: Memory,
    config: PipelineConfig = PipelineConfig(),
) -> EvaluationResult:
    """Harmonize every segment and score against its ground truth.

    Per-segment failures are counted, not fatal. The random-like variants
    derive one child seed per segment from config.seed.
    """
    if not pairs:
        raise ValueError("evaluation corpus is empty")
    child_seeds = [
        int(s.generate_state(1)[0]) for s in np.random.SeedSequence(config.seed).spawn(len(pairs))
    ]

    def run_one(args) -> tuple:
        index, pair = args
        # Parallelism lives at the segment level here; inner editing stays serial.
        seg_config = replace(config, seed=child_seeds[index], threads=1)
        result = run_ablation(pair.melody, memory, seg_config)
        output = result.final.edit.chords
        system = compute_report(pair.melody, output)
        truth = compute_report(pair.melody, pair.chords)
        relaxed = len(result.relaxed_slots)
        total_slots = len(output)
        return index, delta_report(system, truth), truth, relaxed, total_slots

    rows = []
    truths = []
    failures = 0
    relaxed_total = 0
    slots_total = 0
    work = list(enumerate(pairs))
    if config.threads > 1:
        with ThreadPoolExecutor(max_workers=config.threads) as pool:
            outcomes = list(pool.map(_swallow(run_one), work))
    else:
        outcomes = [_swallow(run_one)(item) for item in work]
    for outcome in outcomes:
        if outcome is None:
            failures += 1
            continue
        index, report, truth, relaxed, total_slots = outcome
        pair = pairs[index]
        rows.append(EvaluationRow(segment_id=f"{pair.source[0]}@{pair.source[1]}", report=report))
        truths.append(truth)
        relaxed_total += relaxed
        slots_total += total_slots
    if not rows:
        raise ValueError(f"every segment failed ({failures} failures)")
    return EvaluationResult(
        rows=tuple(rows),
        aggregate=aggregate_reports(r.report for r in rows),
        ground_truth=aggregate_reports(truths),
        failures=failures,
        relaxed_slot_rate=relaxed_total / slots_total if slots_total else 0.0,
    )


def _swallow(fn):
    def wrapped(item):
        try:
            return fn(item)
        except Exception:
            return None

    return wrapped


METRIC_COLUMNS = (
    "che", "cc", "ctd", "pcs", "mctd", "ctnctr", "delta_che", "delta_cc", "delta_ctd",
)


def evaluation_csv(result: EvaluationResult) -> str:
    """Deterministic CSV: one row per segment plus a trailing mean row."""
    lines = ["segment," + ",".join(METRIC_COLUMNS)]
    for row in result.rows:
        d = row.report.as_dict()
        lines.append(row.segment_id + "," + ",".join(str(d[c]) for c in METRIC_COLUMNS))
    d = result.aggregate.as_dict()
    lines.append("mean," + ",".join(str(d[c]) for c in METRIC_COLUMNS))
    return "\n".join(lines) + "\n"


def run_ablation_suite(
    pairs: Sequence[SegmentedPair], memory: Memory, config: PipelineConfig
) -> dict:
    """Evaluate all five variants under one config/seed."""
    results = {}
    for variant in Ablation:
        results[variant] = evaluate(pairs, memory, replace(config, ablation=variant))
    return results


def ablation_csv(results: dict) -> str:
    """Aggregate comparison CSV, one row per variant."""
    lines = ["variant," + ",".join(METRIC_COLUMNS)]
    for variant in Ablation:
        d = results[variant].aggregate.as_dict()
        lines.append(variant.value + "," + ",".join(str(d[c]) for c in METRIC_COLUMNS))
    return "\n".join(lines) + "\n"


def ablation_table(results: dict) -> str:
    """Console comparison shaped like the standard ablation table."""
    headers = ("Method", "dCHE", "dCC", "dCTD", "PCS", "MCTD", "CTnCTR")
    truth = results[Ablation.FULL].ground_truth
    rows = [
        (
            "Ground Truth",
            f"{truth.che:.4f}",
            f"{truth.cc:.4f}",
            f"{truth.ctd:.4f}",
            f"{truth.pcs:.4f}",
            f"{truth.mctd:.4f}",
            f"{truth.ctnctr:.4f}",
        )
    ]
    for variant in Ablation:
        agg = results[variant].aggregate
        rows.append(
            (
                variant.value,
                f"{agg.delta_che:+.4f}",
                f"{agg.delta_cc:+.4f}",
                f"{agg.delta_ctd:+.4f}",
                f"{agg.pcs:.4f}",
                f"{agg.mctd:.4f}",
                f"{agg.ctnctr:.4f}",
            )
        )
    widths = [max(len(r[i]) for r in [headers] + rows) for i in range(len(headers))]
    fmt = "  ".join("{:<%d}" % w for w in widths)
    out = [fmt.format(*headers)]
    out.append("  ".join("-" * w for w in widths))
    out.extend(fmt.format(*row) for row in rows)
    return "\n".join(out)


# --- lambda grid search -----------------------------------------------------------


def grid_search_lambda(
    pairs: Sequence[SegmentedPair],
    memory: Memory,
    config: PipelineConfig,
    grid: Sequence[float],
) -> tuple:
    """Pick the lambda maximizing mean PCS minus |mean delta-CHE| over the grid.

    Ties resolve to the larger lambda (trust retrieval more when indifferent).
    Returns (best_lambda, rows) where rows are (lambda, aggregate report,
    objective) triples for the full report.
    """
    if not pairs:
        raise ValueError("validation set is empty")
    if not grid:
        raise ValueError("lambda grid is empty")
    rows = []
    best = None
    for lam in grid:
        lam_config = replace(config, rerank=replace(config.rerank, lambda_=lam))
        result = evaluate(pairs, memory, lam_config)
        objective = result.aggregate.pcs - abs(result.aggregate.delta_che)
        rows.append((lam, result.aggregate, objective))
        if best is None or (objective, lam) > (best[1], best[0]):
            best = (lam, objective)
    return best[0], rows
