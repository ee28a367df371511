"""Melody harmonization by retrieval, constrained editing, and reranking.

Given a melody, retrieve stylistically similar chord progressions from a
melody-chord memory, project each onto a music-theoretic feasible set with
a Viterbi lattice, and select the final progression by a weighted blend of
retrieval similarity and editing cost.

Typical use:

    from chordgen import (
        generate_synthetic_corpus, evaluation_pairs, build_memory, harmonize,
    )

    songs = generate_synthetic_corpus(100, seed=7)
    memory = build_memory([p for s in songs for p in segment(s)])
    result = harmonize(query_melody, memory)
    print(result.final.edit.chords)
"""

from .theory import (
    CHORD_VOCABULARY,
    ChordProgression,
    ChordQuality,
    ChordSymbol,
    Key,
    MelodyNote,
    MelodySegment,
    Mode,
    chord_pitch_classes,
    default_phrase_boundaries,
    roman_degree,
    roman_numeral,
    transpose_segment,
)
from .ingest import (
    CorpusFormatError,
    SegmentedPair,
    Song,
    detect_key,
    parse_corpus_json,
    parse_smf,
    segment,
    serialize_corpus_json,
    song_to_smf,
)
from .encoder import Embedding, cosine, encode
from .memory import (
    EmptyMemoryError,
    Memory,
    MemoryEntry,
    MemoryFormatError,
    Retrieval,
    build_memory,
    load_memory,
    retrieve,
    save_memory,
)
from .editor import (
    EditConfig,
    EditResult,
    cadence_costs,
    edit,
    tonal_alignment_cost,
    transition_cost,
)
from .reranker import RankedCandidate, RerankConfig, edit_score, rerank, retrieval_score
from .metrics import (
    MetricReport,
    aggregate_reports,
    cc,
    che,
    compute_report,
    ctd,
    ctnctr,
    delta_report,
    mctd,
    pcs,
    tonal_centroid,
)
from .pipeline import (
    Ablation,
    HarmonizationResult,
    PipelineConfig,
    evaluate,
    evaluation_pairs,
    generate_synthetic_corpus,
    grid_search_lambda,
    harmonize,
    run_ablation,
)

__version__ = "0.1.0"

__all__ = [
    "Ablation",
    "CHORD_VOCABULARY",
    "ChordProgression",
    "ChordQuality",
    "ChordSymbol",
    "CorpusFormatError",
    "EditConfig",
    "EditResult",
    "Embedding",
    "EmptyMemoryError",
    "HarmonizationResult",
    "Key",
    "Memory",
    "MemoryEntry",
    "MemoryFormatError",
    "MelodyNote",
    "MelodySegment",
    "MetricReport",
    "Mode",
    "PipelineConfig",
    "RankedCandidate",
    "RerankConfig",
    "Retrieval",
    "SegmentedPair",
    "Song",
    "aggregate_reports",
    "build_memory",
    "cadence_costs",
    "cc",
    "che",
    "chord_pitch_classes",
    "compute_report",
    "cosine",
    "ctd",
    "ctnctr",
    "default_phrase_boundaries",
    "delta_report",
    "detect_key",
    "edit",
    "edit_score",
    "encode",
    "evaluate",
    "evaluation_pairs",
    "generate_synthetic_corpus",
    "grid_search_lambda",
    "harmonize",
    "load_memory",
    "mctd",
    "parse_corpus_json",
    "parse_smf",
    "pcs",
    "rerank",
    "retrieval_score",
    "retrieve",
    "roman_degree",
    "roman_numeral",
    "run_ablation",
    "save_memory",
    "segment",
    "serialize_corpus_json",
    "song_to_smf",
    "tonal_alignment_cost",
    "tonal_centroid",
    "transition_cost",
    "transpose_segment",
]
