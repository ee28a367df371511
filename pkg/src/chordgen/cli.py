"""Command-line surface: memory construction, harmonization, evaluation,
ablations, synthetic corpora, lambda tuning, and the HTTP service."""

from __future__ import annotations

import json
import sys
from dataclasses import replace
from pathlib import Path

import click

from . import ingest
from .memory import build_memory, load_memory, save_memory
from .payloads import result_to_payload
from .pipeline import (
    Ablation,
    PipelineConfig,
    ablation_csv,
    ablation_table,
    evaluate,
    evaluation_csv,
    evaluation_pairs,
    generate_synthetic_corpus,
    grid_search_lambda,
    run_ablation,
    run_ablation_suite,
)
from .smf import build_smf

MIDI_SUFFIXES = {".mid", ".midi", ".smf"}


def _load_config_file(path: Path) -> dict:
    if path.suffix.lower() == ".toml":
        try:
            import tomllib  # Python >= 3.11
        except ModuleNotFoundError:
            import tomli as tomllib
        return tomllib.loads(path.read_text())
    return json.loads(path.read_text())


def _build_pipeline_config(config_path, seed, threads, **overrides) -> PipelineConfig:
    obj = _load_config_file(Path(config_path)) if config_path else {}
    config = PipelineConfig.from_dict(obj)
    if seed is not None:
        config = replace(config, seed=seed)
    if threads is not None:
        config = replace(config, threads=threads)
    for name, value in overrides.items():
        if value is not None:
            config = replace(config, **{name: value})
    return config


def _load_corpus(path: Path) -> list:
    """A corpus is either one JSON file or a directory of MIDI files."""
    if path.is_dir():
        songs = []
        for child in sorted(path.iterdir()):
            if child.suffix.lower() in MIDI_SUFFIXES:
                song = ingest.parse_smf(child.read_bytes(), song_id=child.stem)
                if song.chords is None:
                    click.echo(f"warning: {child.name} has no chord track, skipped", err=True)
                    continue
                songs.append(song)
        return songs
    return ingest.parse_corpus_json(path.read_text())


def _load_melody(path: Path):
    if path.suffix.lower() in MIDI_SUFFIXES:
        return ingest.parse_smf(path.read_bytes(), song_id=path.stem).melody
    obj = json.loads(path.read_text())
    if isinstance(obj, list):
        songs = ingest.parse_corpus_json(path.read_text())
        if not songs:
            raise click.ClickException(f"{path}: corpus is empty")
        return songs[0].melody
    return ingest.parse_melody_obj(obj)


@click.group()
@click.option("--config", "config_path", type=click.Path(exists=True), default=None,
              help="TOML or JSON pipeline configuration file.")
@click.option("--seed", type=int, default=None, help="Override the config seed.")
@click.option("--threads", type=int, default=None, help="Worker threads for batch stages.")
@click.pass_context
def main(ctx, config_path, seed, threads):
    """Memory-based melody harmonization tools."""
    ctx.ensure_object(dict)
    ctx.obj["config_path"] = config_path
    ctx.obj["seed"] = seed
    ctx.obj["threads"] = threads


def _ctx_config(ctx, **overrides) -> PipelineConfig:
    return _build_pipeline_config(
        ctx.obj.get("config_path"), ctx.obj.get("seed"), ctx.obj.get("threads"), **overrides
    )


@main.command("build-memory")
@click.option("--corpus", "corpus_path", type=click.Path(exists=True), required=True,
              help="Corpus JSON file or directory of MIDI files.")
@click.option("--out", "out_path", type=click.Path(), required=True)
@click.option("--window", type=int, default=16, show_default=True, help="Segment bars.")
@click.option("--hop", type=int, default=8, show_default=True, help="Segment stride in bars.")
def build_memory_cmd(corpus_path, out_path, window, hop):
    """Segment a corpus and build the melody-chord memory file."""
    songs = _load_corpus(Path(corpus_path))
    pairs = []
    for song in songs:
        pairs.extend(ingest.segment(song, window_bars=window, hop_bars=hop))
    if not pairs:
        raise click.ClickException("corpus produced no segments")
    memory = build_memory(pairs)
    save_memory(memory, out_path)
    click.echo(
        f"built memory: {memory.metadata.entry_count} entries "
        f"({memory.metadata.skipped_count} skipped) -> {out_path}"
    )


@main.command("harmonize")
@click.option("--memory", "memory_path", type=click.Path(exists=True), required=True)
@click.option("--melody", "melody_path", type=click.Path(exists=True), required=True,
              help="Melody JSON (corpus note schema) or Standard MIDI File.")
@click.option("--out", "out_path", type=click.Path(), default=None,
              help="Write the full result JSON here (default: stdout summary only).")
@click.option("--smf-out", "smf_path", type=click.Path(), default=None,
              help="Write melody plus final chords as a MIDI file.")
@click.option("-k", type=int, default=None, help="Retrieval depth override.")
@click.option("--ablation", type=click.Choice([a.value for a in Ablation]), default=None)
@click.pass_context
def harmonize_cmd(ctx, memory_path, melody_path, out_path, smf_path, k, ablation):
    """Harmonize one melody against a memory."""
    config = _ctx_config(ctx, k=k)
    if ablation is not None:
        config = replace(config, ablation=Ablation(ablation))
    memory = load_memory(memory_path)
    melody = _load_melody(Path(melody_path))
    result = run_ablation(melody, memory, config)
    final = result.final
    click.echo(str(final.edit.chords))
    click.echo(
        f"score={final.score:.6f} s_ret={final.s_ret:.6f} s_edit={final.s_edit:.6f} "
        f"cost={final.edit.cost:.6f} changed={list(final.edit.changed_slots)}"
    )
    if result.relaxed_slots:
        click.echo(f"relaxed slots: {list(result.relaxed_slots)}")
    if out_path:
        Path(out_path).write_text(json.dumps(result_to_payload(result), indent=2))
        click.echo(f"result -> {out_path}")
    if smf_path:
        data = build_smf(
            melody.notes,
            beats_per_bar=melody.beats_per_bar,
            key=melody.key,
            chords=final.edit.chords,
        )
        Path(smf_path).write_bytes(data)
        click.echo(f"midi -> {smf_path}")


@main.command("evaluate")
@click.option("--memory", "memory_path", type=click.Path(exists=True), required=True)
@click.option("--corpus", "corpus_path", type=click.Path(exists=True), required=True)
@click.option("--csv", "csv_path", type=click.Path(), required=True)
@click.option("--window", type=int, default=16, show_default=True)
@click.option("--hop", type=int, default=16, show_default=True)
@click.option("--ablation", type=click.Choice([a.value for a in Ablation]), default=None)
@click.pass_context
def evaluate_cmd(ctx, memory_path, corpus_path, csv_path, window, hop, ablation):
    """Harmonize a held-out corpus and write per-segment metrics CSV."""
    config = _ctx_config(ctx)
    if ablation is not None:
        config = replace(config, ablation=Ablation(ablation))
    memory = load_memory(memory_path)
    songs = _load_corpus(Path(corpus_path))
    pairs = evaluation_pairs(songs, window_bars=window, hop_bars=hop)
    if not pairs:
        raise click.ClickException("corpus produced no evaluation segments")
    result = evaluate(pairs, memory, config)
    Path(csv_path).write_text(evaluation_csv(result))
    agg = result.aggregate
    click.echo(
        f"segments={len(result.rows)} failures={result.failures} "
        f"relaxed_rate={result.relaxed_slot_rate:.6f}"
    )
    click.echo(
        f"CHE={agg.che:.4f} CC={agg.cc:.4f} CTD={agg.ctd:.4f} "
        f"PCS={agg.pcs:.4f} MCTD={agg.mctd:.4f} CTnCTR={agg.ctnctr:.4f}"
    )
    click.echo(
        f"dCHE={agg.delta_che:+.4f} dCC={agg.delta_cc:+.4f} dCTD={agg.delta_ctd:+.4f}"
    )
    click.echo(f"csv -> {csv_path}")


@main.command("ablate")
@click.option("--memory", "memory_path", type=click.Path(exists=True), required=True)
@click.option("--corpus", "corpus_path", type=click.Path(exists=True), required=True)
@click.option("--csv", "csv_path", type=click.Path(), required=True)
@click.option("--window", type=int, default=16, show_default=True)
@click.option("--hop", type=int, default=16, show_default=True)
@click.pass_context
def ablate_cmd(ctx, memory_path, corpus_path, csv_path, window, hop):
    """Run all five pipeline variants and print the comparison table."""
    config = _ctx_config(ctx)
    memory = load_memory(memory_path)
    songs = _load_corpus(Path(corpus_path))
    pairs = evaluation_pairs(songs, window_bars=window, hop_bars=hop)
    if not pairs:
        raise click.ClickException("corpus produced no evaluation segments")
    results = run_ablation_suite(pairs, memory, config)
    Path(csv_path).write_text(ablation_csv(results))
    click.echo(ablation_table(results))
    click.echo(f"csv -> {csv_path}")


@main.command("synth-corpus")
@click.option("--songs", "num_songs", type=int, required=True)
@click.option("--out", "out_path", type=click.Path(), required=True)
@click.option("--seed", type=int, default=None, help="Generator seed (falls back to global).")
@click.pass_context
def synth_corpus_cmd(ctx, num_songs, out_path, seed):
    """Generate a deterministic synthetic corpus as corpus JSON."""
    if seed is None:
        seed = ctx.obj.get("seed") or 0
    songs = generate_synthetic_corpus(num_songs, seed=seed)
    Path(out_path).write_text(ingest.serialize_corpus_json(songs, indent=2))
    click.echo(f"{len(songs)} songs -> {out_path}")


@main.command("grid-lambda")
@click.option("--memory", "memory_path", type=click.Path(exists=True), required=True)
@click.option("--corpus", "corpus_path", type=click.Path(exists=True), required=True)
@click.option("--grid", default="0.0,0.25,0.5,0.75,1.0", show_default=True,
              help="Comma-separated lambda values.")
@click.option("--window", type=int, default=16, show_default=True)
@click.option("--hop", type=int, default=16, show_default=True)
@click.pass_context
def grid_lambda_cmd(ctx, memory_path, corpus_path, grid, window, hop):
    """Grid-search lambda on a validation corpus."""
    config = _ctx_config(ctx)
    memory = load_memory(memory_path)
    songs = _load_corpus(Path(corpus_path))
    pairs = evaluation_pairs(songs, window_bars=window, hop_bars=hop)
    if not pairs:
        raise click.ClickException("corpus produced no validation segments")
    values = [float(v) for v in grid.split(",") if v.strip()]
    best, rows = grid_search_lambda(pairs, memory, config, values)
    click.echo("lambda  objective  CHE      CC       CTD      PCS      MCTD     CTnCTR")
    for lam, agg, objective in rows:
        click.echo(
            f"{lam:<7.3f} {objective:<10.4f} {agg.che:<8.4f} {agg.cc:<8.4f} "
            f"{agg.ctd:<8.4f} {agg.pcs:<8.4f} {agg.mctd:<8.4f} {agg.ctnctr:<8.4f}"
        )
    click.echo(f"best lambda: {best}")


@main.command("serve")
@click.option("--bind", default="127.0.0.1:8000", show_default=True, help="addr:port")
@click.option("--memory", "memory_path", type=click.Path(exists=True), default=None)
@click.option("--static", "static_dir", type=click.Path(exists=True), default=None,
              help="Directory of UI assets to serve at /.")
@click.pass_context
def serve_cmd(ctx, bind, memory_path, static_dir):
    """Run the HTTP/JSON service (and optionally the bundled UI)."""
    import uvicorn

    from .service import create_app

    config = _ctx_config(ctx)
    memory = load_memory(memory_path) if memory_path else None
    app = create_app(memory=memory, config=config, static_dir=static_dir)
    host, _, port = bind.rpartition(":")
    if not host:
        raise click.ClickException("--bind must look like addr:port")
    uvicorn.run(app, host=host, port=int(port), log_level="info")


if __name__ == "__main__":
    main(sys.argv[1:])
