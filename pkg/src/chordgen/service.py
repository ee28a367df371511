"""HTTP/JSON facade over the pipeline for the companion UI.

Single-operator tool: state is one loaded memory plus the active pipeline
configuration. Harmonize requests are concurrent readers; memory and
config swaps are serialized writers.
"""

from __future__ import annotations

import json
import threading
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

from fastapi import FastAPI, Request, Response
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import JSONResponse

from . import ingest
from .memory import Memory, build_memory, load_memory
from .payloads import melody_to_payload, result_to_payload
from .pipeline import Ablation, PipelineConfig, run_ablation
from .serialize import progression_from_obj
from .smf import build_smf
from .theory import ChordProgression, ChordSymbol

JSON_MEDIA = "application/json"


@dataclass
class SessionState:
    memory: Optional[Memory] = None
    config: PipelineConfig = field(default_factory=PipelineConfig)
    requests_served: int = 0
    lock: threading.Lock = field(default_factory=threading.Lock)

    def snapshot(self) -> tuple:
        with self.lock:
            return self.memory, self.config

    def swap_memory(self, memory: Memory) -> None:
        with self.lock:
            self.memory = memory

    def swap_config(self, config: PipelineConfig) -> None:
        with self.lock:
            self.config = config

    def count_request(self) -> None:
        with self.lock:
            self.requests_served += 1


def _merge(base: dict, overrides: dict) -> dict:
    out = dict(base)
    for key, value in overrides.items():
        if isinstance(value, dict) and isinstance(out.get(key), dict):
            out[key] = _merge(out[key], value)
        else:
            out[key] = value
    return out


def _error(status: int, message: str) -> JSONResponse:
    return JSONResponse(status_code=status, content={"error": message})


def _apply_overrides(config: PipelineConfig, overrides: dict) -> PipelineConfig:
    return PipelineConfig.from_dict(_merge(config.to_dict(), overrides))


def _parse_chords_payload(obj) -> ChordProgression:
    """Accept either the serialized progression object or a bare symbol list."""
    if isinstance(obj, list):
        slots = tuple(ChordSymbol.parse(s) for s in obj)
        return ChordProgression(slots=slots, slot_duration_beats=4)
    if isinstance(obj, dict) and "symbols" in obj:
        slots = tuple(ChordSymbol.parse(s) for s in obj["symbols"])
        return ChordProgression(
            slots=slots,
            slot_duration_beats=ingest.parse_beat_value(
                obj.get("slot_duration_beats", 4), "chords.slot_duration_beats"
            ),
            start_beat=ingest.parse_beat_value(obj.get("start_beat", 0), "chords.start_beat"),
        )
    return progression_from_obj(obj)


def create_app(
    memory: Optional[Memory] = None,
    config: PipelineConfig = PipelineConfig(),
    static_dir=None,
) -> FastAPI:
    app = FastAPI(title="chordgen service")
    app.add_middleware(
        CORSMiddleware,
        allow_origins=["*"],
        allow_methods=["*"],
        allow_headers=["*"],
    )
    state = SessionState(memory=memory, config=config)
    app.state.session = state

    @app.middleware("http")
    async def count_requests(request: Request, call_next):
        state.count_request()
        return await call_next(request)

    @app.get("/api/health")
    def health():
        mem, _ = state.snapshot()
        return {
            "memory_loaded": mem is not None,
            "entries": len(mem) if mem is not None else None,
            "requests": state.requests_served,
        }

    @app.get("/api/config")
    def get_config():
        _, cfg = state.snapshot()
        return cfg.to_dict()

    @app.put("/api/config")
    async def put_config(request: Request):
        try:
            body = await request.json()
        except json.JSONDecodeError:
            return _error(400, "config body is not valid JSON")
        if not isinstance(body, dict):
            return _error(400, "config body must be an object")
        _, cfg = state.snapshot()
        try:
            new_config = _apply_overrides(cfg, body)
        except (ValueError, TypeError) as exc:
            return _error(400, f"invalid config: {exc}")
        state.swap_config(new_config)
        return new_config.to_dict()

    @app.post("/api/memory")
    async def post_memory(request: Request):
        try:
            body = await request.json()
        except json.JSONDecodeError:
            return _error(400, "memory body is not valid JSON")
        if not isinstance(body, dict):
            return _error(400, "memory body must be an object")
        window = int(body.get("window_bars", 16))
        hop = int(body.get("hop_bars", 8))
        try:
            if "memory_path" in body:
                path = Path(body["memory_path"])
                if not path.exists():
                    return _error(404, f"memory file not found: {path}")
                new_memory = load_memory(path)
            else:
                if "corpus_path" in body:
                    path = Path(body["corpus_path"])
                    if not path.exists():
                        return _error(404, f"corpus file not found: {path}")
                    songs = ingest.parse_corpus_json(path.read_text())
                elif "corpus" in body:
                    songs = ingest.parse_corpus_json(json.dumps(body["corpus"]))
                else:
                    return _error(400, "expected corpus_path, corpus, or memory_path")
                pairs = []
                for song in songs:
                    pairs.extend(ingest.segment(song, window_bars=window, hop_bars=hop))
                new_memory = build_memory(pairs)
        except ValueError as exc:
            return _error(400, str(exc))
        state.swap_memory(new_memory)
        return {
            "entries": new_memory.metadata.entry_count,
            "skipped": new_memory.metadata.skipped_count,
            "corpus_hash": new_memory.metadata.corpus_hash,
        }

    @app.post("/api/harmonize")
    async def harmonize_endpoint(request: Request):
        mem, cfg = state.snapshot()
        if mem is None:
            return _error(409, "no memory loaded; POST /api/memory first")
        try:
            body = await request.json()
        except json.JSONDecodeError:
            return _error(400, "harmonize body is not valid JSON")
        if not isinstance(body, dict) or "melody" not in body:
            return _error(400, "harmonize body must be an object with a 'melody' field")
        try:
            melody = ingest.parse_melody_obj(body["melody"])
        except ValueError as exc:
            return _error(400, f"malformed melody: {exc}")
        if melody.is_empty():
            return _error(422, "melody has no notes")
        overrides = body.get("config", {})
        try:
            run_config = _apply_overrides(cfg, overrides) if overrides else cfg
        except (ValueError, TypeError) as exc:
            return _error(400, f"invalid config overrides: {exc}")
        try:
            result = run_ablation(melody, mem, run_config)
        except ValueError as exc:
            return _error(422, str(exc))
        payload = result_to_payload(result)
        payload["config"] = run_config.to_dict()
        return payload

    @app.post("/api/import")
    async def import_melody(request: Request):
        """SMF bytes or corpus/melody JSON in, melody payload out."""
        raw = await request.body()
        if raw[:4] == b"MThd":
            try:
                song = ingest.parse_smf(raw, song_id="import")
            except ValueError as exc:
                return _error(400, f"unreadable MIDI file: {exc}")
            payload = melody_to_payload(song.melody)
            if song.chords is not None:
                payload["chords"] = [str(c) for c in song.chords.slots]
            return payload
        try:
            obj = json.loads(raw.decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError):
            return _error(400, "import body is neither an SMF nor JSON")
        try:
            if isinstance(obj, list):
                songs = ingest.parse_corpus_json(json.dumps(obj))
                if not songs:
                    return _error(400, "corpus is empty")
                payload = melody_to_payload(songs[0].melody)
                if songs[0].chords is not None:
                    payload["chords"] = [str(c) for c in songs[0].chords.slots]
                return payload
            return melody_to_payload(ingest.parse_melody_obj(obj))
        except ValueError as exc:
            return _error(400, f"malformed melody: {exc}")

    @app.post("/api/export")
    async def export_endpoint(request: Request):
        """Bundle a melody and chosen chords as corpus JSON or an SMF download."""
        try:
            body = await request.json()
        except json.JSONDecodeError:
            return _error(400, "export body is not valid JSON")
        if not isinstance(body, dict) or "melody" not in body or "chords" not in body:
            return _error(400, "export body needs 'melody' and 'chords'")
        fmt = body.get("format", "json")
        try:
            melody = ingest.parse_melody_obj(body["melody"])
            chords = _parse_chords_payload(body["chords"])
            song = ingest.Song(
                id=str(body.get("id", "export")), melody=melody, chords=chords, metadata={}
            )
        except ValueError as exc:
            return _error(400, f"malformed export payload: {exc}")
        if fmt == "json":
            return Response(
                content=ingest.serialize_corpus_json([song], indent=2),
                media_type=JSON_MEDIA,
                headers={"Content-Disposition": 'attachment; filename="export.json"'},
            )
        if fmt == "smf":
            data = build_smf(
                melody.notes,
                beats_per_bar=melody.beats_per_bar,
                key=melody.key,
                chords=chords,
            )
            return Response(
                content=data,
                media_type="audio/midi",
                headers={"Content-Disposition": 'attachment; filename="export.mid"'},
            )
        return _error(400, f"unknown export format {fmt!r}")

    if static_dir is not None:
        from fastapi.staticfiles import StaticFiles

        app.mount("/", StaticFiles(directory=str(static_dir), html=True), name="ui")

    return app
