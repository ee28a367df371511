import json
from pathlib import Path

import pytest
from click.testing import CliRunner

from chordgen.cli import main


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    """A synthetic corpus, a built memory, and a melody file."""
    root = tmp_path_factory.mktemp("cli")
    runner = CliRunner()

    corpus = root / "corpus.json"
    result = runner.invoke(main, ["synth-corpus", "--songs", "8", "--seed", "13",
                                  "--out", str(corpus)])
    assert result.exit_code == 0, result.output

    memory = root / "memory.rerm"
    result = runner.invoke(main, ["build-memory", "--corpus", str(corpus),
                                  "--out", str(memory)])
    assert result.exit_code == 0, result.output

    melody = root / "melody.json"
    songs = json.loads(corpus.read_text())
    melody.write_text(json.dumps({
        "notes": songs[0]["notes"][:24],
        "beats_per_bar": songs[0]["beats_per_bar"],
    }))

    config = root / "config.json"
    config.write_text(json.dumps({"k": 8, "rerank": {"lambda": 0.5, "gamma": 0.1}}))
    return {"root": root, "corpus": corpus, "memory": memory,
            "melody": melody, "config": config}


runner = CliRunner()


class TestSynthCorpus:
    def test_deterministic_output_bytes(self, tmp_path):
        a, b = tmp_path / "a.json", tmp_path / "b.json"
        for out in (a, b):
            result = runner.invoke(main, ["synth-corpus", "--songs", "3", "--seed", "4",
                                          "--out", str(out)])
            assert result.exit_code == 0, result.output
        assert a.read_bytes() == b.read_bytes()


class TestBuildMemory:
    def test_reports_entry_count(self, workspace):
        result = runner.invoke(main, ["build-memory", "--corpus", str(workspace["corpus"]),
                                      "--out", str(workspace["root"] / "m2.rerm")])
        assert result.exit_code == 0, result.output
        assert "built memory:" in result.output

    def test_midi_directory_corpus(self, workspace, tmp_path):
        from chordgen import parse_corpus_json, song_to_smf

        songs = parse_corpus_json(workspace["corpus"].read_text())
        midi_dir = tmp_path / "midis"
        midi_dir.mkdir()
        for song in songs[:3]:
            (midi_dir / f"{song.id}.mid").write_bytes(song_to_smf(song))
        out = tmp_path / "midi-memory.rerm"
        result = runner.invoke(main, ["build-memory", "--corpus", str(midi_dir),
                                      "--out", str(out)])
        assert result.exit_code == 0, result.output
        assert out.exists()


class TestHarmonize:
    def test_writes_result_and_midi(self, workspace, tmp_path):
        out_json = tmp_path / "result.json"
        out_midi = tmp_path / "result.mid"
        result = runner.invoke(main, [
            "--config", str(workspace["config"]),
            "harmonize", "--memory", str(workspace["memory"]),
            "--melody", str(workspace["melody"]),
            "--out", str(out_json), "--smf-out", str(out_midi),
        ])
        assert result.exit_code == 0, result.output
        payload = json.loads(out_json.read_text())
        assert payload["final"]["edited"]["symbols"]
        assert out_midi.read_bytes()[:4] == b"MThd"

    def test_midi_melody_input(self, workspace, tmp_path):
        from chordgen import parse_corpus_json, song_to_smf

        songs = parse_corpus_json(workspace["corpus"].read_text())
        midi = tmp_path / "query.mid"
        midi.write_bytes(song_to_smf(songs[0]))
        result = runner.invoke(main, [
            "harmonize", "--memory", str(workspace["memory"]), "--melody", str(midi), "-k", "5",
        ])
        assert result.exit_code == 0, result.output

    def test_toml_config(self, workspace, tmp_path):
        toml = tmp_path / "config.toml"
        toml.write_text('k = 5\n\n[rerank]\nlambda = 1.0\ngamma = 0.1\n')
        result = runner.invoke(main, [
            "--config", str(toml),
            "harmonize", "--memory", str(workspace["memory"]),
            "--melody", str(workspace["melody"]),
        ])
        assert result.exit_code == 0, result.output


class TestEvaluate:
    def test_csv_shape(self, workspace, tmp_path):
        csv_path = tmp_path / "eval.csv"
        result = runner.invoke(main, [
            "--config", str(workspace["config"]), "--seed", "3",
            "evaluate", "--memory", str(workspace["memory"]),
            "--corpus", str(workspace["corpus"]), "--csv", str(csv_path),
        ])
        assert result.exit_code == 0, result.output
        lines = csv_path.read_text().strip().split("\n")
        assert lines[0].startswith("segment,")
        assert lines[-1].startswith("mean,")
        assert len(lines) >= 3


class TestAblate:
    def _run(self, workspace, csv_path, threads):
        result = runner.invoke(main, [
            "--config", str(workspace["config"]), "--seed", "21", "--threads", str(threads),
            "ablate", "--memory", str(workspace["memory"]),
            "--corpus", str(workspace["corpus"]), "--csv", str(csv_path),
        ])
        assert result.exit_code == 0, result.output
        return result.output

    def test_byte_identical_across_runs_and_threads(self, workspace, tmp_path):
        a = tmp_path / "a.csv"
        b = tmp_path / "b.csv"
        c = tmp_path / "c.csv"
        out_a = self._run(workspace, a, threads=1)
        self._run(workspace, b, threads=1)
        self._run(workspace, c, threads=8)
        assert a.read_bytes() == b.read_bytes()
        assert a.read_bytes() == c.read_bytes()
        assert "Ground Truth" in out_a
        lines = a.read_text().strip().split("\n")
        assert len(lines) == 6  # header + five variants
        variants = [line.split(",")[0] for line in lines[1:]]
        assert variants == ["full", "no_retrieval", "no_editor", "no_reranking", "random"]


class TestGridLambda:
    def test_smoke(self, workspace):
        result = runner.invoke(main, [
            "--config", str(workspace["config"]),
            "grid-lambda", "--memory", str(workspace["memory"]),
            "--corpus", str(workspace["corpus"]), "--grid", "0.0,1.0",
        ])
        assert result.exit_code == 0, result.output
        assert "best lambda:" in result.output
