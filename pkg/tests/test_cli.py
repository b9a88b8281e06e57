"""Golden tests for the command-line interface."""

from __future__ import annotations

import json
from pathlib import Path

import pytest
from click.testing import CliRunner

from storygraph.cli import main
from storygraph.graph import parse_graph
from storygraph.persistence import load_project, new_project, save_project

FIXTURE = Path(__file__).parent / "data" / "lumina_blackout.json"

BRANCHING_PROMPT = (
    "A group of friends enters a haunted mansion, each taking a different "
    "hallway that leads to strange encounters before they reunite."
)


@pytest.fixture
def runner():
    return CliRunner()


def make_fixture_project(root: Path, name: str = "fixture") -> Path:
    """A project directory seeded with the seven-node reference graph."""
    project = new_project(name, project_id=name)
    project.graph = parse_graph(FIXTURE.read_text(encoding="utf-8"))
    save_project(project, root)
    return root / name


class TestNew:
    def test_creates_project_files(self, runner, tmp_path):
        target = tmp_path / "myproj"
        result = runner.invoke(main, ["new", str(target)])
        assert result.exit_code == 0, result.output
        assert (target / "project.json").exists()
        assert (target / "graph.json").exists()
        project = load_project(tmp_path, "myproj")
        assert project.name == "myproj"
        assert project.graph.nodes == ()

    def test_custom_name(self, runner, tmp_path):
        result = runner.invoke(
            main, ["new", str(tmp_path / "p1"), "--name", "The Lighthouse"]
        )
        assert result.exit_code == 0
        assert load_project(tmp_path, "p1").name == "The Lighthouse"

    def test_refuses_existing_project(self, runner, tmp_path):
        target = tmp_path / "p1"
        assert runner.invoke(main, ["new", str(target)]).exit_code == 0
        result = runner.invoke(main, ["new", str(target)])
        assert result.exit_code == 1
        assert "already holds a project" in result.output


class TestGenerate:
    def test_writes_branching_story(self, runner, tmp_path):
        target = tmp_path / "p1"
        runner.invoke(main, ["new", str(target)])
        result = runner.invoke(
            main, ["generate", BRANCHING_PROMPT, str(target), "--seed", "7"]
        )
        assert result.exit_code == 0, result.output
        assert "Branching story with" in result.output
        project = load_project(tmp_path, "p1")
        assert 8 <= len(project.graph.nodes) <= 12
        assert project.graph.story_context
        assert project.transcripts
        assert project.version == 2

    def test_deterministic_for_a_seed(self, runner, tmp_path):
        for name in ("a", "b"):
            runner.invoke(main, ["new", str(tmp_path / name)])
            result = runner.invoke(
                main,
                ["generate", BRANCHING_PROMPT, str(tmp_path / name), "--seed", "11"],
            )
            assert result.exit_code == 0, result.output
        first = (tmp_path / "a" / "graph.json").read_bytes()
        second = (tmp_path / "b" / "graph.json").read_bytes()
        assert first == second

    def test_json_format(self, runner, tmp_path):
        target = tmp_path / "p1"
        runner.invoke(main, ["new", str(target)])
        result = runner.invoke(
            main,
            ["generate", BRANCHING_PROMPT, str(target), "--seed", "7",
             "--format", "json"],
        )
        assert result.exit_code == 0
        payload = json.loads(result.output)
        assert payload["topology"] == "Branching"
        assert payload["version"] == 2
        assert 8 <= payload["nodes"] <= 12

    def test_regenerate_stales_prior_assets(self, runner, tmp_path):
        target = make_fixture_project(tmp_path)
        runner.invoke(main, ["media", str(target), "--nodes", "1", "--kind", "audio"])
        result = runner.invoke(
            main, ["generate", BRANCHING_PROMPT, str(target), "--seed", "7"]
        )
        assert result.exit_code == 0, result.output
        project = load_project(tmp_path, "fixture")
        assert project.assets and all(a.stale for a in project.assets)

    def test_missing_project_fails(self, runner, tmp_path):
        result = runner.invoke(
            main, ["generate", "prompt", str(tmp_path / "nope"), "--seed", "1"]
        )
        assert result.exit_code == 1


class TestEdit:
    def test_rewrites_selection_only(self, runner, tmp_path):
        target = make_fixture_project(tmp_path)
        before = load_project(tmp_path, "fixture").graph
        result = runner.invoke(
            main,
            ["edit", str(target), "--nodes", "2,3", "--instruction", "add tension"],
        )
        assert result.exit_code == 0, result.output
        after = load_project(tmp_path, "fixture").graph
        assert after.edges == before.edges
        for node in after.nodes:
            old = before.node(node.id)
            if node.id in ("2", "3"):
                assert "add tension" in node.segment
            else:
                assert node.segment == old.segment
            assert node.label == old.label or node.id in ("2", "3")

    def test_unknown_node_exits_one(self, runner, tmp_path):
        target = make_fixture_project(tmp_path)
        result = runner.invoke(
            main, ["edit", str(target), "--nodes", "99", "--instruction", "x"]
        )
        assert result.exit_code == 1
        assert "UnknownNode" in result.output

    def test_edit_stales_attached_audio(self, runner, tmp_path):
        target = make_fixture_project(tmp_path)
        runner.invoke(main, ["media", str(target), "--nodes", "2", "--kind", "audio"])
        runner.invoke(
            main, ["edit", str(target), "--nodes", "2", "--instruction", "rework"]
        )
        project = load_project(tmp_path, "fixture")
        assert [a.stale for a in project.assets if a.node_id == "2"] == [True]


class TestMedia:
    def test_writes_asset_files(self, runner, tmp_path):
        target = make_fixture_project(tmp_path)
        result = runner.invoke(
            main, ["media", str(target), "--nodes", "1,2", "--kind", "audio"]
        )
        assert result.exit_code == 0, result.output
        assert (target / "assets" / "1" / "audio-v1.mp3").exists()
        assert (target / "assets" / "2" / "audio-v1.mp3").exists()
        project = load_project(tmp_path, "fixture")
        assert {(a.node_id, a.version) for a in project.assets} == {("1", 1), ("2", 1)}

    def test_regeneration_bumps_version(self, runner, tmp_path):
        target = make_fixture_project(tmp_path)
        for _ in range(2):
            result = runner.invoke(
                main, ["media", str(target), "--nodes", "3", "--kind", "image"]
            )
            assert result.exit_code == 0, result.output
        project = load_project(tmp_path, "fixture")
        versions = sorted(
            (a.version, a.stale) for a in project.assets if a.node_id == "3"
        )
        assert versions == [(1, True), (2, False)]
        assert (target / "assets" / "3" / "image-v1.png").exists()
        assert (target / "assets" / "3" / "image-v2.png").exists()

    def test_unknown_node_exits_one(self, runner, tmp_path):
        target = make_fixture_project(tmp_path)
        result = runner.invoke(
            main, ["media", str(target), "--nodes", "42", "--kind", "audio"]
        )
        assert result.exit_code == 1

    def test_json_format(self, runner, tmp_path):
        target = make_fixture_project(tmp_path)
        result = runner.invoke(
            main,
            ["media", str(target), "--nodes", "1", "--kind", "audio",
             "--format", "json"],
        )
        assert result.exit_code == 0, result.output
        payload = json.loads(result.output)
        assert payload[0]["status"] == "done"
        assert payload[0]["uri"] == "assets/1/audio-v1.mp3"
        assert payload[0]["duration_s"] > 0


class TestExport:
    def test_full_bundle(self, runner, tmp_path):
        target = make_fixture_project(tmp_path)
        runner.invoke(main, ["media", str(target), "--nodes", "1", "--kind", "audio"])
        result = runner.invoke(main, ["export", str(target)])
        assert result.exit_code == 0, result.output
        out = target / "export"
        for name in ("graph.json", "manifest.json", "subtitles.srt", "storyboard.md"):
            assert (out / name).exists()
        assert (out / "assets" / "1" / "audio-v1.mp3").exists()
        assert "warning:" in result.output  # branching graph flattened

    def test_path_export(self, runner, tmp_path):
        target = make_fixture_project(tmp_path)
        out = tmp_path / "cut"
        result = runner.invoke(
            main, ["export", str(target), "--path", "1,2,6,7", "--out", str(out)]
        )
        assert result.exit_code == 0, result.output
        assert "warning:" not in result.output
        manifest = json.loads((out / "manifest.json").read_text(encoding="utf-8"))
        assert [entry["node_id"] for entry in manifest] == ["1", "2", "6", "7"]

    def test_invalid_path_exits_one(self, runner, tmp_path):
        target = make_fixture_project(tmp_path)
        result = runner.invoke(main, ["export", str(target), "--path", "1,3,6"])
        assert result.exit_code == 1
        assert "InvalidPath" in result.output

    def test_json_format(self, runner, tmp_path):
        target = make_fixture_project(tmp_path)
        result = runner.invoke(
            main, ["export", str(target), "--format", "json"]
        )
        assert result.exit_code == 0, result.output
        payload = json.loads(result.output)
        assert "manifest.json" in payload["files"]
        assert payload["warnings"]


class TestEval:
    def test_branching_table(self, runner):
        result = runner.invoke(
            main, ["eval", "--corpus", "branching", "--seed", "3"]
        )
        assert result.exit_code == 0, result.output
        assert "Narrative Type" in result.output
        assert "10 / 10" in result.output
        assert "[0.69, 1.00]" in result.output

    def test_json_format(self, runner):
        result = runner.invoke(
            main, ["eval", "--corpus", "linear", "--seed", "3", "--format", "json"]
        )
        assert result.exit_code == 0
        payload = json.loads(result.output)
        assert payload["n"] == 10
        assert payload["k"] >= 8
        assert len(payload["records"]) == 10
        assert all(r["expected"] == "Linear" for r in payload["records"])

    def test_corpus_file(self, runner, tmp_path):
        corpus = tmp_path / "tiny.tsv"
        corpus.write_text(f"Branching\t{BRANCHING_PROMPT}\n", encoding="utf-8")
        result = runner.invoke(main, ["eval", "--corpus", str(corpus), "--seed", "3"])
        assert result.exit_code == 0, result.output
        assert "1 / 1" in result.output

    def test_unknown_corpus_exits_one(self, runner):
        result = runner.invoke(main, ["eval", "--corpus", "warbly"])
        assert result.exit_code == 1


class TestValidate:
    def test_valid_fixture(self, runner):
        result = runner.invoke(main, ["validate", str(FIXTURE)])
        assert result.exit_code == 0, result.output
        assert "OK: 7 nodes, 8 edges, Branching" in result.output

    def test_cyclic_graph_exits_one(self, runner, tmp_path):
        doc = json.loads(FIXTURE.read_text(encoding="utf-8"))
        doc["edges"].append({"id": "e7-1", "source": "7", "target": "1"})
        bad = tmp_path / "cyclic.json"
        bad.write_text(json.dumps(doc), encoding="utf-8")
        result = runner.invoke(main, ["validate", str(bad)])
        assert result.exit_code == 1
        assert "cycle" in result.output

    def test_json_format(self, runner):
        result = runner.invoke(
            main, ["validate", str(FIXTURE), "--format", "json"]
        )
        assert result.exit_code == 0
        payload = json.loads(result.output)
        assert payload["ok"] is True
        assert payload["violations"] == []
        assert payload["nodes"] == 7
        assert payload["edges"] == 8
        assert payload["topology"] == "Branching"
        # the reference graph has a second root; validate flags it
        assert any("2 roots" in w for w in payload["warnings"])

    def test_malformed_json_exits_one(self, runner, tmp_path):
        bad = tmp_path / "broken.json"
        bad.write_text("{not json", encoding="utf-8")
        result = runner.invoke(main, ["validate", str(bad)])
        assert result.exit_code == 1
        assert "invalid:" in result.output


class TestUsage:
    def test_missing_required_option_exits_two(self, runner, tmp_path):
        target = make_fixture_project(tmp_path)
        result = runner.invoke(main, ["edit", str(target), "--instruction", "x"])
        assert result.exit_code == 2

    def test_unknown_command_exits_two(self, runner):
        assert runner.invoke(main, ["frobnicate"]).exit_code == 2

    def test_help_lists_commands(self, runner):
        result = runner.invoke(main, ["--help"])
        assert result.exit_code == 0
        for command in ("new", "generate", "edit", "media", "export",
                        "eval", "validate", "serve"):
            assert command in result.output
