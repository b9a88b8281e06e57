"""Scripted backend behavior and the remote HTTP client."""

from __future__ import annotations

import itertools
import json
import threading
from http.server import BaseHTTPRequestHandler, HTTPServer

import pytest

from storygraph.backends import (
    BRANCH_CUE,
    _PLACEHOLDER_PNG,
    _SUBJECTS,
    _TAILS,
    _VERBS,
    BackendResult,
    RemoteBackend,
    ScriptedBackend,
)
from storygraph.errors import BackendFailure


def paragraphs(text: str) -> list[str]:
    return [p for p in text.split("\n\n") if p.strip()]


class TestScriptedGenerate:
    def test_deterministic(self):
        a = ScriptedBackend(seed=7).complete("generate", "A lighthouse keeper")
        b = ScriptedBackend(seed=7).complete("generate", "A lighthouse keeper")
        assert a == b

    def test_seed_changes_output(self):
        a = ScriptedBackend(seed=1).complete("generate", "A lighthouse keeper").text
        b = ScriptedBackend(seed=2).complete("generate", "A lighthouse keeper").text
        assert a != b

    def test_beat_count_in_range(self):
        for seed in range(20):
            text = ScriptedBackend(seed=seed).complete("generate", "a story").text
            assert 8 <= len(paragraphs(text)) <= 12

    def test_prompt_embedded_in_first_beat(self):
        prompt = "Rival siblings inherit a failing circus"
        text = ScriptedBackend().complete("generate", prompt).text
        assert prompt in paragraphs(text)[0]

    def test_filler_vocabulary_carries_no_branch_cues(self):
        # Structure cues must come only from the user's prompt, so every
        # template sentence the generator can emit has to be cue-free.
        for subject, verb, tail in itertools.product(_SUBJECTS, _VERBS, _TAILS):
            assert not BRANCH_CUE.search(f"{subject} {verb} {tail}.")


class TestScriptedReason:
    def lines(self, narrative: str, seed: int = 0) -> list[list[str]]:
        reply = ScriptedBackend(seed=seed).complete("reason", narrative).text
        return [line.split("\t") for line in reply.splitlines()]

    def test_linear_narrative_chains(self):
        narrative = "\n\n".join(f"Beat number {i} happens." for i in range(1, 10))
        rows = self.lines(narrative)
        assert len(rows) == 9
        for i, row in enumerate(rows, start=1):
            assert int(row[0]) == i
            assert row[3] == (str(i + 1) if i < 9 else "")

    def test_cue_produces_three_way_branch(self):
        beats = ["They explore, each taking a different hallway."]
        beats += [f"Beat {i}." for i in range(2, 10)]
        rows = self.lines("\n\n".join(beats))
        assert rows[0][3] == "2,3,4"
        assert rows[1][3] == rows[2][3] == rows[3][3] == "5"
        assert rows[4][3] == "6"
        assert rows[8][3] == ""

    def test_cue_with_few_beats_produces_two_way_branch(self):
        beats = ["Two factions clash."] + [f"Beat {i}." for i in range(2, 6)]
        rows = self.lines("\n\n".join(beats))
        assert rows[0][3] == "2,3"
        assert rows[1][3] == rows[2][3] == "4"

    def test_cue_with_tiny_narrative_stays_linear(self):
        rows = self.lines("They split up.\n\nThey regroup.")
        assert [row[3] for row in rows] == ["2", ""]

    def test_segments_are_single_line(self):
        rows = self.lines("A beat\nwith a wrapped line.\n\nAnother beat.")
        assert rows[0][2] == "A beat with a wrapped line."


class TestScriptedEditAndRoute:
    def test_edit_returns_label_then_rewrite(self):
        envelope = json.dumps(
            {
                "instruction": "make this sound mysterious",
                "node": {"label": "The Cellar", "segment": "She opens the door."},
                "context": {"predecessors": [], "successors": []},
            }
        )
        reply = ScriptedBackend().complete("edit", envelope).text
        lines = reply.splitlines()
        assert lines[0] == "The Cellar"
        assert "She opens the door." in lines[1]
        assert lines[1] != "She opens the door."

    def test_route_examples(self):
        backend = ScriptedBackend()

        def ask(utterance, selection, graph_present):
            envelope = json.dumps(
                {
                    "utterance": utterance,
                    "selection": selection,
                    "graph_present": graph_present,
                }
            )
            return backend.complete("route", envelope).text

        assert ask("write a story about a lost dog", [], False) == "Generate"
        assert ask("make this sound mysterious", ["3"], True) == "Edit"
        assert ask("narrate these in a hopeful tone", ["1", "2"], True) == "MediaGen"
        assert ask("export the story", [], True) == "Export"
        assert ask("what happens next?", [], True) == "Extend"

    def test_unknown_task_rejected(self):
        with pytest.raises(ValueError):
            ScriptedBackend().complete("hallucinate", "x")


class TestScriptedMedia:
    def test_audio_duration_from_word_count(self):
        prompt = " ".join(["word"] * 20)
        result = ScriptedBackend().complete("audio", prompt)
        assert result.metadata["duration_s"] == 8.0
        assert result.metadata["ext"] == ".mp3"
        assert result.payload.startswith(b"SCRIPTED-AUDIO")

    def test_video_duration_floor(self):
        short = ScriptedBackend().complete("video", "five words in this prompt")
        assert short.metadata["duration_s"] == 4.0
        long = ScriptedBackend().complete("video", " ".join(["w"] * 25))
        assert long.metadata["duration_s"] == 10.0

    def test_image_payload_is_fixed(self):
        a = ScriptedBackend().complete("image", "a glowing forest")
        b = ScriptedBackend().complete("image", "a ruined tower")
        assert a.payload == b.payload == _PLACEHOLDER_PNG
        assert a.payload.startswith(b"\x89PNG")

    def test_media_determinism(self):
        a = ScriptedBackend(seed=3).complete("audio", "same text")
        b = ScriptedBackend(seed=3).complete("audio", "same text")
        assert a == b


# ---------------------------------------------------------------------------
# Remote backend against a local HTTP server
# ---------------------------------------------------------------------------

class _Script(BaseHTTPRequestHandler):
    """Serves a scripted sequence of (status, body) responses."""

    responses: list[tuple[int, dict]] = []
    seen: list[dict] = []

    def do_POST(self):
        length = int(self.headers.get("Content-Length", 0))
        body = json.loads(self.rfile.read(length)) if length else {}
        type(self).seen.append(
            {"path": self.path, "body": body, "auth": self.headers.get("Authorization")}
        )
        status, doc = (
            type(self).responses.pop(0) if type(self).responses else (200, {"text": "ok"})
        )
        payload = json.dumps(doc).encode()
        self.send_response(status)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(payload)))
        self.end_headers()
        self.wfile.write(payload)

    def log_message(self, *args):
        pass


@pytest.fixture
def http_server():
    server = HTTPServer(("127.0.0.1", 0), _Script)
    _Script.responses = []
    _Script.seen = []
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    yield f"http://127.0.0.1:{server.server_port}", _Script
    server.shutdown()
    server.server_close()


class TestRemoteBackend:
    def test_success(self, http_server):
        url, script = http_server
        script.responses = [(200, {"text": "a tale", "metadata": {"model": "m1"}})]
        backend = RemoteBackend(url, attempts=1)
        result = backend.complete("generate", "prompt")
        assert result == BackendResult(text="a tale", metadata={"model": "m1"})
        assert script.seen[0]["path"] == "/v1/complete"
        assert script.seen[0]["body"]["task"] == "generate"

    def test_payload_decoding(self, http_server):
        url, script = http_server
        script.responses = [(200, {"payload_b64": "aGVsbG8=", "metadata": {}})]
        result = RemoteBackend(url, attempts=1).complete("audio", "say hi")
        assert result.payload == b"hello"

    def test_retries_then_succeeds(self, http_server):
        url, script = http_server
        script.responses = [(500, {}), (503, {}), (200, {"text": "third time"})]
        backend = RemoteBackend(url, attempts=3, backoff_s=0.0)
        assert backend.complete("generate", "p").text == "third time"
        assert len(script.seen) == 3

    def test_gives_up_after_attempts(self, http_server):
        url, script = http_server
        script.responses = [(500, {})] * 3
        backend = RemoteBackend(url, attempts=3, backoff_s=0.0)
        with pytest.raises(BackendFailure) as exc:
            backend.complete("generate", "p")
        assert exc.value.retries == 2
        assert len(script.seen) == 3

    def test_client_error_not_retried(self, http_server):
        url, script = http_server
        script.responses = [(404, {})]
        with pytest.raises(BackendFailure):
            RemoteBackend(url, attempts=3, backoff_s=0.0).complete("generate", "p")
        assert len(script.seen) == 1

    def test_credentials_from_environment(self, http_server, monkeypatch):
        url, script = http_server
        monkeypatch.setenv("STORYGRAPH_API_KEY", "sk-test-123")
        script.responses = [(200, {"text": "ok"})]
        RemoteBackend(url, attempts=1).complete("generate", "p")
        assert script.seen[0]["auth"] == "Bearer sk-test-123"

    def test_no_credentials_no_header(self, http_server, monkeypatch):
        url, script = http_server
        monkeypatch.delenv("STORYGRAPH_API_KEY", raising=False)
        script.responses = [(200, {"text": "ok"})]
        RemoteBackend(url, attempts=1).complete("generate", "p")
        assert script.seen[0]["auth"] is None

    def test_unreachable_host(self):
        backend = RemoteBackend("http://127.0.0.1:1", attempts=2, backoff_s=0.0)
        with pytest.raises(BackendFailure) as exc:
            backend.complete("generate", "p")
        assert "transport error" in str(exc.value)
