"""Generative backends.

The orchestrator and media queue talk to a single backend contract. Two
implementations ship: a deterministic scripted backend so every experiment
and test runs offline, and a remote HTTP client for real model providers.

Task names and prompt envelopes are the wire contract (see docs/formats.md):
``generate`` and ``reason`` exchange plain text and a line-oriented draft
list; ``edit`` and ``route`` take a JSON envelope; ``audio``/``image``/
``video`` return byte payloads with metadata.
"""

from __future__ import annotations

import base64
import hashlib
import json
import os
import random
import re
import time
from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from typing import Any, Mapping

import requests

from .errors import BackendFailure

TEXT_TASKS = ("generate", "reason", "edit", "route")
MEDIA_TASKS = ("audio", "image", "video")

# Appended to a reason re-prompt when the first reply failed to parse.
REPAIR_NOTE = (
    "The previous reply was not machine-readable. Respond with one line per "
    "node: ordinal, label, segment, and comma-separated successor ordinals, "
    "separated by tabs."
)

# Narrative cues that signal parallel story structure. Word-boundary
# anchored so e.g. "reaching" does not trip "each".
BRANCH_CUE = re.compile(
    r"\b(each|different|separate\w*|parallel|meanwhile|faction\w*|divergent"
    r"|intertwine\w*|converg\w*|collide\w*|shared|split\w* up)\b",
    re.IGNORECASE,
)


@dataclass(frozen=True)
class BackendResult:
    text: str = ""
    payload: bytes = b""
    metadata: Mapping[str, Any] = field(default_factory=dict)


class GenerativeBackend(ABC):
    """Contract every backend implements. ``capabilities`` advertises which
    task names :meth:`complete` accepts."""

    capabilities: frozenset[str] = frozenset(TEXT_TASKS + MEDIA_TASKS)

    @abstractmethod
    def complete(
        self, task: str, prompt: str, params: Mapping[str, Any] | None = None
    ) -> BackendResult:
        """Run one task. Raises BackendFailure when the provider gives up."""

    def supports(self, task: str) -> bool:
        return task in self.capabilities


# ---------------------------------------------------------------------------
# Scripted backend
# ---------------------------------------------------------------------------

# Filler vocabulary for scripted narration. Deliberately free of every
# BRANCH_CUE word so structure cues come only from the user's prompt.
_SUBJECTS = (
    "The traveler",
    "A quiet voice",
    "The old lamplighter",
    "The city itself",
    "A stray signal",
    "The youngest of them",
    "An uneasy wind",
    "The archivist",
)
_VERBS = (
    "presses on",
    "hesitates",
    "takes note",
    "turns back briefly",
    "finds a clue",
    "loses the trail",
    "keeps watch",
    "makes a choice",
)
_TAILS = (
    "as night settles in",
    "while the rain starts",
    "despite the warnings",
    "and the stakes rise",
    "with new resolve",
    "under a pale sky",
    "before the bells ring",
    "as doubts creep in",
)

_WORDS_PER_SECOND = 2.5
_MIN_VIDEO_SECONDS = 4.0

# Smallest valid PNG (1x1 transparent pixel); the fixed-size image placeholder.
_PLACEHOLDER_PNG = base64.b64decode(
    "iVBORw0KGgoAAAANSUhEUgAAAAEAAAABCAYAAAAfFcSJAAAADUlEQVR42mNk"
    "YPhfDwAChwGA60e6kgAAAABJRU5ErkJggg=="
)

_MEDIA_KEYWORDS = re.compile(r"\b(narrat\w*|voice\w*|image\w*|video\w*|audio)\b", re.IGNORECASE)
_EXPORT_KEYWORD = re.compile(r"\bexport\b", re.IGNORECASE)
_CONTINUATION_CUE = re.compile(
    r"\b(add|extend|continue)\b|what happens next", re.IGNORECASE
)
_RESTRUCTURE_CUE = re.compile(r"\bsplit\b", re.IGNORECASE)


def _sentence(rng: random.Random) -> str:
    return f"{rng.choice(_SUBJECTS)} {rng.choice(_VERBS)} {rng.choice(_TAILS)}."


def _normalize_sentence(text: str) -> str:
    text = " ".join(text.split())
    if text and text[-1] not in ".?!":
        text += "."
    return text


def _label_for(paragraph: str, limit: int = 5) -> str:
    words = re.findall(r"\S+", paragraph)[:limit]
    return " ".join(w.strip(".,;:!?\"'") for w in words) or "Untitled"


def _paragraphs(text: str) -> list[str]:
    return [p.strip() for p in re.split(r"\n\s*\n", text) if p.strip()]


class ScriptedBackend(GenerativeBackend):
    """Deterministic stand-in for the generative models.

    Every response is a pure function of (seed, task, prompt), so pipelines,
    experiments, and media timing are reproducible offline. The narrative
    rules are documented in docs/formats.md; the essentials:

    - generate: 8 to 12 paragraph beats; the first beat embeds the prompt.
    - reason: one draft per paragraph; a BRANCH_CUE match anywhere in the
      narrative produces intro -> parallel beats -> shared next beat, then a
      linear tail; otherwise a straight chain.
    - edit: returns the label then the rewritten segment on following lines.
    - audio/video duration: word count / 2.5 wps (video floored at 4 s).
    """

    def __init__(self, seed: int = 0):
        self.seed = seed

    def _digest(self, task: str, prompt: str) -> bytes:
        h = hashlib.sha256()
        h.update(str(self.seed).encode())
        h.update(b"\x00")
        h.update(task.encode())
        h.update(b"\x00")
        h.update(prompt.encode())
        return h.digest()

    def complete(
        self, task: str, prompt: str, params: Mapping[str, Any] | None = None
    ) -> BackendResult:
        params = dict(params or {})
        digest = self._digest(task, prompt)
        if task == "generate":
            return BackendResult(text=self._generate(prompt, digest))
        if task == "reason":
            return BackendResult(text=self._reason(prompt))
        if task == "edit":
            return BackendResult(text=self._edit(prompt))
        if task == "route":
            return BackendResult(text=self._route(prompt))
        if task in MEDIA_TASKS:
            return self._media(task, prompt, digest)
        raise ValueError(f"unknown task {task!r}")

    def _generate(self, prompt: str, digest: bytes) -> str:
        beat_count = 8 + digest[0] % 5
        rng = random.Random(int.from_bytes(digest[1:9], "big"))
        beats = [f"{_normalize_sentence(prompt)} {_sentence(rng)}"]
        for _ in range(beat_count - 1):
            beats.append(f"{_sentence(rng)} {_sentence(rng)}")
        return "\n\n".join(beats)

    def _reason(self, narrative: str) -> str:
        if narrative.endswith(REPAIR_NOTE):
            narrative = narrative[: -len(REPAIR_NOTE)]
        beats = _paragraphs(narrative)
        n = len(beats)
        branch_width = 0
        if n >= 4 and BRANCH_CUE.search(narrative):
            branch_width = 3 if n >= 6 else 2

        successors: list[list[int]] = []
        if branch_width:
            joint = branch_width + 2  # beat where the branches come back together
            successors.append(list(range(2, branch_width + 2)))
            for _ in range(branch_width):
                successors.append([joint])
            for ordinal in range(joint, n + 1):
                successors.append([ordinal + 1] if ordinal < n else [])
        else:
            for ordinal in range(1, n + 1):
                successors.append([ordinal + 1] if ordinal < n else [])

        lines = []
        for i, beat in enumerate(beats, start=1):
            segment = " ".join(beat.split())
            succ = ",".join(str(s) for s in successors[i - 1])
            lines.append(f"{i}\t{_label_for(beat)}\t{segment}\t{succ}")
        return "\n".join(lines)

    def _edit(self, prompt: str) -> str:
        try:
            envelope = json.loads(prompt)
            node = envelope.get("node", {})
            label = str(node.get("label", "Untitled"))
            segment = str(node.get("segment", ""))
            instruction = str(envelope.get("instruction", ""))
        except (json.JSONDecodeError, AttributeError):
            label, segment, instruction = "Untitled", "", prompt
        rewritten = f"{segment.strip()} [revised: {instruction.strip()}]".strip()
        return f"{label}\n{rewritten}"

    def _route(self, prompt: str) -> str:
        try:
            envelope = json.loads(prompt)
            utterance = str(envelope.get("utterance", ""))
            has_selection = bool(envelope.get("selection"))
            graph_present = bool(envelope.get("graph_present"))
        except (json.JSONDecodeError, AttributeError):
            utterance, has_selection, graph_present = prompt, False, False
        if not graph_present:
            return "Generate"
        if _EXPORT_KEYWORD.search(utterance):
            return "Export"
        if has_selection and _MEDIA_KEYWORDS.search(utterance):
            return "MediaGen"
        if has_selection and _RESTRUCTURE_CUE.search(utterance):
            return "Extend"
        if has_selection:
            return "Edit"
        if _CONTINUATION_CUE.search(utterance):
            return "Extend"
        return "Edit"

    def _media(self, kind: str, prompt: str, digest: bytes) -> BackendResult:
        words = len(prompt.split())
        stamp = digest[:6].hex()
        if kind == "audio":
            duration = words / _WORDS_PER_SECOND
            return BackendResult(
                payload=f"SCRIPTED-AUDIO {stamp}\n".encode(),
                metadata={"duration_s": duration, "ext": ".mp3"},
            )
        if kind == "video":
            duration = max(_MIN_VIDEO_SECONDS, words / _WORDS_PER_SECOND)
            return BackendResult(
                payload=f"SCRIPTED-VIDEO {stamp}\n".encode(),
                metadata={"duration_s": duration, "ext": ".mp4"},
            )
        return BackendResult(
            payload=_PLACEHOLDER_PNG,
            metadata={"ext": ".png", "width": 1, "height": 1},
        )


# ---------------------------------------------------------------------------
# Remote backend
# ---------------------------------------------------------------------------

DEFAULT_TIMEOUT_S = 60.0  # provider calls are quoted at 10-30 s; allow slack


class RemoteBackend(GenerativeBackend):
    """HTTP client for a provider exposing POST {base_url}/v1/complete.

    Credentials come from the environment (never persisted): the variable
    named by ``api_key_env`` is sent as a bearer token when set. Transport
    errors and 5xx responses are retried with backoff; 4xx responses are
    not retried.
    """

    def __init__(
        self,
        base_url: str,
        api_key_env: str = "STORYGRAPH_API_KEY",
        timeout_s: float = DEFAULT_TIMEOUT_S,
        attempts: int = 3,
        backoff_s: float = 0.5,
    ):
        self.base_url = base_url.rstrip("/")
        self.api_key_env = api_key_env
        self.timeout_s = timeout_s
        self.attempts = max(1, attempts)
        self.backoff_s = backoff_s

    def complete(
        self, task: str, prompt: str, params: Mapping[str, Any] | None = None
    ) -> BackendResult:
        body = {"task": task, "prompt": prompt, "params": dict(params or {})}
        headers = {}
        api_key = os.environ.get(self.api_key_env)
        if api_key:
            headers["Authorization"] = f"Bearer {api_key}"

        last_error = "no attempt made"
        for attempt in range(self.attempts):
            if attempt:
                time.sleep(self.backoff_s * attempt)
            try:
                response = requests.post(
                    f"{self.base_url}/v1/complete",
                    json=body,
                    headers=headers,
                    timeout=self.timeout_s,
                )
            except requests.RequestException as exc:
                last_error = f"transport error: {exc}"
                continue
            if response.status_code >= 500:
                last_error = f"server error {response.status_code}"
                continue
            if response.status_code != 200:
                raise BackendFailure(
                    f"backend rejected {task!r}: HTTP {response.status_code}",
                    retries=attempt,
                )
            try:
                doc = response.json()
            except ValueError:
                last_error = "response was not JSON"
                continue
            payload = base64.b64decode(doc["payload_b64"]) if doc.get("payload_b64") else b""
            return BackendResult(
                text=doc.get("text", ""),
                payload=payload,
                metadata=doc.get("metadata", {}),
            )
        raise BackendFailure(
            f"backend call {task!r} failed after {self.attempts} attempts: {last_error}",
            retries=self.attempts - 1,
        )
