"""Deterministic in-process providers for tests and offline builds.

Every reply is a pure function of the call inputs, so a pipeline run with
mock providers produces byte-identical artifacts on every run.
"""

from __future__ import annotations

import hashlib
import io
import json
import re
import threading
import wave
from dataclasses import dataclass, field
from pathlib import Path

from .. import meshes
from . import MeshJobStatus

_STOPWORDS = {
    "the", "and", "that", "with", "this", "from", "they", "them", "were", "wasn",
    "have", "has", "had", "was", "for", "not", "but", "all", "she", "him", "her",
    "his", "hers", "its", "their", "then", "than", "when", "while", "into", "onto",
    "over", "under", "after", "before", "very", "just", "said", "went", "came",
    "upon", "once", "there", "where", "who", "what", "been", "being", "would",
    "could", "should", "about", "again", "because", "every", "some", "more",
}

_NAME_RE = re.compile(r"Story title: (.+)")
_CHARACTER_RE = re.compile(r"^Character: (.+)$", re.MULTILINE)
_OBJECT_RE = re.compile(r"^Object: (.+)$", re.MULTILINE)


def _digest(*parts: str | bytes) -> str:
    h = hashlib.sha256()
    for part in parts:
        h.update(part.encode("utf-8") if isinstance(part, str) else part)
        h.update(b"\x1f")
    return h.hexdigest()


class MockLanguageModel:
    """Replies with scripted JSON when available, a text heuristic otherwise."""

    def __init__(self, script: dict | None = None):
        self.script = script or {}
        self.calls = 0

    @classmethod
    def from_config(cls, section: dict) -> MockLanguageModel:
        script = None
        if section.get("script"):
            script = json.loads(Path(section["script"]).read_text(encoding="utf-8"))
        return cls(script=script)

    def complete(self, instruction: str, story: str, context: str | None = None) -> str:
        self.calls += 1
        character = _CHARACTER_RE.search(instruction)
        if character:
            return json.dumps(self._character(character.group(1).strip(), story))
        obj = _OBJECT_RE.search(instruction)
        if obj:
            return json.dumps(self._object(obj.group(1).strip(), context or ""))
        if "infer when and where" in instruction:
            return json.dumps(self._context(instruction, story))
        return json.dumps(self._extract(story))

    def _extract(self, story: str) -> dict:
        if "extract" in self.script:
            return self.script["extract"]
        return {"characters": _guess_characters(story), "objects": _guess_objects(story)}

    def _context(self, instruction: str, story: str) -> dict:
        if "context" in self.script:
            return self.script["context"]
        title_match = _NAME_RE.search(instruction)
        title = title_match.group(1).strip() if title_match else "the story"
        return {
            "era": "an unspecified storybook past",
            "place": "a storybook land",
            "cultural_notes": f"Traditional folk-tale styling suits '{title}'.",
        }

    def _character(self, name: str, story: str) -> dict:
        scripted = self.script.get("characters", {}).get(name)
        if scripted:
            return {"name": name, **scripted}
        return {
            "name": name,
            "gender": "unspecified",
            "nationality": "unspecified",
            "age": "unspecified",
            "appearance_features": f"recognizable as {name} from the story",
            "clothing": "simple storybook clothes",
            "era_of_life": "unspecified",
        }

    def _object(self, name: str, context: str) -> dict:
        scripted = self.script.get("objects", {}).get(name)
        if scripted:
            return {"name": name, **scripted}
        return {
            "name": name,
            "explanation": f"In this story, the {name} is a physical object important to the plot.",
            "context_description": f"A {name} styled to match the setting ({context or 'no context given'}).",
        }


def _sentences(story: str) -> list[str]:
    return [s for s in re.split(r"[.!?\n]+", story) if s.strip()]


def _guess_characters(story: str, limit: int = 4) -> list[str]:
    counts: dict[str, tuple[int, int]] = {}
    for sentence in _sentences(story):
        words = sentence.split()
        position = 0
        run: list[str] = []
        for idx, word in enumerate(words):
            clean = word.strip("\"'.,;:!?()")
            if idx > 0 and clean[:1].isupper() and clean[1:2].islower():
                run.append(clean)
            else:
                if run:
                    name = " ".join(run)
                    count, first = counts.get(name, (0, position))
                    counts[name] = (count + 1, first)
                    run = []
            position += 1
        if run:
            name = " ".join(run)
            count, first = counts.get(name, (0, position))
            counts[name] = (count + 1, first)
    ranked = sorted(counts.items(), key=lambda kv: (-kv[1][0], kv[1][1], kv[0]))
    return [name for name, _ in ranked[:limit]]


def _guess_objects(story: str, limit: int = 4) -> list[str]:
    counts: dict[str, tuple[int, int]] = {}
    for position, word in enumerate(story.split()):
        clean = word.strip("\"'.,;:!?()").lower()
        if len(clean) >= 4 and clean.isalpha() and clean not in _STOPWORDS:
            if word[:1].isupper():
                continue  # likely a name, handled by the character pass
            count, first = counts.get(clean, (0, position))
            counts[clean] = (count + 1, first)
    ranked = sorted(counts.items(), key=lambda kv: (-kv[1][0], kv[1][1], kv[0]))
    return [name for name, _ in ranked[:limit]]


@dataclass(slots=True)
class _MockJob:
    prompt: str
    polls_left: int
    state: str = "queued"


class MockMeshGenerator:
    """Canned text-to-3D: every prompt yields a small box mesh keyed by its hash.

    Prompts containing "##fail##" produce failing jobs; "##hang##" produces a
    job that never finishes (for timeout tests). Tracks in-flight jobs so tests
    can assert the parallelism bound.
    """

    def __init__(self, polls_until_done: int = 1, emit_frontal: bool = True):
        self.polls_until_done = polls_until_done
        self.emit_frontal = emit_frontal
        self._jobs: dict[str, _MockJob] = {}
        self._lock = threading.Lock()
        self.submits = 0
        self.in_flight = 0
        self.max_in_flight = 0

    @classmethod
    def from_config(cls, section: dict) -> MockMeshGenerator:
        return cls(
            polls_until_done=int(section.get("polls_until_done", 1)),
            emit_frontal=bool(section.get("emit_frontal", True)),
        )

    def submit(self, prompt: str) -> str:
        job_id = _digest("job", prompt)[:16]
        with self._lock:
            self.submits += 1
            self.in_flight += 1
            self.max_in_flight = max(self.max_in_flight, self.in_flight)
            self._jobs[job_id] = _MockJob(prompt=prompt, polls_left=self.polls_until_done)
        return job_id

    def poll(self, job_id: str) -> MeshJobStatus:
        with self._lock:
            job = self._jobs.get(job_id)
            if job is None:
                return MeshJobStatus(state="failed", error="unknown job")
            if "##hang##" in job.prompt:
                return MeshJobStatus(state="running")
            if job.polls_left > 0:
                job.polls_left -= 1
                return MeshJobStatus(state="running")
            if job.state != "done":
                job.state = "done"
                self.in_flight -= 1
            if "##fail##" in job.prompt:
                return MeshJobStatus(state="failed", error="provider scripted failure")
            frontal = f"mock://frontal/{job_id}" if self.emit_frontal else None
            return MeshJobStatus(state="done", mesh_url=f"mock://mesh/{job_id}", frontal_url=frontal)

    def fetch(self, url: str) -> bytes:
        kind, _, job_id = url.rpartition("/")
        with self._lock:
            job = self._jobs.get(job_id)
        if job is None:
            raise ValueError(f"unknown artifact {url}")
        glb = self._mesh_for(job.prompt)
        if kind.endswith("frontal"):
            return meshes.render_frontal(glb, size=256)
        return glb

    def abandon(self, job_id: str) -> None:
        """Caller gave up on the job (timeout); drop it from the in-flight count."""
        with self._lock:
            job = self._jobs.get(job_id)
            if job is not None and job.state != "done":
                job.state = "done"
                self.in_flight -= 1

    def _mesh_for(self, prompt: str) -> bytes:
        seed = int(_digest("mesh", prompt)[:12], 16)
        extents = (
            0.5 + (seed % 100) / 100.0,
            0.5 + (seed // 100 % 100) / 100.0,
            0.5 + (seed // 10000 % 100) / 100.0,
        )
        color = (
            0.2 + (seed // 1_000_000 % 80) / 100.0,
            0.2 + (seed // 100_000_000 % 80) / 100.0,
            0.2 + (seed // 10_000_000_000 % 80) / 100.0,
        )
        return meshes.build_box_glb(extents, color)


class MockSimilarityScorer:
    """Scores from a fixture table, else a stable hash of (image, text)."""

    def __init__(self, scores: dict[str, float] | None = None):
        self.scores = dict(scores or {})
        self.calls = 0

    @classmethod
    def from_config(cls, section: dict) -> MockSimilarityScorer:
        return cls(scores={k: float(v) for k, v in section.get("scores", {}).items()})

    def score(self, image: bytes, text: str) -> float:
        self.calls += 1
        if text in self.scores:
            return self.scores[text]
        seed = int(_digest("score", hashlib.sha256(image).hexdigest(), text)[:8], 16)
        return round(seed / 0xFFFFFFFF, 6)


class MockSpeechSynthesizer:
    """Silence WAV whose duration scales with the word count of the text."""

    def __init__(self, words_per_second: float = 2.5, sample_rate: int = 16000):
        self.words_per_second = words_per_second
        self.sample_rate = sample_rate

    @classmethod
    def from_config(cls, section: dict) -> MockSpeechSynthesizer:
        return cls(words_per_second=float(section.get("words_per_second", 2.5)))

    def synthesize(self, text: str, language: str) -> bytes:
        words = max(1, len(text.split()))
        frames = int(words * self.sample_rate / self.words_per_second)
        buffer = io.BytesIO()
        with wave.open(buffer, "wb") as wav:
            wav.setnchannels(1)
            wav.setsampwidth(2)
            wav.setframerate(self.sample_rate)
            wav.writeframes(b"\x00\x00" * frames)
        return buffer.getvalue()


@dataclass(slots=True)
class MockTextRecognizer:
    """OCR stub: returns the configured text for any image."""

    text: str = ""

    @classmethod
    def from_config(cls, section: dict) -> MockTextRecognizer:
        return cls(text=section.get("text", ""))

    def extract_text(self, image: bytes) -> str:
        return self.text
