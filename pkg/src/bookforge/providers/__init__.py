"""Provider contracts and configuration.

Every ML model sits behind one of these call shapes so the pipeline can run
against HTTP services in production and deterministic mocks in tests.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Protocol, runtime_checkable

import tomli


@dataclass(slots=True)
class MeshJobStatus:
    """Snapshot of one text-to-3D job as reported by the provider."""

    state: str  # "queued" | "running" | "done" | "failed"
    mesh_url: str | None = None
    frontal_url: str | None = None
    error: str | None = None


@runtime_checkable
class LanguageModel(Protocol):
    def complete(self, instruction: str, story: str, context: str | None = None) -> str:
        """Return the model's raw text reply for one structured-output ask."""


@runtime_checkable
class MeshGenerator(Protocol):
    def submit(self, prompt: str) -> str:
        """Queue a generation job; returns the provider's job id."""

    def poll(self, job_id: str) -> MeshJobStatus: ...

    def fetch(self, url: str) -> bytes:
        """Download a finished artifact (mesh or frontal render)."""


@runtime_checkable
class SimilarityScorer(Protocol):
    def score(self, image: bytes, text: str) -> float:
        """Image-text similarity in [0, 1]."""


@runtime_checkable
class SpeechSynthesizer(Protocol):
    def synthesize(self, text: str, language: str) -> bytes:
        """Return narration audio as a WAV container."""


@runtime_checkable
class TextRecognizer(Protocol):
    def extract_text(self, image: bytes) -> str:
        """OCR hook for photographed pages; optional, disabled by default."""


@dataclass(slots=True)
class ProviderSet:
    """The four (plus optional OCR) providers a pipeline run needs."""

    llm: LanguageModel
    mesh: MeshGenerator
    scorer: SimilarityScorer
    tts: SpeechSynthesizer
    ocr: TextRecognizer | None = None


@dataclass(slots=True)
class ProviderSettings:
    """Parsed provider configuration (TOML file or dict)."""

    sections: dict = field(default_factory=dict)

    @classmethod
    def from_file(cls, path: str | Path) -> ProviderSettings:
        with open(path, "rb") as fh:
            return cls(sections=tomli.load(fh))

    def section(self, name: str) -> dict:
        return dict(self.sections.get(name, {}))


def resolve_token(section: dict, default_env: str) -> str | None:
    env_name = section.get("token_env", default_env)
    return os.environ.get(env_name) if env_name else None


def build_providers(settings: ProviderSettings) -> ProviderSet:
    """Instantiate the provider set described by a settings object."""
    from . import http as http_providers
    from . import mock as mock_providers

    def make(section_name: str, http_cls, mock_cls):
        section = settings.section(section_name)
        kind = section.get("kind", "mock")
        if kind == "http":
            return http_cls.from_config(section)
        if kind == "mock":
            return mock_cls.from_config(section)
        raise ValueError(f"unknown provider kind {kind!r} for [{section_name}]")

    ocr_section = settings.section("ocr")
    ocr = None
    if ocr_section.get("kind") == "mock":
        ocr = mock_providers.MockTextRecognizer.from_config(ocr_section)
    elif ocr_section.get("kind") == "http":
        ocr = http_providers.HttpTextRecognizer.from_config(ocr_section)

    return ProviderSet(
        llm=make("llm", http_providers.HttpLanguageModel, mock_providers.MockLanguageModel),
        mesh=make("mesh", http_providers.HttpMeshGenerator, mock_providers.MockMeshGenerator),
        scorer=make("scorer", http_providers.HttpSimilarityScorer, mock_providers.MockSimilarityScorer),
        tts=make("tts", http_providers.HttpSpeechSynthesizer, mock_providers.MockSpeechSynthesizer),
        ocr=ocr,
    )
