"""HTTP adapters for the provider contracts.

Thin clients: transport failures and 5xx map to ProviderUnavailable so the
pipeline's retry policy owns all retrying; 4xx surface as contract errors.
"""

from __future__ import annotations

import base64

import httpx

from ..errors import ProviderRejectedPrompt, ProviderUnavailable, ScorerUnavailable, TtsUnavailable
from . import MeshJobStatus, resolve_token


class _HttpClientBase:
    def __init__(self, base_url: str, token: str | None = None, timeout: float = 30.0):
        self.base_url = base_url.rstrip("/")
        headers = {"Authorization": f"Bearer {token}"} if token else {}
        self._client = httpx.Client(base_url=self.base_url, headers=headers, timeout=timeout)

    def _post(self, path: str, payload: dict, unavailable_exc=ProviderUnavailable) -> httpx.Response:
        try:
            response = self._client.post(path, json=payload)
        except httpx.HTTPError as exc:
            raise unavailable_exc(f"{self.base_url}{path}: {exc}") from exc
        if response.status_code >= 500:
            raise unavailable_exc(f"{self.base_url}{path}: HTTP {response.status_code}")
        return response


class HttpLanguageModel(_HttpClientBase):
    """POST /complete with {instruction, story, context} -> {"text": ...}."""

    @classmethod
    def from_config(cls, section: dict) -> HttpLanguageModel:
        return cls(
            base_url=section["base_url"],
            token=resolve_token(section, "BOOKFORGE_LLM_TOKEN"),
            timeout=float(section.get("timeout", 60.0)),
        )

    def complete(self, instruction: str, story: str, context: str | None = None) -> str:
        response = self._post("/complete", {"instruction": instruction, "story": story, "context": context})
        if response.status_code >= 400:
            raise ProviderUnavailable(f"language model rejected request: HTTP {response.status_code}")
        body = response.json()
        return body["text"] if isinstance(body, dict) else str(body)


class HttpMeshGenerator(_HttpClientBase):
    """Job API: POST /jobs -> {"job_id"}; GET /jobs/{id} -> status + artifact URLs."""

    @classmethod
    def from_config(cls, section: dict) -> HttpMeshGenerator:
        return cls(
            base_url=section["base_url"],
            token=resolve_token(section, "BOOKFORGE_MESH_TOKEN"),
            timeout=float(section.get("timeout", 60.0)),
        )

    def submit(self, prompt: str) -> str:
        response = self._post("/jobs", {"prompt": prompt})
        if response.status_code >= 400:
            raise ProviderRejectedPrompt(f"HTTP {response.status_code}: {response.text[:200]}")
        return str(response.json()["job_id"])

    def poll(self, job_id: str) -> MeshJobStatus:
        try:
            response = self._client.get(f"/jobs/{job_id}")
        except httpx.HTTPError as exc:
            raise ProviderUnavailable(f"poll {job_id}: {exc}") from exc
        if response.status_code >= 500:
            raise ProviderUnavailable(f"poll {job_id}: HTTP {response.status_code}")
        body = response.json()
        return MeshJobStatus(
            state=body.get("state", "failed"),
            mesh_url=body.get("mesh_url"),
            frontal_url=body.get("frontal_url"),
            error=body.get("error"),
        )

    def fetch(self, url: str) -> bytes:
        try:
            response = self._client.get(url)
            response.raise_for_status()
        except httpx.HTTPError as exc:
            raise ProviderUnavailable(f"fetch {url}: {exc}") from exc
        return response.content


class HttpSimilarityScorer(_HttpClientBase):
    """POST /score with image + text -> {"score": raw}.

    normalize="cosine" maps raw cosine similarity onto [0, 1] via (x + 1) / 2 so
    the gate threshold keeps a fixed meaning regardless of the scorer's scale.
    """

    def __init__(self, base_url: str, token: str | None = None, timeout: float = 30.0,
                 normalize: str = "unit"):
        super().__init__(base_url, token, timeout)
        self.normalize = normalize

    @classmethod
    def from_config(cls, section: dict) -> HttpSimilarityScorer:
        return cls(
            base_url=section["base_url"],
            token=resolve_token(section, "BOOKFORGE_SCORER_TOKEN"),
            timeout=float(section.get("timeout", 30.0)),
            normalize=section.get("normalize", "unit"),
        )

    def score(self, image: bytes, text: str) -> float:
        payload = {"text": text, "image_b64": base64.b64encode(image).decode("ascii")}
        response = self._post("/score", payload, unavailable_exc=ScorerUnavailable)
        if response.status_code >= 400:
            raise ScorerUnavailable(f"scorer rejected request: HTTP {response.status_code}")
        raw = float(response.json()["score"])
        if self.normalize == "cosine":
            raw = (raw + 1.0) / 2.0
        return min(1.0, max(0.0, raw))


class HttpSpeechSynthesizer(_HttpClientBase):
    """POST /synthesize -> WAV bytes."""

    @classmethod
    def from_config(cls, section: dict) -> HttpSpeechSynthesizer:
        return cls(
            base_url=section["base_url"],
            token=resolve_token(section, "BOOKFORGE_TTS_TOKEN"),
            timeout=float(section.get("timeout", 120.0)),
        )

    def synthesize(self, text: str, language: str) -> bytes:
        response = self._post("/synthesize", {"text": text, "language": language, "format": "wav"},
                              unavailable_exc=TtsUnavailable)
        if response.status_code >= 400:
            raise TtsUnavailable(f"tts rejected request: HTTP {response.status_code}")
        return response.content


class HttpTextRecognizer(_HttpClientBase):
    """POST /ocr with an image -> {"text": ...}."""

    @classmethod
    def from_config(cls, section: dict) -> HttpTextRecognizer:
        return cls(
            base_url=section["base_url"],
            token=resolve_token(section, "BOOKFORGE_OCR_TOKEN"),
            timeout=float(section.get("timeout", 60.0)),
        )

    def extract_text(self, image: bytes) -> str:
        payload = {"image_b64": base64.b64encode(image).decode("ascii")}
        response = self._post("/ocr", payload)
        if response.status_code >= 400:
            raise ProviderUnavailable(f"ocr rejected request: HTTP {response.status_code}")
        return str(response.json()["text"])
