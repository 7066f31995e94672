"""Mesh-generation prompts, job lifecycle, and wait-time estimation."""

from __future__ import annotations

import json
import logging
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from importlib import resources

import numpy as np

from .errors import (
    GenerationTimeout,
    IllegalTransition,
    IncompleteProfile,
    ProviderRejectedPrompt,
    ProviderUnavailable,
)
from .meshes import render_frontal
from .narrative import CharacterProfile, HistoricalContext, ObjectProfile
from .providers import MeshGenerator
from .store import BlobStore, sha256_hex

logger = logging.getLogger(__name__)

OUTPUT_NAMES = "output#1", "output#2", "output#3", "output#4"

# pending -> generating -> generated -> scored -> kept | removed; failures only
# while the provider still owns the job.
_TRANSITIONS = {
    "pending": {"generating", "failed"},
    "generating": {"generated", "failed"},
    "generated": {"scored"},
    "scored": {"kept", "removed"},
    "kept": set(),
    "removed": set(),
    "failed": set(),
}


@dataclass(frozen=True, slots=True)
class GenerationPrompt:
    """Text sent to the mesh provider, with provenance of each part."""

    keyword: str
    kind: str  # "character" | "object"
    prompt_text: str
    source_parts: tuple[str, ...]


def build_generation_prompt(profile: CharacterProfile | ObjectProfile,
                            context: HistoricalContext) -> GenerationPrompt:
    """Concatenate exactly the mandated parts, in fixed order.

    Characters carry their name plus the attribute description; objects carry
    name, then the historical background, then the in-context description.
    """
    if isinstance(profile, CharacterProfile):
        description = profile.description()
        if not description:
            raise IncompleteProfile(f"character {profile.name!r} has no bound attributes")
        return GenerationPrompt(
            keyword=profile.name,
            kind="character",
            prompt_text=f"{profile.name}. {description}",
            source_parts=("output#1", "output#3"),
        )
    if not profile.explanation.strip() or not profile.context_description.strip():
        raise IncompleteProfile(f"object {profile.name!r} is missing its description")
    background = context.as_prompt_text()
    return GenerationPrompt(
        keyword=profile.name,
        kind="object",
        prompt_text=f"{profile.name}. {background} {profile.explanation} {profile.context_description}",
        source_parts=("output#1", "output#2", "output#4"),
    )


def asset_id_for(prompt: GenerationPrompt) -> str:
    """Stable id derived from the prompt, so reruns address the same asset."""
    return "a_" + sha256_hex(prompt.prompt_text.encode("utf-8"))[:12]


def prompts_from_catalog(catalog) -> list[GenerationPrompt]:
    """One generation prompt per catalog entry, characters first."""
    context = catalog.historical_context
    prompts = [build_generation_prompt(profile, context) for profile in catalog.characters]
    prompts += [build_generation_prompt(profile, context) for profile in catalog.objects]
    return prompts


@dataclass(slots=True)
class AssetRecord:
    """One generated model and where its artifacts live."""

    asset_id: str
    keyword: str
    prompt: GenerationPrompt
    mesh_ref: str | None = None
    frontal_view_ref: str | None = None
    status: str = "pending"
    error: str | None = None
    created_at: float = field(default_factory=time.time)
    updated_at: float = field(default_factory=time.time)

    def transition(self, new_status: str) -> None:
        if new_status not in _TRANSITIONS:
            raise IllegalTransition(f"unknown status {new_status!r}")
        if new_status not in _TRANSITIONS[self.status]:
            raise IllegalTransition(f"{self.status} -> {new_status} is not allowed")
        if new_status == "generated" and (self.mesh_ref is None or self.frontal_view_ref is None):
            raise IllegalTransition("cannot mark generated before artifacts are stored")
        self.status = new_status
        self.updated_at = time.time()


@dataclass(slots=True)
class ForgeConfig:
    parallelism: int = 4  # concurrent generation jobs
    timeout_seconds: float = 300.0  # per asset
    poll_interval: float = 0.05
    poll_backoff: float = 1.5  # multiplier, capped below
    poll_interval_max: float = 2.0


def generate_assets(prompts: list[GenerationPrompt], provider: MeshGenerator, blobs: BlobStore,
                    config: ForgeConfig | None = None,
                    cancel: threading.Event | None = None,
                    on_complete=None) -> list[AssetRecord]:
    """Drive every prompt through the provider's job lifecycle.

    Returns one record per prompt in input order; failures are recorded on the
    asset (status="failed"), not raised, so one bad model never sinks the book.
    on_complete, when given, fires per finished record (any worker thread) so
    callers can checkpoint results as they land.
    """
    config = config or ForgeConfig()
    cancel = cancel or threading.Event()
    if not prompts:
        return []

    def run_one(prompt: GenerationPrompt) -> AssetRecord:
        record = AssetRecord(asset_id=asset_id_for(prompt), keyword=prompt.keyword, prompt=prompt)
        try:
            _run_job(record, provider, blobs, config, cancel)
        except (GenerationTimeout, ProviderRejectedPrompt, ProviderUnavailable) as exc:
            record.error = f"{type(exc).__name__}: {exc}"
            record.transition("failed")
            logger.warning("generation failed for %r: %s", prompt.keyword, record.error)
        if on_complete is not None:
            on_complete(record)
        return record

    workers = min(config.parallelism, len(prompts))
    if workers <= 1:
        return [run_one(p) for p in prompts]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(run_one, prompts))


def _run_job(record: AssetRecord, provider: MeshGenerator, blobs: BlobStore,
             config: ForgeConfig, cancel: threading.Event) -> None:
    job_id = provider.submit(record.prompt.prompt_text)
    record.transition("generating")
    deadline = time.monotonic() + config.timeout_seconds
    interval = config.poll_interval
    while True:
        if cancel.is_set():
            raise GenerationTimeout("generation cancelled")
        status = provider.poll(job_id)
        if status.state == "done":
            break
        if status.state == "failed":
            raise ProviderRejectedPrompt(status.error or "provider reported failure")
        if time.monotonic() >= deadline:
            abandon = getattr(provider, "abandon", None)
            if abandon is not None:
                abandon(job_id)
            raise GenerationTimeout(f"no result within {config.timeout_seconds:.0f}s")
        if cancel.wait(interval):
            raise GenerationTimeout("generation cancelled")
        interval = min(interval * config.poll_backoff, config.poll_interval_max)
    if not status.mesh_url:
        raise ProviderRejectedPrompt("job finished without a mesh artifact")
    mesh_bytes = provider.fetch(status.mesh_url)
    if status.frontal_url:
        frontal_bytes = provider.fetch(status.frontal_url)
    else:
        # Provider gave no frontal render; project the mesh from +Z ourselves.
        frontal_bytes = render_frontal(mesh_bytes)
    record.mesh_ref = blobs.put(mesh_bytes, "glb")
    record.frontal_view_ref = blobs.put(frontal_bytes, "png")
    record.transition("generated")


# --- waiting-time estimation --------------------------------------------------

@dataclass(frozen=True, slots=True)
class EtaModel:
    """Affine wait-time model in the number of models to generate."""

    base_seconds: float
    per_model_seconds: float

    def __post_init__(self):
        if self.base_seconds < 0 or self.per_model_seconds < 0:
            raise ValueError("EtaModel coefficients must be non-negative")


def estimate_generation_seconds(model_count: int, eta: EtaModel) -> int:
    """Round(base + per_model * count); shown to the uploader as the wait."""
    if model_count < 1:
        raise ValueError("model_count must be >= 1")
    return round(eta.base_seconds + eta.per_model_seconds * model_count)


def fit_affine_relative(samples: list[tuple[float, float]]) -> tuple[float, float]:
    """Least-squares affine fit y ~ a + b*x minimizing relative error.

    Residuals are weighted by 1/y so a 25%-style tolerance is honored evenly
    across small and large observations.
    """
    if len(samples) < 2:
        raise ValueError("need at least two samples to fit")
    x = np.array([s[0] for s in samples], dtype=np.float64)
    y = np.array([s[1] for s in samples], dtype=np.float64)
    if (y <= 0).any():
        raise ValueError("observations must be positive")
    design = np.stack([np.ones_like(x), x], axis=1) / y[:, None]
    target = np.ones_like(y)
    (a, b), *_ = np.linalg.lstsq(design, target, rcond=None)
    return float(max(a, 0.0)), float(max(b, 0.0))


def fit_eta_model(samples: list[tuple[int, float]]) -> EtaModel:
    """Calibrate the model-count ETA from (model_count, seconds) observations."""
    base, per_model = fit_affine_relative([(float(c), float(s)) for c, s in samples])
    return EtaModel(base_seconds=base, per_model_seconds=per_model)


def load_default_eta() -> tuple[EtaModel, EtaModel]:
    """Shipped calibration: (per-model ETA, provisional per-word ETA).

    The provisional model estimates from word count alone and is used before
    extraction has determined how many models the book needs.
    """
    raw = resources.files("bookforge.templates").joinpath("eta.json").read_text(encoding="utf-8")
    data = json.loads(raw)
    eta = EtaModel(base_seconds=data["base_seconds"], per_model_seconds=data["per_model_seconds"])
    prov = data["provisional"]
    provisional = EtaModel(base_seconds=prov["base_seconds"], per_model_seconds=prov["per_word_seconds"])
    return eta, provisional


def estimate_provisional_seconds(word_count: int, provisional: EtaModel) -> int:
    """Wait estimate from word count only, flagged provisional by callers."""
    return round(provisional.base_seconds + provisional.per_model_seconds * max(word_count, 1))
