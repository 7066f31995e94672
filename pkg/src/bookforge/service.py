"""Pipeline orchestration: per-book state machine, persistence, and HTTP API.

The driver replays cheaply: every paid provider call is checkpointed in the
book's step cache, so re-running the pipeline after a restart performs no
duplicate provider work and continues from the last persisted state.
"""

from __future__ import annotations

import base64
import hashlib
import logging
import threading
import time
import uuid
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

from fastapi import FastAPI, Request
from fastapi.responses import FileResponse, JSONResponse, Response
from pydantic import BaseModel

from . import assembler, narrative
from .assembler import track_from_audio
from .errors import (
    BookForgeError,
    EmptyBook,
    EmptyStory,
    IllegalTransition,
    NotFound,
    WrongState,
)
from .forge import (
    AssetRecord,
    ForgeConfig,
    GenerationPrompt,
    asset_id_for,
    estimate_generation_seconds,
    estimate_provisional_seconds,
    generate_assets,
    load_default_eta,
    prompts_from_catalog,
)
from .gate import GateConfig, PlausibilityRecord, ReviewLedger, classify, score_asset
from .ingest import KeywordOccurrence, StoryDocument, locate_occurrences
from .narrative import (
    CharacterProfile,
    EntityCatalog,
    HistoricalContext,
    NarrativeConfig,
    ObjectProfile,
)
from .providers import ProviderSet
from .store import DataDir, sha256_hex

logger = logging.getLogger(__name__)

STATE_ORDER = [
    "received",
    "extracting",
    "contextualizing",
    "describing",
    "generating",
    "scoring",
    "awaiting_review",
    "assembling",
    "ready",
]
TERMINAL_STATES = {"ready", "failed"}


@dataclass(slots=True)
class PipelineRun:
    """Persisted per-book progress through the pipeline."""

    book_id: str
    title: str
    language: str
    state: str = "received"
    content_id: str = ""
    word_count: int = 0
    model_count: int | None = None
    created_at: float = field(default_factory=time.time)
    seq: int = 0
    error: str | None = None
    bundle_sha256: str | None = None
    step_timestamps: dict[str, float] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "book_id": self.book_id,
            "title": self.title,
            "language": self.language,
            "state": self.state,
            "content_id": self.content_id,
            "word_count": self.word_count,
            "model_count": self.model_count,
            "created_at": self.created_at,
            "seq": self.seq,
            "error": self.error,
            "bundle_sha256": self.bundle_sha256,
            "step_timestamps": self.step_timestamps,
        }

    @classmethod
    def from_dict(cls, data: dict) -> PipelineRun:
        return cls(**data)


class BookRuntime:
    """In-memory working state for one book; rebuildable from the step cache."""

    def __init__(self, book_id: str, body: str):
        self.book_id = book_id
        self.body = body
        self.lock = threading.RLock()
        self.doc: StoryDocument | None = None
        self.catalog: EntityCatalog | None = None
        self.prompts: list[GenerationPrompt] = []
        self.assets: dict[str, AssetRecord] = {}
        self.ledger: ReviewLedger | None = None


def content_identity(title: str, body: str, language: str) -> str:
    digest = hashlib.sha256(f"{title}\n{language}\n{body}".encode("utf-8")).hexdigest()
    return f"st_{digest[:16]}"


class PipelineService:
    """Owns all books in one data directory and drives their pipelines."""

    def __init__(self, data_dir: str | Path, providers: ProviderSet, *,
                 gate_config: GateConfig | None = None,
                 narrative_config: NarrativeConfig | None = None,
                 forge_config: ForgeConfig | None = None,
                 run_async: bool = True,
                 max_concurrent_books: int = 4):
        self.data = DataDir(data_dir)
        self.providers = providers
        self.gate_config = gate_config or GateConfig()
        self.narrative_config = narrative_config or NarrativeConfig()
        self.forge_config = forge_config or ForgeConfig()
        self.run_async = run_async
        self.eta_model, self.provisional_eta = load_default_eta()
        self._runs: dict[str, PipelineRun] = {}
        self._runtimes: dict[str, BookRuntime] = {}
        self._lock = threading.Lock()
        self._executor = ThreadPoolExecutor(max_workers=max_concurrent_books) if run_async else None
        for book_id, snapshot in self.data.runs.load_latest().items():
            self._runs[book_id] = PipelineRun.from_dict(snapshot)

    # -- lifecycle -------------------------------------------------------------

    def create_book(self, title: str, body: str, language: str = "und",
                    image_b64: str | None = None) -> PipelineRun:
        """Register a new book and start (or inline-run) its pipeline."""
        if image_b64 is not None and not body.strip():
            if self.providers.ocr is None:
                raise EmptyStory("image ingestion requires an OCR provider; none is configured")
            body = self.providers.ocr.extract_text(base64.b64decode(image_b64))
        if not body or not body.strip():
            raise EmptyStory("story body is empty")
        with self._lock:
            run = PipelineRun(
                book_id=f"bk_{uuid.uuid4().hex[:12]}",
                title=title,
                language=language,
                content_id=content_identity(title, body, language),
                seq=len(self._runs),
            )
            self._runs[run.book_id] = run
            self._runtimes[run.book_id] = BookRuntime(run.book_id, body)
        self._body_path(run.book_id).write_text(body, encoding="utf-8")
        self._persist(run)
        self._dispatch(run.book_id)
        return run

    def resume_incomplete(self) -> list[str]:
        """Re-drive every non-terminal book after a restart; returns their ids."""
        resumed = []
        for book_id, run in list(self._runs.items()):
            if run.state not in TERMINAL_STATES:
                resumed.append(book_id)
                self._dispatch(book_id)
        return resumed

    def shutdown(self) -> None:
        if self._executor is not None:
            self._executor.shutdown(wait=True)

    def _dispatch(self, book_id: str) -> None:
        if self._executor is not None:
            self._executor.submit(self._run_guarded, book_id)
        else:
            self.run_pipeline(book_id)

    def _run_guarded(self, book_id: str) -> None:
        try:
            self.run_pipeline(book_id)
        except Exception:  # recorded on the run already; keep the worker alive
            logger.exception("pipeline for %s failed", book_id)

    # -- the driver --------------------------------------------------------------

    def run_pipeline(self, book_id: str) -> PipelineRun:
        """Advance the book as far as possible; halts at awaiting_review.

        Safe to call repeatedly: completed steps replay from the cache without
        touching providers, and state only ever advances.
        """
        run = self._run(book_id)
        runtime = self._runtime(book_id)
        with runtime.lock:
            if run.state == "failed":
                return run
            cache = self.data.step_cache(book_id)
            try:
                runtime.doc = StoryDocument.from_text(
                    run.content_id, run.title, runtime.body, run.language)
                run.word_count = runtime.doc.word_count

                self._advance(run, "extracting")
                characters, objects = self._step_extract(run, runtime, cache)
                run.model_count = len(characters) + len(objects)
                self._persist(run)

                self._advance(run, "contextualizing")
                context = self._step_context(run, runtime, cache)

                self._advance(run, "describing")
                self._step_describe(run, runtime, cache, characters, objects, context)

                self._advance(run, "generating")
                self._step_generate(run, runtime, cache)

                self._advance(run, "scoring")
                self._step_score(run, runtime, cache)

                suspicious = bool(runtime.ledger.queue())
                review_done = bool(cache.get("review_complete"))
                if suspicious and not review_done:
                    self._advance(run, "awaiting_review")
                    return run
                if review_done:
                    self._advance(run, "awaiting_review")  # no-op if already there
                    self._apply_completion(runtime, cache)
                    self._advance(run, "assembling")
                else:
                    self._advance(run, "assembling", allow_skip=True)
                self._step_assemble(run, runtime, cache)
                self._advance(run, "ready")
            except BookForgeError as exc:
                self._fail(run, f"{type(exc).__name__}: {exc}")
            except Exception as exc:
                self._fail(run, f"{type(exc).__name__}: {exc}")
                logger.exception("pipeline for %s failed", book_id)
        return run

    # -- steps -------------------------------------------------------------------

    def _step_extract(self, run, runtime, cache) -> tuple[list[str], list[str]]:
        def ask() -> dict:
            characters, objects = narrative.extract_entities(
                runtime.doc, self.providers.llm, self.narrative_config)
            return {"characters": characters, "objects": objects}

        payload = cache.get_or_run("step1:extract", ask)
        return list(payload["characters"]), list(payload["objects"])

    def _step_context(self, run, runtime, cache) -> HistoricalContext:
        payload = cache.get_or_run("step2:context", lambda: asdict(
            narrative.infer_historical_context(runtime.doc, self.providers.llm, self.narrative_config)))
        return HistoricalContext(**payload)

    def _step_describe(self, run, runtime, cache, characters, objects, context) -> None:
        char_profiles = []
        for name in characters:
            key = f"step3:character:{name}"
            payload = cache.get_or_run(key, lambda n=name: asdict(
                narrative.describe_characters(runtime.doc, [n], self.providers.llm,
                                              self.narrative_config)[0]))
            char_profiles.append(CharacterProfile(**payload))
        object_profiles = []
        for name in objects:
            key = f"step4:object:{name}"
            payload = cache.get_or_run(key, lambda n=name: asdict(
                narrative.describe_objects(runtime.doc, [n], context, self.providers.llm,
                                           self.narrative_config)[0]))
            object_profiles.append(ObjectProfile(**payload))
        runtime.catalog = EntityCatalog(
            characters=char_profiles, objects=object_profiles, historical_context=context)
        runtime.prompts = prompts_from_catalog(runtime.catalog)

    def _step_generate(self, run, runtime, cache) -> None:
        pending: list[GenerationPrompt] = []
        for prompt in runtime.prompts:
            asset_id = asset_id_for(prompt)
            cached = cache.get(f"gen:{asset_id}")
            if cached:
                runtime.assets[asset_id] = self._asset_from_cache(prompt, cached)
            else:
                pending.append(prompt)

        def checkpoint(record: AssetRecord) -> None:
            cache.put(f"gen:{record.asset_id}", {
                "status": record.status,
                "mesh_ref": record.mesh_ref,
                "frontal_ref": record.frontal_view_ref,
                "error": record.error,
            })

        if pending:
            records = generate_assets(pending, self.providers.mesh, self.data.blobs,
                                      self.forge_config, on_complete=checkpoint)
            for record in records:
                runtime.assets[record.asset_id] = record

    def _asset_from_cache(self, prompt: GenerationPrompt, cached: dict) -> AssetRecord:
        record = AssetRecord(asset_id=asset_id_for(prompt), keyword=prompt.keyword, prompt=prompt)
        record.transition("generating")
        if cached["status"] == "generated":
            record.mesh_ref = cached["mesh_ref"]
            record.frontal_view_ref = cached["frontal_ref"]
            record.transition("generated")
        else:
            record.error = cached.get("error")
            record.transition("failed")
        return record

    def _step_score(self, run, runtime, cache) -> None:
        scorable = [runtime.assets[asset_id] for asset_id in sorted(runtime.assets)
                    if runtime.assets[asset_id].status != "failed"]

        def score_one(asset: AssetRecord) -> float:
            # get_or_run checkpoints each score the moment it lands
            return cache.get_or_run(
                f"score:{asset.asset_id}",
                lambda: score_asset(asset, self.providers.scorer, self.data.blobs,
                                    self.gate_config).score,
            )

        workers = min(self.forge_config.parallelism, max(len(scorable), 1))
        if workers <= 1:
            scores = [score_one(asset) for asset in scorable]
        else:
            with ThreadPoolExecutor(max_workers=workers) as pool:
                scores = list(pool.map(score_one, scorable))

        ledger = ReviewLedger(self.gate_config)
        for asset, score in zip(scorable, scores):
            if asset.status == "generated":  # score came from cache, not score_asset
                asset.transition("scored")
            ledger.add(PlausibilityRecord(
                asset_id=asset.asset_id,
                keyword_text=asset.keyword,
                score=score,
                verdict=classify(score, self.gate_config),
            ))
        runtime.ledger = ledger
        for asset_id in sorted(runtime.assets):
            action = cache.get(f"verdict:{asset_id}")
            if action:
                self._apply_verdict_internal(runtime, asset_id, action, persist=False)

    def _apply_completion(self, runtime, cache) -> None:
        runtime.ledger.complete()
        for record in runtime.ledger.all_records():
            asset = runtime.assets.get(record.asset_id)
            if asset and asset.status == "scored" and record.verdict in ("kept", "removed"):
                asset.transition(record.verdict)

    def _step_assemble(self, run, runtime, cache) -> None:
        ledger = runtime.ledger
        surviving = ledger.surviving_asset_ids()
        if not surviving:
            raise EmptyBook("every model was removed in review")
        keywords: list[tuple[str, str]] = []
        asset_by_keyword: dict[str, str] = {}
        for asset_id in sorted(surviving):
            asset = runtime.assets[asset_id]
            keywords.append((asset.keyword, asset.prompt.kind))
            asset_by_keyword[asset.keyword] = asset_id
        scan = locate_occurrences(runtime.doc, keywords)
        occurrences = list(scan.occurrences)
        kinds = dict(keywords)
        for missing in scan.misses:
            occurrences.append(KeywordOccurrence(
                keyword=missing, kind=kinds[missing], global_position=0, synthetic=True))
        occurrences.sort(key=lambda o: (o.global_position, o.keyword))
        pages = assembler.divide_pages(occurrences, runtime.doc.word_count)

        tracks = []
        popups = []
        for page in pages:
            text = runtime.doc.page_text(*page.text_span)
            key = f"tts:{page.page_index}:{sha256_hex(text.encode('utf-8'))[:16]}"
            ref = cache.get(key)
            if ref and self.data.blobs.exists(ref):
                audio = self.data.blobs.get(ref)
            else:
                audio = self.providers.tts.synthesize(text, run.language)
                ref = self.data.blobs.put(audio, "wav")
                cache.put(key, ref)
            track = track_from_audio(page, audio, ref)
            tracks.append(track)
            popups.extend(assembler.compute_popup_schedule(page, track, asset_by_keyword))

        kept_assets = [(asset_id, f"assets/{runtime.assets[asset_id].mesh_ref}")
                       for asset_id in sorted(surviving)]
        manifest = assembler.assemble_manifest(
            run.content_id, run.title, pages, popups, tracks, kept_assets,
            removed_ids=ledger.removed_asset_ids())
        bundle_dir = self.data.bundle_dir(run.book_id)
        assembler.write_bundle(manifest, self.data.blobs, bundle_dir)
        run.bundle_sha256 = assembler.zip_bundle(bundle_dir, self.data.bundle_zip(run.book_id))
        assembler.validate_bundle(bundle_dir)

    # -- review API ------------------------------------------------------------------

    def get_review_items(self, book_id: str) -> list[dict]:
        run = self._run(book_id)
        if run.state not in ("awaiting_review", "assembling", "ready"):
            raise WrongState(f"book is {run.state}", state=run.state)
        runtime = self._runtime(book_id, rebuild=True)
        items = []
        for record in sorted(runtime.ledger.all_records(), key=lambda r: r.asset_id):
            if record.verdict == "auto_plausible":
                continue  # auto-plausible assets are never shown for review
            items.append({
                "asset_id": record.asset_id,
                "keyword": record.keyword_text,
                "score": record.score,
                "verdict": record.verdict,
                "frontal_url": f"/v1/books/{book_id}/assets/{record.asset_id}/frontal",
            })
        return items

    def post_verdict(self, book_id: str, asset_id: str, action: str) -> dict:
        run = self._run(book_id)
        if run.state != "awaiting_review":
            raise WrongState(f"book is {run.state}, verdicts need awaiting_review", state=run.state)
        runtime = self._runtime(book_id, rebuild=True)
        with runtime.lock:
            record = self._apply_verdict_internal(runtime, asset_id, action, persist=True)
        return {"asset_id": asset_id, "verdict": record.verdict}

    def _apply_verdict_internal(self, runtime, asset_id: str, action: str,
                                persist: bool) -> PlausibilityRecord:
        record = runtime.ledger.apply_verdict(asset_id, action)
        asset = runtime.assets.get(asset_id)
        if asset and asset.status == "scored":
            asset.transition(record.verdict)
        if persist:
            # re-persisting the same verdict is harmless: apply is idempotent
            self.data.step_cache(runtime.book_id).put(f"verdict:{asset_id}", action)
        return record

    def post_review_complete(self, book_id: str) -> dict:
        run = self._run(book_id)
        if run.state != "awaiting_review":
            raise WrongState(f"book is {run.state}, complete needs awaiting_review", state=run.state)
        cache = self.data.step_cache(book_id)
        cache.put("review_complete", True)
        self._dispatch(book_id)
        return self.get_status(book_id)

    # -- queries ------------------------------------------------------------------------

    def get_status(self, book_id: str) -> dict:
        return self._view(self._run(book_id))

    def list_books(self) -> list[dict]:
        runs = sorted(self._runs.values(), key=lambda r: (r.created_at, r.seq), reverse=True)
        return [self._view(run) for run in runs]

    def frontal_image(self, book_id: str, asset_id: str) -> bytes:
        runtime = self._runtime(book_id, rebuild=True)
        asset = runtime.assets.get(asset_id)
        if asset is None or asset.frontal_view_ref is None:
            raise NotFound(f"no frontal view for {asset_id}")
        return self.data.blobs.get(asset.frontal_view_ref)

    def bundle_file(self, book_id: str) -> tuple[Path, str]:
        run = self._run(book_id)
        if run.state != "ready":
            raise WrongState(f"book is {run.state}, bundle needs ready", state=run.state)
        path = self.data.bundle_zip(book_id)
        if not path.is_file() or run.bundle_sha256 is None:
            raise NotFound("bundle missing on disk")
        return path, run.bundle_sha256

    def _view(self, run: PipelineRun) -> dict:
        view = run.to_dict()
        eta, provisional = self._eta_for(run)
        view["eta_seconds"] = eta
        view["eta_provisional"] = provisional
        return view

    def _eta_for(self, run: PipelineRun) -> tuple[int | None, bool]:
        if run.state in TERMINAL_STATES:
            return None, False
        if run.model_count:
            return estimate_generation_seconds(run.model_count, self.eta_model), False
        return estimate_provisional_seconds(max(run.word_count, 1), self.provisional_eta), True

    # -- internals ------------------------------------------------------------------------

    def _run(self, book_id: str) -> PipelineRun:
        run = self._runs.get(book_id)
        if run is None:
            raise NotFound(f"unknown book {book_id}")
        return run

    def _runtime(self, book_id: str, rebuild: bool = False) -> BookRuntime:
        with self._lock:
            runtime = self._runtimes.get(book_id)
            if runtime is None:
                body_path = self._body_path(book_id)
                if not body_path.is_file():
                    raise NotFound(f"no stored body for {book_id}")
                runtime = BookRuntime(book_id, body_path.read_text(encoding="utf-8"))
                self._runtimes[book_id] = runtime
        if rebuild and runtime.ledger is None:
            self.run_pipeline(book_id)
        return runtime

    def _body_path(self, book_id: str) -> Path:
        return self.data.book_dir(book_id) / "body.txt"

    def _advance(self, run: PipelineRun, new_state: str, allow_skip: bool = False) -> bool:
        current = STATE_ORDER.index(run.state)
        target = STATE_ORDER.index(new_state)
        if target <= current:
            return False  # replay of an already-persisted transition
        if target == current + 1 or (allow_skip and new_state == "assembling"
                                     and run.state == "scoring"):
            run.state = new_state
            run.step_timestamps[new_state] = time.time()
            self._persist(run)
            return True
        raise IllegalTransition(f"{run.state} -> {new_state}")

    def _fail(self, run: PipelineRun, diagnostic: str) -> None:
        if run.state in TERMINAL_STATES:
            return
        run.state = "failed"
        run.error = diagnostic
        self._persist(run)

    def _persist(self, run: PipelineRun) -> None:
        self.data.runs.append(run.to_dict())


# --- HTTP API ----------------------------------------------------------------------------

class CreateBookRequest(BaseModel):
    title: str
    body: str = ""
    language: str = "und"
    image_b64: str | None = None


class VerdictRequest(BaseModel):
    verdict: str


def create_app(service: PipelineService, ui_dir: str | Path | None = None):
    from fastapi.middleware.cors import CORSMiddleware

    app = FastAPI(title="bookforge", version="1")
    app.state.service = service
    # the review console may be served from another origin during development
    app.add_middleware(CORSMiddleware, allow_origins=["*"],
                       allow_methods=["GET", "POST"], allow_headers=["*"])

    @app.exception_handler(BookForgeError)
    async def handle_domain_error(request: Request, exc: BookForgeError):
        status = 500
        if isinstance(exc, NotFound):
            status = 404
        elif isinstance(exc, WrongState):
            status = 409
        elif isinstance(exc, (EmptyStory, EmptyBook)):
            status = 422
        return JSONResponse(status_code=status,
                            content={"error": type(exc).__name__, "detail": str(exc)})

    @app.post("/v1/books", status_code=201)
    def create_book(request: CreateBookRequest):
        run = service.create_book(request.title, request.body, request.language,
                                  image_b64=request.image_b64)
        return service.get_status(run.book_id)

    @app.get("/v1/books")
    def list_books():
        return service.list_books()

    @app.get("/v1/books/{book_id}")
    def get_book(book_id: str):
        return service.get_status(book_id)

    @app.get("/v1/books/{book_id}/review")
    def review_items(book_id: str):
        return service.get_review_items(book_id)

    @app.post("/v1/books/{book_id}/review/{asset_id}/verdict")
    def post_verdict(book_id: str, asset_id: str, request: VerdictRequest):
        if request.verdict not in ("keep", "remove"):
            return JSONResponse(status_code=422, content={
                "error": "InvalidVerdict", "detail": "verdict must be keep or remove"})
        return service.post_verdict(book_id, asset_id, request.verdict)

    @app.post("/v1/books/{book_id}/review/complete")
    def review_complete(book_id: str):
        return service.post_review_complete(book_id)

    @app.get("/v1/books/{book_id}/assets/{asset_id}/frontal")
    def frontal(book_id: str, asset_id: str):
        service._run(book_id)  # 404 for unknown books
        return Response(content=service.frontal_image(book_id, asset_id), media_type="image/png")

    @app.get("/v1/books/{book_id}/bundle")
    def bundle(book_id: str):
        path, digest = service.bundle_file(book_id)
        return FileResponse(path, media_type="application/zip",
                            filename=f"{book_id}.zip",
                            headers={"X-Content-SHA256": digest, "ETag": f'"{digest}"'})

    if ui_dir is not None:
        from fastapi.staticfiles import StaticFiles

        app.mount("/ui", StaticFiles(directory=ui_dir, html=True), name="ui")

    return app
