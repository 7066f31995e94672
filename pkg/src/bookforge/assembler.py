"""Page division, narration-synchronized pop-up timing, and manifest assembly."""

from __future__ import annotations

import io
import json
import math
import wave
import zipfile
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Mapping, Sequence

from .errors import (
    DanglingReference,
    EmptyBook,
    RemovedAssetReferenced,
    TtsUnavailable,
    ZeroDurationAudio,
)
from .ingest import KeywordOccurrence, StoryDocument
from .providers import SpeechSynthesizer
from .store import BlobStore, sha256_hex

FORMAT_VERSION = "1"

MIN_MODELS_PER_PAGE = 4
MAX_MODELS_PER_PAGE = 6


@dataclass(slots=True)
class PageLayout:
    """One page: its text span and the keyword occurrences it carries."""

    page_index: int  # 1-based
    text_span: tuple[int, int]  # [start_word, end_word) global word indices
    occurrences: list[KeywordOccurrence]

    @property
    def word_count(self) -> int:
        return self.text_span[1] - self.text_span[0]

    @property
    def first_keyword_position(self) -> int:
        return self.occurrences[0].global_position

    @property
    def last_keyword_position(self) -> int:
        return self.occurrences[-1].global_position


@dataclass(frozen=True, slots=True)
class PopupEvent:
    """When one model appears during its page's narration."""

    keyword: str
    asset_id: str
    page_index: int
    page_relative_position: int
    popup_seconds: int


@dataclass(slots=True)
class NarrationTrack:
    """Synthesized narration for one page plus its measured speech rate."""

    page_index: int
    audio_ref: str  # bundle-relative path (audio/page_<n>.wav)
    duration_seconds: float
    speech_rate: Fraction  # words per 5 seconds, exact
    source_ref: str = ""  # blob-store ref backing audio_ref; not serialized


@dataclass(slots=True)
class BookManifest:
    book_id: str
    title: str
    pages: list[PageLayout]
    popups: list[PopupEvent]
    narration: list[NarrationTrack]
    assets: list[tuple[str, str]]  # (asset_id, bundle-relative mesh path)
    format_version: str = FORMAT_VERSION


# --- page division ---------------------------------------------------------------

def divide_pages(occurrences: Sequence[KeywordOccurrence], total_words: int) -> list[PageLayout]:
    """Partition the story into pages of (normally) 4-6 models each.

    Preliminary chunks hold 4 occurrences; a page's text ends right after the
    word of its last occurrence and the final page runs to the end of the text.
    Then, scanning page pairs left to right, while page i's word count exceeds
    page i+1's by more than the spread between page i's first and last model
    positions, the first model of page i+1 moves onto page i (re-chunking the
    remainder), until the condition fails or page i holds 6 models.

    Occurrences sharing a word position move as one group so every occurrence
    stays inside its page's span.
    """
    if not occurrences:
        raise EmptyBook("no occurrences to paginate")
    occs = sorted(occurrences, key=lambda o: o.global_position)
    if occs[0].global_position < 0 or occs[-1].global_position >= total_words:
        raise ValueError("occurrence positions must lie in [0, total_words)")

    pages = _chunk(occs)
    i = 0
    while i + 1 < len(pages):
        while i + 1 < len(pages):
            spans = _spans(pages, total_words)
            width_i = spans[i][1] - spans[i][0]
            width_next = spans[i + 1][1] - spans[i + 1][0]
            spread = pages[i][-1].global_position - pages[i][0].global_position
            if len(pages[i]) >= MAX_MODELS_PER_PAGE:
                break
            if width_i - width_next <= spread:
                break
            head_position = pages[i + 1][0].global_position
            group = [o for o in pages[i + 1] if o.global_position == head_position]
            if len(pages[i]) + len(group) > MAX_MODELS_PER_PAGE:
                break  # the tie group cannot fit under the cap
            tail = [occ for page in pages[i + 1:] for occ in page][len(group):]
            pages = pages[: i] + [pages[i] + group] + _chunk(tail)
        i += 1

    layouts: list[PageLayout] = []
    for index, (page, span) in enumerate(zip(pages, _spans(pages, total_words)), start=1):
        for occ in page:
            occ.page_relative_position = occ.global_position - span[0]
        layouts.append(PageLayout(page_index=index, text_span=span, occurrences=page))
    return layouts


def _chunk(occs: list[KeywordOccurrence]) -> list[list[KeywordOccurrence]]:
    """Chunks of 4, extended so equal-position groups never straddle a boundary."""
    pages: list[list[KeywordOccurrence]] = []
    start = 0
    while start < len(occs):
        end = min(start + MIN_MODELS_PER_PAGE, len(occs))
        while end < len(occs) and occs[end].global_position == occs[end - 1].global_position:
            end += 1
        pages.append(occs[start:end])
        start = end
    return pages


def _spans(pages: list[list[KeywordOccurrence]], total_words: int) -> list[tuple[int, int]]:
    spans: list[tuple[int, int]] = []
    start = 0
    for k, page in enumerate(pages):
        end = total_words if k == len(pages) - 1 else page[-1].global_position + 1
        spans.append((start, end))
        start = end
    return spans


# --- narration and pop-up timing ---------------------------------------------------

def synthesize_narration(page: PageLayout, doc: StoryDocument, tts: SpeechSynthesizer,
                         blobs: BlobStore) -> NarrationTrack:
    """Synthesize the page's text and derive the speech rate from the audio."""
    start, end = page.text_span
    text = doc.page_text(start, end)
    audio = tts.synthesize(text, doc.language)
    ref = blobs.put(audio, "wav")
    return track_from_audio(page, audio, ref)


def track_from_audio(page: PageLayout, audio: bytes, source_ref: str) -> NarrationTrack:
    """Measure duration from the WAV container and derive the exact speech rate."""
    frames, rate = _wav_length(audio)
    if frames == 0:
        raise ZeroDurationAudio(f"page {page.page_index} narration has no frames")
    duration = Fraction(frames, rate)
    speech_rate = Fraction(page.word_count * 5) / duration  # words per 5 seconds
    return NarrationTrack(
        page_index=page.page_index,
        audio_ref=f"audio/page_{page.page_index}.wav",
        duration_seconds=float(duration),
        speech_rate=speech_rate,
        source_ref=source_ref,
    )


def _wav_length(audio: bytes) -> tuple[int, int]:
    try:
        with wave.open(io.BytesIO(audio), "rb") as wav:
            return wav.getnframes(), wav.getframerate()
    except (wave.Error, EOFError) as exc:
        raise TtsUnavailable(f"provider returned non-WAV audio: {exc}") from exc


def popup_seconds(words_before: int, speech_rate: Fraction | float | int) -> int:
    """Seconds into the page narration at which a model appears: ceil(N*5/r).

    Computed in exact rational arithmetic so the ceiling never wobbles on
    floating-point representation.
    """
    if words_before < 0:
        raise ValueError("words_before must be >= 0")
    rate = Fraction(speech_rate)
    if rate <= 0:
        raise ValueError("speech rate must be positive")
    return math.ceil(Fraction(words_before * 5) / rate)


def compute_popup_schedule(page: PageLayout, track: NarrationTrack,
                           asset_ids: Mapping[str, str]) -> list[PopupEvent]:
    """One pop-up per occurrence, ordered by time with text order breaking ties."""
    events = []
    for occ in sorted(page.occurrences, key=lambda o: (o.global_position, o.keyword)):
        relative = occ.page_relative_position
        if relative is None:
            relative = occ.global_position - page.text_span[0]
        events.append(PopupEvent(
            keyword=occ.keyword,
            asset_id=asset_ids[occ.keyword],
            page_index=page.page_index,
            page_relative_position=relative,
            popup_seconds=popup_seconds(relative, track.speech_rate),
        ))
    events.sort(key=lambda e: (e.popup_seconds, e.page_relative_position, e.keyword))
    return events


# --- manifest -----------------------------------------------------------------------

def assemble_manifest(book_id: str, title: str, pages: list[PageLayout],
                      popups: list[PopupEvent], narration: list[NarrationTrack],
                      kept_assets: list[tuple[str, str]],
                      removed_ids: frozenset[str] | set[str] = frozenset()) -> BookManifest:
    """Validate all cross-references and produce the canonical manifest."""
    kept_ids = {asset_id for asset_id, _ in kept_assets}
    page_indices = {page.page_index for page in pages}
    seen_assets: set[str] = set()
    for popup in popups:
        if popup.asset_id in removed_ids:
            raise RemovedAssetReferenced(f"popup {popup.keyword!r} references removed asset {popup.asset_id}")
        if popup.asset_id not in kept_ids:
            raise DanglingReference(f"popup {popup.keyword!r} references unknown asset {popup.asset_id}")
        if popup.page_index not in page_indices:
            raise DanglingReference(f"popup {popup.keyword!r} references missing page {popup.page_index}")
        if popup.asset_id in seen_assets:
            raise DanglingReference(f"asset {popup.asset_id} appears in more than one popup")
        seen_assets.add(popup.asset_id)
    for track in narration:
        if track.page_index not in page_indices:
            raise DanglingReference(f"narration for missing page {track.page_index}")
    return BookManifest(
        book_id=book_id,
        title=title,
        pages=sorted(pages, key=lambda p: p.page_index),
        popups=sorted(popups, key=lambda e: (e.page_index, e.popup_seconds,
                                             e.page_relative_position, e.keyword)),
        narration=sorted(narration, key=lambda t: t.page_index),
        assets=sorted(kept_assets),
    )


def manifest_to_dict(manifest: BookManifest) -> dict:
    return {
        "format_version": manifest.format_version,
        "book_id": manifest.book_id,
        "title": manifest.title,
        "pages": [
            {
                "page_index": page.page_index,
                "text_span": list(page.text_span),
                "word_count": page.word_count,
                "first_keyword_position": page.first_keyword_position,
                "last_keyword_position": page.last_keyword_position,
                "occurrences": [
                    {
                        "keyword": occ.keyword,
                        "kind": occ.kind,
                        "global_position": occ.global_position,
                        "page_relative_position": occ.page_relative_position,
                        "synthetic": occ.synthetic,
                    }
                    for occ in page.occurrences
                ],
            }
            for page in manifest.pages
        ],
        "popups": [
            {
                "keyword": e.keyword,
                "asset_id": e.asset_id,
                "page_index": e.page_index,
                "page_relative_position": e.page_relative_position,
                "popup_seconds": e.popup_seconds,
            }
            for e in manifest.popups
        ],
        "narration": [
            {
                "page_index": t.page_index,
                "audio_ref": t.audio_ref,
                "duration_seconds": t.duration_seconds,
                "speech_rate": float(t.speech_rate),
            }
            for t in manifest.narration
        ],
        "assets": [{"asset_id": a, "mesh_ref": m} for a, m in manifest.assets],
    }


def manifest_to_json(manifest: BookManifest) -> bytes:
    """Canonical serialization: sorted keys, UTF-8, LF; same manifest, same bytes."""
    text = json.dumps(manifest_to_dict(manifest), ensure_ascii=False, sort_keys=True,
                      separators=(",", ":"))
    return text.encode("utf-8") + b"\n"


def write_bundle(manifest: BookManifest, blobs: BlobStore, bundle_dir: str | Path) -> Path:
    """Materialize manifest.json plus the referenced meshes and narration audio."""
    root = Path(bundle_dir)
    (root / "assets").mkdir(parents=True, exist_ok=True)
    (root / "audio").mkdir(parents=True, exist_ok=True)
    (root / "manifest.json").write_bytes(manifest_to_json(manifest))
    for _asset_id, mesh_ref in manifest.assets:
        blob_name = Path(mesh_ref).name
        (root / mesh_ref).write_bytes(blobs.get(blob_name))
    for track in manifest.narration:
        source = track.source_ref or Path(track.audio_ref).name
        (root / track.audio_ref).write_bytes(blobs.get(source))
    return root


def zip_bundle(bundle_dir: str | Path, zip_path: str | Path) -> str:
    """Deterministic archive of the bundle; returns the zip's sha256 hex digest."""
    root = Path(bundle_dir)
    names = sorted(p.relative_to(root).as_posix() for p in root.rglob("*") if p.is_file())
    tmp = Path(zip_path).with_suffix(".tmp")
    with zipfile.ZipFile(tmp, "w", compression=zipfile.ZIP_STORED) as archive:
        for name in names:
            info = zipfile.ZipInfo(name, date_time=(1980, 1, 1, 0, 0, 0))
            info.external_attr = 0o644 << 16
            archive.writestr(info, (root / name).read_bytes())
    tmp.replace(zip_path)
    return sha256_hex(Path(zip_path).read_bytes())


def validate_bundle(bundle_dir: str | Path) -> dict:
    """Check the bundle is self-consistent; returns the parsed manifest."""
    root = Path(bundle_dir)
    manifest = json.loads((root / "manifest.json").read_text(encoding="utf-8"))
    if manifest.get("format_version") != FORMAT_VERSION:
        raise DanglingReference(f"unsupported format_version {manifest.get('format_version')!r}")
    for asset in manifest["assets"]:
        if not (root / asset["mesh_ref"]).is_file():
            raise DanglingReference(f"bundle missing {asset['mesh_ref']}")
    for track in manifest["narration"]:
        if not (root / track["audio_ref"]).is_file():
            raise DanglingReference(f"bundle missing {track['audio_ref']}")
    asset_ids = {asset["asset_id"] for asset in manifest["assets"]}
    for popup in manifest["popups"]:
        if popup["asset_id"] not in asset_ids:
            raise DanglingReference(f"popup references unknown asset {popup['asset_id']}")
    return manifest
