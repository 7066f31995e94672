"""Similarity-score gate: auto-classify assets, queue the rest for human review."""

from __future__ import annotations

import csv
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

from .errors import ScorerUnavailable, UnknownAsset, UnreadableImage, VerdictConflict
from .forge import AssetRecord
from .providers import SimilarityScorer
from .store import BlobStore


@dataclass(slots=True)
class GateConfig:
    threshold: float = 0.7  # scores strictly below are suspicious
    review_timeout_seconds: float = 86_400.0
    default_verdict_on_complete: str = "removed"

    def __post_init__(self):
        if not 0.0 < self.threshold < 1.0:
            raise ValueError("threshold must lie strictly between 0 and 1")
        if self.default_verdict_on_complete not in ("kept", "removed"):
            raise ValueError("default verdict must be kept or removed")


@dataclass(slots=True)
class PlausibilityRecord:
    """Score and review lineage for one generated asset."""

    asset_id: str
    keyword_text: str
    score: float
    verdict: str  # auto_plausible | suspicious | kept | removed
    decided_by: str = "system"
    decided_at: float = field(default_factory=time.time)


def classify(score: float, config: GateConfig) -> str:
    """suspicious iff score < threshold; the boundary itself is plausible."""
    if not 0.0 <= score <= 1.0:
        raise ValueError(f"score {score} outside [0, 1]")
    return "suspicious" if score < config.threshold else "auto_plausible"


def score_asset(asset: AssetRecord, scorer: SimilarityScorer, blobs: BlobStore,
                config: GateConfig) -> PlausibilityRecord:
    """Score one generated asset's frontal view against its keyword."""
    if asset.status != "generated":
        raise ValueError(f"asset {asset.asset_id} is {asset.status}, expected generated")
    try:
        image = blobs.get(asset.frontal_view_ref)
    except OSError as exc:
        raise UnreadableImage(f"{asset.frontal_view_ref}: {exc}") from exc
    score = float(scorer.score(image, asset.keyword))
    if not 0.0 <= score <= 1.0:
        raise ScorerUnavailable(f"scorer returned {score}, outside the [0, 1] contract")
    record = PlausibilityRecord(
        asset_id=asset.asset_id,
        keyword_text=asset.keyword,
        score=score,
        verdict=classify(score, config),
    )
    asset.transition("scored")
    return record


def score_assets(assets: list[AssetRecord], scorer: SimilarityScorer, blobs: BlobStore,
                 config: GateConfig, parallelism: int = 4) -> list[PlausibilityRecord]:
    """Score a batch concurrently; one record per asset, input order preserved."""
    generated = [a for a in assets if a.status == "generated"]
    if not generated:
        return []
    if parallelism <= 1 or len(generated) == 1:
        return [score_asset(a, scorer, blobs, config) for a in generated]
    with ThreadPoolExecutor(max_workers=min(parallelism, len(generated))) as pool:
        return list(pool.map(lambda a: score_asset(a, scorer, blobs, config), generated))


_VERDICT_BY_ACTION = {"keep": "kept", "remove": "removed"}


class ReviewLedger:
    """Per-book verdict state: suspicious records await a human keep/remove."""

    def __init__(self, config: GateConfig | None = None):
        self.config = config or GateConfig()
        self._records: dict[str, PlausibilityRecord] = {}
        self._completed = False

    def add(self, record: PlausibilityRecord) -> None:
        self._records[record.asset_id] = record

    def record(self, asset_id: str) -> PlausibilityRecord:
        try:
            return self._records[asset_id]
        except KeyError:
            raise UnknownAsset(asset_id) from None

    def all_records(self) -> list[PlausibilityRecord]:
        return list(self._records.values())

    def queue(self) -> list[PlausibilityRecord]:
        """Suspicious records still awaiting a verdict; auto-plausible never appear."""
        return [r for r in self._records.values() if r.verdict == "suspicious"]

    def apply_verdict(self, asset_id: str, action: str, actor: str = "human") -> PlausibilityRecord:
        """Finalize keep/remove for one suspicious asset; idempotent per verdict."""
        if action not in _VERDICT_BY_ACTION:
            raise ValueError(f"action must be keep or remove, got {action!r}")
        record = self.record(asset_id)
        target = _VERDICT_BY_ACTION[action]
        if record.verdict == target:
            return record  # same verdict re-applied: no-op success
        if record.verdict != "suspicious":
            raise VerdictConflict(
                f"asset {asset_id} already finalized as {record.verdict}")
        record.verdict = target
        record.decided_by = actor
        record.decided_at = time.time()
        return record

    def complete(self) -> dict[str, int]:
        """Default every undecided suspicious record and close the review."""
        for record in self.queue():
            record.verdict = self.config.default_verdict_on_complete
            record.decided_by = "system"
            record.decided_at = time.time()
        self._completed = True
        return self.summary()

    @property
    def completed(self) -> bool:
        return self._completed

    def summary(self) -> dict[str, int]:
        counts = {"auto_plausible": 0, "suspicious": 0, "kept": 0, "removed": 0}
        for record in self._records.values():
            counts[record.verdict] += 1
        return counts

    def surviving_asset_ids(self) -> set[str]:
        return {r.asset_id for r in self._records.values()
                if r.verdict in ("auto_plausible", "kept")}

    def removed_asset_ids(self) -> set[str]:
        return {r.asset_id for r in self._records.values() if r.verdict == "removed"}


# --- threshold evaluation -------------------------------------------------------

@dataclass(frozen=True, slots=True)
class LabeledPair:
    keyword: str
    score: float
    human_label: str  # "plausible" | "implausible"

    def __post_init__(self):
        if not 0.0 <= self.score <= 1.0:
            raise ValueError(f"score {self.score} outside [0, 1]")
        if self.human_label not in ("plausible", "implausible"):
            raise ValueError(f"label must be plausible/implausible, got {self.human_label!r}")


@dataclass(frozen=True, slots=True)
class ThresholdRow:
    threshold: float
    proportion: float | None  # None when no pair scores above the threshold
    count: int


def evaluate_thresholds(pairs: list[LabeledPair], thresholds: list[float]) -> list[ThresholdRow]:
    """For each cutoff c, the share of plausible labels among pairs scoring > c."""
    if not pairs:
        raise ValueError("pairs must be non-empty")
    rows = []
    for c in thresholds:
        selected = [p for p in pairs if p.score > c]
        if not selected:
            rows.append(ThresholdRow(threshold=c, proportion=None, count=0))
            continue
        plausible = sum(1 for p in selected if p.human_label == "plausible")
        rows.append(ThresholdRow(threshold=c, proportion=plausible / len(selected),
                                 count=len(selected)))
    return rows


def read_pairs_csv(path: str | Path) -> list[LabeledPair]:
    """Load `keyword,score,label` rows; a header line is tolerated."""
    pairs: list[LabeledPair] = []
    with open(path, newline="", encoding="utf-8") as fh:
        for row in csv.reader(fh):
            if not row or all(not cell.strip() for cell in row):
                continue
            if len(row) != 3:
                raise ValueError(f"expected 3 columns, got {len(row)}: {row!r}")
            keyword, score_text, label = (cell.strip() for cell in row)
            try:
                score = float(score_text)
            except ValueError:
                if not pairs and score_text.lower() in ("score", ""):
                    continue  # header
                raise
            pairs.append(LabeledPair(keyword=keyword, score=score, human_label=label.lower()))
    return pairs
