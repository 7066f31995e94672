from __future__ import annotations

import csv
from pathlib import Path

import pytest

from bookforge.gate import LabeledPair
from bookforge.providers import ProviderSet
from bookforge.providers.mock import (
    MockLanguageModel,
    MockMeshGenerator,
    MockSimilarityScorer,
    MockSpeechSynthesizer,
)

GOLDILOCKS_TITLE = "Goldilocks and the Three Bears"

GOLDILOCKS_BODY = (
    "Once upon a time, Goldilocks skipped along the garden path that wound through "
    "the woods until she reached a tidy little cottage. Nobody answered her knock, "
    "so she pushed the door and stepped inside. On the table waited three bowls of "
    "porridge. The first was too hot, the second too cold, but the third was just "
    "right, and she ate it all up. Feeling heavy, she tried a great big chair, then "
    "a middling chair, then a tiny chair that cracked beneath her. Upstairs she "
    "found a soft bed and fell fast asleep. Soon Papa Bear, Mama Bear, and Baby "
    "Bear tramped home. Papa Bear growled that someone had tasted his porridge. "
    "Mama Bear gasped at her broken chair. Baby Bear squeaked that someone was "
    "still in his bed, and Goldilocks woke, leapt from the window, and ran away "
    "down the garden path."
)

GOLDILOCKS_SCRIPT = {
    "extract": {
        "characters": ["Goldilocks", "Papa Bear", "Mama Bear", "Baby Bear"],
        "objects": ["porridge", "chair", "bed", "cottage", "garden path"],
    },
    "context": {
        "era": "a timeless fairy-tale past",
        "place": "a wood in old Europe",
        "cultural_notes": "Rustic cottage furnishings, carved wood, homespun cloth.",
    },
    "characters": {
        "Goldilocks": {
            "gender": "female",
            "nationality": "unspecified",
            "age": "a young girl",
            "appearance_features": "golden curly hair",
            "clothing": "a simple pinafore dress",
            "era_of_life": "a timeless fairy-tale past",
        }
    },
    "objects": {
        "porridge": {
            "explanation": "A warm oat breakfast the bears cooked before their walk.",
            "context_description": "A steaming bowl of oat porridge in a rustic wooden bowl.",
        },
        "garden path": {
            "explanation": "The walkway of flat stones leading through the bears' garden.",
            "context_description": "A winding cottage-garden path of worn flagstones edged with flowers.",
        },
    },
}

# garden path scores below the gate threshold; everything else passes.
GOLDILOCKS_SCORES = {
    "Goldilocks": 0.92,
    "Papa Bear": 0.88,
    "Mama Bear": 0.85,
    "Baby Bear": 0.8,
    "porridge": 0.75,
    "chair": 0.9,
    "bed": 0.83,
    "cottage": 0.78,
    "garden path": 0.42,
}

ALL_PLAUSIBLE_SCORES = {k: max(v, 0.7) for k, v in GOLDILOCKS_SCORES.items()}


def mock_provider_set(scores: dict | None = None, script: dict | None = None,
                      polls_until_done: int = 0, words_per_second: float = 2.5) -> ProviderSet:
    return ProviderSet(
        llm=MockLanguageModel(script=script if script is not None else GOLDILOCKS_SCRIPT),
        mesh=MockMeshGenerator(polls_until_done=polls_until_done),
        scorer=MockSimilarityScorer(scores=scores if scores is not None else GOLDILOCKS_SCORES),
        tts=MockSpeechSynthesizer(words_per_second=words_per_second),
    )


@pytest.fixture
def providers() -> ProviderSet:
    return mock_provider_set()


def labeled_fixture_pairs() -> list[LabeledPair]:
    """183 labeled pairs constructed to read 100/100/100/96 at c=0.9/0.8/0.7/0.6.

    Bands: 25 plausible above 0.9; 35 in (0.8, 0.9]; 40 in (0.7, 0.8];
    44 plausible + 6 implausible in (0.6, 0.7]; 33 mixed at or below 0.6.
    """
    pairs: list[LabeledPair] = []

    def add(count: int, start: float, step: float, label: str, tag: str):
        for i in range(count):
            pairs.append(LabeledPair(keyword=f"{tag}{i:03d}",
                                     score=round(start + i * step, 6),
                                     human_label=label))

    add(25, 0.905, 0.003, "plausible", "hi")
    add(35, 0.805, 0.002, "plausible", "mid")
    add(40, 0.705, 0.002, "plausible", "ok")
    add(44, 0.605, 0.0018, "plausible", "low")
    add(6, 0.610, 0.010, "implausible", "bad")
    add(15, 0.200, 0.020, "plausible", "floorp")
    add(18, 0.050, 0.030, "implausible", "floori")
    assert len(pairs) == 183
    return pairs


def write_pairs_csv(path: Path, pairs: list[LabeledPair]) -> Path:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["keyword", "score", "label"])
        for pair in pairs:
            writer.writerow([pair.keyword, pair.score, pair.human_label])
    return path


def write_providers_toml(directory: Path, scores: dict | None = None,
                         script: dict | None = None, threshold: float | None = None) -> Path:
    """Materialize a mock-provider TOML config (plus scripted LLM replies)."""
    import json

    directory.mkdir(parents=True, exist_ok=True)
    lines = ["[llm]", 'kind = "mock"']
    if script is not None:
        script_path = directory / "llm_script.json"
        script_path.write_text(json.dumps(script), encoding="utf-8")
        lines.append(f'script = "{script_path}"')
    lines += ["", "[mesh]", 'kind = "mock"', "", "[scorer]", 'kind = "mock"']
    if scores:
        lines.append("[scorer.scores]")
        for keyword, value in scores.items():
            lines.append(f'"{keyword}" = {value}')
    lines += ["", "[tts]", 'kind = "mock"']
    if threshold is not None:
        lines += ["", "[gate]", f"threshold = {threshold}"]
    config_path = directory / "providers.toml"
    config_path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return config_path
