from __future__ import annotations

import itertools
import threading

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from bookforge.errors import IllegalTransition, IncompleteProfile
from bookforge.forge import (
    AssetRecord,
    EtaModel,
    ForgeConfig,
    GenerationPrompt,
    asset_id_for,
    build_generation_prompt,
    estimate_generation_seconds,
    estimate_provisional_seconds,
    fit_eta_model,
    generate_assets,
    load_default_eta,
)
from bookforge.narrative import CharacterProfile, HistoricalContext, ObjectProfile
from bookforge.providers.mock import MockMeshGenerator
from bookforge.store import BlobStore

CONTEXT = HistoricalContext(
    era="18th-century France",
    place="the Palace of Versailles",
    cultural_notes="Rococo court style.",
)


def fast_config(**overrides) -> ForgeConfig:
    defaults = dict(parallelism=2, timeout_seconds=2.0, poll_interval=0.001)
    defaults.update(overrides)
    return ForgeConfig(**defaults)


# --- prompts -------------------------------------------------------------------

def test_object_prompt_contains_all_three_parts_in_order():
    profile = ObjectProfile(
        name="carriage",
        explanation="A horse-drawn vehicle used by royalty.",
        context_description="Gilded rococo carriage with painted panels.",
    )
    prompt = build_generation_prompt(profile, CONTEXT)
    assert prompt.kind == "object"
    assert prompt.source_parts == ("output#1", "output#2", "output#4")
    name_at = prompt.prompt_text.index("carriage")
    era_at = prompt.prompt_text.index("18th-century France")
    desc_at = prompt.prompt_text.index("Gilded rococo carriage")
    assert name_at < era_at < desc_at  # era before description


def test_character_prompt_has_name_and_description_only():
    profile = CharacterProfile(
        name="King of Qin",
        gender="male",
        clothing="red, luxurious garments",
    )
    prompt = build_generation_prompt(profile, CONTEXT)
    assert prompt.source_parts == ("output#1", "output#3")
    assert prompt.prompt_text.startswith("King of Qin")
    assert "red, luxurious garments" in prompt.prompt_text
    assert CONTEXT.era not in prompt.prompt_text  # no historical-context part


def test_empty_description_raises_incomplete_profile():
    with pytest.raises(IncompleteProfile):
        build_generation_prompt(ObjectProfile(name="x", explanation="", context_description="y"), CONTEXT)
    with pytest.raises(IncompleteProfile):
        build_generation_prompt(CharacterProfile(name="Nobody"), CONTEXT)


def test_asset_id_stable_and_prompt_sensitive():
    profile = ObjectProfile(name="jade", explanation="a disc", context_description="green")
    prompt = build_generation_prompt(profile, CONTEXT)
    assert asset_id_for(prompt) == asset_id_for(prompt)
    other = build_generation_prompt(
        ObjectProfile(name="jade", explanation="a disc", context_description="white"), CONTEXT)
    assert asset_id_for(prompt) != asset_id_for(other)


# --- asset status machine --------------------------------------------------------

LEGAL_PATHS = {
    ("generating",),
    ("generating", "generated"),
    ("generating", "generated", "scored"),
    ("generating", "generated", "scored", "kept"),
    ("generating", "generated", "scored", "removed"),
    ("failed",),
    ("generating", "failed"),
}


def _fresh_record() -> AssetRecord:
    prompt = GenerationPrompt(keyword="k", kind="object", prompt_text="p", source_parts=("output#1",))
    record = AssetRecord(asset_id="a_1", keyword="k", prompt=prompt)
    record.mesh_ref = "m.glb"  # so "generated" is reachable in the enumeration
    record.frontal_view_ref = "f.png"
    return record


def test_exhaustive_small_traces_never_reach_illegal_states():
    statuses = ["generating", "generated", "scored", "kept", "removed", "failed"]
    for length in range(1, 5):
        for path in itertools.product(statuses, repeat=length):
            record = _fresh_record()
            applied: list[str] = []
            for status in path:
                try:
                    record.transition(status)
                    applied.append(status)
                except IllegalTransition:
                    break
            assert tuple(applied) in LEGAL_PATHS or applied == []


def test_failed_not_reachable_after_generated():
    record = _fresh_record()
    record.transition("generating")
    record.transition("generated")
    with pytest.raises(IllegalTransition):
        record.transition("failed")


def test_generated_requires_artifacts():
    prompt = GenerationPrompt(keyword="k", kind="object", prompt_text="p", source_parts=("output#1",))
    record = AssetRecord(asset_id="a_2", keyword="k", prompt=prompt)
    record.transition("generating")
    with pytest.raises(IllegalTransition):
        record.transition("generated")


# --- job lifecycle ----------------------------------------------------------------

def _prompts(n: int, marker: str = "") -> list[GenerationPrompt]:
    return [
        GenerationPrompt(keyword=f"kw{i}", kind="object",
                         prompt_text=f"prompt {i} {marker}", source_parts=("output#1",))
        for i in range(n)
    ]


def test_mock_generation_persists_artifacts(tmp_path):
    blobs = BlobStore(tmp_path / "blobs")
    records = generate_assets(_prompts(1), MockMeshGenerator(), blobs, fast_config())
    (record,) = records
    assert record.status == "generated"
    assert blobs.path(record.mesh_ref).is_file()
    assert blobs.path(record.frontal_view_ref).is_file()


def test_timeout_marks_asset_failed(tmp_path):
    blobs = BlobStore(tmp_path / "blobs")
    records = generate_assets(_prompts(1, marker="##hang##"), MockMeshGenerator(), blobs,
                              fast_config(timeout_seconds=0.05))
    assert records[0].status == "failed"
    assert "GenerationTimeout" in records[0].error


def test_provider_failure_marks_asset_failed(tmp_path):
    blobs = BlobStore(tmp_path / "blobs")
    records = generate_assets(_prompts(1, marker="##fail##"), MockMeshGenerator(), blobs, fast_config())
    assert records[0].status == "failed"


def test_parallelism_bound_respected(tmp_path):
    blobs = BlobStore(tmp_path / "blobs")
    provider = MockMeshGenerator(polls_until_done=3)
    records = generate_assets(_prompts(6), provider, blobs, fast_config(parallelism=2))
    assert all(r.status == "generated" for r in records)
    assert provider.max_in_flight <= 2
    assert provider.submits == 6


def test_content_addressing_identical_bytes_identical_ref(tmp_path):
    blobs = BlobStore(tmp_path / "blobs")
    data = b"same mesh bytes"
    assert blobs.put(data, "glb") == blobs.put(data, "glb")
    assert blobs.put(data, "glb") != blobs.put(b"other bytes", "glb")


def test_frontal_fallback_rendered_when_provider_omits_it(tmp_path):
    blobs = BlobStore(tmp_path / "blobs")
    provider = MockMeshGenerator(emit_frontal=False)
    (record,) = generate_assets(_prompts(1), provider, blobs, fast_config())
    assert record.status == "generated"
    assert blobs.get(record.frontal_view_ref)[:8] == b"\x89PNG\r\n\x1a\n"


def test_cancel_event_stops_generation(tmp_path):
    blobs = BlobStore(tmp_path / "blobs")
    cancel = threading.Event()
    cancel.set()
    records = generate_assets(_prompts(1, "##hang##"), MockMeshGenerator(), blobs,
                              fast_config(), cancel=cancel)
    assert records[0].status == "failed"


# --- waiting-time estimation -------------------------------------------------------

def test_degenerate_eta_constant():
    eta = EtaModel(base_seconds=100.0, per_model_seconds=0.0)
    assert all(estimate_generation_seconds(k, eta) == 100 for k in (1, 5, 50))


def test_estimate_rejects_nonpositive_count():
    eta = EtaModel(base_seconds=1.0, per_model_seconds=1.0)
    with pytest.raises(ValueError):
        estimate_generation_seconds(0, eta)


@settings(max_examples=100)
@given(st.integers(min_value=1, max_value=500), st.integers(min_value=1, max_value=500))
def test_eta_monotonic_in_model_count(a, b):
    eta = EtaModel(base_seconds=17.0, per_model_seconds=3.5)
    low, high = sorted((a, b))
    assert estimate_generation_seconds(low, eta) <= estimate_generation_seconds(high, eta)


def test_default_eta_matches_refit_of_calibration_rows():
    rows = [(6, 86), (6, 111), (7, 119), (6, 108), (9, 164), (13, 174),
            (9, 135), (8, 130), (8, 143), (9, 163), (15, 202)]
    fitted = fit_eta_model(rows)
    shipped, _provisional = load_default_eta()
    assert shipped.base_seconds == pytest.approx(fitted.base_seconds, abs=1e-4)
    assert shipped.per_model_seconds == pytest.approx(fitted.per_model_seconds, abs=1e-4)


def test_shipped_eta_hits_observed_ranges():
    shipped, provisional = load_default_eta()
    assert 86 * 0.75 <= estimate_generation_seconds(6, shipped) <= 86 * 1.25
    assert 202 * 0.75 <= estimate_generation_seconds(15, shipped) <= 202 * 1.25
    assert estimate_provisional_seconds(500, provisional) > 0
