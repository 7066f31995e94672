"""Entity extraction and description against a language-model provider.

Runs the four text-processing stages: extract main characters/objects, infer
the story's historical background, then describe characters and objects so the
downstream mesh prompts are grounded in the narrative.
"""

from __future__ import annotations

import json
import logging
import re
import string
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from importlib import resources

import jsonschema

from .errors import EmptyStory, MalformedOutput, ProviderUnavailable, SchemaViolation
from .ingest import StoryDocument
from .providers import LanguageModel

logger = logging.getLogger(__name__)

UNSPECIFIED = "unspecified"

_TEMPLATE_FILES = {
    1: "step1_extract.json",
    2: "step2_context.json",
    3: "step3_character.json",
    4: "step4_object.json",
}

_REPAIR_NOTE = (
    "\n\nYour previous reply could not be parsed. Reply again with JSON only, "
    "matching the requested shape exactly; no prose, no code fences."
)


@dataclass(slots=True)
class HistoricalContext:
    """Inferred era/place of the story; styles the generated objects."""

    era: str
    place: str
    cultural_notes: str

    def as_prompt_text(self) -> str:
        return f"Era: {self.era}. Place: {self.place}. Notes: {self.cultural_notes}"


@dataclass(slots=True)
class CharacterProfile:
    name: str
    gender: str = UNSPECIFIED
    nationality: str = UNSPECIFIED
    age: str = UNSPECIFIED
    appearance_features: str = UNSPECIFIED
    clothing: str = UNSPECIFIED
    era_of_life: str = UNSPECIFIED

    ATTRIBUTES = ("gender", "nationality", "age", "appearance_features", "clothing", "era_of_life")

    def description(self) -> str:
        """Readable rendering of the bound attributes; sentinels are skipped."""
        parts = []
        for attr in self.ATTRIBUTES:
            value = getattr(self, attr)
            if value and value != UNSPECIFIED:
                parts.append(f"{attr.replace('_', ' ')}: {value}")
        return "; ".join(parts)


@dataclass(slots=True)
class ObjectProfile:
    name: str
    explanation: str
    context_description: str


@dataclass(slots=True)
class EntityCatalog:
    """Everything the mesh prompts need: profiles plus the inferred context."""

    characters: list[CharacterProfile]
    objects: list[ObjectProfile]
    historical_context: HistoricalContext

    def keywords(self) -> list[tuple[str, str]]:
        return [(c.name, "character") for c in self.characters] + [
            (o.name, "object") for o in self.objects
        ]


@dataclass(frozen=True, slots=True)
class PromptTemplate:
    """Versioned instruction template with its structured-output schema."""

    step_id: int
    version: str
    template_text: str
    schema: dict

    def render(self, **values: str) -> str:
        try:
            return string.Template(self.template_text).substitute(values)
        except KeyError as exc:
            raise ValueError(f"unbound placeholder {exc} in step {self.step_id} template") from exc


def load_template(step_id: int) -> PromptTemplate:
    """Load one of the shipped step templates by id (1..4)."""
    name = _TEMPLATE_FILES[step_id]
    raw = resources.files("bookforge.templates").joinpath(name).read_text(encoding="utf-8")
    data = json.loads(raw)
    return PromptTemplate(
        step_id=data["step_id"],
        version=data["version"],
        template_text=data["template_text"],
        schema=data["schema"],
    )


@dataclass(slots=True)
class NarrativeConfig:
    retries: int = 3  # max attempts per ask, transport and parse failures included
    backoff_seconds: float = 0.5
    entity_cap: int = 32  # bound on characters + objects per book
    parallelism: int = 4
    sleep: object = time.sleep

    def __post_init__(self):
        if self.retries < 1:
            raise ValueError("retries must be >= 1")


def extract_entities(doc: StoryDocument, provider: LanguageModel,
                     config: NarrativeConfig | None = None) -> tuple[list[str], list[str]]:
    """Stage 1: pull the main character and object name lists out of the story."""
    config = config or NarrativeConfig()
    if not doc.tokens:
        raise EmptyStory("document has no words")
    template = load_template(1)
    instruction = template.render(title=doc.title)

    def check(payload: dict) -> str | None:
        if not payload["characters"] and not payload["objects"]:
            return "both entity lists are empty"
        return None

    payload = _ask(provider, instruction, doc.body, None, template.schema, config, semantic_check=check)
    characters = _dedupe([str(n).strip() for n in payload["characters"] if str(n).strip()])
    objects = _dedupe([str(n).strip() for n in payload["objects"] if str(n).strip()])
    taken = {name.casefold() for name in characters}
    objects = [name for name in objects if name.casefold() not in taken]
    characters, objects = _apply_cap(characters, objects, config.entity_cap)
    return characters, objects


def infer_historical_context(doc: StoryDocument, provider: LanguageModel,
                             config: NarrativeConfig | None = None) -> HistoricalContext:
    """Stage 2: infer era/place so object prompts can match the period."""
    config = config or NarrativeConfig()
    template = load_template(2)
    instruction = template.render(title=doc.title)
    payload = _ask(provider, instruction, doc.body, None, template.schema, config)
    return HistoricalContext(
        era=payload["era"].strip(),
        place=payload["place"].strip(),
        cultural_notes=payload["cultural_notes"].strip(),
    )


def describe_characters(doc: StoryDocument, names: list[str], provider: LanguageModel,
                        config: NarrativeConfig | None = None) -> list[CharacterProfile]:
    """Stage 3: one six-attribute profile per character, in input order."""
    config = config or NarrativeConfig()
    template = load_template(3)

    def describe_one(name: str) -> CharacterProfile:
        instruction = template.render(name=name)
        payload = _ask(provider, instruction, doc.body, None, template.schema, config)
        _check_name(payload, name)
        fields = {
            attr: (str(payload.get(attr, "")).strip() or UNSPECIFIED)
            for attr in CharacterProfile.ATTRIBUTES
        }
        return CharacterProfile(name=name, **fields)

    return _map_bounded(describe_one, names, config.parallelism)


def describe_objects(doc: StoryDocument, names: list[str], context: HistoricalContext,
                     provider: LanguageModel,
                     config: NarrativeConfig | None = None) -> list[ObjectProfile]:
    """Stage 4: explanation + in-context description per object, in input order."""
    config = config or NarrativeConfig()
    template = load_template(4)
    context_text = context.as_prompt_text()

    def describe_one(name: str) -> ObjectProfile:
        instruction = template.render(name=name)
        payload = _ask(provider, instruction, doc.body, context_text, template.schema, config)
        _check_name(payload, name)
        return ObjectProfile(
            name=name,
            explanation=payload["explanation"].strip(),
            context_description=payload["context_description"].strip(),
        )

    return _map_bounded(describe_one, names, config.parallelism)


def build_catalog(doc: StoryDocument, provider: LanguageModel,
                  config: NarrativeConfig | None = None) -> EntityCatalog:
    """Run stages 1-4 in order and merge the results into one catalog."""
    config = config or NarrativeConfig()
    characters, objects = extract_entities(doc, provider, config)
    context = infer_historical_context(doc, provider, config)
    profiles = describe_characters(doc, characters, provider, config)
    object_profiles = describe_objects(doc, objects, context, provider, config)
    return EntityCatalog(characters=profiles, objects=object_profiles, historical_context=context)


# --- internals ---------------------------------------------------------------

def _ask(provider: LanguageModel, instruction: str, story: str, context: str | None,
         schema: dict, config: NarrativeConfig, semantic_check=None) -> dict:
    """Call the provider with retries; strict parse + one repair re-ask."""
    last_error: Exception | None = None
    asked_repair = False
    current_instruction = instruction
    for attempt in range(1, config.retries + 1):
        try:
            reply = provider.complete(current_instruction, story, context)
        except ProviderUnavailable as exc:
            last_error = exc
            if attempt < config.retries:
                config.sleep(config.backoff_seconds * 2 ** (attempt - 1))
            continue
        try:
            payload = _parse_structured(reply, schema)
            if semantic_check is not None:
                problem = semantic_check(payload)
                if problem:
                    raise MalformedOutput(problem, raw_output=reply)
            return payload
        except MalformedOutput as exc:
            last_error = exc
            logger.debug("attempt %d/%d: malformed provider output: %s", attempt, config.retries, exc)
            if not asked_repair:
                current_instruction = instruction + _REPAIR_NOTE
                asked_repair = True
    if isinstance(last_error, ProviderUnavailable):
        raise last_error
    raise MalformedOutput(
        f"provider output invalid after {config.retries} attempts: {last_error}",
        raw_output=getattr(last_error, "raw_output", ""),
        attempts=config.retries,
    )


def _parse_structured(reply: str, schema: dict) -> dict:
    text = _strip_fences(reply)
    try:
        payload = json.loads(text)
    except json.JSONDecodeError:
        start, end = text.find("{"), text.rfind("}")
        if start < 0 or end <= start:
            raise MalformedOutput("no JSON object in reply", raw_output=reply) from None
        try:
            payload = json.loads(text[start:end + 1])
        except json.JSONDecodeError as exc:
            raise MalformedOutput(f"invalid JSON: {exc}", raw_output=reply) from None
    try:
        jsonschema.validate(payload, schema)
    except jsonschema.ValidationError as exc:
        raise MalformedOutput(f"schema violation: {exc.message}", raw_output=reply) from None
    return payload


def _strip_fences(text: str) -> str:
    return re.sub(r"^\s*```[a-zA-Z]*\s*|\s*```\s*$", "", text.strip())


def _check_name(payload: dict, expected: str) -> None:
    got = str(payload.get("name", "")).strip()
    if got and got.casefold() != expected.casefold():
        raise SchemaViolation(f"profile for unknown name {got!r} (asked for {expected!r})")


def _dedupe(names: list[str]) -> list[str]:
    seen: set[str] = set()
    result = []
    for name in names:
        folded = name.casefold()
        if folded not in seen:
            seen.add(folded)
            result.append(name)
    return result


def _apply_cap(characters: list[str], objects: list[str], cap: int) -> tuple[list[str], list[str]]:
    # Lists arrive salience-ordered; characters are kept ahead of objects.
    if len(characters) + len(objects) <= cap:
        return characters, objects
    logger.warning("entity cap %d hit (%d extracted); truncating", cap, len(characters) + len(objects))
    characters = characters[:cap]
    return characters, objects[: cap - len(characters)]


def _map_bounded(fn, items: list[str], parallelism: int) -> list:
    if not items:
        return []
    if parallelism <= 1 or len(items) == 1:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=min(parallelism, len(items))) as pool:
        return list(pool.map(fn, items))
