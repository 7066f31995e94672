"""Story text normalization: word segmentation and keyword occurrence lookup."""

from __future__ import annotations

import re
import unicodedata
from dataclasses import dataclass, field

from .errors import EmptyStory

# Han ideographs (URO + extensions + compatibility blocks). Kana and hangul are
# left to the word-run rule; only ideographs are forced to one token per char.
_CJK = (
    "[㐀-䶿一-鿿豈-﫿"
    "\U00020000-\U0002a6df\U0002a700-\U0002ebef"
    "\U0002f800-\U0002fa1f\U00030000-\U0003134f]"
)
# A word char is any \w except underscore and except ideographs (handled above).
_W = rf"(?:(?!{_CJK})[^\W_])"
# Word runs may be joined by a single medial apostrophe or period between word
# chars ("don't", "U.S.A"), approximating Unicode word-boundary behaviour.
_TOKEN_RE = re.compile(rf"{_CJK}|{_W}+(?:['’.]{_W}+)*")

_COMBINING = re.compile(r"[̀-ͯ᪰-᫿᷀-᷿]")


@dataclass(frozen=True, slots=True)
class WordToken:
    """One word of the story, with its byte span into the UTF-8 body."""

    word_index: int
    byte_span: tuple[int, int]
    surface: str


@dataclass(slots=True)
class KeywordOccurrence:
    """First mention of an extracted keyword on the global word axis."""

    keyword: str
    kind: str  # "character" | "object"
    global_position: int
    page_relative_position: int | None = None  # assigned by the assembler
    synthetic: bool = False  # keyword missing from text, anchored to word 0


@dataclass(slots=True)
class StoryDocument:
    """Segmented story: tokens index into the body and preserve it exactly."""

    book_id: str
    title: str
    language: str
    body: str
    tokens: list[WordToken] = field(default_factory=list)

    @classmethod
    def from_text(cls, book_id: str, title: str, body: str, language: str = "und") -> StoryDocument:
        return cls(book_id=book_id, title=title, language=language, body=body,
                   tokens=segment_words(body, language))

    @property
    def word_count(self) -> int:
        return len(self.tokens)

    def page_text(self, start_word: int, end_word: int) -> str:
        """Body slice covering tokens [start_word, end_word), separators included."""
        if start_word >= end_word:
            return ""
        raw = self.body.encode("utf-8")
        begin = self.tokens[start_word].byte_span[0]
        end = self.tokens[end_word - 1].byte_span[1]
        return raw[begin:end].decode("utf-8")


def segment_words(body: str, language: str = "und") -> list[WordToken]:
    """Split body into word tokens: word-boundary runs, one token per ideograph.

    Punctuation and whitespace are separators, never tokens. Raises EmptyStory
    when the body contains no words at all.
    """
    if not body or not body.strip():
        raise EmptyStory("story body is empty")
    byte_at = _byte_offsets(body)
    tokens = [
        WordToken(word_index=i, byte_span=(byte_at[m.start()], byte_at[m.end()]), surface=m.group(0))
        for i, m in enumerate(_TOKEN_RE.finditer(body))
    ]
    if not tokens:
        raise EmptyStory("story body contains no words")
    return tokens


def detokenize(doc: StoryDocument) -> str:
    """Rebuild the body from token surfaces plus the separators between spans."""
    raw = doc.body.encode("utf-8")
    parts: list[bytes] = []
    pos = 0
    for tok in doc.tokens:
        start, end = tok.byte_span
        parts.append(raw[pos:start])
        parts.append(tok.surface.encode("utf-8"))
        pos = end
    parts.append(raw[pos:])
    return b"".join(parts).decode("utf-8")


@dataclass(slots=True)
class OccurrenceScan:
    """Result of locating keywords: first mentions found plus the misses."""

    occurrences: list[KeywordOccurrence]
    misses: list[str]


def locate_occurrences(doc: StoryDocument, keywords: list[tuple[str, str]]) -> OccurrenceScan:
    """Find the first mention of each keyword as a word index into doc.

    Matching is a case-insensitive token-sequence comparison, with a
    diacritic/width-normalized substring fallback for paraphrased keywords.
    Keywords with no match are returned in the misses list.
    """
    if not keywords:
        raise ValueError("keywords must be non-empty")
    surfaces = [tok.surface.casefold() for tok in doc.tokens]
    normalized = [_normalize(tok.surface) for tok in doc.tokens]
    norm_concat, norm_token_at = _concat_with_index(normalized)

    seen: set[str] = set()
    occurrences: list[KeywordOccurrence] = []
    misses: list[str] = []
    for keyword, kind in keywords:
        folded = keyword.casefold()
        if folded in seen:
            continue
        seen.add(folded)
        position = _first_sequence_match(surfaces, keyword)
        if position is None:
            position = _normalized_substring_match(norm_concat, norm_token_at, keyword)
        if position is None:
            misses.append(keyword)
        else:
            occurrences.append(KeywordOccurrence(keyword=keyword, kind=kind, global_position=position))
    occurrences.sort(key=lambda occ: occ.global_position)
    return OccurrenceScan(occurrences=occurrences, misses=misses)


def _first_sequence_match(surfaces: list[str], keyword: str) -> int | None:
    try:
        needle = [tok.surface.casefold() for tok in segment_words(keyword)]
    except EmptyStory:
        return None
    width = len(needle)
    for start in range(len(surfaces) - width + 1):
        if surfaces[start:start + width] == needle:
            return start
    return None


def _normalized_substring_match(concat: str, token_at: list[int], keyword: str) -> int | None:
    needle = _normalize(keyword)
    if not needle:
        return None
    at = concat.find(needle)
    if at < 0:
        return None
    return token_at[at]


def _normalize(text: str) -> str:
    """Casefold and strip diacritics/width differences; drop non-word chars."""
    decomposed = unicodedata.normalize("NFKD", text)
    stripped = "".join(ch for ch in decomposed if not unicodedata.combining(ch))
    stripped = _COMBINING.sub("", stripped)
    recomposed = unicodedata.normalize("NFKC", stripped).casefold()
    return "".join(ch for ch in recomposed if ch.isalnum())


def _concat_with_index(pieces: list[str]) -> tuple[str, list[int]]:
    token_at: list[int] = []
    for idx, piece in enumerate(pieces):
        token_at.extend([idx] * len(piece))
    return "".join(pieces), token_at


def _byte_offsets(text: str) -> list[int]:
    offsets = [0] * (len(text) + 1)
    pos = 0
    for i, ch in enumerate(text):
        offsets[i] = pos
        pos += len(ch.encode("utf-8"))
    offsets[len(text)] = pos
    return offsets
