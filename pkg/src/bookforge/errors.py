"""Exception types shared across the pipeline modules."""

from __future__ import annotations


class BookForgeError(Exception):
    """Base class for all pipeline errors."""


class EmptyStory(BookForgeError):
    """Input story text is empty or whitespace-only."""


class EmptyBook(BookForgeError):
    """No models survive to assembly, so there is no book to build."""


class ProviderUnavailable(BookForgeError):
    """An external provider could not be reached or returned a transient failure."""


class MalformedOutput(BookForgeError):
    """Provider output failed parsing/validation after the retry budget was spent."""

    def __init__(self, message: str, raw_output: str = "", attempts: int = 0):
        super().__init__(message)
        self.raw_output = raw_output
        self.attempts = attempts


class SchemaViolation(BookForgeError):
    """Provider output parsed but violated a semantic contract (e.g. unknown name)."""


class IncompleteProfile(BookForgeError):
    """Entity profile lacks the description content needed to build a prompt."""


class ProviderRejectedPrompt(BookForgeError):
    """The mesh provider refused the submitted prompt."""


class GenerationTimeout(BookForgeError):
    """A generation job did not finish within the configured deadline."""


class IllegalTransition(BookForgeError):
    """Attempted an asset or run status change outside the allowed machine."""


class ScorerUnavailable(BookForgeError):
    """The similarity scorer could not be reached."""


class UnreadableImage(BookForgeError):
    """A frontal-view image could not be read for scoring."""


class UnknownAsset(BookForgeError):
    """Referenced asset id does not exist for this book."""


class VerdictConflict(BookForgeError):
    """A different verdict was already finalized for this asset."""


class TtsUnavailable(BookForgeError):
    """The speech synthesizer could not be reached."""


class ZeroDurationAudio(BookForgeError):
    """Synthesized narration decoded to zero duration."""


class DanglingReference(BookForgeError):
    """Manifest assembly found a reference to an unknown asset or page."""


class RemovedAssetReferenced(BookForgeError):
    """Manifest assembly found a popup pointing at a removed asset."""


class WrongState(BookForgeError):
    """Operation is not legal in the book's current pipeline state."""

    def __init__(self, message: str, state: str = ""):
        super().__init__(message)
        self.state = state


class NotFound(BookForgeError):
    """Requested book or asset does not exist."""
