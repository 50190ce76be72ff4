"""Exception types shared across the story-spine pipeline."""


class StorySpineError(Exception):
    """Base class for every error raised by this package."""


# --- parsing ---------------------------------------------------------------

class MalformedMarkup(StorySpineError):
    """Raised on unclosed or mismatched tags. Carries the byte offset."""

    def __init__(self, message: str, position: int):
        super().__init__(f"{message} (offset {position})")
        self.position = position


class EmptyDocument(StorySpineError):
    """Input contained no scenes (or no text at all)."""


# --- story-world state -----------------------------------------------------

class InvalidDelta(StorySpineError):
    """A state delta violates its invariants relative to the pre-state."""


class EmptyDelta(InvalidDelta):
    """A delta with neither additions nor removals where a change is required."""


class UnknownEvent(StorySpineError):
    """An event id does not resolve against the world."""


# --- prompt templates ------------------------------------------------------

class MissingSlot(StorySpineError):
    def __init__(self, name: str):
        super().__init__(f"slot {name!r} is declared but not bound")
        self.name = name


class UnknownSlot(StorySpineError):
    def __init__(self, name: str):
        super().__init__(f"slot {name!r} is bound but not declared")
        self.name = name


class ContractViolation(StorySpineError):
    """Model output does not satisfy the template's output contract."""


# --- backend ---------------------------------------------------------------

class BackendError(StorySpineError):
    """Base class for chat-completion failures. `retryable` drives the retry loop."""

    retryable = False


class AuthError(BackendError):
    retryable = False


class RateLimited(BackendError):
    retryable = True


class NetworkError(BackendError):
    retryable = True


# --- pipeline / datasets ---------------------------------------------------

class EmptyCandidates(StorySpineError):
    """Voting requires at least one candidate labeling."""


class PipelineAborted(StorySpineError):
    """Pipeline stopped mid-run; a resumable checkpoint was written."""

    def __init__(self, message: str, completed_scenes: int):
        super().__init__(message)
        self.completed_scenes = completed_scenes


class IncompleteRun(StorySpineError):
    """A scene result required for dataset export is missing its trace."""


class BudgetImpossible(StorySpineError):
    """Token budgets cannot fit even the fixed serialization overhead."""


class MissingGold(StorySpineError):
    def __init__(self, document_id: str):
        super().__init__(f"no gold summary for document {document_id!r}")
        self.document_id = document_id


# --- evaluation ------------------------------------------------------------

class EmptyReference(StorySpineError):
    """Reference text has no tokens."""


class EmptySource(StorySpineError):
    """Source text has no tokens."""
