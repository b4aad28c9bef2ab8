"""Exception hierarchy shared across the toolbox."""


class ChatBCIError(Exception):
    """Base class for all toolbox errors."""


class FormatError(ChatBCIError):
    """A container file is missing or structurally unparseable."""


class IntegrityError(ChatBCIError):
    """Container metadata and payload disagree (sizes, bounds, indices)."""


class LabelError(ChatBCIError):
    """An event label is not present in the recording's class map."""


class PreconditionError(ChatBCIError):
    """An operation's documented precondition does not hold."""


class SpecError(ChatBCIError):
    """A parameter specification is invalid for the given data."""


class BoundsError(ChatBCIError):
    """An epoch window falls outside the recording."""

    def __init__(self, message: str, offending_events=None):
        super().__init__(message)
        self.offending_events = list(offending_events or [])


class EmptyClassError(ChatBCIError):
    """A class required to be populated has no trials."""


class ConfigError(ChatBCIError):
    """A model or run configuration is internally inconsistent."""


class ShapeError(ChatBCIError):
    """A tensor does not match the shape a model expects."""


class SplitError(ChatBCIError):
    """A stratified split cannot be formed from the given trials."""


class GenerationError(ChatBCIError):
    """The provider reply yielded no parseable content."""

    def __init__(self, message: str, raw_text: str = ""):
        super().__init__(message)
        self.raw_text = raw_text


class ProviderError(ChatBCIError):
    """The LLM provider failed after retries."""


class StateError(ChatBCIError):
    """An action state transition is not allowed."""
