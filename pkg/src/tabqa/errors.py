"""Exception types shared across the pipeline."""


class TabqaError(Exception):
    """Base class for every error raised by this package."""


class InvariantError(TabqaError):
    """A table violated a structural invariant at construction time."""


class RaggedInputError(TabqaError):
    """A data row does not match the header width."""


class EmptyHeaderError(TabqaError):
    """Input has no header row (or an all-empty one)."""


class RowCountMismatchError(TabqaError):
    """Augmenting table row count differs from the base table."""


class ParseError(TabqaError):
    """A model response did not match the expected output format."""


class LengthMismatchError(TabqaError):
    """Extracted JSON columns have unequal value counts."""


class AlignmentError(TabqaError):
    """Row-wise answers could not be aligned with the table rows."""


class NoFenceFoundError(TabqaError):
    """No SQL could be extracted from a model response."""


class TokenBudgetExceededError(TabqaError):
    """A prompt's token estimate exceeds the configured context limit."""

    def __init__(self, estimate: int, limit: int):
        super().__init__(f"prompt estimate {estimate} tokens exceeds limit {limit}")
        self.estimate = estimate
        self.limit = limit


class TemplateError(TabqaError):
    """A prompt template file is malformed."""


class CacheMissError(TabqaError):
    """Replay mode received a request that is not in the transcript cache."""


class TransportError(TabqaError):
    """The live endpoint could not be reached (after retries)."""


class RateLimitedError(TabqaError):
    """The live endpoint kept rate-limiting after the retry budget."""


class ConfigError(TabqaError):
    """Invalid run configuration; reported before any source call."""


class MissingFileError(TabqaError):
    """A dataset file is absent."""
