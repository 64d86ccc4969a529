"""Exception types shared across the toolkit."""


class SegcorefError(Exception):
    """Base class for all toolkit errors."""


class ParseError(SegcorefError):
    """Malformed input file. Carries the 1-based line number when known."""

    def __init__(self, message: str, line: int | None = None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class ConfigError(SegcorefError):
    """Inconsistent or out-of-range configuration."""


class ValidationError(SegcorefError):
    """Input data violates a documented invariant."""


class EncodingError(SegcorefError):
    """A segment or token cannot be encoded under the current limits."""


class CoverageError(SegcorefError):
    """Segment outputs do not cover the document (internal invariant breach)."""


class TrainingDivergedError(SegcorefError):
    """Training produced a non-finite loss. Carries the offending step index."""

    def __init__(self, step: int, loss: float):
        super().__init__(f"non-finite loss {loss!r} at step {step}")
        self.step = step
        self.loss = loss
