"""Shared exception types."""


class ConfigurationError(Exception):
    """Raised for invalid or incomplete run configuration."""


class TrainingDivergenceError(RuntimeError):
    """Raised when a loss term becomes non-finite during training.

    ``term`` names the offending loss so logs point at the culprit.
    """

    def __init__(self, term: str, message: str | None = None):
        self.term = term
        super().__init__(message or f"non-finite loss term: {term}")


class CheckpointIntegrityError(RuntimeError):
    """Raised when a checkpoint file is corrupt, truncated, or unparsable."""
