"""Exception hierarchy.

Validation errors (bad input, bad configuration) derive from
``ValidationError`` so the command line can map them to exit code 2;
everything else is a runtime failure.
"""


class BiradsError(Exception):
    """Base class for all package errors."""


class ValidationError(BiradsError, ValueError):
    """Input or configuration failed a precondition."""


class EncodingError(ValidationError):
    pass


class UnscoredCategoryError(ValidationError):
    pass


class NumericInputError(ValidationError):
    pass


class DimensionError(ValidationError):
    pass


class ResamplingError(ValidationError):
    pass


class IngestError(ValidationError):
    pass


class SchemaError(ValidationError):
    pass


class LayoutMismatchError(ValidationError):
    pass


class SpecError(ValidationError):
    pass


class TrainingError(BiradsError):
    pass


class PipelineError(BiradsError):
    """A pipeline stage failed; ``stage`` names it and ``__cause__`` holds the original error."""

    def __init__(self, stage: str, cause: Exception):
        super().__init__(f"stage '{stage}' failed: {cause}")
        self.stage = stage
        self.cause = cause
