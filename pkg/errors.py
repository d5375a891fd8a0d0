"""
Exception hierarchy for the few-shot pipeline.

Every error the CLI can surface derives from PipelineError and carries the
process exit code it maps to:
- ConfigError: 2
- DataError (and subclasses): 3
- NumericAbort: 4
"""


class PipelineError(Exception):
    """Base class for errors reported by the command-line entry point."""

    exit_code = 1


class ConfigError(PipelineError):
    """Unknown config key, bad value or invalid flag combination."""

    exit_code = 2


class DataError(PipelineError):
    """Dataset, manifest or fixture problem."""

    exit_code = 3


class EmptySplitError(DataError):
    pass


class MissingFileError(DataError):
    pass


class LabelGapError(DataError):
    pass


class ClassTooSmallError(DataError):
    def __init__(self, class_name: str, count: int, required: int):
        self.class_name = class_name
        self.count = count
        self.required = required
        super().__init__(
            f"class too small: '{class_name}' has {count} samples, needs {required}"
        )


class ManifestError(DataError):
    """A manifest, index or record file does not match its schema."""


class InsufficientSamplesError(DataError):
    pass


class ChecksumError(DataError):
    pass


class FixtureError(DataError):
    pass


class NumericAbort(PipelineError):
    """A loss term became NaN or infinite during training."""

    exit_code = 4

    def __init__(self, term: str, value: float, step: int):
        self.term = term
        self.value = value
        self.step = step
        super().__init__(f"non-finite loss term '{term}'={value} at step {step}")


class ShapeError(ValueError):
    """Operand shapes do not agree."""


class DegenerateBatchError(ValueError):
    """Contrastive batch has fewer than two views."""


class InvariantViolation(ValueError):
    """A structural invariant of a batch or episode does not hold."""


class LabelRangeError(ValueError):
    pass


class EmptyClassError(ValueError):
    pass
