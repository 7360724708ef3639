"""
Error Types

Exception hierarchy raised across the PbDr packages. Every error derives from
PbdrError so the CLI can report any of them with a single handler.
"""


class PbdrError(Exception):
    """Root of all project errors."""


class InvalidInputError(PbdrError, ValueError):
    """Input data violates an operation's preconditions."""


class AlignmentError(InvalidInputError):
    """Two frame-wise streams have different frame counts."""

    def __init__(self, expected: int, actual: int, what: str = "frames", utterance_id: str = ""):
        self.expected = expected
        self.actual = actual
        self.utterance_id = utterance_id
        where = f" in utterance {utterance_id}" if utterance_id else ""
        super().__init__(f"Frame misalignment{where}: {what} has {actual} frames, expected {expected}")


class ConfigError(PbdrError, ValueError):
    """Invalid configuration value or combination."""


class StateError(PbdrError, RuntimeError):
    """Operation called in the wrong state (e.g. backward before forward)."""


class TrainingError(PbdrError, RuntimeError):
    """Optimization produced a non-finite value."""


class UndefinedMetricError(PbdrError, ValueError):
    """A metric has no defined value for the given input."""


class CheckpointError(PbdrError, IOError):
    """Checkpoint directory is missing files or is inconsistent."""
