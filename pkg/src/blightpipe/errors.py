"""Exception types shared across the pipeline."""


class PipelineError(Exception):
    """Base class for all errors raised by this package."""


class DimensionError(PipelineError):
    """Image or vector dimensions are empty, mismatched, or out of range."""


class ChannelError(PipelineError):
    """Operation requires a different channel count than the image has."""


class FormatError(PipelineError):
    """A file does not conform to its binary or CSV schema.

    ``offset`` is the byte position of the first offending content, when known.
    """

    def __init__(self, message, offset=None):
        if offset is not None:
            message = f"{message} (byte offset {offset})"
        super().__init__(message)
        self.offset = offset


class AlignmentError(PipelineError):
    """Matrices or label sets that must agree row-wise do not."""


class StratificationError(PipelineError):
    """A class is too small (or absent) to stratify into the requested folds."""


class ConfigurationError(PipelineError):
    """A config value is invalid or inconsistent with the data."""


class TrainingError(PipelineError):
    """Classifier training cannot proceed (e.g. single-class input)."""


class ConvergenceError(TrainingError):
    """Training hit its iteration budget before meeting the stopping rule.

    ``kkt_gap`` carries the final two-threshold optimality gap.
    """

    def __init__(self, message, kkt_gap):
        super().__init__(f"{message} (final KKT gap {kkt_gap:.3e})")
        self.kkt_gap = kkt_gap


class EvaluationError(PipelineError):
    """An evaluation was requested on empty or degenerate results."""
