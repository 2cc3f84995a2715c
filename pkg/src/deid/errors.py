"""Exception types shared across the package."""


class DeidError(Exception):
    """Base class for all package errors."""


class ShapeError(DeidError):
    """A tensor does not have the shape an operation requires.

    The message always names the offending dimensions.
    """


class DegenerateGeometryError(DeidError):
    """Landmark configuration too degenerate for the requested geometry op
    (coincident points for similarity fitting, collinear points for hulls)."""


class MaskRangeError(DeidError):
    """A blending mask contains values outside [0, 1]."""


class ConfigError(DeidError):
    """Malformed or unknown configuration input. CLI maps this to exit code 2."""


class CheckpointError(DeidError):
    """Checkpoint file is malformed or does not match the requested architecture."""


class TrainingFailure(DeidError):
    """A training run finished but did not meet its configured quality floor."""


class LossNotFinite(DeidError):
    """A loss term came out NaN/Inf; the message names the term."""


class DescriptorMismatchError(DeidError):
    """Pyramids or embeddings produced by different descriptor models were
    combined."""


class EvaluationError(DeidError):
    """Evaluation protocol misuse (unknown label, wrong descriptor role,
    unrealizable FAR, empty probe set)."""
