"""Exception types raised across the pipeline.

Validation-flavored errors double as ValueError so they behave sanely
inside sklearn-style code and argparse handlers.
"""


class HierReidError(Exception):
    """Base class for all errors raised by this package."""


class AllBackgroundError(HierReidError, ValueError):
    """Foreground extraction produced an empty mask."""


class BadTargetError(HierReidError, ValueError):
    """Requested normalization target is unusable (not divisible by 3, or too small)."""


class EmptySequenceError(HierReidError, ValueError):
    """An operation requiring a nonempty frame sequence received none."""


class DimensionMismatchError(HierReidError, ValueError):
    """Silhouettes in a sequence do not share dimensions."""


class DuplicateIdError(HierReidError, ValueError):
    """Two descriptors claim the same subject id."""


class BadKError(HierReidError, ValueError):
    """Cluster count outside [1, N]."""


class BadKappaError(HierReidError, ValueError):
    """Top-cluster count outside [1, K]."""


class BadClusterIdError(HierReidError, ValueError):
    """A cluster index outside the fitted model's range."""


class UnassignedIdError(HierReidError, KeyError):
    """A subject id has no cluster assignment in the fitted model."""


class ShapeUnderflowError(HierReidError, ValueError):
    """The conv/pool stack would shrink some dimension below 1."""


class ShapeMismatchError(HierReidError, ValueError):
    """Network input does not match the configured silhouette/part shape."""


class DegeneratePairsError(HierReidError, ValueError):
    """Training stream contains only one of the two pair labels."""


class EmptyDatasetError(HierReidError, ValueError):
    """No usable frames found under the dataset root."""


class LayoutMismatchError(HierReidError, ValueError):
    """On-disk structure does not follow the requested layout."""


class InsufficientFramesError(HierReidError, ValueError):
    """Not enough distinct frames to build the requested pairs."""


class InsufficientSubjectsError(HierReidError, ValueError):
    """Fewer than two subjects available for negative pairs."""


class PolicyInfeasibleError(HierReidError, ValueError):
    """The gallery/probe split policy cannot be applied to this index."""


class EmptyProbeError(HierReidError, ValueError):
    """Identification called with an empty probe sequence."""


class UnknownGroundTruthError(HierReidError, ValueError):
    """A labeled result's ground-truth id is not part of the gallery."""


class BadConfigError(HierReidError, ValueError):
    """Invalid synthetic-dataset or experiment configuration."""


class NotFittedError(HierReidError, RuntimeError):
    """Estimator queried before fit()."""
