"""Exception hierarchy shared across the package.

Every error raised by the library derives from MorphAttackError so callers
(and the CLI) can map failures to a single machine-parsable category: the
class name.
"""


class MorphAttackError(Exception):
    """Base class for all library errors."""


class DimensionMismatch(MorphAttackError):
    """Two rasters or a raster and a mask disagree in width/height."""


class FormatError(MorphAttackError):
    """A binary artifact has a bad magic, version, or truncated payload."""


class CorruptDictionary(MorphAttackError):
    """A loaded dictionary violates its structural invariants."""


class EmptyTrainingSet(MorphAttackError):
    """Fewer than two training pairs were supplied."""


class SingularProjection(MorphAttackError):
    """The image-portion Gram matrix is numerically singular."""


class ZeroFlow(MorphAttackError):
    """A target-norm modulation was requested on a (near-)zero field."""


class UntrainedModel(MorphAttackError):
    """The oracle was used before training."""


class InsufficientData(MorphAttackError):
    """Not enough identities or images to train the toy oracle."""


class EmptyRecordSet(MorphAttackError):
    """A rate was requested over zero records."""


class EmptyScores(MorphAttackError):
    """ROC computation needs at least one genuine and one impostor score."""


class BadBins(MorphAttackError):
    """Bin edges are not strictly increasing."""


class ImageTooSmall(MorphAttackError):
    """Image is smaller than the similarity window."""


class ZeroImage(MorphAttackError):
    """Cosine similarity is undefined for an all-zero image."""


class ConfigError(MorphAttackError):
    """Bad, unknown, or inconsistent configuration."""


class MissingArtifact(MorphAttackError):
    """A required prior-stage artifact does not exist."""
