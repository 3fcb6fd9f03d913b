"""Exception hierarchy shared across the toolkit.

Everything raised on purpose derives from MaskmatchError so callers can
catch toolkit failures without swallowing programming errors.
"""


class MaskmatchError(Exception):
    """Base class for all toolkit errors."""


class NoFaceFound(MaskmatchError):
    """The face detector returned zero boxes."""


class LandmarkFailure(MaskmatchError):
    """The landmark predictor could not produce a usable point set."""


class DegenerateHull(MaskmatchError):
    """Selected landmarks are collinear; no 2-D convex hull exists."""


class ManifestParseError(MaskmatchError):
    """A manifest file is malformed. Carries the offending line number."""

    def __init__(self, message, line=None):
        super().__init__(message if line is None else f"line {line}: {message}")
        self.line = line


class DuplicateImageId(MaskmatchError):
    """Two manifest rows share an image_id."""


class InsufficientIdentities(MaskmatchError):
    """A split role or protocol step would receive zero identities."""


class ExhaustedDataset(MaskmatchError):
    """No valid pair can be drawn from the chosen dataset."""


class InsufficientPairs(MaskmatchError):
    """The pair universe is too small for the requested list size."""


class PairListFormatError(MaskmatchError):
    """A pair-list file is malformed or violates pair invariants."""

    def __init__(self, message, line=None):
        super().__init__(message if line is None else f"line {line}: {message}")
        self.line = line


class ShapeMismatch(MaskmatchError):
    """An array does not match the shape a model expects."""


class DomainError(MaskmatchError):
    """A numeric argument lies outside its documented domain."""


class ConfigError(MaskmatchError):
    """Inconsistent or unusable configuration values."""


class ChecksumError(MaskmatchError):
    """A checkpoint archive failed integrity verification."""


class EmptyPartition(MaskmatchError):
    """A score set is missing authentic or imposter scores."""


class MissingImage(MaskmatchError):
    """A referenced image could not be read. Carries the pair index."""

    def __init__(self, message, pair_index=None):
        super().__init__(message)
        self.pair_index = pair_index
