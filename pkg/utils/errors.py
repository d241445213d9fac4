"""Exception hierarchy for the MAAE toolkit."""

from typing import Optional


class MaaeError(Exception):
    """Base class for every error raised by the toolkit."""


# Tensor engine

class ShapeMismatch(MaaeError):
    """Operand shapes are incompatible."""


class RankError(MaaeError):
    """Operand has the wrong number of dimensions."""


class EmptyOutput(MaaeError):
    """A convolution would produce an output with a zero-sized dimension."""


class NotScalar(MaaeError):
    """backward() was called on a non-scalar tensor."""


class DetachedTensor(MaaeError):
    """The loss was not produced on the given tape."""


class NonFiniteError(MaaeError):
    """A forward result contains NaN or Inf."""


# Features, files and datasets

class BadDims(MaaeError):
    """Image dimensions are not compatible with the backbone."""


class BadMagic(MaaeError):
    """File does not start with the expected magic bytes."""


class VersionMismatch(MaaeError):
    """File format version is not supported."""


class TruncatedFile(MaaeError):
    """File ended before all declared data was read."""


class ChecksumMismatch(MaaeError):
    """Stored CRC32 does not match the payload."""

    def __init__(self, message: str, expected: int = 0, actual: int = 0):
        super().__init__(message)
        self.expected = expected
        self.actual = actual


class IoError(MaaeError):
    """Reading or writing dataset files failed."""


class LayoutError(MaaeError):
    """Dataset directory or manifest does not follow a recognized layout."""


class MissingMask(MaaeError):
    """An anomalous test record has no ground-truth mask."""


# Scoring

class EmptyMap(MaaeError):
    """Anomaly map has no elements."""


class DegenerateLabels(MaaeError):
    """AUROC needs both positive and negative labels."""


# Training and configuration

class EmptyDataset(MaaeError):
    """No training records are available."""


class ConfigMismatch(MaaeError):
    """Tensor shapes disagree with the configured model."""


class CheckpointMismatch(MaaeError):
    """Checkpoint parameters do not match the configured model."""


class NonFiniteLoss(MaaeError):
    """Training produced a NaN or Inf loss."""

    def __init__(self, message: str, step: int = -1):
        super().__init__(message)
        self.step = step


class ConfigError(MaaeError):
    """Configuration file or override is invalid."""

    def __init__(self, message: str, key: Optional[str] = None):
        super().__init__(message)
        self.key = key


class UsageError(MaaeError):
    """Command line arguments are invalid."""
