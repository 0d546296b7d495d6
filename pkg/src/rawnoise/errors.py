"""Exception taxonomy for the toolkit.

Every exception carries a short machine-readable ``code`` so the CLI can map
failures onto its exit-code contract: malformed input data and containers map
to exit 3, calibration failures to exit 4.
"""


class RawNoiseError(Exception):
    """Base class for all toolkit errors."""

    code = "error"


class DimensionError(RawNoiseError):
    """Array shape is inconsistent with the declared geometry."""

    code = "dimension"


class FormatError(RawNoiseError):
    """Unsupported CFA layout or malformed structured value."""

    code = "format"


class DomainError(RawNoiseError):
    """A numeric argument is outside its valid domain."""

    code = "domain"


class CapacityError(RawNoiseError):
    """The requested patch count cannot fit without overlap."""

    code = "capacity"


class PairingError(RawNoiseError):
    """Two images that must be registered pairs do not match."""

    code = "pairing"


class FrameSetError(RawNoiseError):
    """Frames in a calibration set have inconsistent metadata."""

    code = "frame_set"


class ProfileError(RawNoiseError):
    """A calibration profile does not match the target frame."""

    code = "profile"


class CoverageError(RawNoiseError):
    """Requested ISO lies outside the calibrated range."""

    code = "coverage"


class InputError(RawNoiseError):
    """A statistical test received unusable input."""

    code = "input"


class BinningError(RawNoiseError):
    """Histogram binning produced degenerate or sparse bins."""

    code = "binning"


class ContainerError(RawNoiseError):
    """Base class for on-disk container problems."""

    code = "container"


class HeaderError(ContainerError):
    """Bad magic, header fields, or metadata encoding."""

    code = "header"


class VersionError(ContainerError):
    """Container format version is not supported."""

    code = "version"


class TruncatedError(ContainerError):
    """File ends before the declared payload or checksum."""

    code = "truncated"


class ChecksumError(ContainerError):
    """Stored CRC32 does not match the file contents."""

    code = "checksum"


class CalibrationError(RawNoiseError):
    """Base class for calibration failures (CLI exit 4)."""

    code = "calibration"


class InsufficientDataError(CalibrationError):
    """Too few frames, pairs, or ISO levels to fit the model."""

    code = "insufficient_data"


class RankError(CalibrationError):
    """The regression design is degenerate (no ISO spread)."""

    code = "rank"


class CalibrationFailedError(CalibrationError):
    """The fit converged to a physically meaningless result."""

    code = "calibration_failed"
