"""Exception hierarchy shared by all fcaccel modules.

Everything raised on a user-facing path derives from EmulatorError so the
CLI can map any failure to a nonzero exit with one `ERROR <name>: <msg>`
line.
"""


class EmulatorError(Exception):
    """Base class for all fcaccel errors."""


# --- model container / loaders -------------------------------------------

class MalformedContainer(EmulatorError):
    """Model container is unreadable, truncated, or has a bad magic."""


class UnsupportedVersion(EmulatorError):
    """Container version byte is not one this build understands."""


class DimensionMismatch(EmulatorError):
    """Adjacent weight matrices do not chain (cols != previous rows)."""


class BadMagic(EmulatorError):
    """IDX file magic does not match the expected tensor kind."""


class CountMismatch(EmulatorError):
    """Image and label files disagree on the sample count."""


class TruncatedFile(EmulatorError):
    """File ends before the declared payload."""


class ParseError(EmulatorError):
    """CSV field is not numeric (or a label is not an integer)."""


class IoFailure(EmulatorError):
    """Underlying OS read/write failed."""


# --- sparse stream codec ---------------------------------------------------

class ZeroRunOverflow(EmulatorError):
    """A zero-run does not fit the 5-bit field (max 31)."""


class BadPadBit(EmulatorError):
    """Bit 63 of a packed stream word is set."""


class WordCountMismatch(EmulatorError):
    """Stream word count disagrees with the row's stored tuple count."""


class AddressOutOfRange(EmulatorError):
    """A decoded input address exceeds the row width."""


# --- engines ---------------------------------------------------------------

class WidthMismatch(EmulatorError):
    """Sample length does not match the model input width."""


class BatchSizeMismatch(EmulatorError):
    """Batch does not contain exactly the configured number of samples."""


class MissingLabels(EmulatorError):
    """Accuracy evaluation needs a labeled dataset."""


class EmptyDataset(EmulatorError):
    """Dataset contains no samples."""


# --- performance model ------------------------------------------------------

class UnknownAxis(EmulatorError):
    """Sweep axis does not name a performance-model parameter."""
