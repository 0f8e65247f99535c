"""Exception hierarchy shared across the toolkit.

Every error raised by aukit for bad data or bad parameters derives from
AukitError, so callers (and the CLI) can separate data problems from bugs.
"""


class AukitError(Exception):
    """Base class for all toolkit errors."""


# --- ingest ---------------------------------------------------------------

class EmptySeries(AukitError):
    """AU CSV contained a header but no data rows."""


class MissingColumn(AukitError):
    """A column required by the schema is absent from the CSV header."""


class OutOfRange(AukitError):
    """An intensity value fell outside the configured valid range."""

    def __init__(self, message, row=None, column=None):
        super().__init__(message)
        self.row = row
        self.column = column


class MalformedNumber(AukitError):
    """A cell could not be parsed as a finite number."""


class MalformedFile(AukitError):
    """A timing or manifest file is structurally invalid."""


class OverlappingPhases(AukitError):
    """Two experimental phases overlap in time."""


class NegativeDuration(AukitError):
    """A phase ends at or before its start."""


class UnknownPhase(AukitError):
    """The requested phase name is not present in the timing record."""


class PhaseOutOfBounds(AukitError):
    """No frame of the recording falls inside the phase window."""


class DuplicateParticipant(AukitError):
    """Two manifest entries share a participant id."""


class IngestFileError(AukitError):
    """A participant's file failed to load; carries the participant id."""

    def __init__(self, participant_id, path, cause):
        super().__init__(f"participant {participant_id!r}: {path}: {cause}")
        self.participant_id = participant_id
        self.path = path
        self.cause = cause


# --- signals / statistics -------------------------------------------------

class UnknownSignal(AukitError):
    """Requested signal is neither an AU column nor a known emotion."""


class EmptyInput(AukitError):
    """An operation that needs at least one value received none."""


class EmptyGroup(AukitError):
    """A group comparison requires both cohorts to be non-empty."""


class InsufficientSamples(AukitError):
    """Too few samples for the requested statistical test."""


# --- decomposition ---------------------------------------------------------

class DimensionMismatch(AukitError):
    """Feature counts of two matrices disagree."""


class KOutOfRange(AukitError):
    """Component count outside [1, rank]."""


# --- clustering -------------------------------------------------------------

class KTooLarge(AukitError):
    """More clusters requested than samples available."""


class EmptyData(AukitError):
    """Clustering input has no samples."""


class SingularCovariance(AukitError):
    """A mixture covariance became singular with regularization disabled."""


class SingleCluster(AukitError):
    """Silhouette needs at least two non-empty clusters."""


# --- classification ---------------------------------------------------------

class BadFraction(AukitError):
    """test_frac must lie strictly between 0 and 1."""


class ClassTooSmall(AukitError):
    """A class is too small to survive the requested stratified split."""


class InputTooShort(AukitError):
    """Series too short for the smallest convolution kernel."""


class LengthMismatch(AukitError):
    """Series length does not match the fitted transform."""


class SingleClass(AukitError):
    """Training labels contain fewer than two classes."""


class NonFiniteLoss(AukitError):
    """Training loss became NaN or infinite."""


class EmptyTest(AukitError):
    """Evaluation requires a non-empty test set."""


# --- synthesis ---------------------------------------------------------------

class InvalidSpec(AukitError):
    """Synthetic cohort specification violates its constraints."""
