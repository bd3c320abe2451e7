"""Exception types shared across the toolkit."""


class CovisError(Exception):
    """Base class for all toolkit errors."""


# --- raster / manifest loading ---

class MissingFileError(CovisError):
    """A referenced file does not exist."""


class DecodeError(CovisError):
    """A raster file exists but cannot be decoded (corrupt, unsupported depth)."""


class ParseError(CovisError):
    """A manifest or config document is not valid JSON / has the wrong shape."""


class DuplicateEntryError(CovisError):
    """A manifest lists the same prediction path twice."""


class EmptyManifestError(CovisError):
    """A manifest contains no entries."""


class DimensionMismatchError(CovisError):
    """Prediction and ground truth rasters disagree in size."""


# --- metrics ---

class EmptyGroundTruthError(CovisError):
    """Ground truth has no foreground pixels; F measures are undefined."""


class EmptyReportListError(CovisError):
    """aggregate() was called with no reports."""


# --- cascade ---

class ConfigError(CovisError):
    """Pipeline configuration is inconsistent or out of range."""


class ExternalBackendError(CovisError):
    """An external backend process failed or produced malformed output."""


# --- prompt generation ---

class UnboundSlotError(CovisError):
    """A prompt template references a slot that is not defined."""


class NetworkError(CovisError):
    """The description endpoint could not be reached."""


class EndpointError(CovisError):
    """The description endpoint answered with a non-success status."""

    def __init__(self, status: int, body: str = ""):
        super().__init__(f"endpoint returned status {status}")
        self.status = status
        self.body = body


class EmptyCompletionError(CovisError):
    """The endpoint response carried no description text."""


# --- bench ---

class NoMatchedPairsError(CovisError):
    """No prediction/ground-truth pairs could be matched."""


# --- study ---

class MissingDescriptionError(CovisError):
    """A study item lacks a description for one of the methods."""


class UnknownParticipantError(CovisError):
    """A rating or query references an unregistered participant."""


class UnknownItemError(CovisError):
    """A rating references an item or candidate outside the study."""


class ScoreOutOfRangeError(CovisError):
    """A rating score falls outside the 1..4 scale."""


class NoRatingsError(CovisError):
    """A report was requested before any rating was submitted."""
