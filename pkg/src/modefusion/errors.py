"""Exception taxonomy shared across the package.

Contract violations raise one of these; the CLI maps them to exit code 2
(configuration / input contract) or lets unexpected ones escape as 1.
"""


class Error(Exception):
    """Base class for all package errors."""


class FeedIncomplete(Error):
    """A required timetable file or column is missing."""


class ReferentialError(Error):
    """A row references an entity that does not exist."""

    def __init__(self, file: str, row: int, message: str = ""):
        self.file = file
        self.row = row
        super().__init__(f"{file} row {row}: {message or 'dangling reference'}")


class ScheduleOrderError(Error):
    """Stop times of a trip are not strictly ordered."""

    def __init__(self, trip_id: str, message: str = ""):
        self.trip_id = trip_id
        super().__init__(f"trip {trip_id}: {message or 'stop times out of order'}")


class InvalidHeadway(Error):
    """Non-positive headway in a frequency specification."""


class EmptyTraceError(Error):
    """No usable observations were supplied."""


class IoError(Error):
    """A path could not be read or written."""


class NoRouteError(Error):
    """The street graph offers no path for the requested mode."""


class OutOfAreaError(Error):
    """A point lies outside every known zone."""


class UnknownZoneError(Error):
    """A zone id is not part of the zoning."""


class DegenerateRatioError(Error):
    """Traffic scaling is undefined (free-flow matrix entry is zero)."""


class UnmatchedRecord(Error):
    """A vehicle location could not be matched to any planned trip."""


class InvalidPeriod(Error):
    """A time period is empty or reversed."""


class ConfigError(Error):
    """The run configuration is inconsistent or incomplete."""


class DegenerateLabelError(Error):
    """The training set contains fewer than two classes."""


class EmptyEvalError(Error):
    """An evaluation set is empty."""
