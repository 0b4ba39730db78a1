"""Exception types shared across the package."""


class LandclaimError(Exception):
    """Base class for all package errors."""


class FetchError(LandclaimError):
    """Raised when an Overpass download fails and no cache entry exists."""

    def __init__(self, message: str, status: int | None = None):
        super().__init__(message)
        self.status = status


class OverpassParseError(LandclaimError):
    """Raised for a syntactically invalid Overpass response.

    ``offset`` is the byte offset of the first unparseable character when
    known, else None.
    """

    def __init__(self, message: str, offset: int | None = None):
        super().__init__(message)
        self.offset = offset


class GeometryError(LandclaimError):
    """Raised for geometric preconditions (antipodal points, zero area...)."""


class ValidationError(LandclaimError):
    """Raised for invalid configuration or arguments."""


class TaskError(LandclaimError):
    """Raised when a pipeline task fails; carries the task name."""

    def __init__(self, task: str, message: str):
        super().__init__(f"task {task}: {message}")
        self.task = task
