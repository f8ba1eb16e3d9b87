"""Exception hierarchy shared by every geoseg module."""


class GeosegError(Exception):
    """Base class for all errors raised by geoseg."""


class BoundsError(GeosegError, IndexError):
    """A window or coordinate falls outside a raster."""


class ShapeError(GeosegError, ValueError):
    """Inputs that must share dimensions do not."""


class ConfigurationError(GeosegError, ValueError):
    """Parameters are inconsistent or infeasible."""


class InputError(GeosegError, ValueError):
    """A caller-supplied value is invalid (empty, non-positive, ...)."""


class FormatError(GeosegError):
    """A file does not decode according to its format."""


class ConsistencyError(GeosegError):
    """Two artifacts describing the same dataset disagree."""


class DataError(GeosegError):
    """Pixel content violates the dataset contract (e.g. unknown class id)."""


class IncompletePredictionError(GeosegError):
    """Logits are missing for one or more tiles."""

    def __init__(self, missing):
        self.missing = sorted(missing)
        shown = ", ".join(str(i) for i in self.missing[:20])
        more = "" if len(self.missing) <= 20 else f" (+{len(self.missing) - 20} more)"
        super().__init__(f"no logits for tile indices: {shown}{more}")


class WorkspaceLockedError(GeosegError):
    """Another pipeline instance owns the workspace."""


class TaskFailedError(GeosegError):
    def __init__(self, task, cause):
        self.task = task
        self.cause = cause
        super().__init__(f"task {task!r} failed: {cause}")
