"""Exception types shared across the package."""


class InvalidArgument(ValueError):
    """Shapes, counts or modes that do not fit together."""


class InvalidGeometry(ValueError):
    """Imaging geometry that cannot be realised (e.g. source inside the object)."""


class InvalidState(RuntimeError):
    """Model state for which the requested quantity is undefined."""


class CoverageError(ValueError):
    """Parallel angles do not cover the angular range needed for a fan projection."""

    def __init__(self, message, missing=()):
        super().__init__(message)
        self.missing = tuple(missing)


class TrainingDiverged(RuntimeError):
    """Loss became non-finite. ``model`` and ``report`` hold the last finite state."""

    def __init__(self, message, model=None, report=None):
        super().__init__(message)
        self.model = model
        self.report = report
