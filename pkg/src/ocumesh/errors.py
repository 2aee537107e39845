"""Exception types shared across the package."""


class OcumeshError(Exception):
    """Base class for all package errors."""


class ParameterError(OcumeshError, ValueError):
    """Invalid argument value or shape."""


class EstimationError(OcumeshError):
    """Point-set alignment failed (degenerate or mismatched inputs)."""


class DecompositionError(OcumeshError):
    """A transform matrix is not a positive similarity."""


class FitError(OcumeshError):
    """Eyeball fitting failed on the given landmarks."""


class DataFormatError(OcumeshError):
    """Malformed input document; carries file/line context when known."""

    def __init__(self, message, path=None, line=None):
        context = []
        if path is not None:
            context.append(str(path))
        if line is not None:
            context.append(f"line {line}")
        prefix = ", ".join(context)
        super().__init__(f"{prefix}: {message}" if prefix else message)
        self.path = path
        self.line = line


class TrainingDivergedError(OcumeshError):
    """Loss became non-finite during optimization."""
