"""Exception and warning classes shared by all modules."""


class MRXError(Exception):
    """Base class for domain errors raised by mrxsim."""


class ValidationError(MRXError, ValueError):
    """Inputs violate a documented precondition (bad setup/config, bad argument)."""

    def __init__(self, message, violations=()):
        super().__init__(message)
        self.violations = list(violations)


class GeometryError(MRXError, ValueError):
    """Geometry is singular, e.g. a sensor or dipole coil sits on a voxel center."""


class FormatError(MRXError):
    """A file could not be parsed. ``path`` and ``line`` locate the problem."""

    def __init__(self, message, path=None, line=None):
        loc = ""
        if path is not None:
            loc = f"{path}"
            if line is not None:
                loc += f":{line}"
            loc += ": "
        super().__init__(loc + message)
        self.path = path
        self.line = line


class MRXWarning(UserWarning):
    """Recoverable oddities: ignored segments, normalized normals, dropped sensors."""
