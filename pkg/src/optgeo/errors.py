"""Exception hierarchy. CLI exit codes hang off these classes."""


class OptGeoError(Exception):
    exit_code = 1


class InputError(OptGeoError, ValueError):
    """Invalid caller input: bad coordinates, priors, metrics, files."""

    exit_code = 1


class StructuralError(OptGeoError):
    """A graph or model lacks a required structural property."""

    exit_code = 3


class SolverError(OptGeoError):
    """The LP solver did not return a certified optimum."""

    exit_code = 2

    def __init__(self, message, status=None):
        super().__init__(message)
        self.status = status


class CalibrationError(OptGeoError):
    exit_code = 2

    def __init__(self, message, attainable=None):
        super().__init__(message)
        self.attainable = attainable


class IngestError(InputError):
    def __init__(self, message, lines=()):
        super().__init__(message)
        self.lines = list(lines)


class InvariantError(OptGeoError):
    """An output artifact failed its own post-condition check."""

    exit_code = 3
