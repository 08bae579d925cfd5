"""Exception hierarchy shared by every solver module."""


class SolverError(Exception):
    """Base class for all errors raised by esdgsem."""


class NonPhysicalComposition(SolverError):
    pass


class Inadmissible(SolverError):
    pass


class NonPositiveArgument(SolverError):
    pass


class DegenerateFan(SolverError):
    pass


class VacuumGenerated(SolverError):
    pass


class BadExtent(SolverError):
    pass


class ParseError(SolverError):
    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class TopologyError(SolverError):
    pass


class DegenerateElement(SolverError):
    pass


class UnknownTag(SolverError):
    pass


class CFLViolation(SolverError):
    pass


class UnsupportedDegree(SolverError):
    pass


class AverageInadmissible(SolverError):
    pass


class StepLimitExceeded(SolverError):
    pass


class MeshMismatch(SolverError):
    pass


class ConfigError(SolverError):
    pass


class IoError(SolverError):
    pass
