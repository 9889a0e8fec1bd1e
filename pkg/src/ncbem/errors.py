"""Exception hierarchy.  Each family maps to one CLI exit code."""


class NcbemError(Exception):
    category = "error"
    exit_code = 1


class ConfigError(NcbemError):
    category = "config error"
    exit_code = 2


class GeometryError(NcbemError):
    category = "geometry error"
    exit_code = 3


class LinkingError(GeometryError):
    category = "linking error"


class NoPartner(LinkingError):
    def __init__(self, message, findings=()):
        super().__init__(message)
        self.findings = list(findings)


class Ambiguous(LinkingError):
    def __init__(self, message, findings=()):
        super().__init__(message)
        self.findings = list(findings)


class MeshError(GeometryError):
    category = "mesh error"


class AssemblyError(NcbemError):
    category = "assembly error"
    exit_code = 4


class UnresolvedOverlap(AssemblyError):
    pass


class SolverError(NcbemError):
    category = "solver error"
    exit_code = 5


class SingularMatrix(SolverError):
    pass


class EvaluationError(NcbemError):
    category = "evaluation error"
    exit_code = 4


class PointOnSurface(EvaluationError):
    pass


class OracleError(NcbemError):
    category = "oracle error"
