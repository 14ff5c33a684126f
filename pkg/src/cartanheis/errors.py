"""Exception taxonomy shared across the toolkit."""


class GeometryError(Exception):
    """Base for all toolkit errors."""


class DimensionMismatch(GeometryError):
    pass


class BaseMismatch(GeometryError):
    """Two tangent vectors anchored at different points."""


class NonHorizontal(GeometryError):
    """Operation requires a vector in the contact plane."""


class InvalidFrame(GeometryError):
    pass


class DomainError(GeometryError):
    """Evaluation left the domain of ln/sqrt/division."""


class OutOfChart(GeometryError):
    pass


class NotImmersed(GeometryError):
    """Jacobian rank fell below the chart dimension."""


class SingularPoint(GeometryError):
    """dim(TM ∩ ker Θ) differs from 2m at some chart point."""

    def __init__(self, msg, location=None):
        super().__init__(msg)
        self.location = location


class NotCRInvariant(GeometryError):
    """TM ∩ ker Θ is not invariant under the ambient complex structure."""

    def __init__(self, msg, location=None, residual=None):
        super().__init__(msg)
        self.location = location
        self.residual = residual


class LinearSolveFailure(GeometryError):
    pass


class IllConditionedCoframe(GeometryError):
    pass


class WrongClass(GeometryError):
    """Operation restricted to vertical / completely non-vertical inputs."""


class NotFlat(GeometryError):
    pass


class NotTorsionFree(GeometryError):
    pass


class DegeneratePoint(GeometryError):
    pass


class IntegrabilityFailure(GeometryError):
    pass


class ProjectionDrift(GeometryError):
    pass


class DslError(GeometryError):
    """Base for surface-language errors; carries a source location."""

    def __init__(self, msg, line=None, col=None):
        loc = f" (line {line}, col {col})" if line is not None else ""
        super().__init__(msg + loc)
        self.line = line
        self.col = col


class DslSyntaxError(DslError):
    pass


class UndeclaredParameter(DslError):
    pass


class DslDimensionMismatch(DslError):
    pass


class UnknownBuiltin(GeometryError):
    pass
