"""Exception hierarchy shared by all jetflow modules."""

from __future__ import annotations


class JetflowError(Exception):
    """Base class for every error raised by jetflow."""


class InputError(JetflowError):
    """Bad user input: malformed expressions, model files, shapes."""


class NumericalError(JetflowError):
    """A numerical procedure failed at some evaluation point."""


# -- expressions --------------------------------------------------------------

class ExprSyntaxError(InputError):
    def __init__(self, message: str, position: int, text: str = ""):
        self.message = message
        self.position = position
        self.text = text
        super().__init__(f"{message} at offset {position}")


class UnknownIdentifier(InputError):
    def __init__(self, name: str, position: int):
        self.name = name
        self.position = position
        super().__init__(f"unknown identifier {name!r} at offset {position}")


class ArityError(InputError):
    def __init__(self, func: str, expected: int, got: int, position: int):
        self.func = func
        self.position = position
        super().__init__(
            f"{func}() takes {expected} argument(s), got {got} (offset {position})"
        )


class DomainError(NumericalError):
    """Evaluation left the domain of an elementary function."""


# -- geometry / dynamics ------------------------------------------------------

class ShapeError(InputError):
    pass


class DegenerateMetric(NumericalError):
    def __init__(self, message: str, point=None):
        self.point = point
        if point is not None:
            message = f"{message} at {point!r}"
        super().__init__(message)


class NotRiemannian(NumericalError):
    pass


class InadmissibleConstraint(NumericalError):
    def __init__(self, message: str, point=None):
        self.point = point
        if point is not None:
            message = f"{message} at {point!r}"
        super().__init__(message)


class RankError(InputError):
    pass


class PartitionError(InputError):
    pass


class SingularKKT(NumericalError):
    pass


class NonConvergence(NumericalError):
    pass


# -- integration --------------------------------------------------------------

class RankDropped(NumericalError):
    def __init__(self, t: float, detail: str = ""):
        self.t = t
        msg = f"constraint admissibility lost at t={t!r}"
        if detail:
            msg += f": {detail}"
        super().__init__(msg)


class NonFinite(NumericalError):
    def __init__(self, t: float):
        self.t = t
        super().__init__(f"non-finite state at t={t!r}")


class GridMismatch(InputError):
    pass


class OffConstraint(InputError):
    """Initial condition does not lie on a submanifold constraint."""

    def __init__(self, residual: float, tol: float):
        self.residual = residual
        self.tol = tol
        super().__init__(
            f"initial state is off the constraint: |f| = {residual:.3e} > {tol:g}"
        )


# -- model files --------------------------------------------------------------

class ModelParseError(InputError):
    def __init__(self, message: str, line: int | None = None, column: int | None = None):
        self.line = line
        self.column = column
        where = ""
        if line is not None:
            where = f" (line {line}" + (f", column {column})" if column else ")")
        super().__init__(message + where)


class ValidationError(InputError):
    def __init__(self, field: str, message: str):
        self.field = field
        super().__init__(f"{field}: {message}")
