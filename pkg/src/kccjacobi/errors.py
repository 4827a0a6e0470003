"""Exception hierarchy shared by all modules."""

from __future__ import annotations


class KccError(Exception):
    """Base class for every error raised by kccjacobi."""


class ExprSyntaxError(KccError):
    """Malformed model file or expression text."""

    def __init__(self, message: str, line: int = 1, column: int = 1):
        self.message = message
        self.line = line
        self.column = column
        super().__init__(f"line {line}, column {column}: {message}")


class SemanticError(KccError):
    """Well-formed text that does not describe a valid model."""


class EvalError(KccError):
    """Numerical domain violation while evaluating an expression."""

    def __init__(self, message: str, node=None, component=None, derivative=None, t=None):
        self.message = message
        self.node = node
        self.component = component
        self.derivative = derivative
        self.t = t
        super().__init__(message)

    def __str__(self):
        where = []
        if self.component is not None:
            where.append(f"component x{self.component}'")
        if self.derivative:
            where.append("d/d" + "".join(f"x{k}" for k in self.derivative))
        if self.t is not None:
            where.append(f"t={self.t:.17g}")
        text = self.message
        if where:
            text += " [" + ", ".join(where) + "]"
        return text


class NonFiniteError(KccError):
    """Integrated state left the double-precision range."""

    def __init__(self, message: str, t: float | None = None):
        self.t = t
        super().__init__(message)


class ConvergenceError(KccError):
    """QR iteration exhausted its sweep budget."""

    def __init__(self, message: str, partial=()):
        self.partial = list(partial)
        super().__init__(message)


class SingularJacobian(KccError):
    """Newton step impossible because the Jacobian is singular."""


class NoConvergence(KccError):
    """Newton iteration did not reach the residual tolerance."""


class TooFewSamples(KccError):
    """A finite-difference stencil needs more samples than were supplied."""


class DomainWarning(UserWarning):
    """A derivative introduced ln or division, so it may be singular somewhere."""
