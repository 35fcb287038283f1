"""Exception hierarchy shared across the package."""


class VarlagError(Exception):
    """Base class for all errors raised by this package."""


class ExpressionError(VarlagError):
    """Problem with a symbolic expression (parsing or evaluation)."""


class ParseError(ExpressionError):
    """Syntax error in an expression string.

    Carries the byte offset of the offending token so callers can point at it.
    """

    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (at offset {offset})")
        self.offset = offset


class MissingBindingError(ExpressionError):
    """Evaluation was attempted without a value for a free variable."""


class EvaluationDomainError(ExpressionError):
    """Evaluation left the real domain (log/sqrt of a negative, division by zero)."""


class JetOrderError(VarlagError):
    """A jet coordinate beyond the declared order was requested."""


class ConfigError(VarlagError):
    """Invalid problem configuration."""


class TransitionDomainError(VarlagError):
    """A point fell outside every guard region of a transition map."""


class NotAffineError(VarlagError):
    """Source form is not affine in the accelerations."""

    def __init__(self, message: str, worst_point=None):
        super().__init__(message)
        self.worst_point = worst_point


class AsymmetricBError(VarlagError):
    """The two mixed acceleration coefficients disagree (Helmholtz failure)."""


class HelmholtzFailure(VarlagError):
    """An operation requiring local variationality was called on a failing source form."""


class HigherOrderResidueError(VarlagError):
    """Euler-Lagrange output depends on jet coordinates above order two."""


class NotSimpleError(VarlagError):
    """The position 2-form does not vanish; the simple construction does not apply."""


class TimeDependenceError(VarlagError):
    """Operation requires a time-independent source form."""


class NonzeroMassError(VarlagError):
    """Compactly supported Poincare input has nonvanishing total integral."""

    def __init__(self, message: str, mass: float):
        super().__init__(message)
        self.mass = mass


class ObstructionError(VarlagError):
    """Mass could not be pushed off the truncated cover while solving for exactness."""

    def __init__(self, message: str, c_last: float, diagnosis: str = ""):
        super().__init__(message)
        self.c_last = c_last
        self.diagnosis = diagnosis


class QuadratureError(VarlagError):
    """Composite quadrature failed to converge within the panel cap."""
