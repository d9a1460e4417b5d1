"""Exception hierarchy.

Every error carries an ``exit_code`` that the command line driver maps to the
process exit status: 2 for configuration problems, 3 for numerical failures
and 4 for violated geometric assumptions (tangential or vertex exits).
"""


class TravelTimeError(Exception):
    """Base class for all package errors."""

    exit_code = 1


class ConfigError(TravelTimeError, ValueError):
    exit_code = 2


class MeshError(TravelTimeError, ValueError):
    """Invalid mesh input (inverted, non-conforming, untagged)."""

    exit_code = 2


class PointLocationError(TravelTimeError, ValueError):
    exit_code = 3


class NumericalError(TravelTimeError, ArithmeticError):
    exit_code = 3


class SingularSystemError(NumericalError):
    pass


class TraceError(NumericalError):
    """The particle trajectory could not be completed."""


class StagnationError(TraceError):
    pass


class RecirculationError(TraceError):
    pass


class BudgetExceededError(TraceError):
    pass


class AssumptionViolation(TravelTimeError):
    """The trajectory breaks a hypothesis of the derivative formula."""

    exit_code = 4


class TangentialExitError(AssumptionViolation):
    pass


class VertexPassageError(AssumptionViolation):
    pass
