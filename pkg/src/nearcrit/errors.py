"""Exception types shared across the package."""


class NearcritError(Exception):
    """Base class for all package errors."""


class ParameterError(NearcritError, ValueError):
    """A parameter is outside its admissible range."""


class SizeError(NearcritError):
    """A graph or enumeration exceeds the configured budget."""


class ContractError(NearcritError):
    """An argument violates an operation's precondition."""


class StructureError(NearcritError):
    """A graph does not have the required combinatorial structure."""


class GeometryError(NearcritError):
    """A geometric construction is not defined for the given input."""


class InvariantViolation(NearcritError):
    """An input object breaks an invariant it is required to satisfy."""


class ConvergenceError(NearcritError):
    """An iterative routine hit its iteration cap.

    Attributes:
        residual: the last measured violation when the cap was reached.
    """

    def __init__(self, message: str, residual: float):
        super().__init__(f"{message} (residual={residual:.3e})")
        self.residual = residual
