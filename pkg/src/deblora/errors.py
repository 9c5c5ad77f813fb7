"""Exception hierarchy; the CLI maps each family to an exit code."""


class DebLoraError(Exception):
    exit_code = 1
    stage: str | None = None


class ValidationError(DebLoraError, ValueError):
    pass


class FormatError(ValidationError):
    pass


class InfeasibleConstraintError(ValidationError):
    pass


class IoError(DebLoraError, OSError):
    exit_code = 2


class NumericError(DebLoraError, ArithmeticError):
    exit_code = 3


class DivergenceError(NumericError):
    pass


class DegenerateVectorError(NumericError):
    pass


class InternalError(DebLoraError, RuntimeError):
    exit_code = 3
