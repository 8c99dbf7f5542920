"""Exception hierarchy.

Validation errors (bad input, infeasible requests) map to CLI exit code 2,
numerical failures during estimation map to exit code 3.
"""


class RHEMError(Exception):
    """Base class for all package errors."""


class ValidationError(RHEMError, ValueError):
    exit_code = 2


class NumericalError(RHEMError, ArithmeticError):
    exit_code = 3


# ingestion
class UnknownActor(ValidationError):
    pass


class DecreasingTime(ValidationError):
    pass


class EmptyReceiverSet(ValidationError):
    pass


class SelfLoop(ValidationError):
    pass


class MissingValue(ValidationError):
    pass


class UnknownKind(ValidationError):
    pass


class DuplicateActor(ValidationError):
    pass


class EmptyStream(ValidationError):
    pass


class FormatError(ValidationError):
    pass


# history / covariates
class OutOfOrderEvent(ValidationError):
    pass


class OrderExceeded(ValidationError):
    pass


class UnknownAttribute(ValidationError):
    pass


class InvalidSpec(ValidationError):
    pass


# sampling / risk sets
class InsufficientControls(ValidationError):
    def __init__(self, message, available=None):
        super().__init__(message)
        self.available = available


class RiskSetTooLarge(ValidationError):
    pass


class InfeasibleSize(ValidationError):
    pass


# estimation
class DimensionMismatch(ValidationError):
    pass


class NonIdentifiable(ValidationError):
    pass


class ConfigMismatch(ValidationError):
    pass


class Separation(NumericalError):
    def __init__(self, message, result=None):
        super().__init__(message)
        self.result = result


class SingularInformation(NumericalError):
    pass


class MaxIterations(NumericalError):
    def __init__(self, message, result=None):
        super().__init__(message)
        self.result = result


class DuplicateReceiverWarning(UserWarning):
    """A receiver was listed more than once on an event line."""


class CostWarning(UserWarning):
    """An operation will enumerate a very large number of keys."""
