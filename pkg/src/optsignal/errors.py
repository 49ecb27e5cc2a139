"""Exception hierarchy.

``ValidationError`` subclasses signal bad inputs or configuration (CLI exit
code 2); ``NumericalError`` subclasses signal a problem the data poses to the
solver (CLI exit code 3).
"""


class SignalError(Exception):
    """Base class for every error raised by this package."""


class ValidationError(SignalError):
    pass


class NumericalError(SignalError):
    pass


class AlreadyAugmented(ValidationError):
    pass


class MisalignedIndex(ValidationError):
    pass


class NonFinite(ValidationError):
    pass


class InsufficientData(ValidationError):
    pass


class ConstantColumn(ValidationError):
    pass


class InsufficientHistory(ValidationError):
    pass


class ConfigConflict(ValidationError):
    pass


class ConfigError(ValidationError):
    pass


class DimensionMismatch(ValidationError):
    pass


class ParseError(ValidationError):
    pass


class EmptyIntersection(ValidationError):
    pass


class UnsortedInput(ValidationError):
    pass


class DegenerateVariance(NumericalError):
    pass


class SingularCovariance(NumericalError):
    def __init__(self, message=None, condition_number=None):
        if message is None:
            message = "covariance matrix is singular or ill-conditioned"
        message += "; enable L2 (--l2-lambda) or PCA (--pca-k) regularization"
        super().__init__(message)
        self.condition_number = condition_number


class ZeroMeanVector(NumericalError):
    pass


class DegenerateConstraint(NumericalError):
    pass


class RankDeficient(NumericalError):
    pass


class EmptyModel(NumericalError):
    """Every coefficient failed the significance test."""

    def __init__(self, message, p_values=None):
        super().__init__(message)
        self.p_values = p_values


class NotConverged(NumericalError):
    def __init__(self, message, best_alpha=None, gap=None):
        super().__init__(message)
        self.best_alpha = best_alpha
        self.gap = gap


class ZeroVolatility(NumericalError):
    pass
