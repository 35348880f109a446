"""Exception hierarchy.

Every error raised on purpose by the library derives from ``DriftscopeError``.
The CLI maps ``ValidationError`` subclasses to exit code 1, ``ComputationError``
subclasses to 2 and ``ProviderError`` to 3.
"""


class DriftscopeError(Exception):
    """Base class for library errors."""


class ValidationError(DriftscopeError, ValueError):
    """Bad input: wrong shape, missing column, out-of-range parameter."""


class ComputationError(DriftscopeError, RuntimeError):
    """A well-formed request that cannot be computed."""


class ParseError(ValidationError):
    def __init__(self, message, row=None, column=None):
        super().__init__(message)
        self.row = row
        self.column = column


class MissingColumn(ValidationError):
    pass


class UnknownColumn(ValidationError):
    pass


class SchemaMismatch(ValidationError):
    pass


class EmptyDataset(ValidationError):
    pass


class UnlabeledDataset(ValidationError):
    pass


class DimensionMismatch(ValidationError):
    pass


class LengthMismatch(DimensionMismatch):
    pass


class ZeroVector(ValidationError):
    pass


class TooFewRows(ValidationError):
    pass


class TooFewItems(ValidationError):
    pass


class EmptyPrototypeSet(ValidationError):
    pass


class NoPrototypes(EmptyPrototypeSet):
    pass


class IndexOutOfRange(ValidationError, IndexError):
    pass


class EmptyBackground(ValidationError):
    pass


class SingleClass(ValidationError):
    pass


class IdenticalGifims(ComputationError):
    pass


class EmptyRemainder(ComputationError):
    pass


class SingularHessian(ComputationError):
    pass


class NonConvergence(ComputationError):
    def __init__(self, message, model=None):
        super().__init__(message)
        self.model = model


class InvalidSpec(ValidationError):
    pass


class EmptyAttributeSet(ValidationError):
    pass


class EmptyDocument(ValidationError):
    pass


class ProviderError(DriftscopeError):
    """The language-model provider kept failing after all retries."""

    def __init__(self, message, partial=None, attempts=0):
        super().__init__(message)
        self.partial = partial
        self.attempts = attempts
