"""Exception hierarchy.

Everything subclasses :class:`ProtagError` and, where it makes sense,
``ValueError`` so that sklearn-style callers catching ``ValueError`` keep
working.
"""


class ProtagError(Exception):
    """Base class for all package errors."""


class LengthMismatch(ProtagError, ValueError):
    pass


class NonFiniteFeature(ProtagError, ValueError):
    pass


class MissingClass(ProtagError, ValueError):
    """A required label class is absent (optionally from a named CV fold)."""

    def __init__(self, message, fold=None):
        if fold is not None:
            message = f"fold {fold}: {message}"
        super().__init__(message)
        self.fold = fold


class TooFewSamples(ProtagError, ValueError):
    pass


class EmptyDataset(ProtagError, ValueError):
    pass


class DimMismatch(ProtagError, ValueError):
    pass


class InvalidNoise(ProtagError, ValueError):
    pass


class ModeMismatch(ProtagError, ValueError):
    pass


class DivergedTraining(ProtagError, RuntimeError):
    pass


class ConfigError(ProtagError, ValueError):
    pass
