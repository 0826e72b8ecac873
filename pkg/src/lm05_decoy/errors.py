"""Exception hierarchy shared by all modules."""


class Lm05Error(Exception):
    """Base class for package errors."""


class DomainError(Lm05Error, ValueError):
    """An argument lies outside the mathematical domain of an operation."""


class DegenerateDenominatorError(Lm05Error, ZeroDivisionError):
    """A model quantity would be divided by zero."""


class InvalidIntensitiesError(DomainError):
    """Signal/decoy intensities violate 0 < nu < mu (or a bound's own constraint)."""


class SchemeMismatchError(Lm05Error, ValueError):
    """A bound set was passed to a key-rate formula of a different family."""


class ConfigurationError(Lm05Error, ValueError):
    """Invalid parameter file, optimizer configuration or simulation setup."""


class UsageError(Lm05Error, ValueError):
    """A caller asked for something the inputs cannot provide."""
