"""Exception types raised by fvlab."""


class DomainError(ValueError):
    """An argument lies outside the domain of an operation."""


class SpecParseError(ValueError):
    """A measure / process specification string could not be parsed."""


class UndeterminedError(RuntimeError):
    """A numerical classification was inconclusive and a decision was required."""


class EventCapExceeded(RuntimeError):
    """A simulation produced more events than the configured cap allows."""
