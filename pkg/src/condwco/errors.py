"""Exception types shared across the package."""


class InvalidInput(ValueError):
    """Malformed function, set or parameter."""


class CapExceeded(RuntimeError):
    """An enumeration would exceed its configured size cap."""


class DomainError(ValueError):
    """An operation was asked to leave its mathematical domain."""


class DivisionDomainError(DomainError):
    """A required divisor vanished; ``atom`` names the offending atom index."""

    def __init__(self, message, atom=None):
        super().__init__(message)
        self.atom = atom


class UnsupportedOperation(ValueError):
    """The structural precondition an operation relies on does not hold."""


class HypothesisNotMet(ValueError):
    """A criterion precondition failed; ``value`` carries the measured quantity."""

    def __init__(self, message, value=None):
        super().__init__(message)
        self.value = value


class ConfigurationError(ValueError):
    """Scenario parameters are inconsistent."""


class IntegrityError(ValueError):
    """A scenario references an atom or partition that does not exist."""
