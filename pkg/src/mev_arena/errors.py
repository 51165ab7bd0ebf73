"""Exception hierarchy. CLI maps ValidationError to exit 1, the rest to 2."""


class MevArenaError(Exception):
    """Base class for all package errors."""


class ValidationError(MevArenaError):
    """Input (scenario, instance, transaction) violates its contract.

    ``violations`` lists every problem found, each a short named message.
    """

    def __init__(self, message, violations=None):
        super().__init__(message)
        self.violations = list(violations or [message])


class UnknownPlayer(MevArenaError, KeyError):
    pass


class CapExceeded(MevArenaError):
    """An exhaustive search would exceed its configured size cap."""

    def __init__(self, message, estimate=None):
        super().__init__(message)
        self.estimate = estimate


class NoQualifyingPlayer(MevArenaError):
    pass


class UndefinedCost(MevArenaError):
    """No null-state-reaching bundle exists, so the price of MEV has no denominator."""


class NotAnEquilibrium(MevArenaError):
    pass
