"""Exception hierarchy shared by every module."""


class TrustError(Exception):
    """Base class for errors raised by this package."""


class ContractError(TrustError, ValueError):
    """A precondition on an argument was violated (length, ordering, range)."""


class ConfigurationError(TrustError):
    """A boot chain, scenario or policy is not usable as configured."""


class ProvisioningError(TrustError):
    """Key material needed for an operation has not been provisioned."""


class ImmutabilityError(TrustError):
    """Attempt to modify immutable boot code."""


class NotFoundError(TrustError, LookupError):
    """A referenced stage, node or element does not exist."""


class InsufficientMeasurements(TrustError):
    """No subset of the available measurements covers every required check."""

    def __init__(self, uncovered):
        self.uncovered = sorted(uncovered)
        super().__init__("insufficient measurements: cannot cover " + ", ".join(self.uncovered))
