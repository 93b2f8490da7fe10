"""Exception hierarchy shared across the server."""


class PlazaError(Exception):
    """Base class for all domain errors."""


class ValidationFailure(PlazaError):
    def __init__(self, violations):
        self.violations = list(violations)
        super().__init__("; ".join(self.violations))


class StructuralIntegrityError(PlazaError):
    pass


class NotFoundError(PlazaError):
    pass


class AuthenticationError(PlazaError):
    pass


class AuthorizationError(PlazaError):
    pass


class SessionClosedError(PlazaError):
    pass


class BannedError(PlazaError):
    pass


class InvalidParentError(PlazaError):
    pass


class KindMismatchError(PlazaError):
    pass


class ReactionNotAllowedError(PlazaError):
    pass


class CapacityError(PlazaError):
    pass


class LifecycleError(PlazaError):
    pass


class SerializationViolation(PlazaError):
    """Event appended with the wrong sequence number: a programming bug."""


class ProviderError(PlazaError):
    pass
