"""Exception hierarchy shared by every module."""


class DidError(Exception):
    """Base class for all errors raised by didsba."""


class DidSyntaxError(DidError, ValueError):
    pass


class ValidationError(DidError, ValueError):
    pass


class AlreadyExistsError(DidError):
    pass


class NotFoundError(DidError, KeyError):
    def __str__(self) -> str:
        return Exception.__str__(self)


class UnauthorizedError(DidError):
    """Authenticity failure: wrong key, wrong owner, unknown sender."""


class KeyMismatchError(UnauthorizedError):
    pass


class MisdeliveryError(UnauthorizedError):
    """Envelope is addressed to a different DID than the one unpacking it."""


class HolderMismatchError(UnauthorizedError):
    pass


class HandshakeError(UnauthorizedError):
    """A channel could not be established because peer credentials did not validate."""


class IntegrityError(DidError):
    """Authenticated decryption failed or the envelope was altered in transit."""


class EnvelopeFormatError(IntegrityError):
    """Envelope bytes cannot be parsed, or belong to another protocol variant."""


class ProtocolStateError(DidError):
    pass


class VdrUnavailableError(DidError):
    pass


class StartupError(DidError):
    pass


class DeliveryError(DidError):
    def __init__(self, message: str, phase: str = "unknown") -> None:
        super().__init__(message)
        self.phase = phase
