"""DID-based secure messaging between simulated 5G core network functions."""

from didsba.errors import (
    AlreadyExistsError,
    DeliveryError,
    DidError,
    DidSyntaxError,
    EnvelopeFormatError,
    HandshakeError,
    IntegrityError,
    KeyMismatchError,
    MisdeliveryError,
    NotFoundError,
    ProtocolStateError,
    StartupError,
    UnauthorizedError,
    ValidationError,
    VdrUnavailableError,
)
from didsba.identity import Did, DidDocument, Identity, KeyKind, KeyPair, generate_identity, parse_did, sign, verify
from didsba.resolver import CachePolicy, Resolver, ResolverMetrics
from didsba.vdr import VdrConfig, VerifiableDataRegistry

__version__ = "0.1.0"

__all__ = [
    "AlreadyExistsError",
    "CachePolicy",
    "DeliveryError",
    "Did",
    "DidDocument",
    "DidError",
    "DidSyntaxError",
    "EnvelopeFormatError",
    "HandshakeError",
    "Identity",
    "IntegrityError",
    "KeyKind",
    "KeyMismatchError",
    "KeyPair",
    "MisdeliveryError",
    "NotFoundError",
    "ProtocolStateError",
    "Resolver",
    "ResolverMetrics",
    "StartupError",
    "UnauthorizedError",
    "ValidationError",
    "VdrConfig",
    "VdrUnavailableError",
    "VerifiableDataRegistry",
    "generate_identity",
    "parse_did",
    "sign",
    "verify",
]
