"""DIDs, key pairs, DID documents and the raw signature primitives.

Signing keys are Ed25519, key-agreement keys X25519 (both via libsodium).
A DID subject is the base58 encoding of the first 16 bytes of
SHA-256(initial signing public key), so a fresh DID is self-certifying.
"""

from __future__ import annotations

import hashlib
import os
import random
import re
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Any, Iterable

import base58
import nacl.bindings
import nacl.exceptions
import nacl.signing

from didsba.encoding import canonical_json, multibase_b58, multibase_decode
from didsba.errors import DidSyntaxError, ValidationError

DEFAULT_METHOD = "sba"

_METHOD_RE = re.compile(r"^[a-z0-9]+$")
_SUBJECT_RE = re.compile(r"^[1-9A-HJ-NP-Za-km-z]+$")  # base58btc alphabet

SIGNATURE_SIZE = 64
KEY_SIZE = 32


class KeyKind(str, Enum):
    SIGNING = "signing"
    KEY_AGREEMENT = "key-agreement"


# multicodec prefixes: ed25519-pub, x25519-pub
_MULTICODEC = {KeyKind.SIGNING: b"\xed\x01", KeyKind.KEY_AGREEMENT: b"\xec\x01"}
_VM_TYPE = {
    KeyKind.SIGNING: "Ed25519VerificationKey2020",
    KeyKind.KEY_AGREEMENT: "X25519KeyAgreementKey2020",
}
_VM_KIND = {v: k for k, v in _VM_TYPE.items()}


@dataclass(frozen=True, order=True)
class Did:
    method: str
    subject: str

    def __post_init__(self) -> None:
        if not self.method or not _METHOD_RE.match(self.method):
            raise DidSyntaxError(f"invalid DID method {self.method!r}")
        if not self.subject or not _SUBJECT_RE.match(self.subject):
            raise DidSyntaxError(f"invalid DID subject {self.subject!r}")

    def __str__(self) -> str:
        return f"did:{self.method}:{self.subject}"

    def key_id(self, fragment: str) -> str:
        return f"{self}#{fragment}"


def parse_did(text: str) -> Did:
    """Parse ``did:<method>:<subject>``; raises DidSyntaxError on anything else."""
    if not isinstance(text, str) or not text.startswith("did:"):
        raise DidSyntaxError(f"not a DID: {text!r}")
    parts = text.split(":")
    if len(parts) != 3:
        raise DidSyntaxError(f"expected exactly 3 colon-separated parts: {text!r}")
    _, method, subject = parts
    if not method or not subject:
        raise DidSyntaxError(f"empty DID segment: {text!r}")
    return Did(method, subject)


def as_did(value: Did | str) -> Did:
    return value if isinstance(value, Did) else parse_did(value)


def did_of_key_id(key_id: str) -> Did:
    base, sep, fragment = key_id.partition("#")
    if not sep or not fragment:
        raise DidSyntaxError(f"key id lacks a fragment: {key_id!r}")
    return parse_did(base)


def derive_subject(signing_public: bytes) -> str:
    return base58.b58encode(hashlib.sha256(signing_public).digest()[:16]).decode("ascii")


def encode_public_key(kind: KeyKind, public: bytes) -> str:
    return multibase_b58(_MULTICODEC[kind] + public)


def decode_public_key(kind: KeyKind, text: str) -> bytes:
    raw = multibase_decode(text)
    if raw[:2] != _MULTICODEC[kind] or len(raw) != 2 + KEY_SIZE:
        raise ValidationError(f"not a multibase {kind.value} key")
    return raw[2:]


@dataclass(frozen=True)
class KeyPair:
    kind: KeyKind
    public: bytes = field(repr=False)
    secret: bytes = field(repr=False)
    key_id: str = ""

    @classmethod
    def from_secret(cls, kind: KeyKind, secret: bytes, key_id: str = "") -> KeyPair:
        if len(secret) != KEY_SIZE:
            raise ValidationError("secret key must be 32 bytes")
        if kind is KeyKind.SIGNING:
            public = bytes(nacl.signing.SigningKey(secret).verify_key)
        else:
            public = nacl.bindings.crypto_scalarmult_base(secret)
        return cls(kind, public, secret, key_id)

    @classmethod
    def generate(cls, kind: KeyKind, rng: random.Random | None = None, key_id: str = "") -> KeyPair:
        secret = rng.randbytes(KEY_SIZE) if rng is not None else os.urandom(KEY_SIZE)
        return cls.from_secret(kind, secret, key_id)


@dataclass(frozen=True)
class VerificationMethod:
    key_id: str
    kind: KeyKind
    public: bytes

    def to_dict(self, controller: Did) -> dict[str, str]:
        return {
            "id": self.key_id,
            "type": _VM_TYPE[self.kind],
            "controller": str(controller),
            "publicKeyMultibase": encode_public_key(self.kind, self.public),
        }

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> VerificationMethod:
        try:
            kind = _VM_KIND[data["type"]]
            return cls(data["id"], kind, decode_public_key(kind, data["publicKeyMultibase"]))
        except KeyError as exc:
            raise ValidationError(f"malformed verification method: missing {exc}") from exc


@dataclass(frozen=True)
class ServiceEndpoint:
    id: str
    type: str
    uri: str


@dataclass(frozen=True)
class DidDocument:
    """Public part of an identity. ``version`` is the ledger version it represents."""

    id: Did
    verification_methods: tuple[VerificationMethod, ...]
    service_endpoints: tuple[ServiceEndpoint, ...] = ()
    version: int = 1

    def __post_init__(self) -> None:
        kinds = {vm.kind for vm in self.verification_methods}
        if KeyKind.SIGNING not in kinds or KeyKind.KEY_AGREEMENT not in kinds:
            raise ValidationError("document needs a signing and a key-agreement key")
        ids = [vm.key_id for vm in self.verification_methods]
        if len(set(ids)) != len(ids):
            raise ValidationError("duplicate key id in document")
        for key_id in ids:
            if did_of_key_id(key_id) != self.id:
                raise ValidationError(f"key {key_id} does not belong to {self.id}")

    def keys(self, kind: KeyKind) -> list[VerificationMethod]:
        return [vm for vm in self.verification_methods if vm.kind is kind]

    @property
    def signing_key(self) -> VerificationMethod:
        return self.keys(KeyKind.SIGNING)[0]

    @property
    def agreement_key(self) -> VerificationMethod:
        return self.keys(KeyKind.KEY_AGREEMENT)[0]

    def method(self, key_id: str) -> VerificationMethod | None:
        for vm in self.verification_methods:
            if vm.key_id == key_id:
                return vm
        return None

    @property
    def endpoint(self) -> str | None:
        return self.service_endpoints[0].uri if self.service_endpoints else None

    def to_dict(self) -> dict[str, Any]:
        return {
            "@context": "https://www.w3.org/ns/did/v1",
            "id": str(self.id),
            "verificationMethod": [vm.to_dict(self.id) for vm in self.verification_methods],
            "service": [
                {"id": s.id, "type": s.type, "serviceEndpoint": s.uri} for s in self.service_endpoints
            ],
            "version": self.version,
        }

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> DidDocument:
        try:
            return cls(
                id=parse_did(data["id"]),
                verification_methods=tuple(VerificationMethod.from_dict(v) for v in data["verificationMethod"]),
                service_endpoints=tuple(
                    ServiceEndpoint(s["id"], s["type"], s["serviceEndpoint"]) for s in data.get("service", [])
                ),
                version=int(data.get("version", 1)),
            )
        except (KeyError, TypeError) as exc:
            raise ValidationError(f"malformed DID document: {exc}") from exc

    def canonical_bytes(self) -> bytes:
        return canonical_json(self.to_dict())

    def with_endpoint(self, uri: str, version: int | None = None) -> DidDocument:
        svc = ServiceEndpoint(self.id.key_id("didcomm"), "DIDCommMessaging", uri)
        return replace(self, service_endpoints=(svc,), version=self.version + 1 if version is None else version)


def sign(secret: bytes, message: bytes) -> bytes:
    """Deterministic Ed25519 signature (64 bytes) over ``message``."""
    return nacl.signing.SigningKey(secret).sign(message).signature


def verify(public: bytes, message: bytes, signature: bytes) -> bool:
    if len(signature) != SIGNATURE_SIZE or len(public) != KEY_SIZE:
        return False
    try:
        nacl.signing.VerifyKey(public).verify(message, signature)
    except (nacl.exceptions.BadSignatureError, nacl.exceptions.CryptoError, ValueError, TypeError):
        return False
    return True


def generate_identity(
    method: str = DEFAULT_METHOD, endpoint_uri: str = "", rng: random.Random | None = None
) -> tuple[Did, DidDocument, list[KeyPair]]:
    if not isinstance(method, str) or not _METHOD_RE.match(method):
        raise DidSyntaxError(f"invalid DID method {method!r}")
    signing = KeyPair.generate(KeyKind.SIGNING, rng)
    agreement = KeyPair.generate(KeyKind.KEY_AGREEMENT, rng)
    did = Did(method, derive_subject(signing.public))
    signing = replace(signing, key_id=did.key_id("key-1"))
    agreement = replace(agreement, key_id=did.key_id("key-2"))
    services: tuple[ServiceEndpoint, ...] = ()
    if endpoint_uri:
        services = (ServiceEndpoint(did.key_id("didcomm"), "DIDCommMessaging", endpoint_uri),)
    document = DidDocument(
        id=did,
        verification_methods=(
            VerificationMethod(signing.key_id, signing.kind, signing.public),
            VerificationMethod(agreement.key_id, agreement.kind, agreement.public),
        ),
        service_endpoints=services,
        version=1,
    )
    return did, document, [signing, agreement]


@dataclass(frozen=True)
class Identity:
    """A DID together with its private keys, as held in a wallet."""

    did: Did
    document: DidDocument
    keys: tuple[KeyPair, ...] = field(repr=False)

    @classmethod
    def generate(
        cls, method: str = DEFAULT_METHOD, endpoint_uri: str = "", rng: random.Random | None = None
    ) -> Identity:
        did, document, keys = generate_identity(method, endpoint_uri, rng)
        return cls(did, document, tuple(keys))

    def key(self, kind: KeyKind) -> KeyPair:
        for k in self.keys:
            if k.kind is kind:
                return k
        raise ValidationError(f"identity has no {kind.value} key")

    @property
    def signing_key(self) -> KeyPair:
        return self.key(KeyKind.SIGNING)

    @property
    def agreement_key(self) -> KeyPair:
        return self.key(KeyKind.KEY_AGREEMENT)

    def sign(self, message: bytes) -> bytes:
        return sign(self.signing_key.secret, message)

    def sign_document(self, document: DidDocument | None = None) -> bytes:
        """Write proof for the VDR: signature over the document's canonical bytes."""
        return self.sign((document or self.document).canonical_bytes())

    def with_document(self, document: DidDocument) -> Identity:
        return replace(self, document=document)

    def public_view(self) -> dict[str, Any]:
        return {"did": str(self.did), "document": self.document.to_dict()}


def scan_for_secrets(document: DidDocument, keys: Iterable[KeyPair]) -> bool:
    """True if any secret key bytes (raw or encoded) occur in the serialized document."""
    blob = document.canonical_bytes()
    for k in keys:
        for needle in (k.secret, k.secret.hex().encode(), base58.b58encode(k.secret)):
            if needle in blob:
                return True
    return False
