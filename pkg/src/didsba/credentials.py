"""Verifiable credentials used as NF authorization tokens.

The NRF defines a schema and a revocation registry on the VDR, issues
credentials to NFs, and a verifying NF checks a nonce-bound presentation
against the issuer's and holder's DID documents.

Wire format (both credential and presentation) is canonical JSON: sorted
keys, no whitespace. Signatures and nonces are multibase base64url
(``u`` prefix), so their encoded length does not depend on their value.
"""

from __future__ import annotations

import json
import os
import time
import uuid
from dataclasses import dataclass, replace
from enum import Enum
from typing import Any, Mapping

from didsba.encoding import canonical_json, multibase_b64u, multibase_decode
from didsba.errors import HolderMismatchError, NotFoundError, ValidationError
from didsba.identity import Did, DidDocument, Identity, KeyKind, as_did, verify
from didsba.resolver import Resolver
from didsba.vdr import SchemaRecord, VerifiableDataRegistry, registry_proof_payload, revoke_proof_payload

NF_AUTHORIZATION_ATTRIBUTES = ("nf_type", "allowed_service", "expiry")
NONCE_SIZE = 16


class Verdict(str, Enum):
    GRANTED = "granted"
    DENIED = "denied"


class Reason(str, Enum):
    OK = "ok"
    BAD_ISSUER_SIGNATURE = "bad_issuer_signature"
    BAD_HOLDER_SIGNATURE = "bad_holder_signature"
    REVOKED = "revoked"
    SCHEMA_MISMATCH = "schema_mismatch"
    NONCE_MISMATCH = "nonce_mismatch"
    HOLDER_MISMATCH = "holder_mismatch"
    EXPIRED = "expired"


@dataclass(frozen=True)
class VerificationOutcome:
    verdict: Verdict
    reason: Reason

    @classmethod
    def deny(cls, reason: Reason) -> VerificationOutcome:
        return cls(Verdict.DENIED, reason)

    @property
    def granted(self) -> bool:
        return self.verdict is Verdict.GRANTED


GRANTED = VerificationOutcome(Verdict.GRANTED, Reason.OK)


@dataclass(frozen=True)
class VerifiableCredential:
    credential_id: str
    schema_id: str
    issuer: Did
    subject: Did
    claims: Mapping[str, str]
    registry_id: str
    issuance_time: int
    issuer_signature: bytes = b""

    def unsigned_dict(self) -> dict[str, Any]:
        return {
            "credential_id": self.credential_id,
            "schema_id": self.schema_id,
            "issuer": str(self.issuer),
            "subject": str(self.subject),
            "claims": dict(self.claims),
            "registry_id": self.registry_id,
            "issuance_time": self.issuance_time,
        }

    def canonical_bytes(self) -> bytes:
        return canonical_json(self.unsigned_dict())

    def to_dict(self) -> dict[str, Any]:
        return {**self.unsigned_dict(), "issuer_signature": multibase_b64u(self.issuer_signature)}

    def to_bytes(self) -> bytes:
        return canonical_json(self.to_dict())

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> VerifiableCredential:
        try:
            return cls(
                credential_id=data["credential_id"],
                schema_id=data["schema_id"],
                issuer=as_did(data["issuer"]),
                subject=as_did(data["subject"]),
                claims={str(k): str(v) for k, v in data["claims"].items()},
                registry_id=data["registry_id"],
                issuance_time=int(data["issuance_time"]),
                issuer_signature=multibase_decode(data["issuer_signature"]),
            )
        except (KeyError, TypeError, AttributeError) as exc:
            raise ValidationError(f"malformed credential: {exc}") from exc

    @classmethod
    def from_bytes(cls, data: bytes) -> VerifiableCredential:
        return cls.from_dict(json.loads(data))


@dataclass(frozen=True)
class VerifiablePresentation:
    credential: VerifiableCredential
    holder: Did
    nonce: bytes
    holder_signature: bytes

    def to_dict(self) -> dict[str, Any]:
        return {
            "credential": self.credential.to_dict(),
            "holder": str(self.holder),
            "nonce": multibase_b64u(self.nonce),
            "holder_signature": multibase_b64u(self.holder_signature),
        }

    def to_bytes(self) -> bytes:
        return canonical_json(self.to_dict())

    @classmethod
    def from_bytes(cls, data: bytes) -> VerifiablePresentation:
        try:
            d = json.loads(data)
            return cls(
                credential=VerifiableCredential.from_dict(d["credential"]),
                holder=as_did(d["holder"]),
                nonce=multibase_decode(d["nonce"]),
                holder_signature=multibase_decode(d["holder_signature"]),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise ValidationError(f"malformed presentation: {exc}") from exc


def presentation_payload(credential: VerifiableCredential, nonce: bytes) -> bytes:
    return credential.canonical_bytes() + nonce


def new_nonce() -> bytes:
    return os.urandom(NONCE_SIZE)


def define_schema(
    issuer: Identity,
    vdr: VerifiableDataRegistry,
    attribute_names: tuple[str, ...] | list[str] = NF_AUTHORIZATION_ATTRIBUTES,
    schema_id: str | None = None,
) -> SchemaRecord:
    if not vdr.exists(issuer.did):
        raise NotFoundError(f"issuer {issuer.did} is not registered")
    schema_id = schema_id or f"{issuer.did}:2:nf-authorization:1.0"
    record = SchemaRecord(schema_id, tuple(attribute_names), issuer.did)
    return vdr.put_schema(record, issuer.sign(record.proof_payload()))


def create_revocation_registry(issuer: Identity, vdr: VerifiableDataRegistry, registry_id: str | None = None) -> str:
    registry_id = registry_id or f"{issuer.did}:4:revocation"
    vdr.create_registry(registry_id, issuer.did, issuer.sign(registry_proof_payload(registry_id, issuer.did)))
    return registry_id


def issue(
    issuer: Identity,
    vdr: VerifiableDataRegistry,
    schema_id: str,
    subject: Did | str,
    claims: Mapping[str, str],
    registry_id: str,
    now: float | None = None,
) -> VerifiableCredential:
    subject = as_did(subject)
    schema = vdr.get_schema(schema_id)
    if set(claims) != set(schema.attribute_names):
        raise ValidationError(f"claims {sorted(claims)} do not match schema {list(schema.attribute_names)}")
    if not vdr.exists(subject):
        raise NotFoundError(f"subject {subject} is not registered")
    vdr.get_registry(registry_id)  # must exist
    vc = VerifiableCredential(
        credential_id=str(uuid.uuid4()),
        schema_id=schema_id,
        issuer=issuer.did,
        subject=subject,
        claims={k: str(v) for k, v in claims.items()},
        registry_id=registry_id,
        issuance_time=int(time.time() if now is None else now),
    )
    return replace(vc, issuer_signature=issuer.sign(vc.canonical_bytes()))


def revoke(issuer: Identity, vdr: VerifiableDataRegistry, credential: VerifiableCredential) -> None:
    payload = revoke_proof_payload(credential.registry_id, credential.credential_id)
    vdr.revoke(credential.registry_id, credential.credential_id, issuer.sign(payload))


def present(holder: Identity, credential: VerifiableCredential, nonce: bytes) -> VerifiablePresentation:
    if holder.did != credential.subject:
        raise HolderMismatchError(f"{holder.did} is not the subject of credential {credential.credential_id}")
    signature = holder.sign(presentation_payload(credential, nonce))
    return VerifiablePresentation(credential, holder.did, nonce, signature)


def _any_signing_key_verifies(document: DidDocument | None, message: bytes, signature: bytes) -> bool:
    if document is None:
        return False
    return any(verify(vm.public, message, signature) for vm in document.keys(KeyKind.SIGNING))


def _resolve_or_none(resolver: Resolver, did: Did) -> DidDocument | None:
    try:
        return resolver.resolve(did)
    except NotFoundError:
        return None


def verify_presentation(
    vp: VerifiablePresentation,
    expected_nonce: bytes,
    now: float,
    resolver: Resolver,
    vdr: VerifiableDataRegistry,
) -> VerificationOutcome:
    """Check a presentation end to end. Failed checks become denials; only an offline VDR raises.

    Both DID documents are resolved up front so that every verification costs
    exactly two resolver calls regardless of where it fails.
    """
    vc = vp.credential
    issuer_doc = _resolve_or_none(resolver, vc.issuer)
    holder_doc = _resolve_or_none(resolver, vp.holder)

    if vp.holder != vc.subject:
        return VerificationOutcome.deny(Reason.HOLDER_MISMATCH)
    if vp.nonce != expected_nonce:
        return VerificationOutcome.deny(Reason.NONCE_MISMATCH)
    if not _any_signing_key_verifies(issuer_doc, vc.canonical_bytes(), vc.issuer_signature):
        return VerificationOutcome.deny(Reason.BAD_ISSUER_SIGNATURE)
    if not _any_signing_key_verifies(holder_doc, presentation_payload(vc, vp.nonce), vp.holder_signature):
        return VerificationOutcome.deny(Reason.BAD_HOLDER_SIGNATURE)
    try:
        schema = vdr.get_schema(vc.schema_id)
    except NotFoundError:
        return VerificationOutcome.deny(Reason.SCHEMA_MISMATCH)
    if schema.issuer != vc.issuer or set(vc.claims) != set(schema.attribute_names):
        return VerificationOutcome.deny(Reason.SCHEMA_MISMATCH)
    try:
        if vdr.is_revoked(vc.registry_id, vc.credential_id):
            return VerificationOutcome.deny(Reason.REVOKED)
        registry = vdr.get_registry(vc.registry_id)
    except NotFoundError:
        return VerificationOutcome.deny(Reason.REVOKED)
    if registry.issuer != vc.issuer:
        return VerificationOutcome.deny(Reason.REVOKED)
    if "expiry" in schema.attribute_names:
        try:
            expiry = float(vc.claims["expiry"])
        except ValueError:
            return VerificationOutcome.deny(Reason.EXPIRED)
        if now >= expiry:
            return VerificationOutcome.deny(Reason.EXPIRED)
    return GRANTED
