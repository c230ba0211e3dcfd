"""Stateless DIDComm v2: headered JWM, signed, then encrypted per message.

Every pack resolves the sender's own document and the recipient's; every
unpack resolves the sender's and its own. Nothing about the peer is kept
between messages.

Layers (all length prefixes are u32 big-endian)::

    jwm     = u32 len | header JSON {id, typ, type, from, to, created_time} | body
    signed  = u32 len | JWS header JSON {alg, kid, typ} | u32 len | sig(64) | jwm
    wire    = 0x02 | u32 len | JWE protected JSON | u32 len | nonce(24)
                   | u32 len | ciphertext(signed) | u32 len | tag(16)

The content key comes from ECDH-1PU: Concat KDF over
X25519(ephemeral, recipient) || X25519(sender static, recipient), with the
JOSE alg/apu/apv as other info. The cipher is XChaCha20-Poly1305 with the
protected header as AAD. Body bytes are carried raw, so envelope overhead
does not depend on body length.
"""

from __future__ import annotations

import hashlib
import json
import os
import struct
import time
import uuid
from dataclasses import dataclass, field
from typing import Any

import nacl.bindings
import nacl.exceptions
from cryptography.hazmat.primitives import hashes
from cryptography.hazmat.primitives.kdf.concatkdf import ConcatKDFHash

from didsba.encoding import b64u_decode, b64u_encode, canonical_json, frame, unframe
from didsba.errors import (
    DidSyntaxError,
    EnvelopeFormatError,
    IntegrityError,
    KeyMismatchError,
    MisdeliveryError,
    NotFoundError,
    UnauthorizedError,
)
from didsba.identity import Did, DidDocument, Identity, KeyKind, as_did, did_of_key_id, sign, verify
from didsba.resolver import Resolver

FORMAT_BYTE = b"\x02"
NONCE_SIZE = 24
TAG_SIZE = 16
SIG_SIZE = 64

PLAIN_TYP = "application/didcomm-plain+json"
SIGNED_TYP = "application/didcomm-signed+json"
ENCRYPTED_TYP = "application/didcomm-encrypted+json"
JWE_ALG = "ECDH-1PU"
JWE_ENC = "XC20P"

REQUIRED_HEADERS = ("id", "type", "from", "to")


@dataclass(frozen=True)
class Jwm:
    type: str
    from_: Did
    to: Did
    body: bytes = field(repr=False)
    id: str = field(default_factory=lambda: str(uuid.uuid4()))
    created_time: int | None = field(default_factory=lambda: int(time.time()))

    def headers(self) -> dict[str, Any]:
        h: dict[str, Any] = {"id": self.id, "typ": PLAIN_TYP, "type": self.type, "from": str(self.from_), "to": str(self.to)}
        if self.created_time is not None:
            h["created_time"] = self.created_time
        return h


def canonical_jwm_bytes(jwm: Jwm) -> bytes:
    """Header JSON (sorted keys) framed by its length, followed by the raw body."""
    return frame(canonical_json(jwm.headers())) + jwm.body


def parse_jwm(data: bytes) -> Jwm:
    if len(data) < 4:
        raise EnvelopeFormatError("truncated JWM")
    (n,) = struct.unpack_from(">I", data)
    if 4 + n > len(data):
        raise EnvelopeFormatError("JWM header length exceeds message")
    try:
        h = json.loads(data[4 : 4 + n])
        missing = [k for k in REQUIRED_HEADERS if k not in h]
        if missing:
            raise EnvelopeFormatError(f"JWM lacks headers {missing}")
        return Jwm(h["type"], as_did(h["from"]), as_did(h["to"]), data[4 + n :], h["id"], h.get("created_time"))
    except (ValueError, TypeError, DidSyntaxError) as exc:
        raise EnvelopeFormatError(f"unreadable JWM header: {exc}") from exc


@dataclass(frozen=True)
class EnvelopeV2:
    protected: bytes
    nonce: bytes
    ciphertext: bytes
    tag: bytes

    def header(self) -> dict[str, Any]:
        try:
            h = json.loads(self.protected)
            if not isinstance(h, dict):
                raise ValueError("protected header is not an object")
            return h
        except ValueError as exc:
            raise EnvelopeFormatError(f"unreadable protected header: {exc}") from exc

    @property
    def recipient_kid(self) -> str:
        return self.header()["kid"]

    def to_bytes(self) -> bytes:
        return FORMAT_BYTE + frame(self.protected, self.nonce, self.ciphertext, self.tag)

    @classmethod
    def from_bytes(cls, data: bytes) -> EnvelopeV2:
        if data[:1] != FORMAT_BYTE:
            raise EnvelopeFormatError("not a v2 envelope")
        protected, nonce, ct, tag = unframe(data, 4, offset=1)
        if len(nonce) != NONCE_SIZE or len(tag) != TAG_SIZE:
            raise EnvelopeFormatError("bad nonce or tag length")
        return cls(protected, nonce, ct, tag)

    def __len__(self) -> int:
        return 1 + 16 + len(self.protected) + len(self.nonce) + len(self.ciphertext) + len(self.tag)


def sign_jwm(identity: Identity, jwm: Jwm) -> bytes:
    """JWS layer: signature by the sender's signing key over header || JWM bytes."""
    key = identity.signing_key
    header = canonical_json({"alg": "EdDSA", "kid": key.key_id, "typ": SIGNED_TYP})
    payload = canonical_jwm_bytes(jwm)
    signature = sign(key.secret, frame(header) + payload)
    return frame(header, signature) + payload


def _split_signed(signed: bytes) -> tuple[dict[str, Any], bytes, bytes, bytes]:
    fields = []
    offset = 0
    for _ in range(2):
        if offset + 4 > len(signed):
            raise EnvelopeFormatError("truncated JWS")
        (n,) = struct.unpack_from(">I", signed, offset)
        if offset + 4 + n > len(signed):
            raise EnvelopeFormatError("JWS field exceeds payload")
        fields.append(signed[offset + 4 : offset + 4 + n])
        offset += 4 + n
    header_bytes, signature = fields
    try:
        header = json.loads(header_bytes)
    except ValueError as exc:
        raise EnvelopeFormatError("unreadable JWS header") from exc
    return header, header_bytes, signature, signed[offset:]


def _other_info(alg: str, apu: bytes, apv: bytes) -> bytes:
    parts = [alg.encode("ascii"), apu, apv]
    return b"".join(struct.pack(">I", len(p)) + p for p in parts) + struct.pack(">I", 256)


def _derive_key(ze: bytes, zs: bytes, apu: bytes, apv: bytes) -> bytes:
    kdf = ConcatKDFHash(algorithm=hashes.SHA256(), length=32, otherinfo=_other_info(JWE_ALG, apu, apv))
    return kdf.derive(ze + zs)


def encrypt_for(identity: Identity, recipient: DidDocument, signed: bytes) -> EnvelopeV2:
    """JWE layer: authcrypt ``signed`` to the recipient's first key-agreement key."""
    sender_ka = identity.agreement_key
    recipient_ka = recipient.agreement_key
    eph_secret = os.urandom(32)
    eph_public = nacl.bindings.crypto_scalarmult_base(eph_secret)
    apu = sender_ka.key_id.encode("utf-8")
    apv = hashlib.sha256(recipient_ka.key_id.encode("utf-8")).digest()
    protected = canonical_json(
        {
            "typ": ENCRYPTED_TYP,
            "alg": JWE_ALG,
            "enc": JWE_ENC,
            "epk": {"kty": "OKP", "crv": "X25519", "x": b64u_encode(eph_public)},
            "skid": sender_ka.key_id,
            "kid": recipient_ka.key_id,
            "apu": b64u_encode(apu),
            "apv": b64u_encode(apv),
        }
    )
    ze = nacl.bindings.crypto_scalarmult(eph_secret, recipient_ka.public)
    zs = nacl.bindings.crypto_scalarmult(sender_ka.secret, recipient_ka.public)
    key = _derive_key(ze, zs, apu, apv)
    nonce = os.urandom(NONCE_SIZE)
    sealed = nacl.bindings.crypto_aead_xchacha20poly1305_ietf_encrypt(signed, protected, nonce, key)
    return EnvelopeV2(protected, nonce, sealed[:-TAG_SIZE], sealed[-TAG_SIZE:])


def _pack(
    sender: Identity, recipient: Did | str, message_type: str, body: bytes, resolver: Resolver
) -> tuple[EnvelopeV2, DidDocument]:
    recipient = as_did(recipient)
    own = resolver.resolve(sender.did)
    for key in (sender.signing_key, sender.agreement_key):
        vm = own.method(key.key_id)
        if vm is None or vm.public != key.public:
            raise KeyMismatchError(f"{key.key_id} is not in the sender's registered document")
    their = resolver.resolve(recipient)
    jwm = Jwm(message_type, sender.did, recipient, body)
    return encrypt_for(sender, their, sign_jwm(sender, jwm)), their


def pack_v2(sender: Identity, recipient: Did | str, message_type: str, body: bytes, resolver: Resolver) -> EnvelopeV2:
    return _pack(sender, recipient, message_type, body, resolver)[0]


def unpack_v2(recipient: Identity, envelope: EnvelopeV2, resolver: Resolver) -> Jwm:
    header = envelope.header()
    try:
        kid, skid = header["kid"], header["skid"]
        eph_public = b64u_decode(header["epk"]["x"])
        apu, apv = b64u_decode(header["apu"]), b64u_decode(header["apv"])
        if header.get("alg") != JWE_ALG or header.get("enc") != JWE_ENC:
            raise EnvelopeFormatError("unsupported v2 algorithms")
        kid_did, sender_did = did_of_key_id(kid), did_of_key_id(skid)
    except EnvelopeFormatError:
        raise
    except (KeyError, TypeError, ValueError, AttributeError) as exc:
        raise EnvelopeFormatError(f"malformed protected header: {exc}") from exc
    if kid_did != recipient.did:
        raise MisdeliveryError(f"envelope is addressed to {kid_did}, not {recipient.did}")
    if len(eph_public) != 32:
        raise EnvelopeFormatError("bad ephemeral key")

    try:
        sender_doc = resolver.resolve(sender_did)
    except NotFoundError as exc:
        raise UnauthorizedError(f"sender {sender_did} cannot be resolved") from exc
    own = resolver.resolve(recipient.did)

    own_vm = own.method(kid)
    my_ka = recipient.agreement_key
    if own_vm is None or own_vm.kind is not KeyKind.KEY_AGREEMENT or kid != my_ka.key_id or own_vm.public != my_ka.public:
        raise KeyMismatchError(f"{kid} is not this agent's registered key-agreement key")
    sender_vm = sender_doc.method(skid)
    if sender_vm is None or sender_vm.kind is not KeyKind.KEY_AGREEMENT:
        raise UnauthorizedError(f"{skid} is not a key-agreement key of {sender_did}")

    try:
        ze = nacl.bindings.crypto_scalarmult(my_ka.secret, eph_public)
        zs = nacl.bindings.crypto_scalarmult(my_ka.secret, sender_vm.public)
        key = _derive_key(ze, zs, apu, apv)
        signed = nacl.bindings.crypto_aead_xchacha20poly1305_ietf_decrypt(
            envelope.ciphertext + envelope.tag, envelope.protected, envelope.nonce, key
        )
    except (nacl.exceptions.CryptoError, ValueError) as exc:
        raise IntegrityError("v2 envelope failed authenticated decryption") from exc

    jws_header, jws_header_bytes, signature, payload = _split_signed(signed)
    jws_kid = jws_header.get("kid", "") if isinstance(jws_header, dict) else ""
    signer = sender_doc.method(jws_kid)
    if signer is None or signer.kind is not KeyKind.SIGNING:
        raise UnauthorizedError("JWS key is not a signing key of the sender")
    if not verify(signer.public, frame(jws_header_bytes) + payload, signature):
        raise UnauthorizedError("JWS signature does not verify")

    jwm = parse_jwm(payload)
    if jwm.from_ != sender_did:
        raise UnauthorizedError("JWM 'from' does not match the encrypting sender")
    if jwm.to != recipient.did:
        raise MisdeliveryError(f"JWM is addressed to {jwm.to}")
    return jwm


def overhead(envelope: EnvelopeV2, body: bytes) -> int:
    return len(envelope.to_bytes()) - len(body)
