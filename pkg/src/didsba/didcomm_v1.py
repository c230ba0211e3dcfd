"""Stateful DIDComm v1: DID Exchange handshake, then header-free authcrypt envelopes.

Handshake (4 messages)::

    inviter                      invitee
    create_invitation  ------->  process_invitation
    process_request    <-------  (request, invitee document inline)
    (response, inviter doc) ---> process_response
    process_complete   <-------  (complete ack)

After the handshake each side holds the peer's document in its
ConnectionRecord and never resolves it again.

Envelope wire format (all integers big-endian)::

    0x01 | u32 len | protected | u32 len | iv(24) | u32 len | ciphertext | u32 len | tag(16)

``protected`` is base64url(canonical JSON) carrying the single recipient
block: the CEK boxed to the recipient (X25519 crypto_box, i.e. authcrypt),
the sender's key-agreement key in a sealed box, and the box nonce. The
payload is XChaCha20-Poly1305 under the CEK with ``protected`` as AAD.
"""

from __future__ import annotations

import json
import os
import uuid
from dataclasses import dataclass, field
from enum import Enum
from typing import Any

import nacl.bindings
import nacl.exceptions
import nacl.public

from didsba.encoding import b64u_decode, b64u_encode, canonical_json, frame, multibase_b58, multibase_b64u, multibase_decode, unframe
from didsba.errors import EnvelopeFormatError, IntegrityError, ProtocolStateError, UnauthorizedError, ValidationError
from didsba.identity import Did, DidDocument, Identity, KeyKind, as_did, derive_subject, verify
from didsba.resolver import Resolver

FORMAT_BYTE = b"\x01"
IV_SIZE = 24
TAG_SIZE = 16
CEK_SIZE = 32

_ENC = "xchacha20poly1305_ietf"
_ALG = "Authcrypt"
_TYP = "JWM/1.0"

MESSAGE_TYPES = {
    "invitation": "https://didcomm.org/didexchange/1.0/invitation",
    "request": "https://didcomm.org/didexchange/1.0/request",
    "response": "https://didcomm.org/didexchange/1.0/response",
    "complete": "https://didcomm.org/didexchange/1.0/complete",
}
_KIND_BY_TYPE = {v: k for k, v in MESSAGE_TYPES.items()}


class ConnectionState(str, Enum):
    INVITED = "invited"
    REQUESTED = "requested"
    RESPONDED = "responded"
    COMPLETE = "complete"


_ORDER = list(ConnectionState)


@dataclass
class ConnectionRecord:
    connection_id: str
    my_did: Did
    my_keys: Identity = field(repr=False)
    state: ConnectionState = ConnectionState.INVITED
    their_did: Did | None = None
    their_document: DidDocument | None = None
    role: str = "inviter"
    invitation_key: bytes | None = field(default=None, repr=False)

    def advance(self, target: ConnectionState) -> None:
        if _ORDER.index(target) != _ORDER.index(self.state) + 1:
            raise ProtocolStateError(f"connection {self.connection_id}: cannot go {self.state.value} -> {target.value}")
        if target is ConnectionState.COMPLETE and self.their_document is None:
            raise ProtocolStateError("peer document must be known before completing")
        self.state = target

    @property
    def complete(self) -> bool:
        return self.state is ConnectionState.COMPLETE

    def public_view(self) -> dict[str, Any]:
        return {
            "connection_id": self.connection_id,
            "my_did": str(self.my_did),
            "their_did": str(self.their_did) if self.their_did else None,
            "state": self.state.value,
            "role": self.role,
        }


@dataclass(frozen=True)
class ExchangeMessage:
    kind: str
    connection_id: str
    sender_did: Did | None = None
    sender_document: DidDocument | None = None
    signature: bytes | None = None
    endpoint: str | None = None
    recipient_key: bytes | None = None

    def to_dict(self) -> dict[str, Any]:
        d: dict[str, Any] = {"@type": MESSAGE_TYPES[self.kind], "@id": self.connection_id}
        if self.kind == "invitation":
            d["serviceEndpoint"] = self.endpoint
            d["recipientKeys"] = [multibase_b58(self.recipient_key or b"")]
        else:
            d["~thread"] = {"thid": self.connection_id}
            d["did"] = str(self.sender_did)
        if self.sender_document is not None:
            d["did_doc~attach"] = {
                "mime-type": "application/json",
                "data": {
                    "base64": b64u_encode(self.sender_document.canonical_bytes()),
                    "jws": {"kid": self.sender_document.signing_key.key_id, "signature": multibase_b64u(self.signature or b"")},
                },
            }
        return d

    def to_bytes(self) -> bytes:
        return canonical_json(self.to_dict())

    @classmethod
    def from_bytes(cls, data: bytes) -> ExchangeMessage:
        try:
            d = json.loads(data)
            kind = _KIND_BY_TYPE[d["@type"]]
            if kind == "invitation":
                return cls(kind, d["@id"], endpoint=d["serviceEndpoint"], recipient_key=multibase_decode(d["recipientKeys"][0]))
            doc = sig = None
            if "did_doc~attach" in d:
                att = d["did_doc~attach"]["data"]
                doc = DidDocument.from_dict(json.loads(b64u_decode(att["base64"])))
                sig = multibase_decode(att["jws"]["signature"])
            return cls(kind, d["~thread"]["thid"], as_did(d["did"]), doc, sig)
        except (KeyError, TypeError, ValueError, IndexError) as exc:
            raise ValidationError(f"malformed exchange message: {exc}") from exc


def _doc_signature_payload(document: DidDocument, connection_id: str) -> bytes:
    return document.canonical_bytes() + connection_id.encode("utf-8")


def _check_inline_document(msg: ExchangeMessage, resolver: Resolver | None, known: DidDocument | None) -> DidDocument:
    doc = msg.sender_document
    if doc is None or msg.signature is None or doc.id != msg.sender_did:
        raise UnauthorizedError("exchange message lacks a document for its sender")
    if not verify(doc.signing_key.public, _doc_signature_payload(doc, msg.connection_id), msg.signature):
        raise UnauthorizedError("signature on inline document does not verify")
    reference = known
    if reference is None and resolver is not None:
        reference = resolver.resolve(doc.id)
    if reference is not None:
        if reference.canonical_bytes() != doc.canonical_bytes():
            raise UnauthorizedError("inline document differs from the registered one")
    elif derive_subject(doc.signing_key.public) != doc.id.subject:
        raise UnauthorizedError("inline document is not bound to its DID")
    return doc


def _signed_exchange(kind: str, identity: Identity, connection_id: str) -> ExchangeMessage:
    sig = identity.sign(_doc_signature_payload(identity.document, connection_id))
    return ExchangeMessage(kind, connection_id, identity.did, identity.document, sig)


def create_invitation(identity: Identity, endpoint: str | None = None, connection_id: str | None = None) -> ExchangeMessage:
    return ExchangeMessage(
        "invitation",
        connection_id or str(uuid.uuid4()),
        endpoint=endpoint if endpoint is not None else identity.document.endpoint,
        recipient_key=identity.agreement_key.public,
    )


def process_invitation(identity: Identity, invitation: ExchangeMessage) -> tuple[ConnectionRecord, ExchangeMessage]:
    """Invitee side: accept an invitation and answer with a request."""
    if invitation.kind != "invitation":
        raise ProtocolStateError(f"expected invitation, got {invitation.kind}")
    record = ConnectionRecord(invitation.connection_id, identity.did, identity, role="invitee")
    record.invitation_key = invitation.recipient_key
    record.advance(ConnectionState.REQUESTED)
    return record, _signed_exchange("request", identity, record.connection_id)


def process_request(
    identity: Identity,
    request: ExchangeMessage,
    resolver: Resolver | None = None,
    known_document: DidDocument | None = None,
) -> tuple[ConnectionRecord, ExchangeMessage]:
    """Inviter side: validate the invitee's document and answer with a response."""
    if request.kind != "request":
        raise ProtocolStateError(f"expected request, got {request.kind}")
    doc = _check_inline_document(request, resolver, known_document)
    record = ConnectionRecord(request.connection_id, identity.did, identity, role="inviter")
    record.advance(ConnectionState.REQUESTED)
    record.their_did, record.their_document = doc.id, doc
    record.advance(ConnectionState.RESPONDED)
    return record, _signed_exchange("response", identity, record.connection_id)


def process_response(
    record: ConnectionRecord, response: ExchangeMessage, resolver: Resolver | None = None
) -> tuple[ConnectionRecord, ExchangeMessage]:
    """Invitee side: validate the inviter's document, complete, and emit the ack."""
    if response.kind != "response" or response.connection_id != record.connection_id:
        raise ProtocolStateError("response does not belong to this connection")
    if record.state is not ConnectionState.REQUESTED:
        raise ProtocolStateError(f"connection {record.connection_id} is {record.state.value}, not requested")
    doc = _check_inline_document(response, resolver, None)
    invitation_key = record.invitation_key
    if invitation_key is not None and invitation_key not in {vm.public for vm in doc.keys(KeyKind.KEY_AGREEMENT)}:
        raise UnauthorizedError("responder does not own the invitation key")
    record.their_did, record.their_document = doc.id, doc
    record.advance(ConnectionState.RESPONDED)
    record.advance(ConnectionState.COMPLETE)
    ack = ExchangeMessage("complete", record.connection_id, record.my_did)
    return record, ack


def process_complete(record: ConnectionRecord, complete: ExchangeMessage) -> ConnectionRecord:
    if complete.kind != "complete" or complete.connection_id != record.connection_id:
        raise ProtocolStateError("ack does not belong to this connection")
    if complete.sender_did != record.their_did:
        raise UnauthorizedError("ack sent by a different DID")
    record.advance(ConnectionState.COMPLETE)
    return record


# envelopes ------------------------------------------------------------


@dataclass(frozen=True)
class EnvelopeV1:
    protected: bytes
    iv: bytes
    ciphertext: bytes
    tag: bytes

    def to_bytes(self) -> bytes:
        return FORMAT_BYTE + frame(self.protected, self.iv, self.ciphertext, self.tag)

    @classmethod
    def from_bytes(cls, data: bytes) -> EnvelopeV1:
        if data[:1] != FORMAT_BYTE:
            raise EnvelopeFormatError("not a v1 envelope")
        protected, iv, ct, tag = unframe(data, 4, offset=1)
        if len(iv) != IV_SIZE or len(tag) != TAG_SIZE:
            raise EnvelopeFormatError("bad iv or tag length")
        return cls(protected, iv, ct, tag)

    def __len__(self) -> int:
        return 1 + 16 + len(self.protected) + len(self.iv) + len(self.ciphertext) + len(self.tag)


def _require_complete(record: ConnectionRecord) -> DidDocument:
    if not record.complete or record.their_document is None:
        raise ProtocolStateError(f"connection {record.connection_id} is not complete")
    return record.their_document


def pack_v1(record: ConnectionRecord, payload: bytes) -> EnvelopeV1:
    their_doc = _require_complete(record)
    my_ka = record.my_keys.agreement_key
    their_ka = their_doc.agreement_key.public
    cek = os.urandom(CEK_SIZE)
    box_nonce = os.urandom(IV_SIZE)
    encrypted_key = nacl.public.Box(nacl.public.PrivateKey(my_ka.secret), nacl.public.PublicKey(their_ka)).encrypt(
        cek, box_nonce
    ).ciphertext
    sender = nacl.public.SealedBox(nacl.public.PublicKey(their_ka)).encrypt(my_ka.public)
    protected = b64u_encode(
        canonical_json(
            {
                "enc": _ENC,
                "typ": _TYP,
                "alg": _ALG,
                "recipients": [
                    {
                        "encrypted_key": b64u_encode(encrypted_key),
                        "header": {"kid": b64u_encode(their_ka), "sender": b64u_encode(sender), "iv": b64u_encode(box_nonce)},
                    }
                ],
            }
        )
    ).encode("ascii")
    iv = os.urandom(IV_SIZE)
    sealed = nacl.bindings.crypto_aead_xchacha20poly1305_ietf_encrypt(payload, protected, iv, cek)
    return EnvelopeV1(protected, iv, sealed[:-TAG_SIZE], sealed[-TAG_SIZE:])


def _recipient_block(envelope: EnvelopeV1, identity: Identity) -> dict[str, bytes]:
    try:
        header = json.loads(b64u_decode(envelope.protected))
        recipients = header["recipients"]
        if header.get("enc") != _ENC or header.get("alg") != _ALG:
            raise EnvelopeFormatError("unsupported v1 algorithms")
        blocks = [
            {
                "encrypted_key": b64u_decode(r["encrypted_key"]),
                "kid": b64u_decode(r["header"]["kid"]),
                "sender": b64u_decode(r["header"]["sender"]),
                "iv": b64u_decode(r["header"]["iv"]),
            }
            for r in recipients
        ]
    except EnvelopeFormatError:
        raise
    except (ValueError, KeyError, TypeError, UnicodeDecodeError) as exc:
        raise EnvelopeFormatError(f"unreadable protected header: {exc}") from exc
    mine = identity.agreement_key.public
    for block in blocks:
        if block["kid"] == mine:
            return block
    raise UnauthorizedError("envelope is not encrypted to this agent's key")


def open_sender(envelope: EnvelopeV1, identity: Identity) -> bytes:
    """Recover the sender's key-agreement public key (used to pick the connection)."""
    block = _recipient_block(envelope, identity)
    try:
        sender = nacl.public.SealedBox(nacl.public.PrivateKey(identity.agreement_key.secret)).decrypt(block["sender"])
    except nacl.exceptions.CryptoError as exc:
        raise IntegrityError("sender block failed to decrypt") from exc
    if len(sender) != 32:
        raise IntegrityError("sender key has wrong length")
    return sender


def unpack_v1(record: ConnectionRecord, envelope: EnvelopeV1) -> bytes:
    their_doc = _require_complete(record)
    identity = record.my_keys
    block = _recipient_block(envelope, identity)
    sender = open_sender(envelope, identity)
    if sender not in {vm.public for vm in their_doc.keys(KeyKind.KEY_AGREEMENT)}:
        raise UnauthorizedError("envelope was not sent by this connection's peer")
    try:
        cek = nacl.public.Box(nacl.public.PrivateKey(identity.agreement_key.secret), nacl.public.PublicKey(sender)).decrypt(
            block["encrypted_key"], block["iv"]
        )
        return nacl.bindings.crypto_aead_xchacha20poly1305_ietf_decrypt(
            envelope.ciphertext + envelope.tag, envelope.protected, envelope.iv, cek
        )
    except (nacl.exceptions.CryptoError, ValueError) as exc:
        raise IntegrityError("v1 envelope failed authenticated decryption") from exc


class ConnectionManager:
    """Per-identity store of invitations and connection records.

    Rejects exchange messages that do not fit the state of their connection,
    including replays of a request after the connection is complete.
    """

    def __init__(self, identity: Identity, resolver: Resolver | None = None) -> None:
        self.identity = identity
        self.resolver = resolver
        self.invitations: dict[str, ExchangeMessage] = {}
        self.records: dict[str, ConnectionRecord] = {}
        self.exchange_log: list[tuple[str, str, int]] = []  # (connection_id, kind, bytes)

    def _log(self, msg: ExchangeMessage) -> None:
        self.exchange_log.append((msg.connection_id, msg.kind, len(msg.to_bytes())))

    def create_invitation(self, endpoint: str | None = None) -> ExchangeMessage:
        inv = create_invitation(self.identity, endpoint)
        self.invitations[inv.connection_id] = inv
        self._log(inv)
        return inv

    def process_invitation(self, invitation: ExchangeMessage) -> tuple[ConnectionRecord, ExchangeMessage]:
        if invitation.connection_id in self.records:
            raise ProtocolStateError(f"invitation {invitation.connection_id} already accepted")
        record, request = process_invitation(self.identity, invitation)
        self.records[record.connection_id] = record
        self._log(request)
        return record, request

    def process_request(
        self, request: ExchangeMessage, known_document: DidDocument | None = None
    ) -> tuple[ConnectionRecord, ExchangeMessage]:
        if request.connection_id in self.records:
            raise ProtocolStateError(f"request for {request.connection_id} already processed")
        if request.connection_id not in self.invitations:
            raise ProtocolStateError(f"no invitation {request.connection_id} outstanding")
        record, response = process_request(self.identity, request, self.resolver, known_document)
        del self.invitations[request.connection_id]
        self.records[record.connection_id] = record
        self._log(response)
        return record, response

    def process_response(self, response: ExchangeMessage) -> tuple[ConnectionRecord, ExchangeMessage]:
        record = self._record(response.connection_id)
        record, ack = process_response(record, response, self.resolver)
        self._log(ack)
        return record, ack

    def process_complete(self, complete: ExchangeMessage) -> ConnectionRecord:
        return process_complete(self._record(complete.connection_id), complete)

    def handle(self, message: ExchangeMessage) -> ExchangeMessage | None:
        """Dispatch an inbound exchange message; returns the reply, if any."""
        if message.kind == "invitation":
            return self.process_invitation(message)[1]
        if message.kind == "request":
            return self.process_request(message)[1]
        if message.kind == "response":
            return self.process_response(message)[1]
        self.process_complete(message)
        return None

    def _record(self, connection_id: str) -> ConnectionRecord:
        try:
            return self.records[connection_id]
        except KeyError:
            raise ProtocolStateError(f"unknown connection {connection_id}") from None

    def find_by_peer(self, did: Did | str) -> ConnectionRecord | None:
        for r in self.records.values():
            if r.complete and str(r.their_did) == str(did):
                return r
        return None

    def find_by_sender_key(self, public: bytes) -> ConnectionRecord | None:
        for r in self.records.values():
            if r.complete and r.their_document is not None:
                if public in {vm.public for vm in r.their_document.keys(KeyKind.KEY_AGREEMENT)}:
                    return r
        return None

    def handshake_bytes(self, connection_id: str) -> int:
        return sum(n for cid, _, n in self.exchange_log if cid == connection_id)
