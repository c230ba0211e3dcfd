"""Per-NF communication agent.

An agent owns a wallet (identities, v1 connections, credentials), a
resolver, and an HTTP server exposing:

* ``POST /didcomm`` - inbound envelopes (``application/octet-stream``,
  answered 202) and, in v1 mode, DID Exchange messages
  (``application/json``, answered 200 with the next exchange message);
* ``POST /internal/send``, ``GET|POST /internal/wallet/identities``,
  ``GET|POST /internal/wallet/credentials``, ``GET /internal/wallet/connections``,
  ``GET /internal/receipts/<id>``, ``GET /health`` - JSON.

In ``tls`` mode the same port serves HTTPS with mutual authentication and
messages travel as plain HTTP bodies protected only by the record layer.
"""

from __future__ import annotations

import base64
import json
import logging
import queue
import random
import ssl
import threading
import time
import uuid
from collections import Counter
from dataclasses import asdict, dataclass, field
from http.server import BaseHTTPRequestHandler
from typing import Any, Callable, Union

from didsba import didcomm_v1 as v1
from didsba import didcomm_v2 as v2
from didsba.credentials import VerifiableCredential
from didsba.encoding import frame
from didsba.errors import (
    AlreadyExistsError,
    DeliveryError,
    DidError,
    EnvelopeFormatError,
    IntegrityError,
    NotFoundError,
    ProtocolStateError,
    StartupError,
    UnauthorizedError,
    ValidationError,
)
from didsba.identity import Did, Identity, as_did
from didsba.resolver import CachePolicy, Resolver
from didsba.transport import AgentHTTPServer, Credentials, HttpConnection, fingerprint_of_der, generate_certificate, tls_context
from didsba.vdr import VdrConfig, VerifiableDataRegistry

log = logging.getLogger(__name__)

PROTOCOLS = ("v1", "v2", "tls")

Reply = Union[None, bytes, "tuple[str, bytes]"]


@dataclass(frozen=True)
class AgentConfig:
    nf_name: str
    listen_address: str = "127.0.0.1:0"
    protocol: str = "v2"
    cache_policy: CachePolicy = field(default_factory=CachePolicy)
    vdr_delays: VdrConfig | None = None

    def __post_init__(self) -> None:
        if self.protocol not in PROTOCOLS:
            raise ValidationError(f"protocol must be one of {PROTOCOLS}")
        host, _, port = self.listen_address.rpartition(":")
        if not host or not port.isdigit():
            raise ValidationError(f"listen_address must be host:port, got {self.listen_address!r}")


@dataclass
class PhaseTimestamps:
    t_submit: float = 0.0
    t_encap_start: float = 0.0
    t_encap_end: float = 0.0
    t_wire_sent: float = 0.0
    t_wire_received: float = 0.0
    t_decap_start: float = 0.0
    t_decap_end: float = 0.0
    t_delivered: float = 0.0

    ORDER = (
        "t_submit",
        "t_encap_start",
        "t_encap_end",
        "t_wire_sent",
        "t_wire_received",
        "t_decap_start",
        "t_decap_end",
        "t_delivered",
    )

    def is_monotone(self) -> bool:
        values = [getattr(self, name) for name in self.ORDER]
        return all(a <= b for a, b in zip(values, values[1:]))


@dataclass
class DeliveryReceipt:
    receipt_id: str
    protocol: str
    sender: str
    destination: str
    message_type: str
    body_bytes: int
    wire_bytes: int
    handshake_bytes: int
    timestamps: PhaseTimestamps
    handshake_time: float = 0.0
    transport_bytes: int = 0
    received_bytes: int = 0
    encap_ledger_reads: int = 0
    decap_ledger_reads: int = 0
    handshake_ledger_reads: int = 0
    encap_resolution_time: float = 0.0
    decap_resolution_time: float = 0.0

    @property
    def encapsulation(self) -> float:
        return self.timestamps.t_encap_end - self.timestamps.t_encap_start

    @property
    def decapsulation(self) -> float:
        return self.timestamps.t_decap_end - self.timestamps.t_decap_start

    @property
    def total(self) -> float:
        return self.timestamps.t_delivered - self.timestamps.t_submit

    @property
    def network_and_other(self) -> float:
        return self.total - self.encapsulation - self.decapsulation

    @property
    def ledger_reads(self) -> int:
        return self.encap_ledger_reads + self.decap_ledger_reads

    def to_dict(self) -> dict[str, Any]:
        d = asdict(self)
        d.update(
            encapsulation=self.encapsulation,
            decapsulation=self.decapsulation,
            network_and_other=self.network_and_other,
            total=self.total,
        )
        return d


@dataclass(frozen=True)
class InboundMessage:
    sender: str
    message_type: str
    body: bytes = field(repr=False)
    received_at: float = 0.0


class Wallet:
    def __init__(self) -> None:
        self.identities: dict[str, Identity] = {}
        self.credentials: list[VerifiableCredential] = []
        self.connections: v1.ConnectionManager | None = None
        self.lock = threading.RLock()

    @property
    def primary(self) -> Identity:
        with self.lock:
            if not self.identities:
                raise NotFoundError("wallet holds no identity")
            return next(iter(self.identities.values()))


def _frame_message(message_type: str, body: bytes) -> bytes:
    return frame(message_type.encode("utf-8")) + body


def _unframe_message(data: bytes) -> tuple[str, bytes]:
    if len(data) < 4:
        raise EnvelopeFormatError("truncated message frame")
    n = int.from_bytes(data[:4], "big")
    if 4 + n > len(data):
        raise EnvelopeFormatError("message type exceeds frame")
    return data[4 : 4 + n].decode("utf-8", "replace"), data[4 + n :]


class Agent:
    def __init__(self, config: AgentConfig, vdr: VerifiableDataRegistry) -> None:
        if config.vdr_delays is not None:
            vdr = vdr.with_config(config.vdr_delays)
        self.config = config
        self.protocol = config.protocol
        self.vdr = vdr
        self.resolver = Resolver(vdr, config.cache_policy)
        self.wallet = Wallet()
        self.counters: Counter[str] = Counter()
        self.receipts: dict[str, DeliveryReceipt] = {}
        self.inbox: list[InboundMessage] = []
        self._inbox_cv = threading.Condition()
        self._handler: Callable[[InboundMessage], Reply] | None = None
        self._queues: dict[str, queue.Queue] = {}
        self._workers: list[threading.Thread] = []
        self._dest_locks: dict[str, threading.Lock] = {}
        self._connections: dict[str, HttpConnection] = {}
        self._lock = threading.RLock()
        self._server: AgentHTTPServer | None = None
        self._thread: threading.Thread | None = None
        # tls mode
        self.tls_credentials: Credentials | None = None
        self._client_tls: ssl.SSLContext | None = None
        self._server_tls: ssl.SSLContext | None = None
        self._peers: dict[str, tuple[str, bytes]] = {}
        self._fingerprints: dict[str, str] = {}

    # lifecycle --------------------------------------------------------

    def start(self) -> Agent:
        if self._server is not None:
            raise StartupError(f"agent {self.config.nf_name} already running")
        host, _, port = self.config.listen_address.rpartition(":")
        if self.protocol == "tls":
            self.tls_credentials = generate_certificate(self.config.nf_name)
            self._client_tls = tls_context(self.tls_credentials, [], server_side=False)
            self._server_tls = tls_context(self.tls_credentials, [], server_side=True)
        try:
            self._server = AgentHTTPServer((host, int(port)), _make_handler(self), self._server_tls)
        except OSError as exc:
            raise StartupError(f"cannot listen on {self.config.listen_address}: {exc}") from exc
        self._thread = threading.Thread(target=self._server.serve_forever, args=(0.05,), name=f"agent-{self.config.nf_name}", daemon=True)
        self._thread.start()
        return self

    def stop(self) -> None:
        server, self._server = self._server, None
        if server is not None:
            server.shutdown()
            server.server_close()
        if self._thread is not None:
            self._thread.join(timeout=5)
            self._thread = None
        with self._lock:
            for conn in self._connections.values():
                conn.close()
            self._connections.clear()
            for q in self._queues.values():
                q.put(None)
            self._queues.clear()
        for w in self._workers:
            w.join(timeout=5)
        self._workers.clear()

    def __enter__(self) -> Agent:
        return self.start() if self._server is None else self

    def __exit__(self, *exc: object) -> None:
        self.stop()

    @property
    def running(self) -> bool:
        return self._server is not None

    @property
    def address(self) -> tuple[str, int]:
        if self._server is None:
            raise StartupError("agent is not running")
        return self._server.server_address[:2]  # type: ignore[return-value]

    @property
    def endpoint_uri(self) -> str:
        host, port = self.address
        scheme = "https" if self.protocol == "tls" else "http"
        return f"{scheme}://{host}:{port}/didcomm"

    # wallet -----------------------------------------------------------

    def create_identity(self, rng: random.Random | None = None) -> dict[str, Any]:
        """Generate a DID bound to this agent's endpoint and register it on the VDR."""
        identity = Identity.generate(endpoint_uri=self.endpoint_uri, rng=rng)
        with self.wallet.lock:
            if str(identity.did) in self.wallet.identities:
                raise AlreadyExistsError(f"{identity.did} already in wallet")
            self.vdr.register(identity.document, identity.sign_document())
            self.wallet.identities[str(identity.did)] = identity
            if self.wallet.connections is None:
                self.wallet.connections = v1.ConnectionManager(identity, self.resolver)
        return identity.public_view()

    @property
    def identity(self) -> Identity:
        return self.wallet.primary

    @property
    def did(self) -> Did:
        return self.wallet.primary.did

    def list_identities(self) -> list[dict[str, Any]]:
        with self.wallet.lock:
            return [i.public_view() for i in self.wallet.identities.values()]

    def store_credential(self, credential: VerifiableCredential) -> None:
        with self.wallet.lock:
            self.wallet.credentials.append(credential)

    def list_credentials(self) -> list[VerifiableCredential]:
        with self.wallet.lock:
            return list(self.wallet.credentials)

    def list_connections(self) -> list[dict[str, Any]]:
        manager = self.wallet.connections
        if manager is None:
            return []
        with self.wallet.lock:
            return [r.public_view() for r in manager.records.values()]

    # tls peers --------------------------------------------------------

    def trust_peer(self, did: Did | str, endpoint: str, cert_pem: bytes) -> None:
        """Address book + trust store entry for tls mode (there is no DID resolution)."""
        if self._client_tls is None or self._server_tls is None:
            raise ProtocolStateError("trust_peer requires a running tls agent")
        self._client_tls.load_verify_locations(cadata=cert_pem.decode("ascii"))
        self._server_tls.load_verify_locations(cadata=cert_pem.decode("ascii"))
        fp = Credentials(cert_pem, b"").fingerprint
        with self._lock:
            self._peers[str(did)] = (endpoint, cert_pem)
            self._fingerprints[fp] = str(did)

    # outbound ---------------------------------------------------------

    def _dest_lock(self, dest: str) -> threading.Lock:
        with self._lock:
            return self._dest_locks.setdefault(dest, threading.Lock())

    def connection_to(self, dest: str, endpoint: str | None = None) -> HttpConnection:
        with self._lock:
            conn = self._connections.get(dest)
            if conn is None:
                if endpoint is None:
                    if dest not in self._peers:
                        raise NotFoundError(f"no known endpoint for {dest}")
                    endpoint = self._peers[dest][0]
                conn = HttpConnection(endpoint, self._client_tls if self.protocol == "tls" else None)
                self._connections[dest] = conn
            return conn

    def _ensure_v1_connection(self, dest: str) -> tuple[v1.ConnectionRecord, int, float, int]:
        """Run DID Exchange with ``dest`` unless a complete connection exists.

        Returns (record, handshake bytes, handshake seconds, ledger reads).
        """
        manager = self.wallet.connections
        assert manager is not None
        with self.wallet.lock:
            record = manager.find_by_peer(dest)
        if record is not None:
            return record, 0, 0.0, 0
        start = time.perf_counter()
        with self.resolver.track() as span:
            their_doc = self.resolver.resolve(dest)
        if their_doc.endpoint is None:
            raise DeliveryError(f"{dest} publishes no endpoint", phase="handshake")
        conn = self.connection_to(dest, their_doc.endpoint)
        with self.wallet.lock:
            invitation = manager.create_invitation(self.endpoint_uri)
        sent = invitation.to_bytes()
        request_bytes = self._exchange_post(conn, sent)
        request = v1.ExchangeMessage.from_bytes(request_bytes)
        with self.wallet.lock:
            record, response = manager.process_request(request, known_document=their_doc)
        response_bytes = response.to_bytes()
        ack_bytes = self._exchange_post(conn, response_bytes)
        with self.wallet.lock:
            manager.process_complete(v1.ExchangeMessage.from_bytes(ack_bytes))
        total = len(sent) + len(request_bytes) + len(response_bytes) + len(ack_bytes)
        return record, total, time.perf_counter() - start, span.ledger_reads

    @staticmethod
    def _exchange_post(conn: HttpConnection, message: bytes) -> bytes:
        result = conn.post(message, "application/json")
        if result.status != 200:
            raise DeliveryError(f"DID Exchange rejected with HTTP {result.status}: {result.body[:200]!r}", phase="handshake")
        return result.body

    def send(self, destination: Did | str, message_type: str, body: bytes) -> DeliveryReceipt:
        """Encapsulate ``body`` for ``destination``, transmit it, and return the delivery receipt."""
        t_submit = time.perf_counter()
        dest = str(as_did(destination))
        identity = self.identity
        ts = PhaseTimestamps(t_submit=t_submit)
        handshake_bytes, handshake_time, handshake_reads = 0, 0.0, 0
        encap_reads, encap_resolution = 0, 0.0
        with self._dest_lock(dest):
            if self.protocol == "v1":
                record, handshake_bytes, handshake_time, handshake_reads = self._ensure_v1_connection(dest)
                ts.t_encap_start = time.perf_counter()
                wire = v1.pack_v1(record, _frame_message(message_type, body)).to_bytes()
                ts.t_encap_end = time.perf_counter()
                conn = self.connection_to(dest, record.their_document.endpoint if record.their_document else None)
            elif self.protocol == "v2":
                ts.t_encap_start = time.perf_counter()
                with self.resolver.track() as span:
                    envelope, their_doc = v2._pack(identity, dest, message_type, body, self.resolver)
                wire = envelope.to_bytes()
                ts.t_encap_end = time.perf_counter()
                encap_reads, encap_resolution = span.ledger_reads, span.elapsed
                if their_doc.endpoint is None:
                    raise DeliveryError(f"{dest} publishes no endpoint", phase="encapsulation")
                conn = self.connection_to(dest, their_doc.endpoint)
            else:
                conn = self.connection_to(dest)
                start = time.perf_counter()
                handshake_bytes = conn.connect()
                handshake_time = time.perf_counter() - start if handshake_bytes else 0.0
                wire = _frame_message(message_type, body)

            result = conn.post(wire)
            if self.protocol == "tls":
                ts.t_encap_start, ts.t_encap_end = result.t_seal_start, result.t_seal_end
            ts.t_wire_sent = result.t_sent

        if result.status != 202:
            self.counters["send_failures"] += 1
            raise DeliveryError(
                f"{dest} refused the message with HTTP {result.status}: {result.body[:200]!r}", phase="decapsulation"
            )
        remote = json.loads(result.body)
        for name in ("t_wire_received", "t_decap_start", "t_decap_end", "t_delivered"):
            setattr(ts, name, remote[name])
        receipt = DeliveryReceipt(
            receipt_id=uuid.uuid4().hex,
            protocol=self.protocol,
            sender=str(identity.did),
            destination=dest,
            message_type=message_type,
            body_bytes=len(body),
            wire_bytes=result.body_wire_bytes,
            handshake_bytes=handshake_bytes,
            timestamps=ts,
            handshake_time=handshake_time,
            transport_bytes=result.bytes_out,
            received_bytes=remote["received_bytes"],
            encap_ledger_reads=encap_reads,
            decap_ledger_reads=remote["ledger_reads"],
            handshake_ledger_reads=handshake_reads,
            encap_resolution_time=encap_resolution,
            decap_resolution_time=remote["resolution_time"],
        )
        with self._lock:
            self.receipts[receipt.receipt_id] = receipt
        return receipt

    # inbound ----------------------------------------------------------

    def receive_loop(self, handler: Callable[[InboundMessage], Reply]) -> None:
        """Install the business-logic handler.

        Each accepted message is passed to ``handler`` exactly once, in arrival
        order per sender. A returned ``bytes`` (or ``(type, bytes)``) is sent
        back to the sender.
        """
        self._handler = handler

    def _decapsulate(self, data: bytes, peer_fingerprint: str | None) -> tuple[str, str, bytes, int, float]:
        """Returns (sender DID, message type, body, ledger reads, resolution seconds)."""
        if self.protocol == "tls":
            sender = self._fingerprints.get(peer_fingerprint or "")
            if sender is None:
                raise UnauthorizedError("client certificate not mapped to a known NF")
            if data[:1] in (v1.FORMAT_BYTE, v2.FORMAT_BYTE):
                raise EnvelopeFormatError("DIDComm envelope sent to a tls agent")
            mtype, body = _unframe_message(data)
            return sender, mtype, body, 0, 0.0
        if self.protocol == "v1":
            envelope = v1.EnvelopeV1.from_bytes(data)
            manager = self.wallet.connections
            assert manager is not None
            sender_key = v1.open_sender(envelope, self.identity)
            with self.wallet.lock:
                record = manager.find_by_sender_key(sender_key)
            if record is None:
                raise UnauthorizedError("no connection with the envelope's sender")
            mtype, body = _unframe_message(v1.unpack_v1(record, envelope))
            return str(record.their_did), mtype, body, 0, 0.0
        envelope2 = v2.EnvelopeV2.from_bytes(data)
        with self.resolver.track() as span:
            jwm = v2.unpack_v2(self.identity, envelope2, self.resolver)
        return str(jwm.from_), jwm.type, jwm.body, span.ledger_reads, span.elapsed

    def _accept(self, data: bytes, peer_fingerprint: str | None, t_received: float) -> tuple[int, dict[str, Any]]:
        t_decap_start = time.perf_counter()
        try:
            sender, mtype, body, reads, resolution = self._decapsulate(data, peer_fingerprint)
        except EnvelopeFormatError as exc:
            self.counters["format_errors"] += 1
            return 400, {"error": "format", "detail": str(exc)}
        except IntegrityError as exc:
            self.counters["integrity_failures"] += 1
            return 400, {"error": "integrity", "detail": str(exc)}
        except (UnauthorizedError, NotFoundError) as exc:
            self.counters["unauthorized"] += 1
            return 403, {"error": "unauthorized", "detail": str(exc)}
        except DidError as exc:
            self.counters["rejected"] += 1
            return 400, {"error": type(exc).__name__, "detail": str(exc)}
        t_decap_end = time.perf_counter()
        message = InboundMessage(sender, mtype, body, t_decap_end)
        self._deliver(message)
        t_delivered = time.perf_counter()
        return 202, {
            "t_wire_received": t_received,
            "t_decap_start": t_decap_start,
            "t_decap_end": t_decap_end,
            "t_delivered": t_delivered,
            "received_bytes": len(data),
            "ledger_reads": reads,
            "resolution_time": resolution,
        }

    def _deliver(self, message: InboundMessage) -> None:
        with self._inbox_cv:
            self.inbox.append(message)
            self.counters["delivered"] += 1
            self._inbox_cv.notify_all()
        if self._handler is None:
            return
        with self._lock:
            q = self._queues.get(message.sender)
            if q is None:
                q = self._queues[message.sender] = queue.Queue()
                worker = threading.Thread(target=self._dispatch, args=(q,), daemon=True)
                self._workers.append(worker)
                worker.start()
        q.put(message)

    def _dispatch(self, q: queue.Queue) -> None:
        while True:
            message = q.get()
            if message is None:
                return
            handler = self._handler
            if handler is None:
                continue
            try:
                reply = handler(message)
                self.counters["handled"] += 1
                if reply is not None:
                    mtype, body = reply if isinstance(reply, tuple) else (message.message_type + "/reply", reply)
                    self.send(message.sender, mtype, body)
            except Exception:
                self.counters["handler_errors"] += 1
                log.exception("handler failed for message from %s", message.sender)

    def wait_for_messages(self, count: int, timeout: float = 30.0) -> list[InboundMessage]:
        """Block until the inbox holds at least ``count`` messages."""
        deadline = time.monotonic() + timeout
        with self._inbox_cv:
            while len(self.inbox) < count:
                remaining = deadline - time.monotonic()
                if remaining <= 0:
                    raise DeliveryError(f"{self.config.nf_name}: only {len(self.inbox)}/{count} messages arrived", phase="delivery")
                self._inbox_cv.wait(remaining)
            return list(self.inbox)

    def _exchange(self, data: bytes) -> tuple[int, bytes]:
        manager = self.wallet.connections
        if self.protocol != "v1" or manager is None:
            return 400, b'{"error":"format","detail":"DID Exchange is only spoken in v1 mode"}'
        try:
            message = v1.ExchangeMessage.from_bytes(data)
            with self.wallet.lock:
                reply = manager.handle(message)
        except ProtocolStateError as exc:
            return 409, json.dumps({"error": "protocol-state", "detail": str(exc)}).encode()
        except (UnauthorizedError, NotFoundError) as exc:
            return 403, json.dumps({"error": "unauthorized", "detail": str(exc)}).encode()
        except ValidationError as exc:
            return 400, json.dumps({"error": "format", "detail": str(exc)}).encode()
        return 200, reply.to_bytes() if reply is not None else b"{}"

    # internal API -----------------------------------------------------

    def health(self) -> dict[str, Any]:
        did = str(self.did) if self.wallet.identities else None
        return {"status": "ok", "nf_name": self.config.nf_name, "protocol": self.protocol, "did": did}

    def _internal_send(self, request: dict[str, Any]) -> dict[str, Any]:
        body = base64.b64decode(request.get("body", ""))
        receipt = self.send(request["destination"], request["type"], body)
        return receipt.to_dict()


def _make_handler(agent: Agent) -> type[BaseHTTPRequestHandler]:
    class Handler(BaseHTTPRequestHandler):
        protocol_version = "HTTP/1.1"
        server_version = "didsba-agent"
        # headers and body go out as separate writes; Nagle would hold the second
        disable_nagle_algorithm = True

        def log_message(self, format: str, *args: Any) -> None:
            log.debug("%s " + format, agent.config.nf_name, *args)

        def _reply(self, status: int, payload: bytes, content_type: str = "application/json") -> None:
            self.send_response(status)
            self.send_header("Content-Type", content_type)
            self.send_header("Content-Length", str(len(payload)))
            self.end_headers()
            self.wfile.write(payload)

        def _json(self, status: int, obj: Any) -> None:
            self._reply(status, json.dumps(obj).encode("utf-8"))

        def _read_body(self) -> bytes:
            length = int(self.headers.get("Content-Length", 0))
            return self.rfile.read(length) if length else b""

        def _peer_fingerprint(self) -> str | None:
            getpeercert = getattr(self.connection, "getpeercert", None)
            if getpeercert is None:
                return None
            der = getpeercert(binary_form=True)
            return fingerprint_of_der(der) if der else None

        def do_POST(self) -> None:
            data = self._read_body()
            t_received = time.perf_counter()
            if self.path == "/didcomm":
                if self.headers.get("Content-Type", "").startswith("application/json"):
                    status, payload = agent._exchange(data)
                    self._reply(status, payload)
                    return
                status, obj = agent._accept(data, self._peer_fingerprint(), t_received)
                self._json(status, obj)
                return
            try:
                if self.path == "/health":
                    self._json(200, agent.health())
                elif self.path == "/internal/send":
                    self._json(200, agent._internal_send(json.loads(data)))
                elif self.path == "/internal/wallet/identities":
                    self._json(201, agent.create_identity())
                elif self.path == "/internal/wallet/credentials":
                    agent.store_credential(VerifiableCredential.from_bytes(data))
                    self._json(201, {"stored": True})
                else:
                    self._json(404, {"error": "not-found"})
            except AlreadyExistsError as exc:
                self._json(409, {"error": "already-exists", "detail": str(exc)})
            except NotFoundError as exc:
                self._json(404, {"error": "not-found", "detail": str(exc)})
            except (DidError, KeyError, ValueError) as exc:
                self._json(400, {"error": type(exc).__name__, "detail": str(exc)})

        def do_GET(self) -> None:
            if self.path == "/health":
                self._json(200, agent.health())
            elif self.path == "/internal/wallet/identities":
                self._json(200, agent.list_identities())
            elif self.path == "/internal/wallet/connections":
                self._json(200, agent.list_connections())
            elif self.path == "/internal/wallet/credentials":
                self._json(200, [c.to_dict() for c in agent.list_credentials()])
            elif self.path.startswith("/internal/receipts/"):
                receipt = agent.receipts.get(self.path.rsplit("/", 1)[-1])
                if receipt is None:
                    self._json(404, {"error": "not-found"})
                else:
                    self._json(200, receipt.to_dict())
            else:
                self._json(404, {"error": "not-found"})

    return Handler
