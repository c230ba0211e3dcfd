"""HTTP/1.1 transport between agents, with exact byte accounting.

The client speaks HTTP over a raw socket. In TLS mode it drives an
``ssl.SSLObject`` through memory BIOs, so every byte written to the socket,
including the handshake, is counted. Connections are kept alive and reused.
"""

from __future__ import annotations

import datetime
import logging
import socket
import ssl
import tempfile
import threading
import time
from dataclasses import dataclass
from http.server import ThreadingHTTPServer
from pathlib import Path
from urllib.parse import urlsplit

from cryptography import x509
from cryptography.hazmat.primitives import hashes, serialization
from cryptography.hazmat.primitives.asymmetric import ed25519
from cryptography.x509.oid import NameOID

from didsba.errors import DeliveryError, HandshakeError

log = logging.getLogger(__name__)

_READ_CHUNK = 65536


@dataclass(frozen=True)
class Credentials:
    """A self-signed certificate and its private key, PEM encoded."""

    cert_pem: bytes
    key_pem: bytes

    @property
    def fingerprint(self) -> str:
        return x509.load_pem_x509_certificate(self.cert_pem).fingerprint(hashes.SHA256()).hex()


def generate_certificate(common_name: str) -> Credentials:
    # Ed25519 signatures have a fixed length, so handshake byte counts are reproducible
    key = ed25519.Ed25519PrivateKey.generate()
    name = x509.Name([x509.NameAttribute(NameOID.COMMON_NAME, common_name)])
    now = datetime.datetime.now(datetime.timezone.utc)
    cert = (
        x509.CertificateBuilder()
        .subject_name(name)
        .issuer_name(name)
        .public_key(key.public_key())
        .serial_number(x509.random_serial_number())
        .not_valid_before(now - datetime.timedelta(minutes=5))
        .not_valid_after(now + datetime.timedelta(days=1))
        .add_extension(x509.BasicConstraints(ca=True, path_length=None), critical=True)
        .add_extension(x509.SubjectAlternativeName([x509.DNSName("localhost"), x509.DNSName(common_name)]), critical=False)
        .sign(key, None)
    )
    return Credentials(
        cert.public_bytes(serialization.Encoding.PEM),
        key.private_bytes(serialization.Encoding.PEM, serialization.PrivateFormat.PKCS8, serialization.NoEncryption()),
    )


def fingerprint_of_der(der: bytes) -> str:
    return x509.load_der_x509_certificate(der).fingerprint(hashes.SHA256()).hex()


def tls_context(creds: Credentials, trusted: list[bytes], server_side: bool) -> ssl.SSLContext:
    """Mutual-auth context: present ``creds``, accept only certificates in ``trusted``."""
    ctx = ssl.SSLContext(ssl.PROTOCOL_TLS_SERVER if server_side else ssl.PROTOCOL_TLS_CLIENT)
    ctx.minimum_version = ssl.TLSVersion.TLSv1_2
    ctx.check_hostname = False
    ctx.verify_mode = ssl.CERT_REQUIRED
    ctx.verify_flags |= ssl.VERIFY_X509_PARTIAL_CHAIN
    with tempfile.TemporaryDirectory() as tmp:
        cert, key = Path(tmp, "cert.pem"), Path(tmp, "key.pem")
        cert.write_bytes(creds.cert_pem)
        key.write_bytes(creds.key_pem)
        ctx.load_cert_chain(cert, key)
    for pem in trusted:
        ctx.load_verify_locations(cadata=pem.decode("ascii"))
    return ctx


@dataclass
class PostResult:
    status: int
    body: bytes
    body_wire_bytes: int  # bytes on the socket that carry the request body
    bytes_out: int  # all bytes written for this request (headers, records)
    bytes_in: int
    t_seal_start: float
    t_seal_end: float
    t_sent: float  # the moment the body was handed to the socket


class HttpConnection:
    """One persistent client connection to an agent endpoint."""

    def __init__(self, url: str, tls: ssl.SSLContext | None = None, timeout: float = 30.0) -> None:
        parts = urlsplit(url)
        self.host = parts.hostname or "127.0.0.1"
        self.port = parts.port or 80
        self.path = parts.path or "/"
        self.tls = tls
        self.timeout = timeout
        self.lock = threading.Lock()
        self._sock: socket.socket | None = None
        self._ssl: ssl.SSLObject | None = None
        self._in = self._out = None  # type: ignore[assignment]
        self._buffer = b""
        self.handshake_bytes = 0
        self.handshake_time = 0.0
        self.handshakes = 0
        self.total_bytes_out = 0
        self.total_bytes_in = 0
        self.peer_fingerprint: str | None = None

    @property
    def connected(self) -> bool:
        return self._sock is not None

    def connect(self) -> int:
        """Open the socket (and run the TLS handshake). Returns handshake bytes, 0 if already open."""
        if self._sock is not None:
            return 0
        try:
            sock = socket.create_connection((self.host, self.port), timeout=self.timeout)
        except OSError as exc:
            raise DeliveryError(f"cannot connect to {self.host}:{self.port}: {exc}", phase="connect") from exc
        sock.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
        self._sock = sock
        self._buffer = b""
        if self.tls is None:
            return 0
        start = time.perf_counter()
        self._in, self._out = ssl.MemoryBIO(), ssl.MemoryBIO()
        self._ssl = self.tls.wrap_bio(self._in, self._out, server_side=False, server_hostname=None)
        moved = 0
        while True:
            try:
                self._ssl.do_handshake()
                moved += self._flush()
                break
            except ssl.SSLWantReadError:
                moved += self._flush()
                moved += self._fill()
            except ssl.SSLError as exc:
                self.close()
                raise HandshakeError(f"TLS handshake failed: {exc}") from exc
        # TLS 1.3 sends the session ticket after the handshake; it shows up with the first response.
        cert = self._ssl.getpeercert(binary_form=True)
        self.peer_fingerprint = fingerprint_of_der(cert) if cert else None
        self.handshake_time = time.perf_counter() - start
        self.handshake_bytes = moved
        self.handshakes += 1
        return moved

    def _flush(self) -> int:
        data = self._out.read()
        if data:
            self._sock.sendall(data)  # type: ignore[union-attr]
            self.total_bytes_out += len(data)
        return len(data)

    def _fill(self) -> int:
        data = self._sock.recv(_READ_CHUNK)  # type: ignore[union-attr]
        if not data:
            raise DeliveryError("connection closed by peer", phase="network")
        self.total_bytes_in += len(data)
        self._in.write(data)
        return len(data)

    def _write_plain(self, data: bytes) -> int:
        if self._ssl is None:
            self._sock.sendall(data)  # type: ignore[union-attr]
            self.total_bytes_out += len(data)
            return len(data)
        self._ssl.write(data)
        return self._flush()

    def _recv(self) -> bytes:
        if self._ssl is None:
            data = self._sock.recv(_READ_CHUNK)  # type: ignore[union-attr]
            if not data:
                raise DeliveryError("connection closed by peer", phase="network")
            self.total_bytes_in += len(data)
            return data
        while True:
            try:
                return self._ssl.read(_READ_CHUNK)
            except ssl.SSLWantReadError:
                self._fill()
            except ssl.SSLZeroReturnError as exc:
                raise DeliveryError("TLS session closed by peer", phase="network") from exc

    def _read_response(self) -> tuple[int, bytes]:
        while b"\r\n\r\n" not in self._buffer:
            self._buffer += self._recv()
        head, _, rest = self._buffer.partition(b"\r\n\r\n")
        lines = head.decode("latin-1").split("\r\n")
        status = int(lines[0].split()[1])
        length = 0
        for line in lines[1:]:
            name, _, value = line.partition(":")
            if name.strip().lower() == "content-length":
                length = int(value.strip())
        while len(rest) < length:
            rest += self._recv()
        self._buffer = rest[length:]
        return status, rest[:length]

    def post(self, body: bytes, content_type: str = "application/octet-stream", path: str | None = None) -> PostResult:
        # no retries: a resend could deliver the same envelope twice
        with self.lock:
            try:
                return self._post_once(body, content_type, path)
            except (OSError, DeliveryError) as exc:
                self.close()
                raise DeliveryError(f"POST to {self.host}:{self.port} failed: {exc}", phase="network") from exc

    def _post_once(self, body: bytes, content_type: str, path: str | None) -> PostResult:
        self.connect()
        out_before, in_before = self.total_bytes_out, self.total_bytes_in
        head = (
            f"POST {path or self.path} HTTP/1.1\r\nHost: {self.host}:{self.port}\r\n"
            f"Content-Type: {content_type}\r\nContent-Length: {len(body)}\r\n\r\n"
        ).encode("latin-1")
        self._write_plain(head)
        t_seal_start = time.perf_counter()
        if self._ssl is None:
            t_seal_end = t_sent = t_seal_start
            wire = self._write_plain(body)
        else:
            self._ssl.write(body)
            t_seal_end = t_sent = time.perf_counter()
            wire = self._flush()
        status, payload = self._read_response()
        return PostResult(
            status,
            payload,
            wire,
            self.total_bytes_out - out_before,
            self.total_bytes_in - in_before,
            t_seal_start,
            t_seal_end,
            t_sent,
        )

    def close(self) -> None:
        if self._sock is not None:
            try:
                self._sock.close()
            except OSError:
                pass
        self._sock = None
        self._ssl = None


class AgentHTTPServer(ThreadingHTTPServer):
    """Threaded HTTP server; in TLS mode each accepted socket is wrapped in its worker thread."""

    daemon_threads = True
    allow_reuse_address = False
    block_on_close = False

    def __init__(self, address: tuple[str, int], handler, tls: ssl.SSLContext | None = None) -> None:
        self.tls = tls
        super().__init__(address, handler)

    def finish_request(self, request, client_address) -> None:
        if self.tls is not None:
            try:
                request = self.tls.wrap_socket(request, server_side=True)
            except (ssl.SSLError, OSError) as exc:
                log.info("TLS handshake from %s rejected: %s", client_address, exc)
                return
            try:
                super().finish_request(request, client_address)
            finally:
                request.close()
            return
        super().finish_request(request, client_address)

    def handle_error(self, request, client_address) -> None:
        log.debug("error while serving %s", client_address, exc_info=True)
