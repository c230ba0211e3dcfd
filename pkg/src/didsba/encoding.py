"""Byte-level encodings: canonical JSON, base64url, multibase keys, length-prefixed frames."""

from __future__ import annotations

import base64
import binascii
import json
import re
import struct
from typing import Any, Iterator

import base58

from didsba.errors import EnvelopeFormatError, ValidationError

_U32 = struct.Struct(">I")
_B64U_RE = re.compile(rb"^[A-Za-z0-9_-]*$")


def canonical_json(obj: Any) -> bytes:
    """Deterministic JSON: sorted keys, no whitespace, ASCII only."""
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), ensure_ascii=True).encode("ascii")


def b64u_encode(data: bytes) -> str:
    return base64.urlsafe_b64encode(data).rstrip(b"=").decode("ascii")


def b64u_decode(text: str | bytes) -> bytes:
    if isinstance(text, str):
        try:
            text = text.encode("ascii")
        except UnicodeEncodeError as exc:
            raise ValidationError("invalid base64url: non-ASCII input") from exc
    if not _B64U_RE.match(text) or len(text) % 4 == 1:
        raise ValidationError("invalid base64url: characters outside the URL-safe alphabet or bad length")
    try:
        return base64.urlsafe_b64decode(text + b"=" * (-len(text) % 4))
    except (binascii.Error, ValueError) as exc:
        raise ValidationError(f"invalid base64url: {exc}") from exc


def multibase_b58(data: bytes) -> str:
    return "z" + base58.b58encode(data).decode("ascii")


def multibase_b64u(data: bytes) -> str:
    return "u" + b64u_encode(data)


def multibase_decode(text: str) -> bytes:
    if not text:
        raise ValidationError("empty multibase string")
    prefix, rest = text[0], text[1:]
    try:
        if prefix == "z":
            return base58.b58decode(rest)
        if prefix == "u":
            return b64u_decode(rest)
    except ValueError as exc:
        raise ValidationError(f"invalid multibase payload: {exc}") from exc
    raise ValidationError(f"unsupported multibase prefix {prefix!r}")


def frame(*fields: bytes) -> bytes:
    """Concatenate fields, each preceded by its 4-byte big-endian length."""
    return b"".join(_U32.pack(len(f)) + f for f in fields)


def iter_frames(data: bytes, offset: int = 0) -> Iterator[bytes]:
    end = len(data)
    while offset < end:
        if offset + 4 > end:
            raise EnvelopeFormatError("truncated length prefix")
        (n,) = _U32.unpack_from(data, offset)
        offset += 4
        if offset + n > end:
            raise EnvelopeFormatError("field length exceeds envelope")
        yield data[offset : offset + n]
        offset += n


def unframe(data: bytes, count: int, offset: int = 0) -> list[bytes]:
    fields = list(iter_frames(data, offset))
    if len(fields) != count:
        raise EnvelopeFormatError(f"expected {count} fields, found {len(fields)}")
    return fields
