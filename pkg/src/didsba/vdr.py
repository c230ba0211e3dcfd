"""In-memory verifiable data registry.

Stores DID documents, credential schemas and revocation registries. Every
write carries a signature proof; document writes are authorized by the
owner key fixed at registration, schema/registry writes by the issuer's
owner key. Reads sleep ``read_delay`` to model remote-ledger access.
"""

from __future__ import annotations

import json
import threading
import time
from collections import defaultdict
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any

from didsba.encoding import canonical_json, multibase_b58, multibase_decode
from didsba.errors import AlreadyExistsError, NotFoundError, UnauthorizedError, ValidationError, VdrUnavailableError
from didsba.identity import Did, DidDocument, as_did, verify

SNAPSHOT_VERSION = 1


@dataclass(frozen=True)
class VdrConfig:
    read_delay: float = 0.0  # seconds
    write_delay: float = 0.0

    def __post_init__(self) -> None:
        if self.read_delay < 0 or self.write_delay < 0:
            raise ValidationError("VDR delays must be >= 0")


@dataclass(frozen=True)
class LedgerEntry:
    did: Did
    document: DidDocument
    version: int
    owner_key: bytes


@dataclass(frozen=True)
class SchemaRecord:
    schema_id: str
    attribute_names: tuple[str, ...]
    issuer: Did

    def __post_init__(self) -> None:
        if not self.attribute_names:
            raise ValidationError("schema needs at least one attribute")
        if len(set(self.attribute_names)) != len(self.attribute_names):
            raise ValidationError("schema attribute names must be unique")

    def proof_payload(self) -> bytes:
        return canonical_json(
            {
                "op": "put-schema",
                "schema_id": self.schema_id,
                "attribute_names": list(self.attribute_names),
                "issuer": str(self.issuer),
            }
        )


@dataclass(frozen=True)
class RevocationRegistry:
    registry_id: str
    issuer: Did
    revoked: frozenset[str] = frozenset()


def registry_proof_payload(registry_id: str, issuer: Did) -> bytes:
    return canonical_json({"op": "create-registry", "registry_id": registry_id, "issuer": str(issuer)})


def revoke_proof_payload(registry_id: str, credential_id: str) -> bytes:
    return canonical_json({"op": "revoke", "registry_id": registry_id, "credential_id": credential_id})


@dataclass
class _LedgerState:
    entries: dict[str, LedgerEntry] = field(default_factory=dict)
    history: dict[str, list[int]] = field(default_factory=lambda: defaultdict(list))
    schemas: dict[str, SchemaRecord] = field(default_factory=dict)
    registries: dict[str, RevocationRegistry] = field(default_factory=dict)
    guard: threading.Lock = field(default_factory=threading.Lock)
    write_locks: dict[str, threading.Lock] = field(default_factory=lambda: defaultdict(threading.Lock))
    online: bool = True

    def lock_for(self, key: str) -> threading.Lock:
        with self.guard:
            return self.write_locks[key]


class VerifiableDataRegistry:
    """Process-local ledger. ``with_config`` gives a view with other delays over the same state."""

    def __init__(self, config: VdrConfig | None = None, *, _state: _LedgerState | None = None) -> None:
        self.config = config or VdrConfig()
        self._state = _state or _LedgerState()

    def with_config(self, config: VdrConfig) -> VerifiableDataRegistry:
        return VerifiableDataRegistry(config, _state=self._state)

    # availability -----------------------------------------------------

    @property
    def online(self) -> bool:
        return self._state.online

    def shutdown(self) -> None:
        self._state.online = False

    def _check_online(self) -> None:
        if not self._state.online:
            raise VdrUnavailableError("registry is offline")

    def _read_pause(self) -> None:
        self._check_online()
        if self.config.read_delay:
            time.sleep(self.config.read_delay)

    def _write_pause(self) -> None:
        self._check_online()
        if self.config.write_delay:
            time.sleep(self.config.write_delay)

    # DID documents ----------------------------------------------------

    def register(self, document: DidDocument, proof: bytes) -> int:
        key = str(document.id)
        owner = document.signing_key.public
        with self._state.lock_for(key):
            self._write_pause()
            if key in self._state.entries:
                raise AlreadyExistsError(f"{key} is already registered")
            if document.version != 1:
                raise ValidationError("a new registration must carry version 1")
            if not verify(owner, document.canonical_bytes(), proof):
                raise UnauthorizedError("registration proof does not verify under the document's signing key")
            entry = LedgerEntry(document.id, document, 1, owner)
            with self._state.guard:
                self._state.entries[key] = entry
                self._state.history[key].append(1)
        return 1

    def update(self, did: Did | str, document: DidDocument, proof: bytes) -> int:
        did = as_did(did)
        key = str(did)
        with self._state.lock_for(key):
            self._write_pause()
            current = self._state.entries.get(key)
            if current is None:
                raise NotFoundError(f"{key} is not registered")
            if not verify(current.owner_key, document.canonical_bytes(), proof):
                raise UnauthorizedError(f"update of {key} not signed by its owner")
            if document.id != did:
                raise ValidationError("document id does not match the DID being updated")
            version = current.version + 1
            if document.version != version:
                raise ValidationError(f"update must carry version {version}, got {document.version}")
            with self._state.guard:
                self._state.entries[key] = replace(current, document=document, version=version)
                self._state.history[key].append(version)
        return version

    def read_document(self, did: Did | str) -> tuple[DidDocument, int]:
        key = str(did)
        self._read_pause()
        entry = self._state.entries.get(key)
        if entry is None:
            raise NotFoundError(f"{key} is not registered")
        return entry.document, entry.version

    def entry(self, did: Did | str) -> LedgerEntry:
        entry = self._state.entries.get(str(did))
        if entry is None:
            raise NotFoundError(f"{did} is not registered")
        return entry

    def exists(self, did: Did | str) -> bool:
        return str(did) in self._state.entries

    def versions(self, did: Did | str) -> list[int]:
        with self._state.guard:
            return list(self._state.history.get(str(did), []))

    def __len__(self) -> int:
        return len(self._state.entries)

    def _owner_key(self, did: Did) -> bytes:
        return self.entry(did).owner_key

    # schemas ----------------------------------------------------------

    def put_schema(self, record: SchemaRecord, proof: bytes) -> SchemaRecord:
        with self._state.lock_for("schema:" + record.schema_id):
            self._write_pause()
            if not verify(self._owner_key(record.issuer), record.proof_payload(), proof):
                raise UnauthorizedError("schema proof not signed by issuer")
            with self._state.guard:
                if record.schema_id in self._state.schemas:
                    raise AlreadyExistsError(f"schema {record.schema_id} exists")
                self._state.schemas[record.schema_id] = record
        return record

    def get_schema(self, schema_id: str) -> SchemaRecord:
        self._read_pause()
        try:
            return self._state.schemas[schema_id]
        except KeyError:
            raise NotFoundError(f"schema {schema_id} not found") from None

    # revocation -------------------------------------------------------

    def create_registry(self, registry_id: str, issuer: Did | str, proof: bytes) -> RevocationRegistry:
        issuer = as_did(issuer)
        with self._state.lock_for("registry:" + registry_id):
            self._write_pause()
            if not verify(self._owner_key(issuer), registry_proof_payload(registry_id, issuer), proof):
                raise UnauthorizedError("registry proof not signed by issuer")
            with self._state.guard:
                if registry_id in self._state.registries:
                    raise AlreadyExistsError(f"registry {registry_id} exists")
                reg = RevocationRegistry(registry_id, issuer)
                self._state.registries[registry_id] = reg
        return reg

    def revoke(self, registry_id: str, credential_id: str, proof: bytes) -> None:
        with self._state.lock_for("registry:" + registry_id):
            self._write_pause()
            reg = self._registry(registry_id)
            if not verify(self._owner_key(reg.issuer), revoke_proof_payload(registry_id, credential_id), proof):
                raise UnauthorizedError("revocation not signed by the registry issuer")
            with self._state.guard:
                self._state.registries[registry_id] = replace(reg, revoked=reg.revoked | {credential_id})

    def is_revoked(self, registry_id: str, credential_id: str) -> bool:
        self._read_pause()
        return credential_id in self._registry(registry_id).revoked

    def get_registry(self, registry_id: str) -> RevocationRegistry:
        self._read_pause()
        return self._registry(registry_id)

    def _registry(self, registry_id: str) -> RevocationRegistry:
        try:
            return self._state.registries[registry_id]
        except KeyError:
            raise NotFoundError(f"revocation registry {registry_id} not found") from None

    # snapshots --------------------------------------------------------

    def snapshot(self) -> dict[str, Any]:
        with self._state.guard:
            return {
                "snapshot_version": SNAPSHOT_VERSION,
                "entries": [
                    {
                        "document": e.document.to_dict(),
                        "version": e.version,
                        "owner_key": multibase_b58(e.owner_key),
                        "history": list(self._state.history[k]),
                    }
                    for k, e in sorted(self._state.entries.items())
                ],
                "schemas": [
                    {"schema_id": s.schema_id, "attribute_names": list(s.attribute_names), "issuer": str(s.issuer)}
                    for _, s in sorted(self._state.schemas.items())
                ],
                "registries": [
                    {"registry_id": r.registry_id, "issuer": str(r.issuer), "revoked": sorted(r.revoked)}
                    for _, r in sorted(self._state.registries.items())
                ],
            }

    def export_snapshot(self, path: str | Path) -> Path:
        path = Path(path)
        path.write_bytes(canonical_json(self.snapshot()))
        return path

    @classmethod
    def from_snapshot(cls, data: dict[str, Any], config: VdrConfig | None = None) -> VerifiableDataRegistry:
        if data.get("snapshot_version") != SNAPSHOT_VERSION:
            raise ValidationError("unsupported snapshot version")
        state = _LedgerState()
        for e in data["entries"]:
            doc = DidDocument.from_dict(e["document"])
            key = str(doc.id)
            state.entries[key] = LedgerEntry(doc.id, doc, int(e["version"]), multibase_decode(e["owner_key"]))
            state.history[key] = list(e["history"])
        for s in data["schemas"]:
            rec = SchemaRecord(s["schema_id"], tuple(s["attribute_names"]), as_did(s["issuer"]))
            state.schemas[rec.schema_id] = rec
        for r in data["registries"]:
            state.registries[r["registry_id"]] = RevocationRegistry(
                r["registry_id"], as_did(r["issuer"]), frozenset(r["revoked"])
            )
        return cls(config, _state=state)

    @classmethod
    def import_snapshot(cls, path: str | Path, config: VdrConfig | None = None) -> VerifiableDataRegistry:
        return cls.from_snapshot(json.loads(Path(path).read_bytes()), config)
