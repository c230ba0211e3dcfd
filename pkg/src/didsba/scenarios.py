"""Simulated 5G core procedures run over v1, v2 or tls agents.

* UE registration, the AMF<->AUSF and AMF<->UDM legs, as a script of
  request/response steps with synthetic fixed-size payloads;
* SM context creation, where the SMF authorizes the AMF with an
  NRF-issued credential presented against an SMF nonce;
* a steady AMF->SMF stream for cumulative-byte crossover studies.

Scripts are data: a JSON list of step records
``{"sender", "receiver", "message_type", "payload_size", "expects_reply"[, "reply_size"]}``.
"""

from __future__ import annotations

import json
import math
import random
import time
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Callable, Sequence

from didsba import credentials as vc
from didsba.agent import Agent, AgentConfig, DeliveryReceipt, InboundMessage
from didsba.errors import DidError, StartupError, ValidationError, VdrUnavailableError
from didsba.identity import Did
from didsba.resolver import CachePolicy
from didsba.vdr import VdrConfig, VerifiableDataRegistry

NF_TYPES = ("AMF", "SMF", "NRF", "AUSF", "UDM")
MEAN_PAYLOAD = 23_643

_T = "https://didcomm.org/5g-sba/1.0/"


@dataclass(frozen=True)
class ScenarioStep:
    sender: str
    receiver: str
    message_type: str
    payload_size: int
    expects_reply: bool = True
    reply_size: int | None = None

    def __post_init__(self) -> None:
        if self.payload_size < 0 or (self.reply_size is not None and self.reply_size < 0):
            raise ValidationError("payload sizes must be >= 0")
        for nf in (self.sender, self.receiver):
            if nf not in NF_TYPES:
                raise ValidationError(f"unknown NF type {nf!r}")

    @property
    def response_size(self) -> int:
        return self.payload_size if self.reply_size is None else self.reply_size


@dataclass(frozen=True)
class ScenarioScript:
    name: str
    steps: tuple[ScenarioStep, ...]

    @classmethod
    def from_json(cls, data: str | bytes, name: str = "custom") -> ScenarioScript:
        records = json.loads(data)
        if isinstance(records, dict):
            name, records = records.get("name", name), records["steps"]
        return cls(name, tuple(ScenarioStep(**r) for r in records))

    @classmethod
    def load(cls, path: str | Path) -> ScenarioScript:
        path = Path(path)
        return cls.from_json(path.read_text(), name=path.stem)

    def to_json(self) -> str:
        steps = []
        for s in self.steps:
            d = {
                "sender": s.sender,
                "receiver": s.receiver,
                "message_type": s.message_type,
                "payload_size": s.payload_size,
                "expects_reply": s.expects_reply,
            }
            if s.reply_size is not None:
                d["reply_size"] = s.reply_size
            steps.append(d)
        return json.dumps(steps, indent=2)

    @property
    def mean_payload(self) -> float:
        return sum(s.payload_size for s in self.steps) / len(self.steps)


# Steps 0-2: AMF <-> AUSF authentication; steps 3-4: AMF <-> UDM registration and subscription data.
UE_REGISTRATION = ScenarioScript(
    "ue-registration",
    (
        ScenarioStep("AMF", "AUSF", _T + "nausf-auth/ue-authentications", 30_000),
        ScenarioStep("AMF", "AUSF", _T + "nausf-auth/5g-aka-confirmation", 20_000),
        ScenarioStep("AMF", "AUSF", _T + "nausf-auth/eap-session", 25_000),
        ScenarioStep("AMF", "UDM", _T + "nudm-uecm/registration", 22_215),
        ScenarioStep("AMF", "UDM", _T + "nudm-sdm/subscription-data", 21_000),
    ),
)


@dataclass
class NfInstance:
    nf_type: str
    agent: Agent
    sessions: list[dict[str, Any]] = field(default_factory=list)

    @property
    def did(self) -> Did:
        return self.agent.did


@dataclass
class Topology:
    protocol: str
    vdr: VerifiableDataRegistry
    nfs: dict[str, NfInstance]
    seed: int
    schema_id: str
    registry_id: str

    def __getitem__(self, nf_type: str) -> NfInstance:
        return self.nfs[nf_type]

    def close(self) -> None:
        for nf in self.nfs.values():
            nf.agent.stop()

    def __enter__(self) -> Topology:
        return self

    def __exit__(self, *exc: object) -> None:
        self.close()

    def resolver_metrics(self) -> dict[str, Any]:
        return {t: nf.agent.resolver.snapshot_metrics() for t, nf in self.nfs.items()}

    def reset_metrics(self) -> None:
        for nf in self.nfs.values():
            nf.agent.resolver.reset_metrics()


def build_topology(
    protocol: str,
    *,
    seed: int = 0,
    resolver_delay: float = 0.0,
    cache: CachePolicy | None = None,
    vdr: VerifiableDataRegistry | None = None,
) -> Topology:
    """Start one agent per NF type, register their DIDs, and set up the NRF's schema and revocation registry."""
    vdr = vdr if vdr is not None else VerifiableDataRegistry()
    if not vdr.online:
        raise StartupError("VDR is unavailable")
    rng = random.Random(seed)
    nfs: dict[str, NfInstance] = {}
    try:
        for nf_type in NF_TYPES:
            config = AgentConfig(nf_type, protocol=protocol, cache_policy=cache or CachePolicy(), vdr_delays=VdrConfig(resolver_delay))
            agent = Agent(config, vdr).start()
            nfs[nf_type] = NfInstance(nf_type, agent)
            agent.create_identity(rng)
        if protocol == "tls":
            for a in nfs.values():
                for b in nfs.values():
                    if a is not b:
                        a.agent.trust_peer(b.did, b.agent.endpoint_uri, b.agent.tls_credentials.cert_pem)  # type: ignore[union-attr]
        nrf = nfs["NRF"].agent.identity
        schema = vc.define_schema(nrf, vdr)
        registry_id = vc.create_revocation_registry(nrf, vdr)
    except VdrUnavailableError as exc:
        for nf in nfs.values():
            nf.agent.stop()
        raise StartupError(f"VDR is unavailable: {exc}") from exc
    except Exception:
        for nf in nfs.values():
            nf.agent.stop()
        raise
    for nf in nfs.values():
        nf.agent.resolver.reset_metrics()
    return Topology(protocol, vdr, nfs, seed, schema.schema_id, registry_id)


@dataclass
class StepRecord:
    index: int
    label: str
    receipts: list[DeliveryReceipt]
    step_bytes: int
    cumulative_bytes: int


@dataclass
class ScenarioResult:
    name: str
    protocol: str
    steps: list[StepRecord] = field(default_factory=list)
    delivered: list[tuple[str, str, str, bytes]] = field(default_factory=list)  # (sender, receiver, type, body)
    authorization: list[vc.VerificationOutcome] = field(default_factory=list)
    session_created: bool = False
    completed: bool = True
    failure: str | None = None

    @property
    def cumulative_bytes(self) -> list[int]:
        return [s.cumulative_bytes for s in self.steps]

    @property
    def receipts(self) -> list[DeliveryReceipt]:
        return [r for s in self.steps for r in s.receipts]

    @property
    def handshake_bytes(self) -> int:
        return sum(r.handshake_bytes for r in self.receipts)

    def add_step(self, label: str, receipts: list[DeliveryReceipt]) -> StepRecord:
        step_bytes = sum(r.wire_bytes + r.handshake_bytes for r in receipts)
        prev = self.steps[-1].cumulative_bytes if self.steps else 0
        record = StepRecord(len(self.steps), label, receipts, step_bytes, prev + step_bytes)
        self.steps.append(record)
        return record


def _transmit(topo: Topology, sender: str, receiver: str, message_type: str, body: bytes, result: ScenarioResult) -> DeliveryReceipt:
    rx = topo[receiver].agent
    expected = len(rx.inbox) + 1
    receipt = topo[sender].agent.send(topo[receiver].did, message_type, body)
    delivered = rx.wait_for_messages(expected)[expected - 1]
    result.delivered.append((sender, receiver, delivered.message_type, delivered.body))
    return receipt


def run_ue_registration(topology: Topology, script: ScenarioScript = UE_REGISTRATION, seed: int | None = None) -> ScenarioResult:
    rng = random.Random(topology.seed if seed is None else seed)
    result = ScenarioResult(script.name, topology.protocol)
    try:
        for step in script.steps:
            receipts = [_transmit(topology, step.sender, step.receiver, step.message_type, rng.randbytes(step.payload_size), result)]
            if step.expects_reply:
                reply_type = step.message_type + "/response"
                receipts.append(_transmit(topology, step.receiver, step.sender, reply_type, rng.randbytes(step.response_size), result))
            result.add_step(step.message_type.rsplit("/", 1)[-1], receipts)
    except DidError as exc:
        result.completed = False
        result.failure = f"{type(exc).__name__}: {exc}"
    return result


def repeat_messages(topology: Topology, count: int, payload_size: int = MEAN_PAYLOAD, seed: int | None = None) -> ScenarioResult:
    """Send ``count`` same-size messages AMF -> SMF; one step per message."""
    rng = random.Random(topology.seed if seed is None else seed)
    result = ScenarioResult("repeat", topology.protocol)
    try:
        for i in range(count):
            receipt = _transmit(topology, "AMF", "SMF", _T + "nsmf-pdusession/update", rng.randbytes(payload_size), result)
            result.add_step(f"message-{i + 1}", [receipt])
    except DidError as exc:
        result.completed = False
        result.failure = f"{type(exc).__name__}: {exc}"
    return result


def envelope_overhead(result: ScenarioResult) -> int:
    """Per-message wire bytes minus body bytes, taken from a steady-state receipt."""
    r = [r for r in result.receipts if r.handshake_bytes == 0][-1]
    return r.wire_bytes - r.body_bytes


def crossover(v1_result: ScenarioResult, v2_result: ScenarioResult) -> int | None:
    """First message index (1-based) at which cumulative v2 bytes exceed v1, or None."""
    for i, (a, b) in enumerate(zip(v1_result.cumulative_bytes, v2_result.cumulative_bytes), start=1):
        if b > a:
            return i
    return None


def predicted_crossover(handshake_bytes: int, o1: int, o2: int) -> int:
    return math.ceil(handshake_bytes / (o2 - o1))


# SM context ------------------------------------------------------------

VpMutator = Callable[[vc.VerifiablePresentation, Topology], vc.VerifiablePresentation]


def issue_authorization(topology: Topology, subject: str = "AMF", *, now: float | None = None, lifetime: float = 3600.0, **claims: str) -> vc.VerifiableCredential:
    now = time.time() if now is None else now
    nrf = topology["NRF"].agent.identity
    values = {"nf_type": subject, "allowed_service": "nsmf-pdusession", "expiry": str(int(now + lifetime))}
    values.update(claims)
    return vc.issue(nrf, topology.vdr, topology.schema_id, topology[subject].did, values, topology.registry_id, now=now)


def run_sm_context(
    topology: Topology,
    *,
    revoke_first: bool = False,
    replay: bool = False,
    vp_mutator: VpMutator | None = None,
    credential: vc.VerifiableCredential | None = None,
    now: float | None = None,
    verify_at: float | None = None,
) -> ScenarioResult:
    """AMF obtains an NRF credential and uses it to create an SM context at the SMF.

    Steps: (0) NRF->AMF credential; (1) AMF->SMF challenge request, SMF->AMF
    nonce; (2) AMF->SMF create request carrying the presentation,
    SMF->AMF created/denied. The SMF creates a session iff verification grants.
    ``now`` is the issuance time; ``verify_at`` (default ``now``) is the SMF's clock.
    """
    now = time.time() if now is None else now
    verify_at = now if verify_at is None else verify_at
    result = ScenarioResult("sm-context", topology.protocol)
    amf, smf, nrf = topology["AMF"], topology["SMF"], topology["NRF"]
    try:
        issued = credential or issue_authorization(topology, now=now)
        r0 = _transmit(topology, "NRF", "AMF", _T + "issue-credential/credential", issued.to_bytes(), result)
        held = vc.VerifiableCredential.from_bytes(result.delivered[-1][3])
        amf.agent.store_credential(held)
        result.add_step("issue-credential", [r0])
        if revoke_first:
            vc.revoke(nrf.agent.identity, topology.vdr, issued)

        nonce = vc.new_nonce()
        r1 = _transmit(topology, "AMF", "SMF", _T + "nsmf-pdusession/challenge-request", b"", result)
        r2 = _transmit(topology, "SMF", "AMF", _T + "nsmf-pdusession/challenge", nonce, result)
        result.add_step("challenge", [r1, r2])
        received_nonce = result.delivered[-1][3]

        bound_nonce = vc.new_nonce() if replay else received_nonce
        vp = vc.present(amf.agent.identity, held, bound_nonce)
        if vp_mutator is not None:
            vp = vp_mutator(vp, topology)
        r3 = _transmit(topology, "AMF", "SMF", _T + "nsmf-pdusession/sm-contexts", vp.to_bytes(), result)

        try:
            presented = vc.VerifiablePresentation.from_bytes(result.delivered[-1][3])
            outcome = vc.verify_presentation(presented, nonce, verify_at, smf.agent.resolver, smf.agent.vdr)
        except ValidationError:
            outcome = vc.VerificationOutcome.deny(vc.Reason.SCHEMA_MISMATCH)
        result.authorization.append(outcome)
        if outcome.granted:
            session = {"session_id": f"pdu-{len(smf.sessions) + 1}", "amf": str(amf.did), "credential": held.credential_id}
            smf.sessions.append(session)
            result.session_created = True
            reply = (_T + "nsmf-pdusession/sm-context-created", json.dumps(session).encode())
        else:
            reply = (_T + "nsmf-pdusession/sm-context-denied", json.dumps({"reason": outcome.reason.value}).encode())
        r4 = _transmit(topology, "SMF", "AMF", reply[0], reply[1], result)
        result.add_step("sm-context", [r3, r4])
    except DidError as exc:
        result.completed = False
        result.failure = f"{type(exc).__name__}: {exc}"
    return result


def _flip(data: bytes, rng: random.Random) -> bytes:
    i = rng.randrange(len(data))
    return data[:i] + bytes([data[i] ^ (1 << rng.randrange(8))]) + data[i + 1 :]


def invalid_vp_variants() -> dict[str, Callable[[random.Random], dict[str, Any]]]:
    """Named generators of run_sm_context keyword arguments that must all be denied."""

    def tamper_claim(rng: random.Random) -> dict[str, Any]:
        key = rng.choice(["nf_type", "allowed_service", "expiry"])

        def m(vp: vc.VerifiablePresentation, topo: Topology) -> vc.VerifiablePresentation:
            claims = dict(vp.credential.claims)
            claims[key] = claims[key] + rng.choice(["x", "0", "-admin"])
            return replace(vp, credential=replace(vp.credential, claims=claims))

        return {"vp_mutator": m}

    def flip_issuer_signature(rng: random.Random) -> dict[str, Any]:
        def m(vp: vc.VerifiablePresentation, topo: Topology) -> vc.VerifiablePresentation:
            return replace(vp, credential=replace(vp.credential, issuer_signature=_flip(vp.credential.issuer_signature, rng)))

        return {"vp_mutator": m}

    def flip_holder_signature(rng: random.Random) -> dict[str, Any]:
        def m(vp: vc.VerifiablePresentation, topo: Topology) -> vc.VerifiablePresentation:
            return replace(vp, holder_signature=_flip(vp.holder_signature, rng))

        return {"vp_mutator": m}

    def flip_nonce(rng: random.Random) -> dict[str, Any]:
        def m(vp: vc.VerifiablePresentation, topo: Topology) -> vc.VerifiablePresentation:
            return replace(vp, nonce=_flip(vp.nonce, rng))

        return {"vp_mutator": m}

    def wrong_holder(rng: random.Random) -> dict[str, Any]:
        other = rng.choice(["SMF", "UDM", "AUSF", "NRF"])

        def m(vp: vc.VerifiablePresentation, topo: Topology) -> vc.VerifiablePresentation:
            return replace(vp, holder=topo[other].did)

        return {"vp_mutator": m}

    def forged_issuer(rng: random.Random) -> dict[str, Any]:
        # AMF signs its own credential but claims the NRF issued it
        def m(vp: vc.VerifiablePresentation, topo: Topology) -> vc.VerifiablePresentation:
            amf = topo["AMF"].agent.identity
            fake = replace(vp.credential, credential_id=f"forged-{rng.randrange(10**6)}")
            fake = replace(fake, issuer_signature=amf.sign(fake.canonical_bytes()))
            return vc.present(amf, fake, vp.nonce)

        return {"vp_mutator": m}

    def extra_claim(rng: random.Random) -> dict[str, Any]:
        def m(vp: vc.VerifiablePresentation, topo: Topology) -> vc.VerifiablePresentation:
            claims = {**vp.credential.claims, "role": "admin"}
            return replace(vp, credential=replace(vp.credential, claims=claims))

        return {"vp_mutator": m}

    return {
        "replay": lambda rng: {"replay": True},
        "revoked": lambda rng: {"revoke_first": True},
        "expired": lambda rng: {"verify_at": time.time() + 3600 + rng.randrange(1, 10_000)},
        "tamper_claim": tamper_claim,
        "flip_issuer_signature": flip_issuer_signature,
        "flip_holder_signature": flip_holder_signature,
        "flip_nonce": flip_nonce,
        "wrong_holder": wrong_holder,
        "forged_issuer": forged_issuer,
        "extra_claim": extra_claim,
    }


def payload_sequence(result: ScenarioResult) -> Sequence[tuple[str, str, str, bytes]]:
    return list(result.delivered)
