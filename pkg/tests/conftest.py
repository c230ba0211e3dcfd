import random

import pytest

from didsba import didcomm_v1 as v1
from didsba.identity import Identity
from didsba.resolver import Resolver
from didsba.vdr import VerifiableDataRegistry


def register(vdr: VerifiableDataRegistry, endpoint: str = "http://127.0.0.1:9/didcomm", rng: random.Random | None = None) -> Identity:
    ident = Identity.generate(endpoint_uri=endpoint, rng=rng)
    vdr.register(ident.document, ident.sign_document())
    return ident


def connect_v1(alice: Identity, bob: Identity, resolver: Resolver | None = None):
    """Run DID Exchange in memory (alice invites). Returns (alice_record, bob_record, messages)."""
    inviter = v1.ConnectionManager(alice, resolver)
    invitee = v1.ConnectionManager(bob, resolver)
    inv = inviter.create_invitation()
    bob_rec, req = invitee.process_invitation(v1.ExchangeMessage.from_bytes(inv.to_bytes()))
    alice_rec, resp = inviter.process_request(v1.ExchangeMessage.from_bytes(req.to_bytes()))
    bob_rec, ack = invitee.process_response(v1.ExchangeMessage.from_bytes(resp.to_bytes()))
    inviter.process_complete(v1.ExchangeMessage.from_bytes(ack.to_bytes()))
    return alice_rec, bob_rec, [inv, req, resp, ack]


@pytest.fixture
def vdr() -> VerifiableDataRegistry:
    return VerifiableDataRegistry()


@pytest.fixture
def resolver(vdr) -> Resolver:
    return Resolver(vdr)


@pytest.fixture
def alice(vdr) -> Identity:
    return register(vdr, "http://127.0.0.1:9/alice")


@pytest.fixture
def bob(vdr) -> Identity:
    return register(vdr, "http://127.0.0.1:9/bob")


@pytest.fixture
def v1_pair(alice, bob, resolver):
    a, b, _ = connect_v1(alice, bob, resolver)
    return a, b


def flip_bit(data: bytes, rng: random.Random) -> tuple[bytes, int]:
    i = rng.randrange(len(data))
    return data[:i] + bytes([data[i] ^ (1 << rng.randrange(8))]) + data[i + 1 :], i


# one pass/fail line per acceptance criterion at the end of the run
_ACCEPTANCE: dict[str, str] = {}


def pytest_runtest_logreport(report):
    if "test_acceptance.py::test_criterion_" not in report.nodeid:
        return
    if report.when == "call" or report.outcome != "passed":
        previous = _ACCEPTANCE.get(report.nodeid)
        if previous in (None, "passed"):
            _ACCEPTANCE[report.nodeid] = report.outcome


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    grouped: dict[int, tuple[str, list[str]]] = {}
    for nodeid, outcome in _ACCEPTANCE.items():
        name = nodeid.split("::test_criterion_", 1)[1].split("[", 1)[0]
        number, _, label = name.partition("_")
        grouped.setdefault(int(number), (label.replace("_", " "), []))[1].append(outcome)
    terminalreporter.section("acceptance criteria")
    for number, (label, outcomes) in sorted(grouped.items()):
        verdict = "PASS" if all(o == "passed" for o in outcomes) else "FAIL"
        terminalreporter.write_line(f"criterion {number:>2} {label}: {verdict}")
