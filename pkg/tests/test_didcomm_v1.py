import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from didsba import didcomm_v1 as v1
from didsba.errors import EnvelopeFormatError, IntegrityError, ProtocolStateError, UnauthorizedError
from didsba.identity import Identity
from didsba.resolver import Resolver
from didsba.vdr import VerifiableDataRegistry

from conftest import connect_v1, flip_bit, register


def test_exchange_completes_with_four_messages(alice, bob, resolver):
    a, b, msgs = connect_v1(alice, bob, resolver)
    assert [m.kind for m in msgs] == ["invitation", "request", "response", "complete"]
    assert a.complete and b.complete
    assert a.their_did == bob.did and b.their_did == alice.did
    assert a.their_document == bob.document and b.their_document == alice.document
    assert (a.role, b.role) == ("inviter", "invitee")


def test_each_side_resolves_the_peer_once_then_never(alice, bob, vdr):
    ra, rb = Resolver(vdr), Resolver(vdr)
    inviter, invitee = v1.ConnectionManager(alice, ra), v1.ConnectionManager(bob, rb)
    inv = inviter.create_invitation()
    b_rec, req = invitee.process_invitation(inv)
    a_rec, resp = inviter.process_request(req)
    b_rec, ack = invitee.process_response(resp)
    inviter.process_complete(ack)
    assert ra.snapshot_metrics().ledger_reads == 1
    assert rb.snapshot_metrics().ledger_reads == 1
    for _ in range(5):
        assert v1.unpack_v1(b_rec, v1.pack_v1(a_rec, b"x")) == b"x"
        assert v1.unpack_v1(a_rec, v1.pack_v1(b_rec, b"y")) == b"y"
    assert ra.snapshot_metrics().ledger_reads == 1
    assert rb.snapshot_metrics().ledger_reads == 1


def test_handshake_bytes_are_logged(alice, bob, resolver):
    inviter = v1.ConnectionManager(alice, resolver)
    invitee = v1.ConnectionManager(bob, resolver)
    inv = inviter.create_invitation()
    _, req = invitee.process_invitation(inv)
    _, resp = inviter.process_request(req)
    _, ack = invitee.process_response(resp)
    inviter.process_complete(ack)
    sizes = [len(m.to_bytes()) for m in (inv, req, resp, ack)]
    assert inviter.handshake_bytes(inv.connection_id) == sizes[0] + sizes[2]
    assert invitee.handshake_bytes(inv.connection_id) == sizes[1] + sizes[3]


def test_exchange_messages_roundtrip(alice, bob, resolver):
    _, _, msgs = connect_v1(alice, bob, resolver)
    for m in msgs:
        assert v1.ExchangeMessage.from_bytes(m.to_bytes()) == m


def test_replayed_request_and_unknown_invitation_rejected(alice, bob, resolver):
    inviter, invitee = v1.ConnectionManager(alice, resolver), v1.ConnectionManager(bob, resolver)
    inv = inviter.create_invitation()
    _, req = invitee.process_invitation(inv)
    inviter.process_request(req)
    with pytest.raises(ProtocolStateError):
        inviter.process_request(req)
    stray = v1.ConnectionManager(bob, resolver)
    _, req2 = stray.process_invitation(v1.create_invitation(alice))
    with pytest.raises(ProtocolStateError):
        inviter.process_request(req2)


def test_out_of_order_messages_rejected(alice, bob, resolver):
    inviter, invitee = v1.ConnectionManager(alice, resolver), v1.ConnectionManager(bob, resolver)
    inv = inviter.create_invitation()
    with pytest.raises(ProtocolStateError):
        inviter.handle(v1.ExchangeMessage("complete", inv.connection_id, bob.did))
    b_rec, req = invitee.process_invitation(inv)
    with pytest.raises(ProtocolStateError):
        invitee.process_invitation(inv)
    _, resp = inviter.process_request(req)
    invitee.process_response(resp)
    with pytest.raises(ProtocolStateError):
        invitee.process_response(resp)
    with pytest.raises(ProtocolStateError):
        b_rec.advance(v1.ConnectionState.REQUESTED)


def test_pack_requires_complete_connection(alice, bob):
    rec = v1.ConnectionRecord("c", alice.did, alice)
    with pytest.raises(ProtocolStateError):
        v1.pack_v1(rec, b"x")


def test_inline_document_must_match_ledger(alice, bob, resolver, vdr):
    inviter, invitee = v1.ConnectionManager(alice, resolver), v1.ConnectionManager(bob, resolver)
    inv = inviter.create_invitation()
    _, req = invitee.process_invitation(inv)
    # a document bob never registered, correctly self-signed
    moved = bob.document.with_endpoint("http://evil")
    sig = bob.sign(moved.canonical_bytes() + req.connection_id.encode())
    forged = v1.ExchangeMessage("request", req.connection_id, bob.did, moved, sig)
    with pytest.raises(UnauthorizedError):
        inviter.process_request(forged)
    bad_sig = v1.ExchangeMessage("request", req.connection_id, bob.did, bob.document, b"\0" * 64)
    with pytest.raises(UnauthorizedError):
        inviter.process_request(bad_sig)


def test_responder_must_own_invitation_key(alice, bob, vdr, resolver):
    mallory = register(vdr)
    inviter_a = v1.ConnectionManager(alice, resolver)
    inviter_m = v1.ConnectionManager(mallory, resolver)
    invitee = v1.ConnectionManager(bob, resolver)
    inv = inviter_a.create_invitation()
    _, req = invitee.process_invitation(inv)
    inviter_m.invitations[inv.connection_id] = inv  # mallory intercepts the request
    _, resp = inviter_m.process_request(req)
    with pytest.raises(UnauthorizedError):
        invitee.process_response(resp)


_VDR = VerifiableDataRegistry()
_PAIR = connect_v1(register(_VDR), register(_VDR), Resolver(_VDR))[:2]


@settings(max_examples=30, deadline=None)
@given(payload=st.binary(max_size=4096))
def test_roundtrip(payload):
    a, b = _PAIR
    env = v1.pack_v1(a, payload)
    assert v1.EnvelopeV1.from_bytes(env.to_bytes()) == env
    assert v1.unpack_v1(b, v1.EnvelopeV1.from_bytes(env.to_bytes())) == payload


def test_envelope_size_is_payload_plus_constant(v1_pair):
    a, _ = v1_pair
    sizes = {len(v1.pack_v1(a, bytes(n)).to_bytes()) - n for n in (0, 1, 100, 23_643, 65_536)}
    assert len(sizes) == 1
    env = v1.pack_v1(a, b"abc")
    assert len(env.to_bytes()) == 1 + 4 * 4 + len(env.protected) + v1.IV_SIZE + 3 + v1.TAG_SIZE == len(env)


def test_single_bit_flips_never_deliver(v1_pair):
    a, b = v1_pair
    rng = random.Random(5)
    wire = v1.pack_v1(a, b"payload " * 20).to_bytes()
    for _ in range(200):
        tampered, _ = flip_bit(wire, rng)
        with pytest.raises((IntegrityError, UnauthorizedError)):
            v1.unpack_v1(b, v1.EnvelopeV1.from_bytes(tampered))


def test_envelope_for_someone_else_is_refused(alice, bob, vdr, resolver):
    carol = register(vdr)
    a_b, _, _ = connect_v1(alice, bob, resolver)
    _, c_a, _ = connect_v1(carol, alice, resolver)
    env = v1.pack_v1(a_b, b"for bob")
    with pytest.raises(UnauthorizedError):
        v1.unpack_v1(c_a, env)  # carol holds no key the envelope was encrypted to


def test_wrong_connection_peer_is_refused(alice, bob, vdr, resolver):
    carol = register(vdr)
    a_b, b_a, _ = connect_v1(alice, bob, resolver)
    c_b, b_c, _ = connect_v1(carol, bob, resolver)
    env = v1.pack_v1(c_b, b"from carol")
    with pytest.raises(UnauthorizedError):
        v1.unpack_v1(b_a, env)
    assert v1.unpack_v1(b_c, env) == b"from carol"


def test_format_errors():
    with pytest.raises(EnvelopeFormatError):
        v1.EnvelopeV1.from_bytes(b"\x02" + b"\0" * 40)
    with pytest.raises(EnvelopeFormatError):
        v1.EnvelopeV1.from_bytes(b"\x01\x00")
    assert issubclass(EnvelopeFormatError, IntegrityError)


def test_records_expose_no_secrets(v1_pair):
    a, _ = v1_pair
    view = repr(a.public_view()) + repr(a)
    assert a.my_keys.agreement_key.secret.hex() not in view
    assert isinstance(a.my_keys, Identity)
