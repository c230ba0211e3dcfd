from dataclasses import replace

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from didsba import credentials as vc
from didsba.errors import HolderMismatchError, NotFoundError, UnauthorizedError, ValidationError
from didsba.resolver import Resolver
from didsba.vdr import VerifiableDataRegistry

from conftest import register

NOW = 1_700_000_000.0


class World:
    def __init__(self):
        self.vdr = VerifiableDataRegistry()
        self.nrf, self.amf, self.smf = register(self.vdr), register(self.vdr), register(self.vdr)
        self.schema = vc.define_schema(self.nrf, self.vdr)
        self.registry = vc.create_revocation_registry(self.nrf, self.vdr)
        self.resolver = Resolver(self.vdr)

    def issue(self, **claims):
        values = {"nf_type": "AMF", "allowed_service": "nsmf-pdusession", "expiry": str(int(NOW + 3600))}
        values.update(claims)
        return vc.issue(self.nrf, self.vdr, self.schema.schema_id, self.amf.did, values, self.registry, now=NOW)

    def verify(self, vp, nonce, now=NOW):
        return vc.verify_presentation(vp, nonce, now, self.resolver, self.vdr)


@pytest.fixture
def world():
    return World()


def test_happy_path_grants(world):
    cred = world.issue()
    nonce = vc.new_nonce()
    assert len(nonce) == vc.NONCE_SIZE
    assert world.verify(vc.present(world.amf, cred, nonce), nonce) == vc.GRANTED


def test_revoked_credential_is_denied(world):
    cred = world.issue()
    vc.revoke(world.nrf, world.vdr, cred)
    nonce = vc.new_nonce()
    out = world.verify(vc.present(world.amf, cred, nonce), nonce)
    assert out == vc.VerificationOutcome.deny(vc.Reason.REVOKED)


def test_only_issuer_may_revoke(world):
    cred = world.issue()
    with pytest.raises(UnauthorizedError):
        vc.revoke(world.amf, world.vdr, cred)


def test_replayed_presentation_is_denied(world):
    cred = world.issue()
    first = vc.new_nonce()
    vp = vc.present(world.amf, cred, first)
    assert world.verify(vp, first).granted
    out = world.verify(vp, vc.new_nonce())
    assert out.reason is vc.Reason.NONCE_MISMATCH and not out.granted


def test_expiry_boundary(world):
    cred = world.issue()
    nonce = vc.new_nonce()
    vp = vc.present(world.amf, cred, nonce)
    assert world.verify(vp, nonce, now=NOW + 3599).granted
    assert world.verify(vp, nonce, now=NOW + 3600).reason is vc.Reason.EXPIRED


def test_non_subject_cannot_present(world):
    with pytest.raises(HolderMismatchError):
        vc.present(world.smf, world.issue(), vc.new_nonce())


def test_presentation_under_other_holder_did(world):
    cred = world.issue()
    nonce = vc.new_nonce()
    vp = replace(vc.present(world.amf, cred, nonce), holder=world.smf.did)
    assert world.verify(vp, nonce).reason is vc.Reason.HOLDER_MISMATCH


def test_forged_holder_signature(world):
    cred = world.issue()
    nonce = vc.new_nonce()
    vp = vc.present(world.amf, cred, nonce)
    forged = replace(vp, holder_signature=world.smf.sign(vc.presentation_payload(cred, nonce)))
    assert world.verify(forged, nonce).reason is vc.Reason.BAD_HOLDER_SIGNATURE


def test_issuance_checks_schema_and_subject(world):
    with pytest.raises(ValidationError):
        world.issue(extra="x")
    with pytest.raises(NotFoundError):
        vc.issue(world.nrf, world.vdr, "missing", world.amf.did, {}, world.registry)
    other = register(VerifiableDataRegistry())
    with pytest.raises(NotFoundError):
        vc.issue(world.nrf, world.vdr, world.schema.schema_id, other.did, {"nf_type": "x", "allowed_service": "y", "expiry": "1"}, world.registry)


def test_credential_from_self_declared_schema_is_denied(world):
    # AMF publishes a look-alike schema and issues to itself; the NRF-anchored checks still fail
    fake_schema = vc.define_schema(world.amf, world.vdr)
    fake_reg = vc.create_revocation_registry(world.amf, world.vdr)
    values = {"nf_type": "AMF", "allowed_service": "nsmf-pdusession", "expiry": str(int(NOW + 3600))}
    cred = vc.issue(world.amf, world.vdr, fake_schema.schema_id, world.amf.did, values, fake_reg, now=NOW)
    forged = replace(cred, issuer=world.nrf.did)
    nonce = vc.new_nonce()
    assert world.verify(vc.present(world.amf, forged, nonce), nonce).reason is vc.Reason.BAD_ISSUER_SIGNATURE
    # pointing a genuine NRF credential at a schema the NRF does not own breaks the issuer signature too
    cred2 = replace(world.issue(), schema_id=fake_schema.schema_id)
    assert world.verify(vc.present(world.amf, cred2, nonce), nonce).reason is vc.Reason.BAD_ISSUER_SIGNATURE


def test_verification_always_makes_two_resolutions(world):
    cred = world.issue()
    nonce = vc.new_nonce()
    for vp, expected in [
        (vc.present(world.amf, cred, nonce), nonce),
        (vc.present(world.amf, cred, nonce), vc.new_nonce()),
        (replace(vc.present(world.amf, cred, nonce), holder=world.smf.did), nonce),
    ]:
        with world.resolver.track() as span:
            world.verify(vp, expected)
        assert span.calls == 2


def test_serialization_roundtrip(world):
    cred = world.issue()
    assert vc.VerifiableCredential.from_bytes(cred.to_bytes()) == cred
    vp = vc.present(world.amf, cred, vc.new_nonce())
    assert vc.VerifiablePresentation.from_bytes(vp.to_bytes()) == vp
    with pytest.raises(ValidationError):
        vc.VerifiablePresentation.from_bytes(b'{"credential": {}}')


_WORLD = World()
_CRED = _WORLD.issue()


@settings(max_examples=40, deadline=None)
@given(
    key=st.sampled_from(vc.NF_AUTHORIZATION_ATTRIBUTES),
    value=st.text(min_size=1, max_size=20),
)
def test_any_claim_change_breaks_issuer_signature(key, value):
    if _CRED.claims[key] == value:
        return
    tampered = replace(_CRED, claims={**_CRED.claims, key: value})
    nonce = vc.new_nonce()
    out = _WORLD.verify(vc.present(_WORLD.amf, tampered, nonce), nonce)
    assert out == vc.VerificationOutcome.deny(vc.Reason.BAD_ISSUER_SIGNATURE)


@settings(max_examples=40, deadline=None)
@given(presented=st.binary(min_size=16, max_size=16), expected=st.binary(min_size=16, max_size=16))
def test_granted_iff_nonce_matches(presented, expected):
    out = _WORLD.verify(vc.present(_WORLD.amf, _CRED, presented), expected)
    assert out.granted == (presented == expected)
    if not out.granted:
        assert out.reason is vc.Reason.NONCE_MISMATCH
