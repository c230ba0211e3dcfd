import itertools
import json
import random

import pytest

from didsba import credentials as vc
from didsba import scenarios
from didsba.errors import StartupError, ValidationError
from didsba.vdr import VerifiableDataRegistry


@pytest.fixture(scope="module")
def v2_topology():
    with scenarios.build_topology("v2", seed=11) as topo:
        yield topo


def test_default_script_shape():
    script = scenarios.UE_REGISTRATION
    assert len(script.steps) == 5
    assert script.mean_payload == 23_643
    assert [s.receiver for s in script.steps] == ["AUSF"] * 3 + ["UDM"] * 2
    assert all(s.sender == "AMF" and s.expects_reply for s in script.steps)


def test_script_json_roundtrip(tmp_path):
    path = tmp_path / "reg.json"
    path.write_text(scenarios.UE_REGISTRATION.to_json())
    loaded = scenarios.ScenarioScript.load(path)
    assert loaded.steps == scenarios.UE_REGISTRATION.steps
    assert loaded.name == "reg"
    wrapped = scenarios.ScenarioScript.from_json(json.dumps({"name": "w", "steps": json.loads(path.read_text())}))
    assert wrapped.name == "w" and wrapped.steps == loaded.steps


def test_script_validation():
    with pytest.raises(ValidationError):
        scenarios.ScenarioStep("AMF", "SMF", "t", -1)
    with pytest.raises(ValidationError):
        scenarios.ScenarioStep("AMF", "PCF", "t", 1)


def test_topology(v2_topology):
    topo = v2_topology
    assert set(topo.nfs) == set(scenarios.NF_TYPES)
    dids = {str(nf.did) for nf in topo.nfs.values()}
    assert len(dids) == 5
    for nf in topo.nfs.values():
        doc, version = topo.vdr.read_document(nf.did)
        assert doc.endpoint == nf.agent.endpoint_uri and version == 1
    assert topo.vdr.get_schema(topo.schema_id).issuer == topo["NRF"].did
    assert topo.vdr.get_registry(topo.registry_id).issuer == topo["NRF"].did


def test_topology_is_seed_deterministic():
    with scenarios.build_topology("v2", seed=5) as a, scenarios.build_topology("v2", seed=5) as b:
        assert [str(nf.did) for nf in a.nfs.values()] == [str(nf.did) for nf in b.nfs.values()]


def test_startup_fails_when_vdr_offline():
    vdr = VerifiableDataRegistry()
    vdr.shutdown()
    with pytest.raises(StartupError):
        scenarios.build_topology("v2", vdr=vdr)


def test_ue_registration_records_steps(v2_topology):
    result = scenarios.run_ue_registration(v2_topology)
    assert result.completed and result.failure is None
    assert len(result.steps) == 5 and all(len(s.receipts) == 2 for s in result.steps)
    assert result.cumulative_bytes == list(itertools.accumulate(s.step_bytes for s in result.steps))
    sizes = [len(body) for *_, body in result.delivered]
    assert sizes == [n for s in scenarios.UE_REGISTRATION.steps for n in (s.payload_size, s.response_size)]


def test_delivery_failure_flags_partial_result():
    with scenarios.build_topology("v2", seed=1) as topo:
        topo["UDM"].agent.stop()
        result = scenarios.run_ue_registration(topo)
    assert not result.completed and "DeliveryError" in result.failure
    assert len(result.steps) == 3


def test_reply_size_override(v2_topology):
    step = scenarios.ScenarioStep("AMF", "SMF", "t", 10, True, reply_size=3)
    result = scenarios.run_ue_registration(v2_topology, scenarios.ScenarioScript("s", (step,)))
    assert [len(b) for *_, b in result.delivered] == [10, 3]


def test_sm_context_happy_path(v2_topology):
    before = len(v2_topology["SMF"].sessions)
    result = scenarios.run_sm_context(v2_topology)
    assert result.completed and result.session_created
    assert result.authorization == [vc.GRANTED]
    assert len(v2_topology["SMF"].sessions) == before + 1
    assert result.delivered[-1][2].endswith("sm-context-created")
    assert v2_topology["AMF"].agent.list_credentials()


@pytest.mark.parametrize(
    "kwargs, reason",
    [({"revoke_first": True}, vc.Reason.REVOKED), ({"replay": True}, vc.Reason.NONCE_MISMATCH)],
)
def test_sm_context_denials(v2_topology, kwargs, reason):
    before = len(v2_topology["SMF"].sessions)
    result = scenarios.run_sm_context(v2_topology, **kwargs)
    assert result.completed and not result.session_created
    assert result.authorization == [vc.VerificationOutcome.deny(reason)]
    assert len(v2_topology["SMF"].sessions) == before
    assert result.delivered[-1][2].endswith("sm-context-denied")


def test_invalid_variants_each_denied(v2_topology):
    rng = random.Random(2)
    for name, make in scenarios.invalid_vp_variants().items():
        result = scenarios.run_sm_context(v2_topology, **make(rng))
        assert result.completed, name
        assert not result.session_created and not result.authorization[0].granted, name


def test_repeat_and_crossover_helpers():
    with scenarios.build_topology("v1") as t1, scenarios.build_topology("v2") as t2:
        r1, r2 = scenarios.repeat_messages(t1, 3, 100), scenarios.repeat_messages(t2, 3, 100)
    assert r1.steps[0].receipts[0].handshake_bytes > 0
    assert all(r.handshake_bytes == 0 for r in r2.receipts)
    o1, o2 = scenarios.envelope_overhead(r1), scenarios.envelope_overhead(r2)
    assert o2 > o1
    assert scenarios.predicted_crossover(1000, o1, o2) >= 1
    assert scenarios.crossover(r1, r2) is None
