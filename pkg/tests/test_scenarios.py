import json

import pytest

from telcotrust.core import Decision
from telcotrust.errors import ConfigurationError, ContractError, NotFoundError
from telcotrust.scenarios import (
    MANO_VIEW,
    SCENARIO_NAMES,
    SMO_VIEW,
    Fault,
    FaultKind,
    Scenario,
    build_odu_confidential_scenario,
    build_odu_scenario,
    build_oru_scenario,
    build_scenario,
    inject_fault,
    run_scenario,
)
from telcotrust.topology import validate_schema

T, U = Decision.TRUSTED, Decision.UNTRUSTED
VIEWS = (SMO_VIEW, MANO_VIEW)


def faulted(s, *specs):
    for spec in specs:
        s = inject_fault(s, Fault.parse(spec))
    return run_scenario(s)


@pytest.mark.parametrize("name", SCENARIO_NAMES)
def test_unfaulted_all_trusted(name):
    s = build_scenario(name)
    assert validate_schema(s.graph) == []
    report = run_scenario(s)
    assert report.all_trusted()
    assert all(q["id"] for q in report.questions)


def test_unknown_scenario():
    with pytest.raises(NotFoundError):
        build_scenario("bogus")


def test_oru_mano_only_loss():
    r = faulted(build_oru_scenario(), "ManoOnlyLoss:nfvi-1")
    assert r.composite("oru-1", SMO_VIEW) is T
    assert r.composite("oru-1", MANO_VIEW) is U
    assert r.answer("oru.ordering") == "Counterexample(oru-1)"
    assert r.answer("oru.view-correlation")["agree"] is False
    assert r.answer("oru.mano-only-loss")["mano_lost_trust"] is True


def test_oru_correlation_table_healthy():
    r = run_scenario(build_oru_scenario())
    assert r.answer("oru.view-correlation") == {
        "agree": True, "per_node": {"oru-1": {MANO_VIEW: "Trusted", SMO_VIEW: "Trusted"}},
    }
    assert r.answer("oru.ordering") == "Holds"


def test_tamper_firmware_fails_digest_in_both_views():
    r = faulted(build_oru_scenario(), "TamperFirmware:oru-1")
    for view in VIEWS:
        node = "oru-1" if view == SMO_VIEW else "nfvi-1"
        assert "pcr-digest" in r.checks[view][node]["failed"]
        assert r.composite("oru-1", view) is U
    assert r.secure_boot["ru-1"]["firmware"] == "UnknownSigner"


def test_stale_nonce_replay():
    r = faulted(build_oru_scenario(), "StaleNonceReplay:oru-1")
    assert r.checks[SMO_VIEW]["oru-1"]["failed"] == ["nonce"]
    assert r.base("oru-1", SMO_VIEW) is Decision.INVALID_REQUEST


def test_signer_key_leak():
    r = faulted(build_oru_scenario(), "SignerKeyLeak:oru-1")
    assert r.secure_boot["ru-1"]["firmware"] == "ProvenanceOk"
    assert r.base("oru-1", SMO_VIEW) is U
    assert {"pcr-digest", "eventlog-replay"} <= set(r.checks[SMO_VIEW]["oru-1"]["failed"])


def test_odu_host_untrusted():
    r = faulted(build_odu_scenario(), "TamperFirmware:nfvi-2")
    assert r.composite("odu-1", MANO_VIEW) is U
    assert r.answer("odu.only-trusted-hosts")[MANO_VIEW] is True


def test_odu_without_uses_propagation():
    s = build_odu_scenario(uses_propagates=False)
    r = faulted(s, "ManoOnlyLoss:nfvi-1")
    assert r.composite("oru-1", MANO_VIEW) is U
    assert r.composite("odu-1", MANO_VIEW) is T
    assert r.answer("odu.manages-untrusted-oru")[MANO_VIEW] is True
    default = faulted(build_odu_scenario(), "ManoOnlyLoss:nfvi-1")
    assert default.composite("odu-1", MANO_VIEW) is U
    assert default.answer("odu.manages-untrusted-oru")[MANO_VIEW] is False


def test_network_cut_propagates():
    r = faulted(build_odu_scenario(), "NetworkCut:oru-1")
    for view in VIEWS:
        assert r.composite("oru-1", view) is Decision.NETWORK_FAIL
        assert r.composite("odu-1", view) is Decision.NETWORK_FAIL


def test_confidential_healthy_chain():
    r = run_scenario(build_odu_confidential_scenario())
    assert r.composite("wl-1", SMO_VIEW) is T
    relation = r.answer("enclave.host-relation")["enc-1"]
    assert ["enc-1", "cpu-2", "nfvi-2"] in relation["dependency_paths"]
    assert relation["quote_linkage"] == "absent"
    assert r.linkage == {"enc-1": "absent"}


def test_enclave_on_tampered_host():
    r = faulted(build_odu_confidential_scenario(), "TamperFirmware:nfvi-2")
    assert r.base("enc-1", MANO_VIEW) is T
    assert r.composite("enc-1", MANO_VIEW) is U
    ans = r.answer("enclave.untrusted-machine")["enc-1"]
    assert ans["per_view"][MANO_VIEW]["enclave_trustworthy"] is True
    assert ans["runs_on_untrusted_machine"] == {MANO_VIEW: False, SMO_VIEW: True}


def test_bound_enclave_reports_linkage():
    r = run_scenario(build_odu_confidential_scenario(bind_enclave=True))
    assert r.linkage["enc-1"] == "bound:host-2:pcr7"
    assert r.all_trusted()


def test_move_enclave_off_host():
    r = faulted(build_odu_confidential_scenario(), "MoveEnclaveOffHost:enc-1")
    assert r.answer("enclave.locality")["enc-1"]["same_element"] is False
    assert r.composite("enc-1", MANO_VIEW) is Decision.NO_REFERENCE


def test_fault_validation():
    s = build_oru_scenario()
    with pytest.raises(NotFoundError):
        inject_fault(s, Fault(FaultKind.NETWORK_CUT, "nope"))
    with pytest.raises(ContractError):
        inject_fault(s, Fault(FaultKind.MOVE_ENCLAVE_OFF_HOST, "oru-1"))
    with pytest.raises(ValueError):
        Fault.parse("NetworkCut")
    with pytest.raises(ValueError):
        Fault.parse("Bogus:oru-1")


def test_fault_order_is_kept():
    s = inject_fault(inject_fault(build_oru_scenario(), Fault.parse("NetworkCut:oru-1")),
                     Fault.parse("ManoOnlyLoss:nfvi-1"))
    assert [f.kind for f in s.faults] == [FaultKind.NETWORK_CUT, FaultKind.MANO_ONLY_LOSS]


def test_invalid_graph_rejected():
    s = build_oru_scenario()
    s.graph.add_node("gnb", "gNB")
    with pytest.raises(ConfigurationError):
        run_scenario(s)


@pytest.mark.parametrize("name", SCENARIO_NAMES)
def test_reports_are_reproducible(name):
    a = faulted(build_scenario(name), "NetworkCut:oru-1").to_json()
    b = faulted(build_scenario(name), "NetworkCut:oru-1").to_json()
    assert a == b
    assert json.loads(a)["claims_log"]


def test_seed_changes_key_material():
    a = build_oru_scenario(seed=1).stores[SMO_VIEW].to_dict()
    b = build_oru_scenario(seed=2).stores[SMO_VIEW].to_dict()
    assert a != b


def test_definition_round_trip():
    s = inject_fault(build_odu_confidential_scenario(), Fault.parse("TamperFirmware:nfvi-2"))
    back = Scenario.from_dict(json.loads(json.dumps(s.to_dict())))
    assert run_scenario(back).to_json() == run_scenario(s).to_json()


def test_table_mentions_every_node():
    r = run_scenario(build_odu_scenario())
    table = r.to_table()
    for node in r.decisions:
        assert node in table
