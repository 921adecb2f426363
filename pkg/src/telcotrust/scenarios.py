"""Executable telecom deployment use cases with fault injection.

Three scenarios build on each other: a radio unit hosted as an NFVI element
(``oru-trust``), a containerised distributed unit using that same radio unit
(``odu-trust``), and a distributed unit with a function inside a CPU enclave
(``odu-confidential``).  Each run attests every element under the SMO and
MANO perspectives, propagates decisions over the composition graph and
answers the scenario's question catalog from the results.
"""

from __future__ import annotations

import enum
import json
from dataclasses import dataclass, field, replace
from typing import Any, Callable, Mapping

from .core import Decision, ElementRef
from .errors import ConfigurationError, ContractError, NotFoundError
from .measurement import (
    BootChain,
    default_boot_chain,
    digest,
    replace_component,
    secure_boot_check,
    sign_component,
    tamper,
)
from .pipeline import DEFAULT_SEED, DEFAULT_SIGNER, Environment, evaluable, run_pipeline
from .topology import (
    DEPENDENCY_KINDS,
    EDGE_KINDS,
    Perspective,
    SystemGraph,
    attested_nodes,
    chain_of_trust,
    check_ordering,
    composite_all,
    perspective_base,
    validate_schema,
)
from .verification import ReferenceValueStore, VerificationPolicy, minimal_sufficient_sets

SMO_VIEW = "SMO-view"
MANO_VIEW = "MANO-view"
SCENARIO_NAMES = ("oru-trust", "odu-trust", "odu-confidential")


class FaultKind(str, enum.Enum):
    TAMPER_FIRMWARE = "TamperFirmware"
    STALE_NONCE_REPLAY = "StaleNonceReplay"
    SIGNER_KEY_LEAK = "SignerKeyLeak"
    MANO_ONLY_LOSS = "ManoOnlyLoss"
    MOVE_ENCLAVE_OFF_HOST = "MoveEnclaveOffHost"
    NETWORK_CUT = "NetworkCut"


_TPM_FAULTS = {FaultKind.TAMPER_FIRMWARE, FaultKind.SIGNER_KEY_LEAK}


@dataclass(frozen=True)
class Fault:
    kind: FaultKind
    target: str
    params: tuple = ()  # sorted (key, value) pairs

    def __post_init__(self):
        object.__setattr__(self, "kind", FaultKind(self.kind))
        params = self.params.items() if isinstance(self.params, Mapping) else self.params
        object.__setattr__(self, "params", tuple(sorted(params)))

    def param(self, key: str, default=None):
        return dict(self.params).get(key, default)

    def to_dict(self) -> dict:
        return {"kind": self.kind.value, "target": self.target, "params": dict(self.params)}

    @classmethod
    def parse(cls, text: str) -> "Fault":
        """``KIND:TARGET`` as used on the command line."""
        kind, sep, target = text.partition(":")
        if not sep or not target:
            raise ValueError(f"fault must look like KIND:TARGET, got {text!r}")
        return cls(FaultKind(kind), target)


@dataclass(frozen=True)
class DeviceSpec:
    element: ElementRef
    chain: BootChain | None = None
    firmware_version: int | None = None


@dataclass(frozen=True)
class EnclaveSpec:
    element: ElementRef
    host: str
    code_image: bytes | None = None
    bind_to_host: bool = False


@dataclass
class Scenario:
    name: str
    graph: SystemGraph
    perspectives: dict
    policies: dict
    devices: dict
    enclaves: dict = field(default_factory=dict)
    stores: dict = field(default_factory=dict)
    faults: list = field(default_factory=list)
    seed: int = DEFAULT_SEED

    def materialize(self, log_path=None) -> Environment:
        """A fresh environment: devices booted, keys derived, verifiers loaded."""
        env = Environment(self.seed, log_path=log_path)
        for eid in sorted(self.devices):
            spec = self.devices[eid]
            kwargs = {} if spec.firmware_version is None else {"firmware_version": spec.firmware_version}
            env.provision_device(spec.element, spec.chain, **kwargs)
        for eid in sorted(self.enclaves):
            spec = self.enclaves[eid]
            env.provision_enclave(spec.element, spec.code_image, host=spec.host, bind_to_host=spec.bind_to_host)
        for name in sorted(self.perspectives):
            store = self.stores.get(name)
            env.add_verifier(name, self.policies[name], store.copy() if store is not None else None)
        return env

    def enroll_all(self) -> None:
        """Record golden values for everything each perspective attests."""
        env = self.materialize()
        self.stores = {}
        for name in sorted(self.perspectives):
            env.verifiers[name].store = ReferenceValueStore(ca_set={})
            for node_id in attested_nodes(self.graph, self.perspectives[name]):
                element = self.graph.nodes[node_id].element
                if element is not None:
                    env.enroll(name, element.id)
            self.stores[name] = env.verifiers[name].store.copy()

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "seed": self.seed,
            "graph": self.graph.to_dict(),
            "perspectives": [self.perspectives[k].to_dict() for k in sorted(self.perspectives)],
            "policies": {k: self.policies[k].to_dict() for k in sorted(self.policies)},
            "devices": {
                k: {
                    "element": s.element.to_dict(),
                    "chain": None if s.chain is None else s.chain.to_dict(),
                    "firmware_version": s.firmware_version,
                }
                for k, s in sorted(self.devices.items())
            },
            "enclaves": {
                k: {
                    "element": s.element.to_dict(),
                    "host": s.host,
                    "code_image": None if s.code_image is None else s.code_image.hex(),
                    "bind_to_host": s.bind_to_host,
                }
                for k, s in sorted(self.enclaves.items())
            },
            "stores": {k: self.stores[k].to_dict() for k in sorted(self.stores)},
            "faults": [f.to_dict() for f in self.faults],
        }

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "Scenario":
        devices = {
            k: DeviceSpec(
                ElementRef.from_dict(v["element"]),
                None if v.get("chain") is None else BootChain.from_dict(v["chain"]),
                v.get("firmware_version"),
            )
            for k, v in data.get("devices", {}).items()
        }
        enclaves = {
            k: EnclaveSpec(
                ElementRef.from_dict(v["element"]),
                v["host"],
                None if v.get("code_image") is None else bytes.fromhex(v["code_image"]),
                bool(v.get("bind_to_host", False)),
            )
            for k, v in data.get("enclaves", {}).items()
        }
        perspectives = {p["name"]: Perspective.from_dict(p) for p in data["perspectives"]}
        return cls(
            name=data["name"],
            graph=SystemGraph.from_dict(data["graph"]),
            perspectives=perspectives,
            policies={k: VerificationPolicy.from_dict(v) for k, v in data["policies"].items()},
            devices=devices,
            enclaves=enclaves,
            stores={k: ReferenceValueStore.from_dict(v) for k, v in data.get("stores", {}).items()},
            faults=[Fault(f["kind"], f["target"], f.get("params", {})) for f in data.get("faults", [])],
            seed=int(data.get("seed", DEFAULT_SEED)),
        )


# -- builders ------------------------------------------------------------------

def _tpm(element_id: str, kind: str = "device", interface: str = "tpm-quote") -> ElementRef:
    return ElementRef(element_id, kind, frozenset({interface}))


def _perspectives() -> dict:
    return {
        SMO_VIEW: Perspective(SMO_VIEW, frozenset(EDGE_KINDS), frozenset({"smo-1"})),
        MANO_VIEW: Perspective(MANO_VIEW, frozenset(EDGE_KINDS), frozenset({"mano-1"})),
    }


def _policies(propagate=DEPENDENCY_KINDS) -> dict:
    kinds = tuple(k for k in ("PartOf", "RunsOn", "Uses") if k in propagate)
    return {name: VerificationPolicy(propagate=kinds) for name in (SMO_VIEW, MANO_VIEW)}


def _attests(graph: SystemGraph, verifier: str, node: str) -> None:
    graph.add_edge(verifier, node, "Attests")
    graph.add_edge(verifier, node, "Manages")


def _oru_parts(graph: SystemGraph, devices: dict) -> None:
    # the radio unit is itself an NFVI element; both nodes stand for one TPM-bearing box
    ru = _tpm("ru-1")
    graph.add_node("smo-1", "SMO")
    graph.add_node("mano-1", "MANO")
    graph.add_node("nfvi-1", "NFVI-Element", ru)
    graph.add_node("oru-1", "O-RU", ru)
    graph.add_edge("oru-1", "nfvi-1", "PartOf")
    _attests(graph, "smo-1", "oru-1")
    _attests(graph, "mano-1", "nfvi-1")
    devices["ru-1"] = DeviceSpec(ru)


def _odu_parts(graph: SystemGraph, devices: dict) -> None:
    host = _tpm("host-2")
    du = _tpm("du-1", kind="telecom-role", interface="vtpm-quote")
    graph.add_node("nfvi-2", "NFVI-Element", host)
    graph.add_node("odu-1", "O-DU", du)
    graph.add_edge("odu-1", "nfvi-2", "RunsOn")
    graph.add_edge("odu-1", "oru-1", "Uses")
    _attests(graph, "smo-1", "odu-1")
    _attests(graph, "mano-1", "nfvi-2")
    _attests(graph, "mano-1", "odu-1")
    devices["host-2"] = DeviceSpec(host)
    devices["du-1"] = DeviceSpec(du)


def _finish(name: str, graph: SystemGraph, devices: dict, enclaves: dict, seed: int,
            propagate=DEPENDENCY_KINDS) -> Scenario:
    s = Scenario(name, graph, _perspectives(), _policies(propagate), devices, enclaves, seed=seed)
    violations = validate_schema(graph)
    if violations:
        raise ConfigurationError(f"{name} fixture is not schema-valid: {violations}")
    s.enroll_all()
    return s


def build_oru_scenario(seed: int = DEFAULT_SEED) -> Scenario:
    graph, devices = SystemGraph(), {}
    _oru_parts(graph, devices)
    return _finish("oru-trust", graph, devices, {}, seed)


def build_odu_scenario(seed: int = DEFAULT_SEED, uses_propagates: bool = True) -> Scenario:
    graph, devices = SystemGraph(), {}
    _oru_parts(graph, devices)
    _odu_parts(graph, devices)
    propagate = DEPENDENCY_KINDS if uses_propagates else {"PartOf", "RunsOn"}
    return _finish("odu-trust", graph, devices, {}, seed, propagate)


def build_odu_confidential_scenario(seed: int = DEFAULT_SEED, bind_enclave: bool = False) -> Scenario:
    graph, devices = SystemGraph(), {}
    _oru_parts(graph, devices)
    _odu_parts(graph, devices)
    enclave = ElementRef("enc-1", "enclave", frozenset({"enclave-quote"}))
    graph.add_node("cpu-2", "CPU")
    graph.add_node("enc-1", "Enclave", enclave)
    graph.add_node("wl-1", "Workload")
    graph.add_edge("cpu-2", "nfvi-2", "PartOf")
    graph.add_edge("enc-1", "cpu-2", "PartOf")
    graph.add_edge("wl-1", "enc-1", "RunsOn")
    graph.add_edge("wl-1", "odu-1", "PartOf")
    _attests(graph, "smo-1", "enc-1")
    _attests(graph, "mano-1", "enc-1")
    enclaves = {"enc-1": EnclaveSpec(enclave, host="host-2", bind_to_host=bind_enclave)}
    return _finish("odu-confidential", graph, devices, enclaves, seed)


def scenario_from_topology(graph: SystemGraph, perspectives: Mapping[str, Perspective],
                           policy: VerificationPolicy | None = None, seed: int = DEFAULT_SEED,
                           name: str = "topology") -> Scenario:
    """Simulated devices for every element-bound node of an arbitrary topology.

    Enclave elements are hosted on the NFVI element their CPU is part of.
    Reference stores are left empty; call :meth:`Scenario.enroll_all` or load them.
    """
    devices, enclaves = {}, {}
    for node_id in graph.bound_nodes():
        element = graph.nodes[node_id].element
        if "enclave-quote" in element.interfaces:
            hosts = [
                graph.nodes[h].element.id
                for cpu in graph.out(node_id, ["PartOf"]) for h in graph.out(cpu, ["PartOf"])
                if graph.nodes.get(h) is not None and graph.nodes[h].element is not None
            ]
            enclaves[element.id] = EnclaveSpec(element, host=hosts[0] if hosts else "")
        else:
            devices[element.id] = DeviceSpec(element)
    policy = policy or VerificationPolicy()
    return Scenario(name, graph, dict(perspectives), {p: policy for p in perspectives},
                    devices, enclaves, seed=seed)


BUILDERS: dict[str, Callable[..., Scenario]] = {
    "oru-trust": build_oru_scenario,
    "odu-trust": build_odu_scenario,
    "odu-confidential": build_odu_confidential_scenario,
}


def build_scenario(name: str, seed: int = DEFAULT_SEED) -> Scenario:
    try:
        return BUILDERS[name](seed)
    except KeyError:
        raise NotFoundError(f"unknown scenario {name!r}; choose from {', '.join(SCENARIO_NAMES)}") from None


# -- faults ---------------------------------------------------------------------

def inject_fault(s: Scenario, f: Fault) -> Scenario:
    if f.target not in s.graph.nodes:
        raise NotFoundError(f"fault target {f.target!r} is not a node of {s.name}")
    node = s.graph.nodes[f.target]
    if f.kind is FaultKind.MOVE_ENCLAVE_OFF_HOST:
        if node.role != "Enclave":
            raise ContractError(f"{f.kind.value} needs an Enclave target, {f.target} is {node.role}")
    elif node.element is None:
        raise ContractError(f"{f.kind.value} needs an element-bound target, {f.target} has none")
    elif f.kind in _TPM_FAULTS and node.element.id not in s.devices:
        raise ContractError(f"{f.kind.value} needs a TPM-bearing target, {f.target} has none")
    return replace(s, faults=[*s.faults, f])


def _apply(f: Fault, s: Scenario, graph: SystemGraph, env: Environment) -> None:
    node = graph.nodes[f.target]
    element = node.element
    if f.kind is FaultKind.TAMPER_FIRMWARE:
        dev = env.devices[element.id]
        content = f.param("content", "tampered firmware image").encode()
        dev.boot(tamper(dev.chain, int(f.param("stage", 1)), content))
    elif f.kind is FaultKind.SIGNER_KEY_LEAK:
        dev = env.devices[element.id]
        original = dev.chain.component(int(f.param("stage", 1)))
        signer_id = original.signer or DEFAULT_SIGNER
        leaked = env.signer(signer_id)
        implant = replace(original, content=f.param("content", "implant signed with leaked key").encode())
        dev.boot(replace_component(dev.chain, sign_component(implant, signer_id, leaked)))
    elif f.kind is FaultKind.STALE_NONCE_REPLAY:
        # an honest exchange the attacker records, then replays on the next request
        for name in sorted(s.perspectives):
            if f.target in attested_nodes(graph, s.perspectives[name]):
                run_pipeline(element, env, name)
        env.replaying.add(element.id)
    elif f.kind is FaultKind.MANO_ONLY_LOSS:
        verifier = env.verifiers[f.param("perspective", MANO_VIEW)]
        record = verifier.store.get(element.id)
        if record is not None:
            record.pcr_digests = {k: digest(b"rebaselined:" + v) for k, v in record.pcr_digests.items()}
            if record.enclave_measurement is not None:
                record.enclave_measurement = digest(b"rebaselined:" + record.enclave_measurement)
    elif f.kind is FaultKind.MOVE_ENCLAVE_OFF_HOST:
        _move_enclave(f, graph, env)
    elif f.kind is FaultKind.NETWORK_CUT:
        env.network_faults.add(element.id)


def _move_enclave(f: Fault, graph: SystemGraph, env: Environment) -> None:
    host_node = f.param("host", "nfvi-3")
    host_element = f.param("element", "host-3")
    cpu_node = f"cpu-{host_node}"
    if host_node not in graph.nodes:
        element = _tpm(host_element)
        graph.add_node(host_node, "NFVI-Element", element)
        env.provision_device(element, default_boot_chain(host_element, DEFAULT_SIGNER, env.signer()))
        for mano in graph.with_role("MANO"):
            _attests(graph, mano, host_node)
    if cpu_node not in graph.nodes:
        graph.add_node(cpu_node, "CPU")
        graph.add_edge(cpu_node, host_node, "PartOf")
    for old in graph.out(f.target, ["PartOf"]):
        if graph.nodes[old].role == "CPU":
            graph.remove_edge(f.target, old, "PartOf")
    graph.add_edge(f.target, cpu_node, "PartOf")
    enclave_element = graph.nodes[f.target].element
    if enclave_element is not None and enclave_element.id in env.enclaves:
        env.enclaves[enclave_element.id].launch(env.devices[host_element])


# -- running ------------------------------------------------------------------------

@dataclass
class RunState:
    scenario: Scenario
    graph: SystemGraph
    env: Environment
    base: dict          # perspective -> node -> Decision
    composite: dict     # perspective -> node -> Decision
    claims: dict        # perspective -> node -> (claim, result, decision)

    def policy(self, name: str) -> VerificationPolicy:
        return self.scenario.policies[name]

    def trusted(self, perspective: str, node: str) -> bool:
        return self.composite[perspective][node] is Decision.TRUSTED

    def host_trusted(self, node: str) -> bool:
        """Trusted in every perspective at once."""
        return all(self.composite[p][node] is Decision.TRUSTED for p in self.composite)


@dataclass
class ScenarioReport:
    scenario: str
    seed: int
    faults: list
    decisions: dict
    questions: list
    checks: dict
    secure_boot: dict
    linkage: dict
    claims_log: list

    def to_dict(self) -> dict:
        return {
            "scenario": self.scenario,
            "seed": self.seed,
            "faults": self.faults,
            "decisions": self.decisions,
            "questions": self.questions,
            "checks": self.checks,
            "secure_boot": self.secure_boot,
            "linkage": self.linkage,
            "claims_log": self.claims_log,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    def composite(self, node: str, perspective: str) -> Decision:
        return Decision(self.decisions[node][perspective]["composite"])

    def base(self, node: str, perspective: str) -> Decision:
        return Decision(self.decisions[node][perspective]["base"])

    def answer(self, key: str):
        for q in self.questions:
            if q["id"] == key:
                return q["answer"]
        raise NotFoundError(f"no question {key!r} in report")

    def all_trusted(self) -> bool:
        return all(
            cell[k] == Decision.TRUSTED.value
            for row in self.decisions.values() for cell in row.values() for k in ("base", "composite")
        )

    def to_table(self) -> str:
        perspectives = sorted({p for row in self.decisions.values() for p in row})
        header = ["node"] + [f"{p} base" for p in perspectives] + [f"{p} composite" for p in perspectives]
        rows = [header]
        for node in sorted(self.decisions):
            row = self.decisions[node]
            rows.append([node] + [row[p]["base"] for p in perspectives] + [row[p]["composite"] for p in perspectives])
        return render_table(rows)


def render_table(rows: list[list[str]]) -> str:
    widths = [max(len(r[i]) for r in rows) for i in range(len(rows[0]))]
    lines = ["  ".join(cell.ljust(w) for cell, w in zip(r, widths)).rstrip() for r in rows]
    lines.insert(1, "  ".join("-" * w for w in widths))
    return "\n".join(lines) + "\n"


def _attest_round(s: Scenario, graph: SystemGraph, env: Environment) -> RunState:
    base, composite, claims = {}, {}, {}
    for name in sorted(s.perspectives):
        p = s.perspectives[name]
        by_element, decisions, claims[name] = {}, {}, {}
        for node_id in attested_nodes(graph, p):
            element = graph.nodes[node_id].element
            if element is None:
                continue
            if element.id not in by_element:
                by_element[element.id] = run_pipeline(element, env, name)
            claims[name][node_id] = by_element[element.id]
            decisions[node_id] = by_element[element.id][2]
        base[name] = perspective_base(graph, p, decisions)
        composite[name] = composite_all(graph, base[name], p, s.policies[name].propagate)
    return RunState(s, graph, env, base, composite, claims)


def run_scenario(s: Scenario, log_path=None) -> ScenarioReport:
    violations = validate_schema(s.graph)
    if violations:
        raise ConfigurationError(f"scenario {s.name} graph is invalid: " + "; ".join(violations))
    graph = s.graph.copy()
    env = s.materialize(log_path)
    for f in s.faults:
        _apply(f, s, graph, env)
    violations = validate_schema(graph)
    if violations:
        raise ConfigurationError(f"faults left {s.name} invalid: " + "; ".join(violations))
    state = _attest_round(s, graph, env)

    decisions = {
        node: {
            p: {"base": state.base[p].get(node, Decision.TRUSTED).value,
                "composite": state.composite[p][node].value}
            for p in sorted(state.composite)
        }
        for node in sorted(graph.nodes)
    }
    checks = {
        p: {
            node: {"overall": r.overall.value, "failed": r.failed_checks()}
            for node, (_, r, _) in sorted(state.claims[p].items())
        }
        for p in sorted(state.claims)
    }
    signers = env.trusted_signers()
    secure_boot = {
        eid: {c.name: secure_boot_check(c, signers).value for c in dev.chain.components if c.stage > 0}
        for eid, dev in sorted(env.devices.items())
    }
    linkage = {eid: enc.linkage for eid, enc in sorted(env.enclaves.items())}
    questions = [
        {"id": qid, "question": text, "answer": fn(state), "policy_dependent": policy_dependent}
        for qid, text, policy_dependent, fn in CATALOGS.get(s.name, [])
    ]
    return ScenarioReport(
        scenario=s.name,
        seed=s.seed,
        faults=[f.to_dict() for f in s.faults],
        decisions=decisions,
        questions=questions,
        checks=checks,
        secure_boot=secure_boot,
        linkage=linkage,
        claims_log=list(env.claims_log.records),
    )


# -- question catalogs ----------------------------------------------------------------

def _minsets(state: RunState, node: str) -> dict:
    element = state.graph.nodes[node].element
    out = {}
    for p in sorted(state.scenario.perspectives):
        record = state.env.verifiers[p].store.get(element.id)
        coverage = state.policy(p).measurement_coverage.get(element.kind)
        if record is None or coverage is None:
            out[p] = None
            continue
        sets = minimal_sufficient_sets(record.measurements, coverage)
        out[p] = [sorted(x) for x in sets]
    return out


def _mechanism(state: RunState, perspective: str, node: str) -> dict:
    entry = state.claims[perspective].get(node)
    return {
        "required_checks": list(state.policy(perspective).required_checks),
        "propagates_over": list(state.policy(perspective).propagate),
        "attested_directly": entry is not None,
        "decision": state.composite[perspective][node].value,
    }


def _views(state: RunState, role: str) -> dict:
    return {
        n: {p: state.composite[p][n].value for p in sorted(state.composite)}
        for n in state.graph.with_role(role)
    }


def _views_agree(state: RunState, role: str) -> dict:
    views = _views(state, role)
    return {"per_node": views, "agree": all(len(set(v.values())) == 1 for v in views.values())}


def _ordering(state: RunState, role: str) -> str:
    s = state.scenario
    return str(check_ordering(
        state.graph, role, s.perspectives[SMO_VIEW], s.perspectives[MANO_VIEW],
        state.base[SMO_VIEW], state.base[MANO_VIEW],
        s.policies[SMO_VIEW].propagate, s.policies[MANO_VIEW].propagate,
    ))


def _mano_loss(state: RunState) -> dict:
    return {
        "mano_lost_trust": any(not state.trusted(MANO_VIEW, n) for n in state.graph.with_role("O-RU")),
        "smo_lost_trust": any(not state.trusted(SMO_VIEW, n) for n in state.graph.with_role("O-RU")),
        "oru": _views(state, "O-RU"),
    }


def _hosts(state: RunState, node: str) -> list[str]:
    return sorted(
        h for h in state.graph.out(node, ["RunsOn"])
        if state.graph.nodes[h].role in ("NFVI-Element", "Enclave")
    )


def _odu_only_on_trusted(state: RunState) -> dict:
    # per perspective: a Trusted O-DU never sits on a host that some verifier distrusts
    return {
        p: all(
            not state.trusted(p, du) or all(state.host_trusted(h) for h in _hosts(state, du))
            for du in state.graph.with_role("O-DU")
        )
        for p in sorted(state.composite)
    }


def _odu_manages_untrusted_ru(state: RunState) -> dict:
    out = {}
    for p in sorted(state.composite):
        out[p] = any(
            state.trusted(p, du) and not state.host_trusted(ru)
            for du in state.graph.with_role("O-DU")
            for ru in state.graph.out(du, ["Uses"]) if state.graph.nodes[ru].role == "O-RU"
        )
    return out


def _trusted_ru_untrusted_du(state: RunState) -> dict:
    out = {}
    for p in sorted(state.composite):
        out[p] = any(
            state.trusted(p, ru) and not state.trusted(p, du)
            for du in state.graph.with_role("O-DU")
            for ru in state.graph.out(du, ["Uses"]) if state.graph.nodes[ru].role == "O-RU"
        )
    return out


def _enclave_host_relation(state: RunState) -> dict:
    out = {}
    for enc in state.graph.with_role("Enclave"):
        element = state.graph.nodes[enc].element
        out[enc] = {
            "dependency_paths": chain_of_trust(state.graph, enc),
            "quote_linkage": state.env.enclaves[element.id].linkage if element else "absent",
        }
    return out


def _enclave_locality(state: RunState) -> dict:
    out = {}
    for enc in state.graph.with_role("Enclave"):
        enc_hosts = sorted({
            h for cpu in state.graph.out(enc, ["PartOf"]) for h in state.graph.out(cpu, ["PartOf"])
        })
        users = sorted(w for w in state.graph.into(enc, ["RunsOn"]))
        du_hosts = sorted({
            h for w in users for du in state.graph.out(w, ["PartOf"])
            if state.graph.nodes[du].role == "O-DU" for h in _hosts(state, du)
        })
        out[enc] = {
            "enclave_hosts": enc_hosts,
            "odu_hosts": du_hosts,
            "same_element": bool(enc_hosts) and set(enc_hosts) <= set(du_hosts),
            "enclave_quote_reflects_host": state.env.enclaves[state.graph.nodes[enc].element.id].linkage != "absent",
        }
    return out


def _enclave_on_untrusted_machine(state: RunState) -> dict:
    out = {}
    for enc in state.graph.with_role("Enclave"):
        element = state.graph.nodes[enc].element
        hosts = sorted({
            h for cpu in state.graph.out(enc, ["PartOf"]) for h in state.graph.out(cpu, ["PartOf"])
        })
        per_view = {}
        for p in sorted(state.composite):
            entry = state.claims[p].get(enc)
            per_view[p] = {
                "enclave_trustworthy": entry is not None and evaluable(entry[0], entry[1]),
                "enclave_base": state.base[p][enc].value,
                "enclave_composite": state.composite[p][enc].value,
                "workloads_trusted": {
                    w: state.composite[p][w].value for w in sorted(state.graph.into(enc, ["RunsOn"]))
                },
            }
        hosts_trusted = all(state.host_trusted(h) for h in hosts)
        out[enc] = {
            "hosts": hosts,
            "hosts_trusted": hosts_trusted,
            "runs_on_untrusted_machine": {
                p: (not hosts_trusted) and all(
                    state.composite[p][w] is Decision.TRUSTED for w in state.graph.into(enc, ["RunsOn"])
                )
                for p in sorted(state.composite)
            },
            "per_view": per_view,
        }
    return out


def _composition_transfer(state: RunState) -> dict:
    return {
        "propagating_relations": {p: list(state.policy(p).propagate) for p in sorted(state.composite)},
        "workload_paths": {w: chain_of_trust(state.graph, w) for w in state.graph.with_role("Workload")},
        "workload_composites": _views(state, "Workload"),
    }


_ORU_QUESTIONS = [
    ("oru.measurements", "Minimal measurement sets that suffice for the O-RU", True,
     lambda st: {n: _minsets(st, n) for n in st.graph.with_role("O-RU")}),
    ("oru.smo-mechanism", "How the SMO reaches its O-RU decision", True,
     lambda st: {n: _mechanism(st, SMO_VIEW, n) for n in st.graph.with_role("O-RU")}),
    ("oru.mano-mechanism", "How the MANO reaches its O-RU decision", True,
     lambda st: {n: _mechanism(st, MANO_VIEW, n) for n in st.graph.with_role("O-RU")}),
    ("oru.view-correlation", "O-RU decisions per verifier perspective and whether they agree", False,
     lambda st: _views_agree(st, "O-RU")),
    ("oru.mano-only-loss", "O-RU status when only the MANO has lost trust", True, _mano_loss),
    ("oru.ordering", "Does SMO-Trusted imply MANO-Trusted for every O-RU", False,
     lambda st: _ordering(st, "O-RU")),
]

_ODU_QUESTIONS = _ORU_QUESTIONS + [
    ("nfvi.mano-mechanism", "How the MANO reaches its NFVI element decisions", True,
     lambda st: {n: _mechanism(st, MANO_VIEW, n) for n in st.graph.with_role("NFVI-Element")}),
    ("odu.only-trusted-hosts", "Is a Trusted O-DU only ever hosted on trusted NFVI elements", True,
     _odu_only_on_trusted),
    ("odu.ordering", "Does SMO-Trusted imply MANO-Trusted for every O-DU", False,
     lambda st: _ordering(st, "O-DU")),
    ("odu.manages-untrusted-oru", "Can a Trusted O-DU use an O-RU that is not trusted", True,
     _odu_manages_untrusted_ru),
    ("odu.trusted-oru-untrusted-odu", "Is a Trusted O-RU in use by an O-DU that is not trusted", True,
     _trusted_ru_untrusted_du),
]

_CONFIDENTIAL_QUESTIONS = _ODU_QUESTIONS + [
    ("enclave.host-relation", "Dependency paths and quote linkage between enclave and host", False,
     _enclave_host_relation),
    ("enclave.locality", "Whether the enclave shares an NFVI element with its O-DU", False,
     _enclave_locality),
    ("enclave.untrusted-machine", "Whether an enclave-backed function runs on an untrusted host", True,
     _enclave_on_untrusted_machine),
    ("composition.transfer", "How decisions move across composition relations", True,
     _composition_transfer),
]

CATALOGS = {
    "oru-trust": _ORU_QUESTIONS,
    "odu-trust": _ODU_QUESTIONS,
    "odu-confidential": _CONFIDENTIAL_QUESTIONS,
}
