"""O-RAN / NFV / 5G composition graphs and trust propagation.

A node's composite decision is the meet of its own decision with the
composites of everything it is part of, runs on or uses.  ``Manages`` and
``Attests`` edges never propagate; ``Attests`` edges decide which nodes a
verifier perspective actually sees.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field
from typing import Any, Iterable, Mapping

from .core import Decision, ElementRef, decision_meet
from .errors import ContractError, NotFoundError

ROLES = (
    "O-RU", "O-DU", "O-CU", "gNB", "NFVI-Element", "O-Cloud",
    "Enclave", "CPU", "SMO", "MANO", "FiveG-Service", "Workload",
)
VERIFIER_ROLES = frozenset({"SMO", "MANO"})
EDGE_KINDS = ("PartOf", "RunsOn", "Uses", "Manages", "Attests", "CoLocatedWith")
DEPENDENCY_KINDS = frozenset({"PartOf", "RunsOn", "Uses"})

CONSTRAINTS = (
    "every gNB has PartOf children including at least one O-RU, one O-DU and one O-CU",
    "every Enclave is PartOf a CPU",
    "every CPU is PartOf an NFVI-Element",
    "every O-DU RunsOn an NFVI-Element or an Enclave",
    "O-RU RunsOn/PartOf targets are NFVI-Elements or gNBs",
    "SMO and MANO nodes carry no element binding",
    "Attests edges start at an SMO or MANO node",
    "the PartOf/RunsOn/Uses subgraph is acyclic",
)


@dataclass(frozen=True)
class Node:
    id: str
    role: str
    element: ElementRef | None = None


@dataclass(frozen=True)
class Edge:
    src: str
    dst: str
    kind: str


@dataclass(frozen=True)
class Perspective:
    name: str
    visible_kinds: frozenset = frozenset(EDGE_KINDS)
    attests_sources: frozenset = frozenset()

    def __post_init__(self):
        object.__setattr__(self, "visible_kinds", frozenset(self.visible_kinds))
        object.__setattr__(self, "attests_sources", frozenset(self.attests_sources))
        if not self.visible_kinds:
            raise ContractError(f"perspective {self.name} must see at least one edge kind")

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "visible_kinds": sorted(self.visible_kinds),
            "attests_sources": sorted(self.attests_sources),
        }

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "Perspective":
        return cls(data["name"], frozenset(data.get("visible_kinds", EDGE_KINDS)),
                   frozenset(data.get("attests_sources", ())))


@dataclass
class SystemGraph:
    nodes: dict = field(default_factory=dict)
    edges: list = field(default_factory=list)

    def add_node(self, node_id: str, role: str, element: ElementRef | None = None) -> Node:
        node = Node(node_id, role, element)
        self.nodes[node_id] = node
        return node

    def add_edge(self, src: str, dst: str, kind: str) -> Edge:
        edge = Edge(src, dst, kind)
        self.edges.append(edge)
        return edge

    def remove_edge(self, src: str, dst: str, kind: str) -> None:
        self.edges = [e for e in self.edges if (e.src, e.dst, e.kind) != (src, dst, kind)]

    def node(self, node_id: str) -> Node:
        try:
            return self.nodes[node_id]
        except KeyError:
            raise NotFoundError(f"no node {node_id!r}") from None

    def out(self, node_id: str, kinds: Iterable[str] | None = None) -> list[str]:
        kinds = None if kinds is None else frozenset(kinds)
        return [e.dst for e in self.edges if e.src == node_id and (kinds is None or e.kind in kinds)]

    def into(self, node_id: str, kinds: Iterable[str] | None = None) -> list[str]:
        kinds = None if kinds is None else frozenset(kinds)
        return [e.src for e in self.edges if e.dst == node_id and (kinds is None or e.kind in kinds)]

    def with_role(self, role: str) -> list[str]:
        return sorted(n.id for n in self.nodes.values() if n.role == role)

    def bound_nodes(self) -> list[str]:
        return sorted(n.id for n in self.nodes.values() if n.element is not None)

    def copy(self) -> "SystemGraph":
        return SystemGraph(dict(self.nodes), list(self.edges))

    def to_dict(self) -> dict:
        nodes = []
        for n in sorted(self.nodes.values(), key=lambda n: n.id):
            entry = {"id": n.id, "role": n.role}
            if n.element is not None:
                entry["element"] = n.element.to_dict()
            nodes.append(entry)
        return {
            "nodes": nodes,
            "edges": [{"from": e.src, "to": e.dst, "kind": e.kind} for e in self.edges],
        }

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "SystemGraph":
        graph = cls()
        for n in data.get("nodes", []):
            element = n.get("element")
            graph.add_node(n["id"], n["role"], None if element is None else ElementRef.from_dict(element))
        for e in data.get("edges", []):
            graph.add_edge(e["from"], e["to"], e["kind"])
        return graph


def _find_cycle(graph: SystemGraph, kinds: frozenset) -> list[str] | None:
    adjacency = {n: sorted(set(graph.out(n, kinds))) for n in graph.nodes}
    state: dict[str, int] = {}
    stack: list[str] = []

    def visit(n: str) -> list[str] | None:
        state[n] = 1
        stack.append(n)
        for m in adjacency.get(n, ()):
            if state.get(m) == 1:
                return stack[stack.index(m):] + [m]
            if m not in state and m in adjacency:
                found = visit(m)
                if found:
                    return found
        stack.pop()
        state[n] = 2
        return None

    for n in sorted(adjacency):
        if n not in state:
            found = visit(n)
            if found:
                return found
    return None


def validate_schema(graph: SystemGraph) -> list[str]:
    violations = []
    for n in sorted(graph.nodes.values(), key=lambda n: n.id):
        if n.role not in ROLES:
            violations.append(f"{n.id}: unknown role {n.role!r}")
        if n.role in VERIFIER_ROLES and n.element is not None:
            violations.append(f"{n.id}: {n.role} is a verifier and cannot carry an element binding")
    dangling = False
    for e in graph.edges:
        if e.kind not in EDGE_KINDS:
            violations.append(f"{e.src}->{e.dst}: unknown edge kind {e.kind!r}")
        for end in (e.src, e.dst):
            if end not in graph.nodes:
                violations.append(f"{e.src}-{e.kind}->{e.dst}: unknown node {end!r}")
                dangling = True
        if e.kind == "Attests" and e.src in graph.nodes and graph.nodes[e.src].role not in VERIFIER_ROLES:
            violations.append(f"{e.src}: Attests edges must start at an SMO or MANO node")
    if dangling:
        return violations

    def roles_of(ids):
        return {graph.nodes[i].role for i in ids}

    for gnb in graph.with_role("gNB"):
        parts = roles_of(graph.into(gnb, ["PartOf"]))
        for needed in ("O-RU", "O-DU", "O-CU"):
            if needed not in parts:
                violations.append(f"{gnb}: gNB has no {needed} PartOf child")
    for enc in graph.with_role("Enclave"):
        if "CPU" not in roles_of(graph.out(enc, ["PartOf"])):
            violations.append(f"{enc}: Enclave is not PartOf a CPU")
    for cpu in graph.with_role("CPU"):
        if "NFVI-Element" not in roles_of(graph.out(cpu, ["PartOf"])):
            violations.append(f"{cpu}: CPU is not PartOf an NFVI-Element")
    for du in graph.with_role("O-DU"):
        if not roles_of(graph.out(du, ["RunsOn"])) & {"NFVI-Element", "Enclave"}:
            violations.append(f"{du}: O-DU does not RunsOn an NFVI-Element or Enclave")
    for ru in graph.with_role("O-RU"):
        for target in graph.out(ru, ["RunsOn", "PartOf"]):
            if graph.nodes[target].role not in ("NFVI-Element", "gNB"):
                violations.append(f"{ru}: O-RU hosted by {target} which is neither an NFVI-Element nor a gNB")
    cycle = _find_cycle(graph, DEPENDENCY_KINDS)
    if cycle:
        violations.append("dependency cycle: " + " -> ".join(cycle))
    return violations


# -- propagation -------------------------------------------------------------------

def propagating_kinds(perspective: Perspective, propagate: Iterable[str] = DEPENDENCY_KINDS) -> frozenset:
    return perspective.visible_kinds & DEPENDENCY_KINDS & frozenset(propagate)


def attested_nodes(graph: SystemGraph, perspective: Perspective) -> list[str]:
    if "Attests" not in perspective.visible_kinds:
        return []
    return sorted({
        e.dst for e in graph.edges
        if e.kind == "Attests" and e.src in perspective.attests_sources
    })


def perspective_base(graph: SystemGraph, perspective: Perspective,
                     decisions: Mapping[str, Decision]) -> dict[str, Decision]:
    """Base map for one perspective: nodes it does not attest contribute the identity."""
    seen = set(attested_nodes(graph, perspective))
    return {
        n: decisions[n] if n in seen else Decision.TRUSTED
        for n in graph.bound_nodes()
    }


def _base_of(graph: SystemGraph, node_id: str, base: Mapping[str, Decision]) -> Decision:
    if node_id in base:
        return base[node_id]
    if graph.node(node_id).element is not None:
        raise ContractError(f"no base decision for element-bound node {node_id}")
    return Decision.TRUSTED


def _acyclic_kinds(graph: SystemGraph, perspective: Perspective, propagate: Iterable[str]) -> frozenset:
    kinds = propagating_kinds(perspective, propagate)
    if _find_cycle(graph, kinds):
        raise ContractError("trust propagation needs an acyclic dependency graph")
    return kinds


def composite_decision(graph: SystemGraph, node: str, base: Mapping[str, Decision],
                       perspective: Perspective, propagate: Iterable[str] = DEPENDENCY_KINDS,
                       *, memoize: bool = True) -> Decision:
    kinds = _acyclic_kinds(graph, perspective, propagate)
    graph.node(node)
    if memoize:
        return _composite(graph, node, base, kinds, {})
    return _composite_plain(graph, node, base, kinds)


def _composite(graph, node, base, kinds, memo) -> Decision:
    if node in memo:
        return memo[node]
    value = _base_of(graph, node, base)
    for dep in graph.out(node, kinds):
        value = decision_meet(value, _composite(graph, dep, base, kinds, memo))
    memo[node] = value
    return value


def _composite_plain(graph, node, base, kinds) -> Decision:
    value = _base_of(graph, node, base)
    for dep in graph.out(node, kinds):
        value = decision_meet(value, _composite_plain(graph, dep, base, kinds))
    return value


def composite_all(graph: SystemGraph, base: Mapping[str, Decision], perspective: Perspective,
                  propagate: Iterable[str] = DEPENDENCY_KINDS) -> dict[str, Decision]:
    kinds = _acyclic_kinds(graph, perspective, propagate)
    memo: dict[str, Decision] = {}
    return {n: _composite(graph, n, base, kinds, memo) for n in sorted(graph.nodes)}


@dataclass(frozen=True)
class Ordering:
    holds: bool
    counterexample: str | None = None

    def __str__(self) -> str:
        return "Holds" if self.holds else f"Counterexample({self.counterexample})"


def check_ordering(graph: SystemGraph, role: str, p1: Perspective, p2: Perspective,
                   base: Mapping[str, Decision], base2: Mapping[str, Decision] | None = None,
                   propagate: Iterable[str] = DEPENDENCY_KINDS,
                   propagate2: Iterable[str] | None = None) -> Ordering:
    """Does Trusted under ``p1`` imply Trusted under ``p2`` for every node of ``role``?"""
    base2 = base if base2 is None else base2
    first = composite_all(graph, base, p1, propagate)
    second = composite_all(graph, base2, p2, propagate if propagate2 is None else propagate2)
    for n in graph.with_role(role):
        if first[n] is Decision.TRUSTED and second[n] is not Decision.TRUSTED:
            return Ordering(False, n)
    return Ordering(True)


def chain_of_trust(graph: SystemGraph, node: str) -> list[list[str]]:
    """Every simple dependency path from ``node`` to a node holding a hardware root of trust."""
    graph.node(node)
    paths: list[list[str]] = []

    def walk(path: list[str]) -> None:
        here = graph.nodes[path[-1]]
        if here.element is not None and here.element.has_root_of_trust:
            paths.append(list(path))
        for nxt in sorted(set(graph.out(path[-1], DEPENDENCY_KINDS))):
            if nxt not in path:
                path.append(nxt)
                walk(path)
                path.pop()

    walk([node])
    return paths


def export_vocabulary(graph: SystemGraph) -> dict:
    roles = Counter(n.role for n in graph.nodes.values())
    kinds = Counter(e.kind for e in graph.edges)
    return {
        "roles": list(ROLES),
        "relations": list(EDGE_KINDS),
        "dependency_relations": sorted(DEPENDENCY_KINDS),
        "constraints": list(CONSTRAINTS),
        "instances": {
            "nodes": len(graph.nodes),
            "edges": len(graph.edges),
            "by_role": {r: roles[r] for r in ROLES if roles[r]},
            "by_relation": {k: kinds[k] for k in EDGE_KINDS if kinds[k]},
        },
    }


def validate_against_vocabulary(graph: SystemGraph, vocabulary: Mapping[str, Any]) -> list[str]:
    """Re-check a graph using an exported vocabulary document."""
    roles = set(vocabulary["roles"])
    relations = set(vocabulary["relations"])
    problems = [f"{n.id}: role {n.role!r} not in vocabulary" for n in graph.nodes.values() if n.role not in roles]
    problems += [f"{e.src}->{e.dst}: relation {e.kind!r} not in vocabulary" for e in graph.edges
                 if e.kind not in relations]
    return problems + validate_schema(graph)


def load_perspectives(data: Mapping[str, Any], graph: SystemGraph) -> dict[str, Perspective]:
    """Perspectives from a topology document, or one per verifier node when absent."""
    if data.get("perspectives"):
        ps = [Perspective.from_dict(p) for p in data["perspectives"]]
        return {p.name: p for p in ps}
    out = {}
    for role in ("SMO", "MANO"):
        sources = graph.with_role(role)
        if sources:
            out[f"{role}-view"] = Perspective(f"{role}-view", frozenset(EDGE_KINDS), frozenset(sources))
    return out
