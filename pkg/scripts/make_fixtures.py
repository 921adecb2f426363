"""Regenerate the JSON fixtures under data/ from the scenario builders."""

import json
from pathlib import Path

from telcotrust.core import ElementRef
from telcotrust.scenarios import build_odu_confidential_scenario, build_oru_scenario
from telcotrust.topology import SystemGraph
from telcotrust.verification import VerificationPolicy

DATA = Path(__file__).resolve().parent.parent / "data"


def write(name: str, obj) -> None:
    (DATA / name).write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    print(f"wrote data/{name}")


def gnb_missing_ocu() -> SystemGraph:
    g = SystemGraph()
    g.add_node("gnb-1", "gNB")
    g.add_node("nfvi-1", "NFVI-Element", ElementRef("host-1", "device", frozenset({"tpm-quote"})))
    g.add_node("oru-1", "O-RU", ElementRef("ru-1", "device", frozenset({"tpm-quote"})))
    g.add_node("odu-1", "O-DU", ElementRef("du-1", "telecom-role", frozenset({"vtpm-quote"})))
    g.add_edge("oru-1", "gnb-1", "PartOf")
    g.add_edge("odu-1", "gnb-1", "PartOf")
    g.add_edge("odu-1", "nfvi-1", "RunsOn")
    return g


def main() -> None:
    DATA.mkdir(exist_ok=True)
    oru = build_oru_scenario()
    write("oru_topology.json", oru.graph.to_dict())
    write("oru_references.json", {"perspectives": {k: v.to_dict() for k, v in sorted(oru.stores.items())}})
    conf = build_odu_confidential_scenario()
    write("odu_confidential_topology.json", conf.graph.to_dict())
    write("policy_default.json", VerificationPolicy().to_dict())
    write("gnb_missing_ocu.json", gnb_missing_ocu().to_dict())


if __name__ == "__main__":
    main()
