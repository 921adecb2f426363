import hashlib
from pathlib import Path

import pytest

from telcotrust.core import ElementRef
from telcotrust.pipeline import Environment

DATA = Path(__file__).resolve().parent.parent / "data"

# filled by test_acceptance; printed once at the end of the run
ACCEPTANCE_LINES: dict[int, str] = {}


def sha(data: bytes) -> bytes:
    """Independent hash oracle, deliberately not the package's digest()."""
    return hashlib.sha256(data).digest()


def tpm_element(eid: str = "dev-1", kind: str = "device") -> ElementRef:
    return ElementRef(eid, kind, frozenset({"tpm-quote"}))


def healthy_env(*ids: str, seed: int = 7) -> Environment:
    env = Environment(seed)
    for eid in ids or ("dev-1",):
        env.provision_device(tpm_element(eid))
    env.add_verifier("v")
    for eid in ids or ("dev-1",):
        env.enroll("v", eid)
    return env


@pytest.fixture
def env():
    return healthy_env()


@pytest.fixture
def data_dir():
    return DATA


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for n in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[n])


def random_chain(rng, device_id: str = "dev-r", max_len: int = 8, pcr_count: int = 8):
    """Stage 0 immutable, then 0..max_len-1 components at random registers."""
    from telcotrust.measurement import BootChain, ComponentImage

    n = rng.randint(1, max_len)
    components = [
        ComponentImage(
            name=f"c{i}",
            content=rng.randbytes(rng.randint(0, 48)),
            stage=i,
            target_pcr=rng.randrange(pcr_count),
            immutable=i == 0,
        )
        for i in range(n)
    ]
    return BootChain(device_id, tuple(components))


def random_body(rng):
    from telcotrust.quote import ClockInfo, TpmQuoteBody

    return TpmQuoteBody(
        qualified_signer=rng.randbytes(32),
        extra_data=rng.randbytes(rng.randint(0, 64)),
        clock_info=ClockInfo(rng.getrandbits(64), rng.getrandbits(32), rng.getrandbits(32), rng.random() < 0.5),
        firmware_version=rng.getrandbits(64),
        pcr_select=tuple(sorted(rng.sample(range(24), rng.randint(1, 8)))),
        pcr_digest=rng.randbytes(32),
    )


def brute_minsets(available, coverage):
    """Exhaustive oracle over every subset of ``available``.

    Coverage is monotone, so a satisfying set is minimal exactly when
    dropping any one label breaks it.
    """
    from itertools import combinations

    labels = sorted(available)
    needs = [set(sats) for sats in coverage.values()]

    def ok(subset):
        return all(subset & need for need in needs)

    minimal = []
    for k in range(len(labels) + 1):
        for combo in combinations(labels, k):
            s = set(combo)
            if ok(s) and not any(ok(s - {x}) for x in s):
                minimal.append(frozenset(s))
    return sorted(minimal, key=lambda s: (len(s), sorted(s)))


CONFIGS = (
    "healthy", "healthy-vtpm", "wrong-digest", "tampered", "unenrolled", "network",
    "not-attestable", "unprovisioned", "enclave", "enclave-wrong", "enclave-nokey",
    "unsafe", "replay",
)


def build_population(seed: int, n: int, configs=CONFIGS):
    """A deterministic environment of ``n`` elements in randomly chosen states.

    Returns (env, elements, chosen_configs). Calling twice with the same
    arguments yields environments that behave identically.
    """
    import random as _random

    from telcotrust.core import ElementRef
    from telcotrust.measurement import tamper
    from telcotrust.pipeline import Environment, run_pipeline

    rng = _random.Random(seed)
    env = Environment(seed)
    env.add_verifier("v")
    elements, chosen = [], []
    for i in range(n):
        cfg = rng.choice(configs)
        eid = f"e{i:03d}-{cfg}"
        if cfg == "not-attestable":
            e = ElementRef(eid, "device", frozenset())
        elif cfg == "unprovisioned":
            e = ElementRef(eid, "device", frozenset({"tpm-quote"}))
        elif cfg.startswith("enclave"):
            e = ElementRef(eid, "enclave", frozenset({"enclave-quote"}))
            env.provision_enclave(e, register_key=cfg != "enclave-nokey")
            if cfg != "enclave-nokey":
                env.enroll("v", eid)
            if cfg == "enclave-wrong":
                env.verifiers["v"].store.records[eid].enclave_measurement = bytes(32)
        else:
            iface = "vtpm-quote" if cfg == "healthy-vtpm" else "tpm-quote"
            kind = rng.choice(["device", "telecom-role"])
            e = ElementRef(eid, kind, frozenset({iface}))
            dev = env.provision_device(e)
            if cfg != "unenrolled":
                env.enroll("v", eid)
            if cfg == "wrong-digest":
                rec = env.verifiers["v"].store.records[eid]
                rec.pcr_digests = {k: bytes(32) for k in rec.pcr_digests}
            elif cfg == "tampered":
                dev.boot(tamper(dev.chain, rng.randint(1, 5), rng.randbytes(8)))
            elif cfg == "network":
                env.network_faults.add(eid)
            elif cfg == "unsafe":
                dev.unsafe_poweroff()
                dev.boot()
            elif cfg == "replay":
                run_pipeline(e, env, "v")
                env.replaying.add(eid)
        elements.append(e)
        chosen.append(cfg)
    return env, elements, chosen


def random_dag(rng, max_nodes: int = 30):
    """Random acyclic graph of element-bound nodes plus a random base map."""
    from telcotrust.core import Decision, ElementRef
    from telcotrust.topology import EDGE_KINDS, SystemGraph

    g = SystemGraph()
    n = rng.randint(1, max_nodes)
    ids = [f"n{i:02d}" for i in range(n)]
    for i in ids:
        g.add_node(i, "Workload", ElementRef(f"el-{i}", "device", frozenset({"tpm-quote"})))
    for a in range(n):
        for b in range(a + 1, n):
            if rng.random() < 0.12:
                g.add_edge(ids[a], ids[b], rng.choice(EDGE_KINDS))
    base = {i: rng.choice(list(Decision)) for i in ids}
    return g, base


def closure_meet(graph, node, base, kinds):
    """Brute force: meet of base values over everything reachable along ``kinds``."""
    from telcotrust.core import Decision, decision_meet

    seen, todo = {node}, [node]
    while todo:
        here = todo.pop()
        for e in graph.edges:
            if e.src == here and e.kind in kinds and e.dst not in seen:
                seen.add(e.dst)
                todo.append(e.dst)
    value = Decision.TRUSTED
    for n in seen:
        value = decision_meet(value, base.get(n, Decision.TRUSTED))
    return value
