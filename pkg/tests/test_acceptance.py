"""Acceptance criteria, one test each.

Every test records a PASS/FAIL line; the lines are printed at the end of a
pytest run and also when this file is executed directly.
"""

import itertools
import random
import sys
import time
from dataclasses import replace
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).resolve().parent))

from conftest import (  # noqa: E402
    ACCEPTANCE_LINES,
    brute_minsets,
    build_population,
    closure_meet,
    healthy_env,
    random_body,
    random_chain,
    random_dag,
    sha,
    tpm_element,
)
from telcotrust.core import Decision, Overall, decision_leq, decision_meet  # noqa: E402
from telcotrust.crypto import Keypair  # noqa: E402
from telcotrust.errors import InsufficientMeasurements  # noqa: E402
from telcotrust.measurement import (  # noqa: E402
    ComponentImage,
    SecureBootStatus,
    measured_boot,
    pcr_extend,
    replay_log,
    secure_boot_check,
    sign_component,
)
from telcotrust.pipeline import (  # noqa: E402
    attest,
    classify_trusted,
    measure,
    run_pipeline,
    trustworthy,
)
from telcotrust.quote import (  # noqa: E402
    ClockInfo,
    TpmQuoteBody,
    canonical_decode,
    canonical_encode,
    qualified_signer,
    verify_encoded_quote,
)
from telcotrust.scenarios import (  # noqa: E402
    MANO_VIEW,
    SCENARIO_NAMES,
    SMO_VIEW,
    Fault,
    build_odu_confidential_scenario,
    build_oru_scenario,
    build_scenario,
    inject_fault,
    run_scenario,
)
from telcotrust.topology import DEPENDENCY_KINDS, EDGE_KINDS, Perspective, composite_all  # noqa: E402
from telcotrust.verification import decide, minimal_sufficient_sets, verify_claim  # noqa: E402

ALL_VIEW = Perspective("all", frozenset(EDGE_KINDS), frozenset())


def record(n: int, title: str, ok: bool, detail: str) -> None:
    line = f"[{'PASS' if ok else 'FAIL'}] criterion {n:2d}: {title} ({detail})"
    ACCEPTANCE_LINES[n] = line
    print(line)
    assert ok, line


# 1 -------------------------------------------------------------------------------

def criterion_1():
    mismatches, total = 0, 0
    for seed in (101, 202):
        env_a, elements, _ = build_population(seed, 50)
        env_b, elements_b, _ = build_population(seed, 50)
        for e, e_b in zip(elements, elements_b):
            claim, result, decision = run_pipeline(e, env_a, "v")
            v = env_b.verifiers["v"]
            m = measure(e_b, env_b)
            c = attest(e_b, env_b, v, m)
            r = verify_claim(c, v.store, v.session, v.policy)
            d = decide(r, v.policy)
            total += 1
            if (claim.transport, result.overall, decision) != (c.transport, r.overall, d):
                mismatches += 1
    return mismatches == 0, f"{total} elements, {mismatches} mismatches"


def test_criterion_1_pipeline_composition():
    record(1, "pipeline stages compose", *criterion_1())


# 2 -------------------------------------------------------------------------------

def criterion_2():
    bad = 0
    sizes = []
    for seed in range(300, 305):
        env_a, elements, _ = build_population(seed, 100)
        env_b, elements_b, _ = build_population(seed, 100)
        got = classify_trusted(elements, env_a, "v")
        want = {e.id for e in elements_b if run_pipeline(e, env_b, "v")[2] is Decision.TRUSTED}
        sizes.append(len(want))
        bad += got != want
    return bad == 0, f"5 populations of 100, trusted sizes {sizes}, {bad} unequal"


def test_criterion_2_classifier_pullback():
    record(2, "classifier equals brute-force filter", *criterion_2())


# 3 -------------------------------------------------------------------------------

def criterion_3():
    rng = random.Random(3)
    fold_bad = 0
    for _ in range(1000):
        ds = [rng.randbytes(32) for _ in range(rng.randint(0, 64))]
        acc, oracle = bytes(32), bytes(32)
        for d in ds:
            acc = pcr_extend(acc, d)
            oracle = sha(oracle + d)
        fold_bad += acc != oracle
    replay_bad = 0
    for _ in range(200):
        bank, log = measured_boot(random_chain(rng, max_len=12))
        replay_bad += replay_log(log).registers != bank.registers
    ok = fold_bad == 0 and replay_bad == 0
    return ok, f"fold mismatches {fold_bad}/1000, replay mismatches {replay_bad}/200"


def test_criterion_3_pcr_correctness():
    record(3, "PCR extend and replay", *criterion_3())


# 4 -------------------------------------------------------------------------------

def _flip(data: bytes, bit: int) -> bytes:
    b = bytearray(data)
    b[bit // 8] ^= 1 << (bit % 8)
    return bytes(b)


def criterion_4():
    rng = random.Random(4)
    bodies, encodings, round_trip_bad = set(), set(), 0
    for _ in range(10_000):
        body = random_body(rng)
        enc = canonical_encode(body)
        round_trip_bad += canonical_decode(enc) != body
        bodies.add(body)
        encodings.add(enc)
    collisions = len(bodies) - len(encodings)

    # mutation: every bit of three signed quotes, body and signature
    mutation_passes, mutations = 0, 0
    key = Keypair(rng.randbytes(32))
    for _ in range(3):
        enc = canonical_encode(random_body(rng))
        sig = key.sign(enc)
        assert verify_encoded_quote(enc, sig, key.public)
        for bit in range(len(enc) * 8):
            mutations += 1
            mutation_passes += verify_encoded_quote(_flip(enc, bit), sig, key.public)
        for bit in range(len(sig) * 8):
            mutations += 1
            mutation_passes += verify_encoded_quote(enc, _flip(sig, bit), key.public)

    signer_bad = 0
    for _ in range(200):
        ek, ak = rng.randbytes(32), rng.randbytes(32)
        signer_bad += qualified_signer(ek, ak) != sha(sha(ek) + sha(ak))

    minimal = len(canonical_encode(TpmQuoteBody(bytes(32), b"", ClockInfo(), 0, (0,), bytes(32))))
    ok = round_trip_bad == 0 and collisions == 0 and mutation_passes == 0 and signer_bad == 0 and minimal == 101
    detail = (f"10^4 round trips bad={round_trip_bad}, collisions={collisions}, "
              f"{mutation_passes}/{mutations} mutations verified, signer mismatches={signer_bad}, "
              f"minimal length={minimal}")
    return ok, detail


def test_criterion_4_quote_integrity():
    record(4, "quote encoding and signatures", *criterion_4())


# 5 -------------------------------------------------------------------------------

def criterion_5():
    env = healthy_env()
    rec = env.verifiers["v"].store.records["dev-1"]
    rec.pcr_digests = {k: sha(b"not the golden value") for k in rec.pcr_digests}
    e = tpm_element()
    tw = trustworthy(e, env, "v")
    decision = run_pipeline(e, env, "v")[2]
    return tw and decision is Decision.UNTRUSTED, f"trustworthy={tw}, decision={decision.value}"


def test_criterion_5_trustworthy_not_trusted():
    record(5, "trustworthy does not imply trusted", *criterion_5())


# 6 -------------------------------------------------------------------------------

def criterion_6():
    rng = random.Random(6)
    failed = 0
    routes = {"same-claim": 0, "captured-evidence": 0, "new-claim-old-nonce": 0}
    for trial in range(100):
        env = healthy_env(seed=rng.getrandbits(32))
        v = env.verifiers["v"]
        e = tpm_element()
        for _ in range(rng.randint(0, 3)):
            run_pipeline(e, env, v)
        claim = attest(e, env, v, measure(e, env))
        assert verify_claim(claim, v.store, v.session, v.policy).overall is Overall.VERIFIED
        route = rng.choice(sorted(routes))
        routes[route] += 1
        if route == "same-claim":
            replayed = claim
        elif route == "new-claim-old-nonce":
            replayed = replace(claim, claim_id=env.next_claim_id(), received_at=env.advance())
        else:
            env.replaying.add(e.id)
            replayed = attest(e, env, v, ())
        r = verify_claim(replayed, v.store, v.session, v.policy)
        failed += r.overall is Overall.FAILED and "nonce" in r.failed_checks()
    return failed == 100, f"{failed}/100 replays rejected, routes {routes}"


def test_criterion_6_replay_prevention():
    record(6, "consumed nonces are rejected", *criterion_6())


# 7 -------------------------------------------------------------------------------

def criterion_7():
    report = run_scenario(inject_fault(build_oru_scenario(), Fault.parse("SignerKeyLeak:oru-1")))
    provenance = report.secure_boot["ru-1"]["firmware"]
    decision = report.base("oru-1", SMO_VIEW)
    # the same separation directly at library level
    key = Keypair(b"\x42" * 32)
    implant = sign_component(ComponentImage("firmware", b"implant", 1, 0), "oem", key)
    direct = secure_boot_check(implant, {"oem": key.public})
    ok = provenance == "ProvenanceOk" and direct is SecureBootStatus.PROVENANCE_OK and decision is Decision.UNTRUSTED
    return ok, f"secure boot={provenance}, measured boot decision={decision.value}"


def test_criterion_7_provenance_vs_validity():
    record(7, "provenance and validity are separate", *criterion_7())


# 8 -------------------------------------------------------------------------------

def criterion_8():
    rng = random.Random(8)
    raised, closure_bad, lowerings = 0, 0, 0
    for _ in range(200):
        g, base = random_dag(rng, 30)
        before = composite_all(g, base, ALL_VIEW)
        for n in g.nodes:
            closure_bad += before[n] is not closure_meet(g, n, base, DEPENDENCY_KINDS)
        for n, value in base.items():
            for lower in Decision:
                if lower is value or not decision_leq(lower, value):
                    continue
                lowerings += 1
                after = composite_all(g, {**base, n: lower}, ALL_VIEW)
                raised += sum(not decision_leq(after[m], before[m]) for m in g.nodes)
    ok = raised == 0 and closure_bad == 0
    return ok, f"200 DAGs, {lowerings} lowerings, {raised} raised composites, {closure_bad} closure mismatches"


def test_criterion_8_propagation_monotone():
    record(8, "propagation is monotone and equals closure meet", *criterion_8())


# 9 -------------------------------------------------------------------------------

def criterion_9():
    healthy = {name: run_scenario(build_scenario(name)).all_trusted() for name in SCENARIO_NAMES}
    loss = run_scenario(inject_fault(build_oru_scenario(), Fault.parse("ManoOnlyLoss:nfvi-1")))
    ordering = loss.answer("oru.ordering")
    conf = run_scenario(inject_fault(build_odu_confidential_scenario(), Fault.parse("TamperFirmware:nfvi-2")))
    enc = (conf.base("enc-1", MANO_VIEW), conf.composite("enc-1", MANO_VIEW))
    identical = all(
        run_scenario(build_scenario(n)).to_json() == run_scenario(build_scenario(n)).to_json()
        for n in SCENARIO_NAMES
    ) and loss.to_json() == run_scenario(
        inject_fault(build_oru_scenario(), Fault.parse("ManoOnlyLoss:nfvi-1"))
    ).to_json()
    ok = (all(healthy.values()) and ordering == "Counterexample(oru-1)"
          and enc == (Decision.TRUSTED, Decision.UNTRUSTED) and identical)
    detail = (f"healthy={healthy}, ordering={ordering}, enclave base/composite="
              f"{enc[0].value}/{enc[1].value}, reruns identical={identical}")
    return ok, detail


def test_criterion_9_scenario_fidelity():
    record(9, "scenarios reproduce their use cases", *criterion_9())


# 10 ------------------------------------------------------------------------------

def criterion_10():
    rng = random.Random(10)
    instances, unequal, not_minimal, incomplete, insufficient = 0, 0, 0, 0, 0
    sizes = [rng.randint(1, 10) for _ in range(400)] + [16] * 8 + [rng.randint(11, 15) for _ in range(12)]
    for n in sizes:
        labels = [f"m{i:02d}" for i in range(n)]
        available = set(labels) if n >= 11 else set(rng.sample(labels, rng.randint(1, n)))
        coverage = {
            f"c{j}": rng.sample(labels, rng.randint(0 if rng.random() < 0.05 else 1, min(n, 5)))
            for j in range(rng.randint(1, 6))
        }
        oracle = brute_minsets(available, coverage)
        instances += 1
        try:
            got = minimal_sufficient_sets(available, coverage)
        except InsufficientMeasurements:
            insufficient += 1
            unequal += oracle != []
            continue
        unequal += got != oracle
        needs = [set(v) & available for v in coverage.values()]
        for s in got:
            if any(all((s - {x}) & need for need in needs) for x in s):
                not_minimal += 1
        # completeness: every satisfying subset contains some returned set
        pool = sorted(available)
        for k in range(len(pool) + 1) if n <= 8 else ():
            for combo in itertools.combinations(pool, k):
                c = set(combo)
                if all(c & need for need in needs) and not any(s <= c for s in got):
                    incomplete += 1
    ok = unequal == 0 and not_minimal == 0 and incomplete == 0
    detail = (f"{instances} instances up to 16 labels ({insufficient} insufficient), "
              f"{unequal} differ from enumeration, {not_minimal} non-minimal, {incomplete} uncovered")
    return ok, detail


def test_criterion_10_minimal_sets():
    record(10, "minimal sufficient sets equal exhaustive enumeration", *criterion_10())


# 11 ------------------------------------------------------------------------------

def criterion_11():
    D = list(Decision)
    assoc = sum(
        decision_meet(decision_meet(a, b), c) is decision_meet(a, decision_meet(b, c))
        for a, b, c in itertools.product(D, repeat=3)
    )
    pairs = list(itertools.product(D, repeat=2))
    comm = sum(decision_meet(a, b) is decision_meet(b, a) for a, b in pairs)
    order = sum(decision_leq(a, b) == (decision_meet(a, b) is a) for a, b in pairs)
    idem = sum(decision_meet(a, a) is a for a in D)
    ok = (assoc, comm, order, idem) == (125, 25, 25, 5)
    return ok, f"associativity {assoc}/125, commutativity {comm}/25, order {order}/25, idempotence {idem}/5"


def test_criterion_11_lattice_laws():
    record(11, "meet-semilattice laws", *criterion_11())


CRITERIA = [
    (1, "pipeline stages compose", criterion_1),
    (2, "classifier equals brute-force filter", criterion_2),
    (3, "PCR extend and replay", criterion_3),
    (4, "quote encoding and signatures", criterion_4),
    (5, "trustworthy does not imply trusted", criterion_5),
    (6, "consumed nonces are rejected", criterion_6),
    (7, "provenance and validity are separate", criterion_7),
    (8, "propagation is monotone and equals closure meet", criterion_8),
    (9, "scenarios reproduce their use cases", criterion_9),
    (10, "minimal sufficient sets equal exhaustive enumeration", criterion_10),
    (11, "meet-semilattice laws", criterion_11),
]


if __name__ == "__main__":
    failures = 0
    for n, title, fn in CRITERIA:
        start = time.perf_counter()
        ok, detail = fn()
        failures += not ok
        print(f"[{'PASS' if ok else 'FAIL'}] criterion {n:2d}: {title} ({detail}) "
              f"[{time.perf_counter() - start:.1f}s]")
    sys.exit(1 if failures else 0)
