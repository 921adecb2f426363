"""The measure, attest, verify, decide pipeline over a simulated environment.

An :class:`Environment` owns the simulated devices and enclaves, the
verifiers (each with its own reference store, policy and nonce session),
injected faults and the append-only claims log.  All key material is derived
from the environment seed, so two environments built the same way behave
identically.
"""

from __future__ import annotations

import json
import threading
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable

from .core import (
    Claim,
    Decision,
    ElementRef,
    MeasureKind,
    MeasureValue,
    Overall,
    Transport,
    VerificationResult,
    attestable,
)
from .crypto import Keypair
from .errors import NotFoundError
from .measurement import PCR_COUNT, BootChain, default_boot_chain, digest
from .quote import (
    EndorsementIdentity,
    ManufacturerCA,
    SimulatedEnclave,
    SimulatedTpm,
    TpmEvidence,
    generate_enclave_quote,
    nonce_report_data,
    pcr_composite_digest,
)
from .verification import (
    NonceSession,
    ReferenceRecord,
    ReferenceValueStore,
    VerificationPolicy,
    decide,
    issue_nonce,
    verify_claim,
)

DEFAULT_SEED = 0x5EED_0A77_E57A_7105
DEFAULT_CA = "oem-ca"
DEFAULT_SIGNER = "oem-signer"
DEFAULT_PCR_SELECT = (0, 1, 4)
DEFAULT_FIRMWARE_VERSION = 0x0001_0002_0003_0004


class ClaimsLog:
    """Append-only record of every claim, optionally mirrored to a JSON-lines file."""

    FIELDS = ("claim_id", "element_id", "transport", "overall", "decision", "timestamp")

    def __init__(self, path: str | Path | None = None):
        self.path = Path(path) if path is not None else None
        self.records: list[dict] = []
        self._lock = threading.Lock()

    def append(self, claim: Claim, result: VerificationResult, decision: Decision) -> dict:
        record = {
            "claim_id": claim.claim_id,
            "element_id": claim.element_id,
            "transport": claim.transport.value,
            "overall": result.overall.value,
            "decision": decision.value,
            "timestamp": claim.received_at,
        }
        line = json.dumps(record, sort_keys=True)
        with self._lock:
            self.records.append(record)
            if self.path is not None:
                with self.path.open("a", encoding="utf-8") as fh:
                    fh.write(line + "\n")
        return record

    @staticmethod
    def read(path: str | Path) -> list[dict]:
        with open(path, encoding="utf-8") as fh:
            return [json.loads(line) for line in fh if line.strip()]


@dataclass
class Verifier:
    name: str
    store: ReferenceValueStore
    policy: VerificationPolicy
    session: NonceSession


class Environment:
    def __init__(self, seed: int = DEFAULT_SEED, *, pcr_count: int = PCR_COUNT,
                 log_path: str | Path | None = None):
        self.seed = seed
        self.pcr_count = pcr_count
        self.elements: dict[str, ElementRef] = {}
        self.devices: dict[str, SimulatedTpm] = {}
        self.enclaves: dict[str, SimulatedEnclave] = {}
        self.verifiers: dict[str, Verifier] = {}
        self.network_faults: set[str] = set()
        self.replaying: set[str] = set()
        self.captured: dict[str, object] = {}
        self.claims_log = ClaimsLog(log_path)
        self.tick = 0
        self._counter = 0
        self._cas: dict[str, ManufacturerCA] = {}
        self._signers: dict[str, Keypair] = {}
        self._lock = threading.Lock()

    # -- key material ----------------------------------------------------------

    def key_seed(self, *parts: str) -> bytes:
        material = f"{self.seed}|" + "|".join(parts)
        return digest(material.encode())

    def ca(self, ca_id: str = DEFAULT_CA) -> ManufacturerCA:
        if ca_id not in self._cas:
            self._cas[ca_id] = ManufacturerCA(ca_id, Keypair(self.key_seed("ca", ca_id)))
        return self._cas[ca_id]

    def signer(self, signer_id: str = DEFAULT_SIGNER) -> Keypair:
        if signer_id not in self._signers:
            self._signers[signer_id] = Keypair(self.key_seed("signer", signer_id))
        return self._signers[signer_id]

    def trusted_signers(self) -> dict[str, bytes]:
        return {sid: key.public for sid, key in sorted(self._signers.items())}

    # -- provisioning ----------------------------------------------------------

    def add_element(self, element: ElementRef) -> None:
        self.elements[element.id] = element

    def provision_device(self, element: ElementRef, chain: BootChain | None = None, *,
                         ca_id: str = DEFAULT_CA, firmware_version: int = DEFAULT_FIRMWARE_VERSION,
                         boot: bool = True) -> SimulatedTpm:
        self.add_element(element)
        if chain is None:
            chain = default_boot_chain(element.id, DEFAULT_SIGNER, self.signer(DEFAULT_SIGNER))
        device = SimulatedTpm(element.id, chain, firmware_version=firmware_version, pcr_count=self.pcr_count)
        device.provision(EndorsementIdentity.provision(element.id, self.key_seed("ek", element.id), self.ca(ca_id)))
        if boot:
            device.boot()
        self.devices[element.id] = device
        return device

    def provision_enclave(self, element: ElementRef, code_image: bytes | None = None, *,
                          host: str | None = None, bind_to_host: bool = False,
                          register_key: bool = True) -> SimulatedEnclave:
        self.add_element(element)
        if code_image is None:
            code_image = f"{element.id}/enclave-image/v1".encode()
        key = Keypair(self.key_seed("enclave", element.id)) if register_key else None
        enclave = SimulatedEnclave(element.id, code_image, key, bind_to_host=bind_to_host)
        enclave.launch(self.devices.get(host) if host is not None else None)
        self.enclaves[element.id] = enclave
        return enclave

    def add_verifier(self, name: str, policy: VerificationPolicy | None = None,
                     store: ReferenceValueStore | None = None) -> Verifier:
        policy = policy or VerificationPolicy()
        if store is None:
            store = ReferenceValueStore(ca_set={cid: ca.public for cid, ca in sorted(self._cas.items())})
        session = NonceSession(policy.nonce_window, seed=f"{self.seed}|nonce|{name}")
        verifier = Verifier(name, store, policy, session)
        self.verifiers[name] = verifier
        return verifier

    def golden_record(self, element_id: str, pcr_select=DEFAULT_PCR_SELECT) -> ReferenceRecord:
        """Reference values taken from the element's current (assumed healthy) state."""
        if element_id in self.devices:
            dev = self.devices[element_id]
            select = tuple(sorted(pcr_select))
            element = self.elements[element_id]
            return ReferenceRecord(
                kind=element.kind,
                pcr_select=select,
                pcr_digests={select: pcr_composite_digest(dev.bank, select)},
                golden_events=[e.digest for e in dev.log.entries],
                firmware_range=(dev.firmware_version, dev.firmware_version),
                ak_public=dev.ak.public,
                ek_cert=dev.ek.endorsement_cert,
                last_reset_count=dev.reset_count,
                measurements=[f"pcr{i}" for i in range(dev.pcr_count)] + ["event-log", "ek-cert", "ak-quote"],
            )
        if element_id in self.enclaves:
            enc = self.enclaves[element_id]
            return ReferenceRecord(
                kind="enclave",
                enclave_key=enc.public,
                enclave_measurement=enc.measurement,
                measurements=["enclave-measurement", "enclave-report"],
            )
        raise NotFoundError(f"no simulated device or enclave for {element_id}")

    def enroll(self, verifier_name: str, element_id: str, pcr_select=DEFAULT_PCR_SELECT) -> ReferenceRecord:
        verifier = self.verifiers[verifier_name]
        record = self.golden_record(element_id, pcr_select)
        verifier.store.records[element_id] = record
        if element_id in self.devices:
            cert = record.ek_cert
            verifier.store.ca_set.setdefault(cert.issuer, self.ca(cert.issuer).public)
        return record

    def next_claim_id(self) -> str:
        with self._lock:
            self._counter += 1
            return f"claim-{self._counter:06d}"

    def advance(self) -> int:
        with self._lock:
            self.tick += 1
            return self.tick


def _verifier(env: Environment, verifier: Verifier | str | None) -> Verifier:
    if isinstance(verifier, Verifier):
        return verifier
    if verifier is None:
        if not env.verifiers:
            env.add_verifier("default")
        return next(iter(env.verifiers.values()))
    return env.verifiers[verifier]


# -- the four actions -------------------------------------------------------------

def measure(e: ElementRef, env: Environment) -> tuple[MeasureValue, ...]:
    """What the element's root of trust currently reports about it."""
    if not attestable(e):
        return ()
    if e.id in env.devices:
        dev = env.devices[e.id]
        measures = [
            MeasureValue(e.id, f"pcr{i}", dev.bank[i], MeasureKind.PCR) for i in range(dev.pcr_count)
        ]
        select = DEFAULT_PCR_SELECT
        measures.append(MeasureValue(
            e.id,
            "||".join(f"pcr{i}" for i in select),
            pcr_composite_digest(dev.bank, select),
            MeasureKind.COMPOSITE,
            tuple(f"pcr{i}" for i in select),
        ))
        return tuple(measures)
    if e.id in env.enclaves:
        enc = env.enclaves[e.id]
        return (MeasureValue(e.id, "enclave-measurement", enc.measurement, MeasureKind.CONTENT_HASH),)
    return ()


def attest(e: ElementRef, env: Environment, verifier: Verifier | str | None = None,
           measures: tuple = ()) -> Claim:
    """Ask the element for evidence over a fresh nonce. Never raises for element faults."""
    v = _verifier(env, verifier)
    claim_id = env.next_claim_id()
    ts = env.advance()
    v.session.advance()

    def claim(transport, body=None, nonce=None):
        return Claim(claim_id, e.id, body, transport, ts, nonce, tuple(measures))

    if not attestable(e):
        return claim(Transport.MALFORMED)
    nonce = issue_nonce(v.session)
    if e.id in env.network_faults:
        return claim(Transport.NETWORK_FAILURE, nonce=nonce)
    if e.id in env.replaying and e.id in env.captured:
        return claim(Transport.DELIVERED, env.captured[e.id], nonce)

    if e.id in env.devices and e.interfaces & {"tpm-quote", "vtpm-quote"}:
        dev = env.devices[e.id]
        record = v.store.get(e.id)
        select = record.pcr_select if record is not None and record.pcr_select else DEFAULT_PCR_SELECT
        body = TpmEvidence(dev.generate_quote(select, nonce), dev.log.copy())
    elif e.id in env.enclaves and "enclave-quote" in e.interfaces and env.enclaves[e.id].key is not None:
        body = generate_enclave_quote(env.enclaves[e.id], nonce_report_data(nonce))
    else:
        # advertises an interface, but nothing answers on it
        return claim(Transport.MALFORMED, nonce=nonce)
    env.captured[e.id] = body
    return claim(Transport.DELIVERED, body, nonce)


def run_pipeline(e: ElementRef, env: Environment, verifier: Verifier | str | None = None
                 ) -> tuple[Claim, VerificationResult, Decision]:
    v = _verifier(env, verifier)
    measures = measure(e, env)
    claim = attest(e, env, v, measures)
    result = verify_claim(claim, v.store, v.session, v.policy)
    decision = decide(result, v.policy)
    if result.overall is Overall.VERIFIED and isinstance(claim.body, TpmEvidence):
        record = v.store.get(e.id)
        record.last_reset_count = claim.body.quote.body.clock_info.reset_count
    env.claims_log.append(claim, result, decision)
    return claim, result, decision


def evaluable(claim: Claim, result: VerificationResult) -> bool:
    return claim.transport is Transport.DELIVERED and result.overall is not Overall.UNOBTAINABLE


def trustworthy(e: ElementRef, env: Environment, verifier: Verifier | str | None = None) -> bool:
    """Can a claim be obtained and evaluated? Independent of the verdict."""
    if not attestable(e):
        return False
    claim, result, _ = run_pipeline(e, env, verifier)
    return evaluable(claim, result)


def classify_trusted(population: Iterable[ElementRef], env: Environment,
                     verifier: Verifier | str | None = None) -> set[str]:
    return {e.id for e in population if run_pipeline(e, env, verifier)[2] is Decision.TRUSTED}
