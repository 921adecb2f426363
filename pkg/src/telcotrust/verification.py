"""Verifier: compares claims with reference values and turns results into decisions."""

from __future__ import annotations

import os
import random
import threading
from dataclasses import dataclass, field, replace
from typing import Any, Iterable, Mapping, Sequence

from .core import (
    CheckOutcome,
    CheckStatus,
    Claim,
    Decision,
    MeasureKind,
    MeasureValue,
    Overall,
    Transport,
    VerificationResult,
    meet_all,
)
from .errors import ContractError, InsufficientMeasurements
from .measurement import PCR_COUNT, ZERO_DIGEST, pcr_extend, replay_log
from .quote import (
    MAX_EXTRA_DATA,
    REPORT_DATA_SIZE,
    TPM_GENERATED_VALUE,
    TPM_ST_ATTEST_QUOTE,
    EndorsementCert,
    EnclaveQuote,
    TpmEvidence,
    nonce_report_data,
    pcr_composite_digest,
    qualified_signer,
    verify_endorsement,
    verify_enclave_quote,
    verify_quote_signature,
)

CHECKS = (
    "structure",
    "signature",
    "endorsement",
    "nonce",
    "pcr-digest",
    "eventlog-replay",
    "safe-flag",
    "reset-monotonic",
    "firmware-version",
)
NONCE_SIZE = 16
DEFAULT_NONCE_WINDOW = 128
MAX_MINSET_LABELS = 16

DEPENDENCY_KINDS = ("PartOf", "RunsOn", "Uses")

# checks that only make sense for TPM evidence
_TPM_ONLY = frozenset({"endorsement", "eventlog-replay", "safe-flag", "reset-monotonic", "firmware-version"})


def _hex_or_none(b: bytes | None) -> str | None:
    return None if b is None else b.hex()


def _bytes_or_none(s: str | None) -> bytes | None:
    return None if s is None else bytes.fromhex(s)


@dataclass
class ReferenceRecord:
    """Known-good values for one element."""

    kind: str = "device"
    pcr_select: tuple = (0, 1)
    pcr_digests: dict = field(default_factory=dict)  # tuple(select) -> expected digest
    golden_events: list | None = None
    firmware_range: tuple | None = None
    ak_public: bytes | None = None
    ek_cert: EndorsementCert | None = None
    enclave_key: bytes | None = None
    enclave_measurement: bytes | None = None
    last_reset_count: int | None = None
    measurements: list = field(default_factory=list)

    def __post_init__(self):
        self.pcr_select = tuple(self.pcr_select)
        self.pcr_digests = {tuple(k): v for k, v in self.pcr_digests.items()}

    def copy(self) -> "ReferenceRecord":
        return replace(
            self,
            pcr_digests=dict(self.pcr_digests),
            golden_events=None if self.golden_events is None else list(self.golden_events),
            measurements=list(self.measurements),
        )

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "pcr_select": list(self.pcr_select),
            "pcr_digests": {",".join(map(str, k)): v.hex() for k, v in sorted(self.pcr_digests.items())},
            "golden_events": None if self.golden_events is None else [d.hex() for d in self.golden_events],
            "firmware_range": None if self.firmware_range is None else list(self.firmware_range),
            "ak_public": _hex_or_none(self.ak_public),
            "ek_cert": None if self.ek_cert is None else self.ek_cert.to_dict(),
            "enclave_key": _hex_or_none(self.enclave_key),
            "enclave_measurement": _hex_or_none(self.enclave_measurement),
            "last_reset_count": self.last_reset_count,
            "measurements": list(self.measurements),
        }

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "ReferenceRecord":
        golden = data.get("golden_events")
        fw = data.get("firmware_range")
        cert = data.get("ek_cert")
        return cls(
            kind=data.get("kind", "device"),
            pcr_select=tuple(data.get("pcr_select", (0, 1))),
            pcr_digests={
                tuple(int(i) for i in k.split(",")): bytes.fromhex(v)
                for k, v in data.get("pcr_digests", {}).items()
            },
            golden_events=None if golden is None else [bytes.fromhex(d) for d in golden],
            firmware_range=None if fw is None else (int(fw[0]), int(fw[1])),
            ak_public=_bytes_or_none(data.get("ak_public")),
            ek_cert=None if cert is None else EndorsementCert.from_dict(cert),
            enclave_key=_bytes_or_none(data.get("enclave_key")),
            enclave_measurement=_bytes_or_none(data.get("enclave_measurement")),
            last_reset_count=data.get("last_reset_count"),
            measurements=list(data.get("measurements", [])),
        )


@dataclass
class ReferenceValueStore:
    records: dict = field(default_factory=dict)
    ca_set: dict = field(default_factory=dict)  # ca id -> public key

    def get(self, element_id: str) -> ReferenceRecord | None:
        return self.records.get(element_id)

    def copy(self) -> "ReferenceValueStore":
        return ReferenceValueStore({k: r.copy() for k, r in self.records.items()}, dict(self.ca_set))

    def to_dict(self) -> dict:
        return {
            "ca_set": {k: v.hex() for k, v in sorted(self.ca_set.items())},
            "elements": {k: r.to_dict() for k, r in sorted(self.records.items())},
        }

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "ReferenceValueStore":
        return cls(
            {k: ReferenceRecord.from_dict(v) for k, v in data.get("elements", {}).items()},
            {k: bytes.fromhex(v) for k, v in data.get("ca_set", {}).items()},
        )


def _default_outcomes() -> dict:
    return {
        "verified": {"delivered": Decision.TRUSTED, "network-failure": Decision.NETWORK_FAIL,
                     "malformed": Decision.INVALID_REQUEST},
        "failed": {"delivered": Decision.UNTRUSTED, "network-failure": Decision.NETWORK_FAIL,
                   "malformed": Decision.INVALID_REQUEST},
        "unobtainable": {"delivered": Decision.NO_REFERENCE, "network-failure": Decision.NETWORK_FAIL,
                         "malformed": Decision.INVALID_REQUEST},
    }


def _default_coverage() -> dict:
    # element kind -> check -> measurement labels that can satisfy it
    device = {
        "firmware": ["pcr0", "event-log"],
        "firmware-config": ["pcr1", "event-log"],
        "boot-path": ["pcr4", "event-log"],
        "identity": ["ek-cert"],
        "freshness": ["ak-quote"],
    }
    return {
        "device": device,
        "telecom-role": device,
        "enclave": {"code": ["enclave-measurement"], "freshness": ["enclave-report"]},
    }


@dataclass
class VerificationPolicy:
    required_checks: tuple = CHECKS
    outcome_decisions: dict = field(default_factory=_default_outcomes)
    check_failure_decisions: dict = field(
        default_factory=lambda: {"nonce": Decision.INVALID_REQUEST, "structure": Decision.INVALID_REQUEST}
    )
    measurement_coverage: dict = field(default_factory=_default_coverage)
    propagate: tuple = DEPENDENCY_KINDS
    nonce_window: int = DEFAULT_NONCE_WINDOW

    def __post_init__(self):
        self.required_checks = tuple(self.required_checks)
        self.propagate = tuple(self.propagate)
        unknown = set(self.required_checks) - set(CHECKS)
        if unknown:
            raise ContractError(f"unknown checks {sorted(unknown)}")
        for overall in Overall:
            row = self.outcome_decisions.get(overall.value, {})
            for transport in Transport:
                if transport.value not in row:
                    raise ContractError(f"decision map has no entry for ({overall.value}, {transport.value})")
                row[transport.value] = Decision(row[transport.value])
        self.check_failure_decisions = {k: Decision(v) for k, v in self.check_failure_decisions.items()}

    def to_dict(self) -> dict:
        return {
            "required_checks": list(self.required_checks),
            "outcome_decisions": {
                o: {t: d.value for t, d in row.items()} for o, row in self.outcome_decisions.items()
            },
            "check_failure_decisions": {k: v.value for k, v in self.check_failure_decisions.items()},
            "measurement_coverage": self.measurement_coverage,
            "propagate": list(self.propagate),
            "nonce_window": self.nonce_window,
        }

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "VerificationPolicy":
        kwargs = {}
        if "required_checks" in data:
            kwargs["required_checks"] = tuple(data["required_checks"])
        if "outcome_decisions" in data:
            kwargs["outcome_decisions"] = {o: dict(row) for o, row in data["outcome_decisions"].items()}
        if "check_failure_decisions" in data:
            kwargs["check_failure_decisions"] = dict(data["check_failure_decisions"])
        if "measurement_coverage" in data:
            kwargs["measurement_coverage"] = data["measurement_coverage"]
        if "propagate" in data:
            kwargs["propagate"] = tuple(data["propagate"])
        if "nonce_window" in data:
            kwargs["nonce_window"] = int(data["nonce_window"])
        return cls(**kwargs)


class NonceSession:
    """Issued and consumed nonces on a logical clock."""

    def __init__(self, window: int = DEFAULT_NONCE_WINDOW, seed: int | str | None = None):
        self.window = window
        self.now = 0
        self.issued: dict[bytes, int] = {}
        self.consumed: set[bytes] = set()
        self._rng = random.Random(seed) if seed is not None else None
        self._lock = threading.Lock()

    def advance(self, ticks: int = 1) -> None:
        with self._lock:
            self.now += ticks

    def _fresh(self) -> bytes:
        if self._rng is None:
            return os.urandom(NONCE_SIZE)
        return self._rng.randbytes(NONCE_SIZE)

    def issue(self) -> bytes:
        with self._lock:
            nonce = self._fresh()
            while nonce in self.issued:
                nonce = self._fresh()
            self.issued[nonce] = self.now + self.window
            return nonce

    def consume(self, nonce: bytes) -> str | None:
        """Atomically mark ``nonce`` used. Returns a failure reason or None."""
        with self._lock:
            if nonce not in self.issued:
                return "nonce was never issued"
            if nonce in self.consumed:
                return "nonce already consumed (replay)"
            self.consumed.add(nonce)
            if self.now > self.issued[nonce]:
                return "nonce expired"
            return None

    def copy(self) -> "NonceSession":
        other = NonceSession(self.window)
        with self._lock:
            other.now = self.now
            other.issued = dict(self.issued)
            other.consumed = set(self.consumed)
            if self._rng is not None:
                other._rng = random.Random()
                other._rng.setstate(self._rng.getstate())
        return other


def issue_nonce(session: NonceSession) -> bytes:
    return session.issue()


# -- checks ---------------------------------------------------------------------

def _missing_references(record: ReferenceRecord | None, store: ReferenceValueStore,
                        checks: Sequence[str], body: Any) -> list[str]:
    if record is None:
        return ["no reference record"]
    missing = []
    enclave = isinstance(body, EnclaveQuote)
    for check in checks:
        if check == "signature":
            if enclave and record.enclave_key is None:
                missing.append("enclave key")
            elif not enclave and record.ak_public is None:
                missing.append("attestation key")
        elif check == "pcr-digest":
            if enclave and record.enclave_measurement is None:
                missing.append("enclave measurement")
            elif not enclave and not record.pcr_digests:
                missing.append("PCR digests")
        elif enclave:
            continue
        elif check == "endorsement" and record.ek_cert is None:
            missing.append("endorsement certificate")
        elif check == "eventlog-replay" and record.golden_events is None:
            missing.append("golden event log")
        elif check == "firmware-version" and record.firmware_range is None:
            missing.append("firmware version range")
    return missing


def _ok(detail: str = "") -> CheckOutcome:
    return CheckOutcome(CheckStatus.PASS, detail)


def _fail(detail: str) -> CheckOutcome:
    return CheckOutcome(CheckStatus.FAIL, detail)


def _check_nonce(claim: Claim, echoed: bool, session: NonceSession) -> CheckOutcome:
    if claim.nonce is None:
        return _fail("no nonce was requested for this claim")
    reason = session.consume(claim.nonce)
    if not echoed:
        return _fail("evidence does not carry the requested nonce")
    if reason is not None:
        return _fail(reason)
    return _ok()


def _tpm_check(name: str, ev: TpmEvidence, claim: Claim, record: ReferenceRecord,
               store: ReferenceValueStore, session: NonceSession) -> CheckOutcome:
    body = ev.quote.body
    if name == "structure":
        if body.magic != TPM_GENERATED_VALUE or body.type != TPM_ST_ATTEST_QUOTE:
            return _fail("magic/type are not the quote constants")
        if list(body.pcr_select) != sorted(set(body.pcr_select)) or not body.pcr_select:
            return _fail("pcrSelect is empty or unsorted")
        if len(body.extra_data) > MAX_EXTRA_DATA:
            return _fail("extraData too long")
        return _ok()
    if name == "signature":
        if verify_quote_signature(ev.quote, record.ak_public):
            return _ok()
        return _fail("quote signature does not verify under the enrolled AK")
    if name == "endorsement":
        if not verify_endorsement(record.ek_cert, store.ca_set):
            return _fail("EK certificate does not verify against the CA set")
        if body.qualified_signer != qualified_signer(record.ek_cert.ek_public, record.ak_public):
            return _fail("qualifiedSigner does not match the endorsed EK and enrolled AK")
        return _ok()
    if name == "nonce":
        return _check_nonce(claim, body.extra_data == claim.nonce, session)
    if name == "pcr-digest":
        expected = record.pcr_digests.get(tuple(body.pcr_select))
        if expected is None:
            return _fail(f"no reference digest for selection {list(body.pcr_select)}")
        if body.pcr_digest != expected:
            return _fail("pcrDigest differs from the reference value")
        return _ok()
    if name == "eventlog-replay":
        indices = [e.pcr_index for e in ev.event_log.entries] + list(body.pcr_select)
        size = max([PCR_COUNT] + [i + 1 for i in indices])
        replayed = replay_log(ev.event_log, size)
        if pcr_composite_digest(replayed, body.pcr_select) != body.pcr_digest:
            return _fail("replayed event log does not reproduce the quoted pcrDigest")
        if [e.digest for e in ev.event_log.entries] != list(record.golden_events):
            return _fail("event log differs from the golden log")
        return _ok()
    if name == "safe-flag":
        if body.clock_info.safe:
            return _ok()
        return _fail("TPM was not shut down orderly (safe=0)")
    if name == "reset-monotonic":
        last = record.last_reset_count
        if last is not None and body.clock_info.reset_count < last:
            return _fail(f"resetCount went backwards ({body.clock_info.reset_count} < {last})")
        return _ok()
    if name == "firmware-version":
        lo, hi = record.firmware_range
        if lo <= body.firmware_version <= hi:
            return _ok()
        return _fail(f"firmwareVersion {body.firmware_version:#x} outside accepted range")
    raise ContractError(f"unknown check {name}")


def _enclave_check(name: str, q: EnclaveQuote, claim: Claim, record: ReferenceRecord,
                   session: NonceSession) -> CheckOutcome:
    if name in _TPM_ONLY:
        return CheckOutcome(CheckStatus.SKIPPED, "not applicable to enclave quotes")
    if name == "structure":
        if len(q.report_data) != REPORT_DATA_SIZE or len(q.enclave_measurement) != 32:
            return _fail("enclave quote fields have the wrong size")
        return _ok()
    if name == "signature":
        if verify_enclave_quote(q, record.enclave_key):
            return _ok()
        return _fail("enclave report signature does not verify")
    if name == "nonce":
        echoed = claim.nonce is not None and q.report_data == nonce_report_data(claim.nonce)
        return _check_nonce(claim, echoed, session)
    if name == "pcr-digest":
        if q.enclave_measurement == record.enclave_measurement:
            return _ok("enclave measurement")
        return _fail("enclave measurement differs from the reference value")
    raise ContractError(f"unknown check {name}")


def verify_claim(c: Claim, store: ReferenceValueStore, session: NonceSession,
                 policy: VerificationPolicy) -> VerificationResult:
    """Run every required check, in policy order, without short-circuiting."""
    result = VerificationResult(c.claim_id, transport=c.transport)
    checks = policy.required_checks
    if c.transport is not Transport.DELIVERED:
        result.checks = {n: CheckOutcome(CheckStatus.SKIPPED, f"claim {c.transport.value}") for n in checks}
        result.overall = Overall.UNOBTAINABLE
        result.reason = c.transport.value
        return result
    record = store.get(c.element_id)
    missing = _missing_references(record, store, checks, c.body)
    if missing:
        result.checks = {n: CheckOutcome(CheckStatus.SKIPPED, "reference values missing") for n in checks}
        result.overall = Overall.UNOBTAINABLE
        result.reason = "missing references: " + ", ".join(missing)
        # the nonce is still spent, or the evidence could be re-presented later
        if c.nonce is not None:
            session.consume(c.nonce)
        return result
    for name in checks:
        if isinstance(c.body, TpmEvidence):
            result.checks[name] = _tpm_check(name, c.body, c, record, store, session)
        elif isinstance(c.body, EnclaveQuote):
            result.checks[name] = _enclave_check(name, c.body, c, record, session)
        else:
            result.checks[name] = _fail(f"undecodable evidence of type {type(c.body).__name__}")
    ran = [o for o in result.checks.values() if o.status is not CheckStatus.SKIPPED]
    if ran and all(o.status is CheckStatus.PASS for o in ran):
        result.overall = Overall.VERIFIED
    else:
        result.overall = Overall.FAILED
        result.reason = "failed: " + ", ".join(result.failed_checks()) if result.failed_checks() else "no check ran"
    return result


def decide(r: VerificationResult, policy: VerificationPolicy) -> Decision:
    default = policy.outcome_decisions[r.overall.value][r.transport.value]
    if r.overall is not Overall.FAILED:
        return default
    failed = r.failed_checks()
    if not failed:
        return default
    return meet_all(policy.check_failure_decisions.get(name, default) for name in failed)


# -- integrity as composition ---------------------------------------------------

def system_integrity(element_id: str, measures: Sequence[MeasureValue]) -> MeasureValue:
    if not measures:
        raise ContractError("system_integrity needs at least one measure")
    ordered = sorted(measures, key=lambda m: (m.digest, m.label))
    acc = ZERO_DIGEST
    for m in ordered:
        acc = pcr_extend(acc, m.digest)
    return MeasureValue(
        subject=element_id,
        label="integrity",
        digest=acc,
        kind=MeasureKind.COMPOSITE,
        constituents=tuple(m.label for m in ordered),
    )


def _minimize(family: Iterable[frozenset]) -> set[frozenset]:
    family = set(family)
    return {s for s in family if not any(t < s for t in family)}


def minimal_sufficient_sets(available: Iterable[str],
                            required_coverage: Mapping[str, Iterable[str]]) -> list[frozenset]:
    """Every inclusion-minimal subset of ``available`` that satisfies all checks.

    Computed as the minimal transversals of the satisfier sets, adding one
    check at a time.  Results are sorted by size, then lexicographically.
    """
    available = frozenset(available)
    if len(available) > MAX_MINSET_LABELS:
        raise ContractError(f"at most {MAX_MINSET_LABELS} measurements, got {len(available)}")
    edges = {check: frozenset(labels) & available for check, labels in required_coverage.items()}
    uncovered = [check for check, labels in edges.items() if not labels]
    if uncovered:
        raise InsufficientMeasurements(uncovered)
    transversals = {frozenset()}
    for labels in sorted(edges.values(), key=lambda s: (len(s), sorted(s))):
        grown = set()
        for t in transversals:
            if t & labels:
                grown.add(t)
            else:
                grown.update(t | {x} for x in labels)
        transversals = _minimize(grown)
    return sorted(transversals, key=lambda s: (len(s), sorted(s)))
