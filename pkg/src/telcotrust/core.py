"""Elements, measures, claims, results and the decision lattice.

The objects here are the nouns of the attestation pipeline::

    Element --measure--> Measure --attest--> Claim --verify--> Result --decide--> Decision

Decisions form a bounded meet-semilattice: ``Trusted`` on top, ``Untrusted``
at the bottom and three pairwise incomparable failure values in between.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from functools import reduce
from typing import Any, Iterable, Mapping

from .errors import ContractError

DIGEST_SIZE = 32

ELEMENT_KINDS = frozenset({"device", "firmware", "config", "enclave", "telecom-role"})

# tpm-quote is a hardware root of trust; vtpm-quote is a virtual TPM exposed
# to a container or VM; enclave-quote is a CPU enclave report.
INTERFACES = frozenset({"tpm-quote", "vtpm-quote", "enclave-quote"})
ROOT_OF_TRUST_INTERFACES = frozenset({"tpm-quote"})


class Decision(str, enum.Enum):
    TRUSTED = "Trusted"
    UNTRUSTED = "Untrusted"
    NETWORK_FAIL = "NetworkFail"
    INVALID_REQUEST = "InvalidRequest"
    NO_REFERENCE = "NoReference"

    def __str__(self) -> str:
        return self.value


def decision_meet(a: Decision, b: Decision) -> Decision:
    if a is b:
        return a
    if a is Decision.TRUSTED:
        return b
    if b is Decision.TRUSTED:
        return a
    return Decision.UNTRUSTED


def decision_leq(a: Decision, b: Decision) -> bool:
    """Lattice order, written out directly rather than through the meet."""
    return a is b or a is Decision.UNTRUSTED or b is Decision.TRUSTED


def meet_all(decisions: Iterable[Decision]) -> Decision:
    return reduce(decision_meet, decisions, Decision.TRUSTED)


class Transport(str, enum.Enum):
    DELIVERED = "delivered"
    NETWORK_FAILURE = "network-failure"
    MALFORMED = "malformed"


class Overall(str, enum.Enum):
    VERIFIED = "verified"
    FAILED = "failed"
    UNOBTAINABLE = "unobtainable"


class CheckStatus(str, enum.Enum):
    PASS = "pass"
    FAIL = "fail"
    SKIPPED = "skipped"


class MeasureKind(str, enum.Enum):
    PCR = "pcr"
    CONTENT_HASH = "content-hash"
    KEY_SIGNATURE = "key-signature"
    COMPOSITE = "composite"


@dataclass(frozen=True)
class ElementRef:
    id: str
    kind: str = "device"
    interfaces: frozenset = frozenset()

    def __post_init__(self):
        object.__setattr__(self, "interfaces", frozenset(self.interfaces))
        if not self.id:
            raise ContractError("element id must be non-empty")
        if self.kind not in ELEMENT_KINDS:
            raise ContractError(f"unknown element kind {self.kind!r}")
        unknown = self.interfaces - INTERFACES
        if unknown:
            raise ContractError(f"unknown attestation interfaces {sorted(unknown)}")

    @property
    def has_root_of_trust(self) -> bool:
        return bool(self.interfaces & ROOT_OF_TRUST_INTERFACES)

    def to_dict(self) -> dict:
        return {"id": self.id, "kind": self.kind, "interfaces": sorted(self.interfaces)}

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "ElementRef":
        return cls(data["id"], data.get("kind", "device"), frozenset(data.get("interfaces", ())))


def attestable(e: ElementRef) -> bool:
    return bool(e.interfaces)


@dataclass(frozen=True)
class MeasureValue:
    subject: str
    label: str
    digest: bytes
    kind: MeasureKind = MeasureKind.CONTENT_HASH
    constituents: tuple = ()

    def __post_init__(self):
        if len(self.digest) != DIGEST_SIZE:
            raise ContractError(f"measure digest must be {DIGEST_SIZE} bytes, got {len(self.digest)}")
        if self.kind is MeasureKind.COMPOSITE and not self.constituents:
            raise ContractError("composite measure must record its constituent labels")


@dataclass(frozen=True)
class Claim:
    """Signed evidence for one element, as received by a verifier.

    ``nonce`` is the freshness value the verifier asked for; ``body`` is the
    evidence actually returned (a TPM quote bundle or an enclave quote).
    """

    claim_id: str
    element_id: str
    body: Any
    transport: Transport
    received_at: int
    nonce: bytes | None = None
    measures: tuple = ()

    def __post_init__(self):
        if (self.transport is Transport.DELIVERED) != (self.body is not None):
            raise ContractError("a claim is delivered exactly when it carries a body")


@dataclass(frozen=True)
class CheckOutcome:
    status: CheckStatus
    detail: str = ""


@dataclass
class VerificationResult:
    claim_id: str
    checks: dict = field(default_factory=dict)
    overall: Overall = Overall.UNOBTAINABLE
    transport: Transport = Transport.DELIVERED
    reason: str = ""

    def failed_checks(self) -> list[str]:
        return [name for name, out in self.checks.items() if out.status is CheckStatus.FAIL]

    def to_dict(self) -> dict:
        return {
            "claim_id": self.claim_id,
            "transport": self.transport.value,
            "overall": self.overall.value,
            "reason": self.reason,
            "checks": {
                name: {"status": out.status.value, "detail": out.detail}
                for name, out in self.checks.items()
            },
        }
