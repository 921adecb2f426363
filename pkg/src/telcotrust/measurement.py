"""Measured boot, secure boot and PCR banks.

Every boot stage is hashed and extended into a platform configuration
register before it runs; the event log records what was extended so a
verifier can recompute the registers later.
"""

from __future__ import annotations

import enum
import hashlib
from dataclasses import dataclass, field, replace
from typing import Any, Mapping

from .crypto import Keypair, verify_signature
from .errors import ConfigurationError, ContractError, ImmutabilityError, NotFoundError

DIGEST_SIZE = 32
ZERO_DIGEST = bytes(DIGEST_SIZE)
PCR_COUNT = 8

_COMPONENT_SIG_TAG = b"component-signature:v1:"


def digest(content: bytes) -> bytes:
    return hashlib.sha256(content).digest()


def pcr_extend(old: bytes, d: bytes) -> bytes:
    if len(old) != DIGEST_SIZE or len(d) != DIGEST_SIZE:
        raise ContractError(
            f"pcr_extend needs two {DIGEST_SIZE}-byte values, got {len(old)} and {len(d)}"
        )
    return digest(old + d)


@dataclass(frozen=True)
class ComponentImage:
    name: str
    content: bytes
    stage: int
    target_pcr: int
    signer: str | None = None
    signature: bytes | None = None
    immutable: bool = False

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "content": self.content.hex(),
            "stage": self.stage,
            "target_pcr": self.target_pcr,
            "signer": self.signer,
            "signature": None if self.signature is None else self.signature.hex(),
            "immutable": self.immutable,
        }

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "ComponentImage":
        sig = data.get("signature")
        return cls(
            name=data["name"],
            content=bytes.fromhex(data["content"]),
            stage=int(data["stage"]),
            target_pcr=int(data["target_pcr"]),
            signer=data.get("signer"),
            signature=None if sig is None else bytes.fromhex(sig),
            immutable=bool(data.get("immutable", False)),
        )


@dataclass(frozen=True)
class BootChain:
    device_id: str
    components: tuple

    def __post_init__(self):
        object.__setattr__(self, "components", tuple(self.components))

    def validate(self, pcr_count: int = PCR_COUNT) -> None:
        if not self.components:
            raise ConfigurationError(f"boot chain for {self.device_id} is empty")
        first = self.components[0]
        if first.stage != 0 or not first.immutable:
            raise ConfigurationError(
                f"boot chain for {self.device_id} must start with an immutable stage-0 component"
            )
        stages = [c.stage for c in self.components]
        if any(b <= a for a, b in zip(stages, stages[1:])):
            raise ConfigurationError(f"stages of {self.device_id} are not strictly increasing")
        for c in self.components:
            if not 0 <= c.target_pcr < pcr_count:
                raise ConfigurationError(f"component {c.name} targets PCR {c.target_pcr}, outside bank")
            if c.immutable and c.stage != 0:
                raise ConfigurationError(f"only stage 0 may be immutable, not {c.name}")

    def component(self, stage: int) -> ComponentImage:
        for c in self.components:
            if c.stage == stage:
                return c
        raise NotFoundError(f"{self.device_id} has no stage {stage}")

    def to_dict(self) -> dict:
        return {"device_id": self.device_id, "components": [c.to_dict() for c in self.components]}

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "BootChain":
        return cls(data["device_id"], tuple(ComponentImage.from_dict(c) for c in data["components"]))


@dataclass
class PCRBank:
    registers: list = field(default_factory=lambda: [ZERO_DIGEST] * PCR_COUNT)

    @classmethod
    def reset(cls, size: int = PCR_COUNT) -> "PCRBank":
        return cls([ZERO_DIGEST] * size)

    def __len__(self) -> int:
        return len(self.registers)

    def __getitem__(self, index: int) -> bytes:
        return self.registers[index]

    def extend(self, index: int, d: bytes) -> bytes:
        if not 0 <= index < len(self.registers):
            raise ContractError(f"PCR index {index} outside bank of {len(self.registers)}")
        self.registers[index] = pcr_extend(self.registers[index], d)
        return self.registers[index]

    def copy(self) -> "PCRBank":
        return PCRBank(list(self.registers))

    def to_dict(self) -> dict:
        return {str(i): r.hex() for i, r in enumerate(self.registers)}


@dataclass(frozen=True)
class Event:
    pcr_index: int
    digest: bytes
    description: str = ""


@dataclass
class EventLog:
    entries: list = field(default_factory=list)

    def append(self, pcr_index: int, d: bytes, description: str = "") -> None:
        self.entries.append(Event(pcr_index, d, description))

    def copy(self) -> "EventLog":
        return EventLog(list(self.entries))

    def __len__(self) -> int:
        return len(self.entries)

    def to_dict(self) -> dict:
        return {
            "entries": [
                {"pcr_index": e.pcr_index, "digest": e.digest.hex(), "description": e.description}
                for e in self.entries
            ]
        }

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "EventLog":
        return cls([
            Event(int(e["pcr_index"]), bytes.fromhex(e["digest"]), e.get("description", ""))
            for e in data["entries"]
        ])


def measured_boot(chain: BootChain, pcr_count: int = PCR_COUNT) -> tuple[PCRBank, EventLog]:
    chain.validate(pcr_count)
    bank = PCRBank.reset(pcr_count)
    log = EventLog()
    for component in sorted(chain.components, key=lambda c: c.stage):
        d = digest(component.content)
        bank.extend(component.target_pcr, d)
        log.append(component.target_pcr, d, component.name)
    return bank, log


def replay_log(log: EventLog, pcr_count: int = PCR_COUNT) -> PCRBank:
    bank = PCRBank.reset(pcr_count)
    for event in log.entries:
        bank.extend(event.pcr_index, event.digest)
    return bank


class SecureBootStatus(str, enum.Enum):
    PROVENANCE_OK = "ProvenanceOk"
    UNSIGNED = "Unsigned"
    UNKNOWN_SIGNER = "UnknownSigner"


def _signing_payload(content: bytes) -> bytes:
    return _COMPONENT_SIG_TAG + digest(content)


def sign_component(component: ComponentImage, signer_id: str, key: Keypair) -> ComponentImage:
    return replace(component, signer=signer_id, signature=key.sign(_signing_payload(component.content)))


def secure_boot_check(c: ComponentImage, trusted_signers: Mapping[str, bytes]) -> SecureBootStatus:
    """Check who signed a component. Says nothing about whether the content is good."""
    if c.signer is None or c.signature is None:
        return SecureBootStatus.UNSIGNED
    public = trusted_signers.get(c.signer)
    # a signature that does not verify cannot be attributed to an enrolled signer
    if public is None or not verify_signature(public, c.signature, _signing_payload(c.content)):
        return SecureBootStatus.UNKNOWN_SIGNER
    return SecureBootStatus.PROVENANCE_OK


def tamper(chain: BootChain, stage: int, new_content: bytes) -> BootChain:
    target = chain.component(stage)
    if stage == 0 or target.immutable:
        raise ImmutabilityError(f"stage {stage} of {chain.device_id} is immutable boot code")
    components = tuple(
        replace(c, content=new_content) if c.stage == stage else c for c in chain.components
    )
    return replace(chain, components=components)


def replace_component(chain: BootChain, component: ComponentImage) -> BootChain:
    """Swap in a whole component (content and signature) at its stage."""
    chain.component(component.stage)
    if component.stage == 0:
        raise ImmutabilityError(f"stage 0 of {chain.device_id} is immutable boot code")
    return replace(
        chain,
        components=tuple(component if c.stage == component.stage else c for c in chain.components),
    )


# name, stage, target register
DEFAULT_STAGES = (
    ("rom", 0, 0),
    ("firmware", 1, 0),
    ("firmware-config", 2, 1),
    ("bootloader", 3, 4),
    ("kernel", 4, 4),
    ("platform-config", 5, 7),
)


def default_boot_chain(device_id: str, signer_id: str | None = None, key: Keypair | None = None,
                       version: str = "1") -> BootChain:
    """A six-stage chain with deterministic content, optionally vendor-signed after stage 0."""
    components = []
    for name, stage, pcr in DEFAULT_STAGES:
        c = ComponentImage(
            name=name,
            content=f"{device_id}/{name}/v{version}".encode(),
            stage=stage,
            target_pcr=pcr,
            immutable=stage == 0,
        )
        if stage > 0 and key is not None:
            c = sign_component(c, signer_id, key)
        components.append(c)
    return BootChain(device_id, tuple(components))
