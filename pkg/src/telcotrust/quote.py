"""Simulated TPM quotes, endorsement hierarchy and enclave reports.

Byte layout of an encoded quote body (all integers big-endian)::

    magic(4) type(2) qualifiedSigner(32) len(extraData)(2) extraData
    clock(8) resetCount(4) restartCount(4) safe(1) firmwareVersion(8)
    count(pcrSelect)(2) index(2)*count pcrDigest(32)

An empty extraData with a single selected register encodes to 101 bytes.
"""

from __future__ import annotations

import base64
import struct
import threading
from dataclasses import dataclass, field, replace
from typing import Any, Mapping, Sequence

from .crypto import Keypair, verify_signature
from .errors import ContractError, ProvisioningError
from .measurement import (
    PCR_COUNT,
    BootChain,
    EventLog,
    PCRBank,
    digest,
    measured_boot,
)

TPM_GENERATED_VALUE = 0xFF544347
TPM_ST_ATTEST_QUOTE = 0x8018
MAX_EXTRA_DATA = 64
REPORT_DATA_SIZE = 64
CLOCK_STEP_MS = 1000

_U64 = (1 << 64) - 1
_U32 = (1 << 32) - 1


# -- endorsement hierarchy ---------------------------------------------------

@dataclass(frozen=True)
class EndorsementCert:
    subject: str
    ek_public: bytes
    issuer: str
    signature: bytes

    def payload(self) -> bytes:
        return cert_payload(self.subject, self.ek_public, self.issuer)

    def to_dict(self) -> dict:
        return {
            "subject": self.subject,
            "ek_public": self.ek_public.hex(),
            "issuer": self.issuer,
            "signature": self.signature.hex(),
        }

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "EndorsementCert":
        return cls(
            data["subject"],
            bytes.fromhex(data["ek_public"]),
            data["issuer"],
            bytes.fromhex(data["signature"]),
        )


def cert_payload(subject: str, ek_public: bytes, issuer: str) -> bytes:
    parts = [subject.encode(), ek_public, issuer.encode()]
    return b"ek-cert:v1:" + b"".join(struct.pack(">H", len(p)) + p for p in parts)


@dataclass(frozen=True)
class ManufacturerCA:
    ca_id: str
    key: Keypair

    @property
    def public(self) -> bytes:
        return self.key.public

    def issue(self, subject: str, ek_public: bytes) -> EndorsementCert:
        sig = self.key.sign(cert_payload(subject, ek_public, self.ca_id))
        return EndorsementCert(subject, ek_public, self.ca_id, sig)


@dataclass(frozen=True)
class EndorsementIdentity:
    ek: Keypair
    endorsement_cert: EndorsementCert

    @property
    def public(self) -> bytes:
        return self.ek.public

    @property
    def ek_id(self) -> str:
        return digest(self.ek.public)[:8].hex()

    @classmethod
    def provision(cls, subject: str, ek_seed: bytes, ca: ManufacturerCA) -> "EndorsementIdentity":
        ek = Keypair(ek_seed)
        return cls(ek, ca.issue(subject, ek.public))


@dataclass(frozen=True)
class AttestationKey:
    ak: Keypair
    parent: str
    derivation_label: str

    @property
    def public(self) -> bytes:
        return self.ak.public


def derive_ak(ek: EndorsementIdentity, label: str) -> AttestationKey:
    seed = digest(ek.ek.seed + label.encode())
    return AttestationKey(Keypair(seed), ek.ek_id, label)


def verify_endorsement(cert: EndorsementCert, ca_set: Mapping[str, bytes]) -> bool:
    ca_public = ca_set.get(cert.issuer)
    if ca_public is None:
        return False
    return verify_signature(ca_public, cert.signature, cert.payload())


def qualified_signer(ek_pub: bytes, ak_pub: bytes) -> bytes:
    return digest(digest(ek_pub) + digest(ak_pub))


# -- quote body ----------------------------------------------------------------

@dataclass(frozen=True)
class ClockInfo:
    clock: int = 0
    reset_count: int = 0
    restart_count: int = 0
    safe: bool = True


@dataclass(frozen=True)
class TpmQuoteBody:
    qualified_signer: bytes
    extra_data: bytes
    clock_info: ClockInfo
    firmware_version: int
    pcr_select: tuple
    pcr_digest: bytes
    magic: int = TPM_GENERATED_VALUE
    type: int = TPM_ST_ATTEST_QUOTE

    def __post_init__(self):
        object.__setattr__(self, "pcr_select", tuple(self.pcr_select))


def pcr_composite_digest(bank: PCRBank | Sequence[bytes], pcr_select: Sequence[int]) -> bytes:
    """Hash of the selected registers concatenated in ascending index order."""
    return digest(b"".join(bank[i] for i in sorted(pcr_select)))


def canonical_encode(body: TpmQuoteBody) -> bytes:
    select = list(body.pcr_select)
    if select != sorted(set(select)):
        raise ContractError(f"pcrSelect must be strictly ascending, got {select}")
    if len(body.qualified_signer) != 32 or len(body.pcr_digest) != 32:
        raise ContractError("qualifiedSigner and pcrDigest must be 32 bytes")
    if len(body.extra_data) > MAX_EXTRA_DATA:
        raise ContractError(f"extraData longer than {MAX_EXTRA_DATA} bytes")
    ci = body.clock_info
    if not (0 <= ci.clock <= _U64 and 0 <= ci.reset_count <= _U32 and 0 <= ci.restart_count <= _U32):
        raise ContractError("clockInfo field out of range")
    if not 0 <= body.firmware_version <= _U64:
        raise ContractError("firmwareVersion out of range")
    if any(not 0 <= i <= 0xFFFF for i in select):
        raise ContractError("PCR index does not fit in two bytes")
    return b"".join([
        struct.pack(">IH", body.magic, body.type),
        body.qualified_signer,
        struct.pack(">H", len(body.extra_data)),
        body.extra_data,
        struct.pack(">QIIB", ci.clock, ci.reset_count, ci.restart_count, 1 if ci.safe else 0),
        struct.pack(">Q", body.firmware_version),
        struct.pack(">H", len(select)),
        b"".join(struct.pack(">H", i) for i in select),
        body.pcr_digest,
    ])


def canonical_decode(data: bytes) -> TpmQuoteBody:
    """Inverse of :func:`canonical_encode`; rejects anything it would not produce."""
    try:
        magic, type_ = struct.unpack_from(">IH", data, 0)
        off = 6
        signer = data[off:off + 32]
        off += 32
        (n_extra,) = struct.unpack_from(">H", data, off)
        off += 2
        extra = data[off:off + n_extra]
        off += n_extra
        clock, resets, restarts, safe = struct.unpack_from(">QIIB", data, off)
        off += 17
        (fw,) = struct.unpack_from(">Q", data, off)
        off += 8
        (count,) = struct.unpack_from(">H", data, off)
        off += 2
        select = struct.unpack_from(f">{count}H", data, off)
        off += 2 * count
        pcr_digest = data[off:off + 32]
        off += 32
    except struct.error as exc:
        raise ContractError(f"truncated quote body: {exc}") from None
    if len(signer) != 32 or len(extra) != n_extra or len(pcr_digest) != 32 or off != len(data):
        raise ContractError("quote body has wrong length")
    if safe not in (0, 1):
        raise ContractError("safe flag must be 0 or 1")
    body = TpmQuoteBody(
        qualified_signer=signer,
        extra_data=extra,
        clock_info=ClockInfo(clock, resets, restarts, bool(safe)),
        firmware_version=fw,
        pcr_select=select,
        pcr_digest=pcr_digest,
        magic=magic,
        type=type_,
    )
    canonical_encode(body)
    return body


@dataclass(frozen=True)
class SignedQuote:
    body: TpmQuoteBody
    signature: bytes

    def to_dict(self) -> dict:
        return {
            "body": base64.b64encode(canonical_encode(self.body)).decode(),
            "signature": base64.b64encode(self.signature).decode(),
        }

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "SignedQuote":
        return cls(
            canonical_decode(base64.b64decode(data["body"])),
            base64.b64decode(data["signature"]),
        )


def verify_quote_signature(q: SignedQuote, ak_pub: bytes) -> bool:
    try:
        encoded = canonical_encode(q.body)
    except ContractError:
        return False
    return verify_signature(ak_pub, q.signature, encoded)


def verify_encoded_quote(encoded: bytes, signature: bytes, ak_pub: bytes) -> bool:
    """Signature check over wire bytes; undecodable bodies never verify."""
    try:
        canonical_decode(encoded)
    except ContractError:
        return False
    return verify_signature(ak_pub, signature, encoded)


@dataclass(frozen=True)
class TpmEvidence:
    """What a TPM-bearing element returns when asked to attest."""

    quote: SignedQuote
    event_log: EventLog


# -- simulated devices ---------------------------------------------------------

class SimulatedTpm:
    """A device with a TPM: PCR bank, event log, EK/AK and clock counters.

    All state changes go through this handle; a lock serializes them.
    """

    def __init__(self, device_id: str, chain: BootChain, *, firmware_version: int = 0x0001_0002_0003_0004,
                 pcr_count: int = PCR_COUNT):
        self.device_id = device_id
        self.chain = chain
        self.firmware_version = firmware_version
        self.pcr_count = pcr_count
        self.ek: EndorsementIdentity | None = None
        self.ak: AttestationKey | None = None
        self.bank = PCRBank.reset(pcr_count)
        self.log = EventLog()
        self.clock = 0
        self.reset_count = 0
        self.restart_count = 0
        self.safe = True
        self._lock = threading.Lock()

    def provision(self, ek: EndorsementIdentity, ak_label: str = "ak-0") -> None:
        self.ek = ek
        self.ak = derive_ak(ek, ak_label)

    def boot(self, chain: BootChain | None = None) -> None:
        with self._lock:
            if chain is not None:
                self.chain = chain
            self.bank, self.log = measured_boot(self.chain, self.pcr_count)

    def extend(self, index: int, d: bytes, description: str = "") -> None:
        with self._lock:
            self.bank.extend(index, d)
            self.log.append(index, d, description)

    def power_cycle(self) -> None:
        with self._lock:
            self.reset_count += 1
            self.bank = PCRBank.reset(self.pcr_count)
            self.log = EventLog()
            self.safe = True
            self.clock += CLOCK_STEP_MS

    def sleep_cycle(self) -> None:
        with self._lock:
            self.restart_count += 1
            self.clock += CLOCK_STEP_MS

    def unsafe_poweroff(self) -> None:
        # power is lost without an orderly shutdown; the TPM still counts the reset
        with self._lock:
            self.reset_count += 1
            self.bank = PCRBank.reset(self.pcr_count)
            self.log = EventLog()
            self.safe = False
            self.clock += CLOCK_STEP_MS

    def generate_quote(self, pcr_select: Sequence[int], nonce: bytes) -> SignedQuote:
        if self.ek is None or self.ak is None:
            raise ProvisioningError(f"{self.device_id} has no EK/AK provisioned")
        select = tuple(pcr_select)
        if not select:
            raise ContractError("pcr_select must not be empty")
        if any(not 0 <= i < self.pcr_count for i in select):
            raise ContractError(f"pcr_select {list(select)} outside bank of {self.pcr_count}")
        if len(nonce) > MAX_EXTRA_DATA:
            raise ContractError(f"nonce longer than {MAX_EXTRA_DATA} bytes")
        with self._lock:
            self.clock += CLOCK_STEP_MS
            body = TpmQuoteBody(
                qualified_signer=qualified_signer(self.ek.public, self.ak.public),
                extra_data=bytes(nonce),
                clock_info=ClockInfo(self.clock, self.reset_count, self.restart_count, self.safe),
                firmware_version=self.firmware_version,
                pcr_select=tuple(sorted(set(select))),
                pcr_digest=pcr_composite_digest(self.bank, select),
            )
            return SignedQuote(body, self.ak.ak.sign(canonical_encode(body)))


def generate_quote(device: SimulatedTpm, pcr_select: Sequence[int], nonce: bytes) -> SignedQuote:
    return device.generate_quote(pcr_select, nonce)


def power_cycle(device: SimulatedTpm) -> SimulatedTpm:
    device.power_cycle()
    return device


def sleep_cycle(device: SimulatedTpm) -> SimulatedTpm:
    device.sleep_cycle()
    return device


def unsafe_poweroff(device: SimulatedTpm) -> SimulatedTpm:
    device.unsafe_poweroff()
    return device


# -- enclaves -------------------------------------------------------------------

@dataclass(frozen=True)
class EnclaveQuote:
    enclave_measurement: bytes
    report_data: bytes
    signature: bytes

    def payload(self) -> bytes:
        return enclave_payload(self.enclave_measurement, self.report_data)

    def to_dict(self) -> dict:
        return {
            "enclave_measurement": self.enclave_measurement.hex(),
            "report_data": base64.b64encode(self.report_data).decode(),
            "signature": base64.b64encode(self.signature).decode(),
        }


def enclave_payload(measurement: bytes, report_data: bytes) -> bytes:
    return b"enclave-report:v1:" + measurement + report_data


@dataclass
class SimulatedEnclave:
    """A CPU enclave with its own report key.

    ``host`` records where the enclave runs.  Unless ``bind_to_host`` is set
    nothing about the enclave appears in the host's measurements.
    """

    enclave_id: str
    code_image: bytes
    key: Keypair | None = None
    host: SimulatedTpm | None = None
    bind_to_host: bool = False
    bind_pcr: int = 7
    _lock: threading.Lock = field(default_factory=threading.Lock, repr=False, compare=False)

    @property
    def measurement(self) -> bytes:
        return digest(self.code_image)

    @property
    def public(self) -> bytes:
        if self.key is None:
            raise ProvisioningError(f"enclave {self.enclave_id} has no registered key")
        return self.key.public

    def launch(self, host: SimulatedTpm | None) -> None:
        self.host = host
        if self.bind_to_host and host is not None:
            host.extend(self.bind_pcr, self.measurement, f"enclave:{self.enclave_id}")

    @property
    def linkage(self) -> str:
        if self.bind_to_host and self.host is not None:
            return f"bound:{self.host.device_id}:pcr{self.bind_pcr}"
        return "absent"


def generate_enclave_quote(enclave: SimulatedEnclave, report_data: bytes) -> EnclaveQuote:
    if enclave.key is None:
        raise ProvisioningError(f"enclave {enclave.enclave_id} has no registered key")
    if len(report_data) != REPORT_DATA_SIZE:
        raise ContractError(f"report_data must be {REPORT_DATA_SIZE} bytes")
    measurement = enclave.measurement
    with enclave._lock:
        sig = enclave.key.sign(enclave_payload(measurement, report_data))
    return EnclaveQuote(measurement, bytes(report_data), sig)


def verify_enclave_quote(q: EnclaveQuote, enclave_pub: bytes) -> bool:
    if len(q.report_data) != REPORT_DATA_SIZE or len(q.enclave_measurement) != 32:
        return False
    return verify_signature(enclave_pub, q.signature, q.payload())


def nonce_report_data(nonce: bytes) -> bytes:
    if len(nonce) > REPORT_DATA_SIZE:
        raise ContractError("nonce longer than report_data")
    return nonce.ljust(REPORT_DATA_SIZE, b"\0")


def with_clock(body: TpmQuoteBody, **changes) -> TpmQuoteBody:
    return replace(body, clock_info=replace(body.clock_info, **changes))
