"""IMA-style measurement entries, templates and the runtime measurement list.

Template data uses the kernel's field encoding: every field is a
little-endian u32 length followed by its bytes. ``d-ng`` is
``"<algo>:\\0" + digest``, ``n-ng`` is the NUL-terminated name, and ``sig``
is the raw ``security.ima`` value. The template hash is SHA-256 over the
template data and is what gets extended into PCR 10.
"""
from __future__ import annotations

import hashlib
import struct
from dataclasses import dataclass, field, replace

from .pcr import IMA_PCR, PcrBank, pcr_extend

IMA_NG = "ima-ng"
IMA_SIG = "ima-sig"
TEMPLATES = (IMA_NG, IMA_SIG)
BOOT_AGGREGATE = "boot_aggregate"

# security.ima header: EVM_IMA_XATTR_DIGSIG, signature v2, HASH_ALGO_SHA256
SIG_TYPE = 0x03
SIG_VERSION = 0x02
SIG_HASH_SHA256 = 0x04


@dataclass(frozen=True)
class MeasurementEntry:
    pcr: int
    template_hash: bytes
    template_name: str
    hash_algo: str
    file_hash: bytes
    filename_hint: str
    # hex text as it appears in the list; kept as text so truncated dumps parse
    file_signature: str | None = None

    def __post_init__(self):
        if self.template_name not in TEMPLATES:
            raise ValueError(f"unknown template {self.template_name!r}")
        if (self.template_name == IMA_SIG) != (self.file_signature is not None):
            raise ValueError("ima-sig entries carry a signature and ima-ng entries do not")

    @property
    def signature_bytes(self) -> bytes:
        text = self.file_signature or ""
        return bytes.fromhex(text[: len(text) // 2 * 2])

    @property
    def file_data_hash(self) -> str:
        return f"{self.hash_algo}:{self.file_hash.hex()}"


def _field(data: bytes) -> bytes:
    return struct.pack("<I", len(data)) + data


def template_data(template_name: str, hash_algo: str, file_hash: bytes, hint: str,
                  signature: bytes | None = None) -> bytes:
    out = _field(hash_algo.encode() + b":\x00" + file_hash) + _field(hint.encode() + b"\x00")
    if template_name == IMA_SIG:
        out += _field(signature or b"")
    return out


def template_hash_of(entry: MeasurementEntry) -> bytes:
    sig = entry.signature_bytes if entry.template_name == IMA_SIG else None
    data = template_data(entry.template_name, entry.hash_algo, entry.file_hash, entry.filename_hint, sig)
    return hashlib.sha256(data).digest()


def make_entry(file_hash: bytes, hint: str, signature: bytes | None = None, pcr: int = IMA_PCR) -> MeasurementEntry:
    template = IMA_SIG if signature is not None else IMA_NG
    data = template_data(template, "sha256", file_hash, hint, signature)
    return MeasurementEntry(
        pcr, hashlib.sha256(data).digest(), template, "sha256", file_hash, hint,
        None if signature is None else signature.hex(),
    )


def format_line(entry: MeasurementEntry) -> str:
    line = f"{entry.pcr} {entry.template_hash.hex()} {entry.template_name} {entry.file_data_hash} {entry.filename_hint}"
    if entry.file_signature is not None:
        line += f" {entry.file_signature}"
    return line


def parse_line(line: str) -> MeasurementEntry:
    parts = line.split()
    if len(parts) < 5:
        raise ValueError(f"measurement line has {len(parts)} fields: {line!r}")
    pcr, thash, template, fhash = parts[:4]
    rest = parts[4:]
    sig = None
    if template == IMA_SIG:
        if len(rest) < 2:
            raise ValueError("ima-sig line lacks a file signature")
        sig = rest[-1]
        rest = rest[:-1]
    algo, _, digest = fhash.partition(":")
    return MeasurementEntry(int(pcr), bytes.fromhex(thash), template, algo, bytes.fromhex(digest), " ".join(rest), sig)


# -- security.ima signatures ---------------------------------------------------------

def ima_keyid(public: bytes) -> bytes:
    return hashlib.sha256(public).digest()[-4:]


def build_ima_signature(keyid: bytes, signature: bytes) -> bytes:
    return bytes([SIG_TYPE, SIG_VERSION, SIG_HASH_SHA256]) + keyid + struct.pack(">H", len(signature)) + signature


@dataclass(frozen=True)
class ImaSignature:
    type: int
    version: int
    hash_algo: int
    keyid: bytes
    size: int
    signature: bytes

    @property
    def complete(self) -> bool:
        return len(self.signature) == self.size


def parse_ima_signature(raw: bytes | str) -> ImaSignature:
    if isinstance(raw, str):
        raw = bytes.fromhex(raw[: len(raw) // 2 * 2])
    if len(raw) < 9:
        raise ValueError("security.ima value shorter than its header")
    (size,) = struct.unpack_from(">H", raw, 7)
    return ImaSignature(raw[0], raw[1], raw[2], bytes(raw[3:7]), size, bytes(raw[9:]))


def sign_digest(digest: bytes, key, provider) -> bytes:
    return build_ima_signature(ima_keyid(key.public), provider.sign(key, digest))


# -- the list --------------------------------------------------------------------------

@dataclass
class MeasurementLog:
    entries: list[MeasurementEntry] = field(default_factory=list)

    def append(self, entry: MeasurementEntry) -> None:
        self.entries.append(entry)

    def replay(self, start: PcrBank | None = None) -> bytes:
        """Fold every PCR-10 template hash into a zeroed register."""
        bank = start or PcrBank()
        for e in self.entries:
            if e.pcr == IMA_PCR:
                bank = pcr_extend(bank, IMA_PCR, e.template_hash)
        return bank[IMA_PCR]

    def to_text(self) -> str:
        return "".join(format_line(e) + "\n" for e in self.entries)

    @classmethod
    def from_text(cls, text: str) -> "MeasurementLog":
        return cls([parse_line(line) for line in text.splitlines() if line.strip()])

    def copy(self) -> "MeasurementLog":
        return MeasurementLog(list(self.entries))

    def edited(self, index: int, **changes) -> "MeasurementLog":
        """A copy with one entry's fields replaced; used to model post-hoc tampering."""
        entries = list(self.entries)
        entries[index] = replace(entries[index], **changes)
        return MeasurementLog(entries)
