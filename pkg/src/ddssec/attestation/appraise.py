"""Golden values, appraisal verdicts and protected file attributes."""
from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

from ..crypto.keys import SigningKeyPair
from ..crypto.provider import CryptoProvider
from .ima import BOOT_AGGREGATE, IMA_SIG, MeasurementEntry, MeasurementLog, parse_ima_signature, template_hash_of
from .pcr import IMA_PCR, PcrBank, boot_aggregate

TRUSTED = "trusted"
UNTRUSTED = "untrusted"


@dataclass
class GoldenDb:
    files: dict[str, str] = field(default_factory=dict)  # hint -> "sha256:<hex>"
    keyring: dict[str, str] = field(default_factory=dict)  # ima keyid hex -> SPKI DER hex

    def enroll(self, entry: MeasurementEntry) -> None:
        if entry.filename_hint != BOOT_AGGREGATE:
            self.files[entry.filename_hint] = entry.file_data_hash

    def trust_key(self, keyid: bytes, public: bytes) -> None:
        self.keyring[keyid.hex()] = public.hex()

    def to_json(self) -> str:
        return json.dumps({"files": self.files, "keyring": self.keyring}, indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "GoldenDb":
        doc = json.loads(text)
        return cls(dict(doc.get("files", {})), dict(doc.get("keyring", {})))

    def save(self, path: str | Path) -> None:
        Path(path).write_text(self.to_json())

    @classmethod
    def load(cls, path: str | Path) -> "GoldenDb":
        p = Path(path)
        return cls.from_json(p.read_text()) if p.exists() else cls()


@dataclass
class Appraisal:
    verdict: str
    files: dict[str, dict]
    reasons: list[str]

    @property
    def trusted(self) -> bool:
        return self.verdict == TRUSTED

    @property
    def offending(self) -> list[str]:
        return sorted(h for h, v in self.files.items() if v["verdict"] == UNTRUSTED)

    def to_dict(self) -> dict:
        return {"verdict": self.verdict, "files": self.files, "reasons": self.reasons}


def _signature_ok(entry: MeasurementEntry, golden: GoldenDb, provider) -> str | None:
    try:
        sig = parse_ima_signature(entry.file_signature or "")
    except ValueError as exc:
        return f"unreadable file signature ({exc})"
    if not sig.complete:
        return "truncated file signature"
    public = golden.keyring.get(sig.keyid.hex())
    if public is None:
        return f"file signed by unknown key {sig.keyid.hex()}"
    if not provider.verify(bytes.fromhex(public), entry.file_hash, sig.signature):
        return "file signature does not match contents"
    return None


def appraise(log: MeasurementLog, bank: PcrBank, golden: GoldenDb, provider=None) -> Appraisal:
    provider = provider or CryptoProvider()
    files: dict[str, dict] = {}
    reasons: list[str] = []

    def flag(hint: str, why: str) -> None:
        rec = files.setdefault(hint, {"verdict": TRUSTED, "reasons": []})
        rec["verdict"] = UNTRUSTED
        rec["reasons"].append(why)
        reasons.append(f"{hint}: {why}")

    for entry in log.entries:
        hint = entry.filename_hint
        files.setdefault(hint, {"verdict": TRUSTED, "reasons": []})
        if template_hash_of(entry) != entry.template_hash:
            flag(hint, "template hash does not match entry fields")
        if hint == BOOT_AGGREGATE:
            if entry.file_hash != boot_aggregate(bank):
                flag(hint, "boot aggregate does not match PCR 0-9")
            continue
        want = golden.files.get(hint)
        if want is None:
            flag(hint, "no golden value for this file")
        elif want != entry.file_data_hash:
            flag(hint, "file hash differs from golden value")
        if entry.template_name == IMA_SIG:
            why = _signature_ok(entry, golden, provider)
            if why:
                flag(hint, why)
    if log.replay() != bank[IMA_PCR]:
        reasons.append("measurement list replay does not reproduce PCR 10")
    for rec in files.values():
        rec["reasons"] = sorted(set(rec["reasons"]))
    verdict = TRUSTED if not reasons else UNTRUSTED
    return Appraisal(verdict, files, reasons)


# -- protected attributes ----------------------------------------------------------------

def _attribute_tbs(path: Path, root: Path | None) -> bytes:
    name = path.resolve().relative_to(root.resolve()).as_posix() if root else path.name
    return name.encode() + b"\x00" + hashlib.sha256(path.read_bytes()).digest()


def protect_attributes(path: str | Path, signer: SigningKeyPair, provider=None, root: str | Path | None = None) -> Path:
    """Write ``<path>.sattr``: a signature binding the file's name to its contents."""
    provider = provider or CryptoProvider()
    path = Path(path)
    sidecar = path.with_name(path.name + ".sattr")
    sidecar.write_bytes(provider.sign(signer, _attribute_tbs(path, Path(root) if root else None)))
    return sidecar


def check_attributes(path: str | Path, sidecar: str | Path, public: bytes, provider=None,
                     root: str | Path | None = None) -> bool:
    provider = provider or CryptoProvider()
    path = Path(path)
    sig = Path(sidecar).read_bytes()
    return provider.verify(public, _attribute_tbs(path, Path(root) if root else None), sig)
