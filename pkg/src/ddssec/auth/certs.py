"""Minimal identity certificates.

Not X.509: a certificate here is the canonical encoding of (subject, issuer,
serial, validity window, algorithm, public key, issuer key id) plus the
issuing CA's signature over it, wrapped in a PEM block. That is the whole
profile needed to reason about who can vouch for whom.
"""
from __future__ import annotations

import base64
import binascii
import struct
import textwrap
import time
from dataclasses import dataclass, replace

from ..crypto.keys import SigningAlgorithm, SigningKeyPair, algorithm_of_public
from ..errors import BadSignature, Expired, MalformedKey, MalformedPem, UnknownIssuer

CERT_LABEL = "DDSSEC CERTIFICATE"
SIGNATURE_LABEL = "DDSSEC SIGNATURE"

# fixed default window keeps seeded fixture trees byte-reproducible
DEFAULT_NOT_BEFORE = 1577836800  # 2020-01-01
DEFAULT_NOT_AFTER = 4102444800  # 2100-01-01


def canonical(fields: list[tuple[str, bytes]]) -> bytes:
    """Fixed-order, length-prefixed concatenation used for everything signed."""
    out = []
    for name, value in fields:
        nb = name.encode()
        out.append(struct.pack(">H", len(nb)) + nb + struct.pack(">I", len(value)) + value)
    return b"".join(out)


def parse_canonical(buf: bytes) -> list[tuple[str, bytes]]:
    fields = []
    off = 0
    try:
        while off < len(buf):
            (nl,) = struct.unpack_from(">H", buf, off)
            name = buf[off + 2:off + 2 + nl].decode()
            off += 2 + nl
            (vl,) = struct.unpack_from(">I", buf, off)
            value = buf[off + 4:off + 4 + vl]
            if len(value) != vl:
                raise ValueError("field runs past end of buffer")
            fields.append((name, bytes(value)))
            off += 4 + vl
    except (struct.error, UnicodeDecodeError) as exc:
        raise ValueError(f"bad canonical encoding: {exc}") from exc
    return fields


def pem_encode(label: str, der: bytes) -> bytes:
    body = "\n".join(textwrap.wrap(base64.b64encode(der).decode(), 64))
    return f"-----BEGIN {label}-----\n{body}\n-----END {label}-----\n".encode()


def pem_decode(data: bytes, label: str) -> bytes:
    try:
        text = data.decode("ascii")
    except UnicodeDecodeError:
        raise MalformedPem("PEM data is not ASCII") from None
    begin, end = f"-----BEGIN {label}-----", f"-----END {label}-----"
    start = text.find(begin)
    stop = text.find(end, start + 1)
    if start < 0 or stop < 0:
        raise MalformedPem(f"no {label} block")
    try:
        return base64.b64decode("".join(text[start + len(begin):stop].split()), validate=True)
    except (binascii.Error, ValueError) as exc:
        raise MalformedPem(f"bad base64 in {label}: {exc}") from exc


@dataclass(frozen=True)
class Certificate:
    subject: str
    issuer: str
    serial: int
    not_before: int
    not_after: int
    algorithm: SigningAlgorithm
    public_key: bytes
    issuer_key_id: bytes
    signature: bytes = b""

    def tbs(self) -> bytes:
        return canonical([
            ("subject", self.subject.encode()),
            ("issuer", self.issuer.encode()),
            ("serial", self.serial.to_bytes(8, "big")),
            ("not_before", self.not_before.to_bytes(8, "big", signed=True)),
            ("not_after", self.not_after.to_bytes(8, "big", signed=True)),
            ("algorithm", self.algorithm.value.encode()),
            ("public_key", self.public_key),
            ("issuer_key_id", self.issuer_key_id),
        ])

    def encode(self) -> bytes:
        return canonical([("tbs", self.tbs()), ("signature", self.signature)])

    @classmethod
    def decode(cls, der: bytes) -> "Certificate":
        try:
            outer = dict(parse_canonical(der))
            f = dict(parse_canonical(outer["tbs"]))
            return cls(
                subject=f["subject"].decode(),
                issuer=f["issuer"].decode(),
                serial=int.from_bytes(f["serial"], "big"),
                not_before=int.from_bytes(f["not_before"], "big", signed=True),
                not_after=int.from_bytes(f["not_after"], "big", signed=True),
                algorithm=SigningAlgorithm(f["algorithm"].decode()),
                public_key=f["public_key"],
                issuer_key_id=f["issuer_key_id"],
                signature=outer["signature"],
            )
        except (KeyError, ValueError, UnicodeDecodeError) as exc:
            raise MalformedPem(f"certificate structure invalid: {exc}") from exc

    def to_pem(self) -> bytes:
        return pem_encode(CERT_LABEL, self.encode())

    @classmethod
    def from_pem(cls, data: bytes) -> "Certificate":
        return cls.decode(pem_decode(data, CERT_LABEL))

    @property
    def key_id(self) -> bytes:
        return SigningKeyPair(self.algorithm, None, self.public_key).key_id


IdentityCredential = Certificate


def issue_certificate(
    subject: str,
    subject_public: bytes,
    ca_key: SigningKeyPair,
    issuer: str,
    provider,
    serial: int = 1,
    not_before: int = DEFAULT_NOT_BEFORE,
    not_after: int = DEFAULT_NOT_AFTER,
    rng=None,
) -> Certificate:
    try:
        algorithm = algorithm_of_public(subject_public)
    except MalformedKey as exc:
        raise MalformedPem(str(exc)) from exc
    unsigned = Certificate(
        subject, issuer, serial, not_before, not_after, algorithm, subject_public, ca_key.key_id
    )
    return replace(unsigned, signature=provider.sign(ca_key, unsigned.tbs(), rng))


def self_signed_ca(name: str, ca_key: SigningKeyPair, provider, rng=None, **kw) -> Certificate:
    return issue_certificate(name, ca_key.public, ca_key, name, provider, rng=rng, **kw)


def validate_certificate(cred: Certificate, ca: Certificate, provider, now: float | None = None) -> str:
    """Return the subject if ``ca`` issued ``cred`` and it is currently valid."""
    if cred.issuer != ca.subject or cred.issuer_key_id != ca.key_id:
        raise UnknownIssuer(f"{cred.subject!r} was issued by {cred.issuer!r}, not {ca.subject!r}")
    if not provider.verify(ca.public_key, cred.tbs(), cred.signature):
        raise BadSignature(f"certificate for {cred.subject!r} fails CA signature check")
    now = time.time() if now is None else now
    if not cred.not_before <= now <= cred.not_after:
        raise Expired(f"certificate for {cred.subject!r} outside its validity window")
    return cred.subject
