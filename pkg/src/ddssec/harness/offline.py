"""Post-processing of an exfiltrated transcript against a passive wire capture.

Works from files alone. Candidate keys are every symmetric key the
transcript shows going into AES-GCM or GMAC, plus the first 16 and 32 bytes
of every HMAC output (key derivation happens through HMAC, so derived keys
appear there even when no cipher call used them yet). Each protected layer
on the wire is opened by trial: a wrong key fails authentication, so trial
decryption cannot produce a false plaintext.
"""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

from ..auth.keymat import KeyMaterial
from ..codec.rtps import DATA, DataSubmessage, RtpsMessage, SEC_BODY, decode_message, decode_submessages
from ..codec.secure import (
    group_submessages,
    is_rtps_protected,
    peek_header,
    unprotect_message,
    unprotect_payload,
    unprotect_submessage,
)
from ..codec.tables import KIND_WRITER_NO_KEY
from ..crypto.keys import AeadKey, TransformationKind
from ..crypto.provider import CryptoProvider
from ..crypto.transcript import Primitive, load_transcript
from ..errors import DdsSecError, KeyNotFound
from .participant import PUB_WRITER, parse_endpoint_payload


@dataclass(frozen=True)
class RecoveredPayload:
    index: int  # datagram position in the capture
    topic: str | None
    writer: str | None
    sequence: int | None
    plaintext: bytes | None  # None marks a gap
    key_id: bytes | None = None

    @property
    def is_gap(self) -> bool:
        return self.plaintext is None


@dataclass(frozen=True)
class RecoveredKey:
    key_id: bytes
    key: bytes
    sequence: int  # transcript record the key was first seen in


class _KeyRing:
    def __init__(self, records):
        self.candidates: dict[bytes, int] = {}
        for rec in records:
            if rec.primitive in (Primitive.AEAD_ENCRYPT, Primitive.AEAD_DECRYPT, Primitive.GMAC):
                self._add(rec.inputs.get("key", b""), rec.sequence)
            elif rec.primitive is Primitive.MAC:
                out = rec.outputs.get("mac", b"")
                self._add(out[:16], rec.sequence)
                self._add(out[:32], rec.sequence)
        self.hits: dict[tuple[bytes, bytes], bytes] = {}  # (sender prefix, key id) -> key
        self.used: dict[tuple[bytes, bytes], RecoveredKey] = {}
        self._provider = CryptoProvider()

    def _add(self, key: bytes, seq: int) -> None:
        if len(key) in (16, 32) and key not in self.candidates:
            self.candidates[key] = seq

    def open(self, prefix: bytes, header, fn):
        """Run ``fn(material)`` with each plausible key until one authenticates."""
        kind = header.transformation_kind
        if kind is None or kind is TransformationKind.NONE:
            raise DdsSecError("unknown transformation kind on the wire")
        slot = (prefix, header.key_id)
        tried = []
        if slot in self.hits:
            tried.append(self.hits[slot])
        tried += [k for k in self.candidates if len(k) == kind.key_length and k not in tried]
        for key in tried:
            mat = KeyMaterial(kind, header.key_id, b"", None, AeadKey(key, kind))
            try:
                result = fn(mat)
            except DdsSecError:
                continue
            self.hits[slot] = key
            self.used.setdefault((key, header.key_id), RecoveredKey(header.key_id, key, self.candidates[key]))
            return result
        return None


def offline_decrypt(transcript_path: str | Path, capture: list[bytes]) -> list[RecoveredPayload]:
    """Recover user payloads from a transcript and capture; gaps are explicit."""
    payloads, _ = offline_decrypt_detailed(transcript_path, capture)
    return payloads


def offline_decrypt_detailed(
    transcript_path: str | Path, capture: list[bytes]
) -> tuple[list[RecoveredPayload], list[RecoveredKey]]:
    ring = _KeyRing(load_transcript(transcript_path))
    if not ring.candidates:
        raise KeyNotFound(f"{transcript_path} holds no symmetric key material")
    provider = CryptoProvider()
    topics: dict[tuple[bytes, bytes], str] = {}
    out: list[RecoveredPayload] = []
    for index, raw in enumerate(capture):
        try:
            msg = decode_message(raw)
        except DdsSecError:
            continue
        prefix = msg.guid_prefix
        if is_rtps_protected(msg):
            opened = ring.open(prefix, peek_header(msg), lambda m: unprotect_message(msg, m, provider))
            if opened is None:
                out.append(RecoveredPayload(index, None, None, None, None, peek_header(msg).key_id))
                continue
            msg = opened
        _walk(ring, provider, prefix, msg, index, topics, out)
    keys = sorted(ring.used.values(), key=lambda k: (k.sequence, k.key_id, k.key))
    return out, keys


def _walk(ring, provider, prefix, msg: RtpsMessage, index, topics, out) -> None:
    for item in group_submessages(msg.submessages):
        if isinstance(item, list):
            hdr = peek_header(item)
            sub = ring.open(prefix, hdr, lambda m, item=item: unprotect_submessage(item, m, provider))
            if sub is None:
                out.append(RecoveredPayload(index, None, None, None, None, hdr.key_id))
                continue
        else:
            sub = item
        if sub.id != DATA:
            continue
        data = DataSubmessage.from_submessage(sub)
        if data.writer_id == PUB_WRITER:
            try:
                guid, topic = parse_endpoint_payload(data.payload)
                topics[(guid.prefix, guid.entity.encode())] = topic
            except DdsSecError:
                pass
            continue
        if data.writer_id.kind != KIND_WRITER_NO_KEY:
            continue
        topic = topics.get((prefix, data.writer_id.encode()))
        writer = f"{prefix.hex()}:{data.writer_id}"
        payload, key_id = data.payload, None
        if _looks_protected(payload):
            key_id = peek_header(payload).key_id
            payload = ring.open(prefix, peek_header(payload), lambda m: unprotect_payload(data.payload, m, provider))
        out.append(RecoveredPayload(index, topic, writer, data.sequence, payload, key_id))


def _looks_protected(payload: bytes) -> bool:
    try:
        subs = decode_submessages(payload)
    except DdsSecError:
        return False
    return len(subs) == 1 and subs[0].id == SEC_BODY
