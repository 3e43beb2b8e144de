"""RTPS message grammar.

Wire layout: a 20-byte header (``RTPS``, version, vendor id, GUID prefix)
followed by submessages, each ``id:u8 flags:u8 length:u16`` plus body.
Multi-byte scalars are always little-endian here; the RTPS endianness flag
is carried through untouched but never consulted.
"""
from __future__ import annotations

import struct
from dataclasses import dataclass, field

from ..errors import BadMagic, CodecError, LengthMismatch, TruncatedSubmessage

MAGIC = b"RTPS"
VERSION = (2, 2)
VENDOR_ID = b"\xff\xfe"  # unassigned, marks testbed traffic
HEADER_LEN = 20
SUBMSG_HEADER_LEN = 4
MAX_BODY = 0xFFFF

FLAG_E = 0x01  # little-endian marker
FLAG_DATA_D = 0x04

# submessage ids
PAD = 0x01
ACKNACK = 0x06
HEARTBEAT = 0x07
INFO_TS = 0x09
INFO_DST = 0x0E
DATA = 0x15
SEC_BODY = 0x30  # SecurePayload / SecureBody
SEC_PREFIX = 0x31
SEC_POSTFIX = 0x32
SRTPS_PREFIX = 0x33
SRTPS_POSTFIX = 0x34
PID_SENTINEL = 0x0001

SECURE_IDS = frozenset({SEC_BODY, SEC_PREFIX, SEC_POSTFIX, SRTPS_PREFIX, SRTPS_POSTFIX})


@dataclass(frozen=True)
class EntityId:
    key: bytes  # 3 bytes
    kind: int

    def __post_init__(self):
        if len(self.key) != 3 or not 0 <= self.kind <= 0xFF:
            raise ValueError("entity id is 3 key bytes plus one kind byte")

    def encode(self) -> bytes:
        return self.key + bytes([self.kind])

    @classmethod
    def decode(cls, raw: bytes) -> "EntityId":
        if len(raw) != 4:
            raise CodecError("entity id is 4 bytes")
        return cls(bytes(raw[:3]), raw[3])

    def __str__(self) -> str:
        return "{{%s},%02x}" % (",".join(f"{b:02x}" for b in self.key), self.kind)


@dataclass(frozen=True)
class Guid:
    prefix: bytes  # 12 bytes
    entity: EntityId

    def __post_init__(self):
        if len(self.prefix) != 12:
            raise ValueError("GUID prefix is 12 bytes")

    def encode(self) -> bytes:
        return self.prefix + self.entity.encode()

    @classmethod
    def decode(cls, raw: bytes) -> "Guid":
        if len(raw) != 16:
            raise CodecError("GUID is 16 bytes")
        return cls(bytes(raw[:12]), EntityId.decode(raw[12:]))


@dataclass(frozen=True)
class Submessage:
    id: int
    flags: int
    body: bytes

    @property
    def length(self) -> int:
        return len(self.body)

    @property
    def is_secure(self) -> bool:
        return self.id in SECURE_IDS


@dataclass
class RtpsMessage:
    guid_prefix: bytes
    submessages: list[Submessage] = field(default_factory=list)
    version: tuple[int, int] = VERSION
    vendor_id: bytes = VENDOR_ID

    def header_bytes(self) -> bytes:
        if len(self.guid_prefix) != 12 or len(self.vendor_id) != 2:
            raise LengthMismatch("bad header field length")
        return MAGIC + bytes(self.version) + self.vendor_id + self.guid_prefix


def encode_submessage(sub: Submessage) -> bytes:
    if len(sub.body) > MAX_BODY:
        raise LengthMismatch(f"submessage body of {len(sub.body)} bytes exceeds u16 length")
    return struct.pack("<BBH", sub.id, sub.flags, len(sub.body)) + sub.body


def decode_submessages(buf: bytes, offset: int = 0) -> list[Submessage]:
    subs = []
    off = offset
    while off < len(buf):
        if len(buf) - off < SUBMSG_HEADER_LEN:
            raise TruncatedSubmessage(f"{len(buf) - off} trailing bytes cannot hold a submessage header")
        sid, flags, length = struct.unpack_from("<BBH", buf, off)
        off += SUBMSG_HEADER_LEN
        if off + length > len(buf):
            raise TruncatedSubmessage(
                f"submessage 0x{sid:02x} declares {length} bytes, {len(buf) - off} remain"
            )
        # unknown ids are kept opaque: skip-by-length
        subs.append(Submessage(sid, flags, bytes(buf[off:off + length])))
        off += length
    return subs


def encode_message(m: RtpsMessage) -> bytes:
    return m.header_bytes() + b"".join(encode_submessage(s) for s in m.submessages)


def decode_message(b: bytes) -> RtpsMessage:
    if len(b) < 4 or b[:4] != MAGIC:
        raise BadMagic(f"expected {MAGIC!r}, got {bytes(b[:4])!r}")
    if len(b) < HEADER_LEN:
        raise LengthMismatch(f"header needs {HEADER_LEN} bytes, got {len(b)}")
    return RtpsMessage(
        guid_prefix=bytes(b[8:20]),
        submessages=decode_submessages(b, HEADER_LEN),
        version=(b[4], b[5]),
        vendor_id=bytes(b[6:8]),
    )


# -- DATA ----------------------------------------------------------------------

_DATA_FIXED = struct.Struct("<HH4s4siI")


@dataclass(frozen=True)
class DataSubmessage:
    reader_id: EntityId
    writer_id: EntityId
    sequence: int
    payload: bytes

    def to_submessage(self) -> Submessage:
        high, low = self.sequence >> 32, self.sequence & 0xFFFFFFFF
        body = _DATA_FIXED.pack(
            0, 16, self.reader_id.encode(), self.writer_id.encode(), high, low
        ) + self.payload
        return Submessage(DATA, FLAG_E | FLAG_DATA_D, body)

    @classmethod
    def from_submessage(cls, sub: Submessage) -> "DataSubmessage":
        if sub.id != DATA:
            raise CodecError(f"not a DATA submessage (id 0x{sub.id:02x})")
        if len(sub.body) < _DATA_FIXED.size:
            raise TruncatedSubmessage("DATA body shorter than its fixed part")
        _, to_qos, rid, wid, high, low = _DATA_FIXED.unpack_from(sub.body)
        start = 4 + to_qos
        if start > len(sub.body):
            raise LengthMismatch("octetsToInlineQos points past the body")
        return cls(EntityId.decode(rid), EntityId.decode(wid), (high << 32) | low, sub.body[start:])


# -- parameter lists -------------------------------------------------------------

def cdr_string(s: str) -> bytes:
    raw = s.encode() + b"\x00"
    return struct.pack("<I", len(raw)) + raw


def read_cdr_string(buf: bytes, off: int = 0) -> tuple[str, int]:
    if off + 4 > len(buf):
        raise TruncatedSubmessage("CDR string length missing")
    (n,) = struct.unpack_from("<I", buf, off)
    raw = buf[off + 4:off + 4 + n]
    if len(raw) != n or n == 0:
        raise LengthMismatch("CDR string truncated")
    end = off + 4 + n
    return raw[:-1].decode(), end + (-end % 4)


def encode_parameter_list(params: list[tuple[int, bytes]]) -> bytes:
    out = []
    for pid, value in params:
        padded = value + b"\x00" * (-len(value) % 4)
        out.append(struct.pack("<HH", pid, len(padded)) + padded)
    out.append(struct.pack("<HH", PID_SENTINEL, 0))
    return b"".join(out)


def decode_parameter_list(buf: bytes) -> list[tuple[int, bytes]]:
    params = []
    off = 0
    while True:
        if off + 4 > len(buf):
            raise TruncatedSubmessage("parameter list lacks a sentinel")
        pid, length = struct.unpack_from("<HH", buf, off)
        off += 4
        if pid == PID_SENTINEL:
            return params
        if off + length > len(buf):
            raise TruncatedSubmessage(f"parameter 0x{pid:04x} truncated")
        params.append((pid, bytes(buf[off:off + length])))
        off += length
