"""Transcripting provider wrapper and transcript formats.

``transcript_wrap`` returns a provider that behaves byte-for-byte like the one
it wraps while copying every call's inputs and outputs to a sink: session
keys, shared secrets, plaintexts, signatures. It models a crypto library with
dump routines compiled into its primitives.

Two export formats exist. The binary form is a stream of frames, each a
4-byte big-endian length followed by the record body. The text form is a hex
dump with one ``title: hex`` field per line and a ``# seq=...`` header per
record.
"""
from __future__ import annotations

import enum
import io
import logging
import socket
import struct
import threading
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Iterable, Iterator

from .keys import AeadKey, EphemeralKeyPair, SigningKeyPair, TransformationKind

log = logging.getLogger(__name__)


class Primitive(enum.IntEnum):
    SIGN = 1
    VERIFY = 2
    KEY_AGREE = 3
    AEAD_ENCRYPT = 4
    AEAD_DECRYPT = 5
    GMAC = 6
    DIGEST = 7
    MAC = 8


@dataclass(frozen=True)
class CryptoCallRecord:
    sequence: int
    primitive: Primitive
    inputs: dict[str, bytes]
    outputs: dict[str, bytes]
    wall_time: float = 0.0

    def field(self, name: str) -> bytes | None:
        """Look up ``in.<x>`` / ``out.<x>`` or a bare name in either map."""
        if name.startswith("in."):
            return self.inputs.get(name[3:])
        if name.startswith("out."):
            return self.outputs.get(name[4:])
        return self.inputs.get(name, self.outputs.get(name))


Sink = Callable[[CryptoCallRecord], None]


# -- wire formats --------------------------------------------------------------

def _pack_fields(fields: dict[str, bytes]) -> bytes:
    out = [struct.pack(">H", len(fields))]
    for label, value in fields.items():
        lb = label.encode()
        out.append(struct.pack(">H", len(lb)) + lb + struct.pack(">I", len(value)) + value)
    return b"".join(out)


def _unpack_fields(buf: bytes, off: int) -> tuple[dict[str, bytes], int]:
    (count,) = struct.unpack_from(">H", buf, off)
    off += 2
    fields = {}
    for _ in range(count):
        (ll,) = struct.unpack_from(">H", buf, off)
        off += 2
        label = buf[off:off + ll].decode()
        off += ll
        (vl,) = struct.unpack_from(">I", buf, off)
        off += 4
        fields[label] = bytes(buf[off:off + vl])
        off += vl
    return fields, off


def encode_record(rec: CryptoCallRecord) -> bytes:
    body = (
        struct.pack(">QBd", rec.sequence, int(rec.primitive), rec.wall_time)
        + _pack_fields(rec.inputs)
        + _pack_fields(rec.outputs)
    )
    return struct.pack(">I", len(body)) + body


def decode_records(data: bytes) -> list[CryptoCallRecord]:
    records = []
    off = 0
    while off < len(data):
        if off + 4 > len(data):
            log.warning("transcript ends in a partial frame header; ignoring %d bytes", len(data) - off)
            break
        (n,) = struct.unpack_from(">I", data, off)
        body = data[off + 4:off + 4 + n]
        if len(body) < n:
            log.warning("transcript ends in a partial frame; ignoring it")
            break
        seq, prim, wall = struct.unpack_from(">QBd", body, 0)
        inputs, pos = _unpack_fields(body, 17)
        outputs, _ = _unpack_fields(body, pos)
        records.append(CryptoCallRecord(seq, Primitive(prim), inputs, outputs, wall))
        off += 4 + n
    return records


def hexdump_record(rec: CryptoCallRecord) -> str:
    lines = [f"# seq={rec.sequence} primitive={rec.primitive.name} time={rec.wall_time:.6f}"]
    for prefix, fields in (("in", rec.inputs), ("out", rec.outputs)):
        for label, value in fields.items():
            lines.append(f"{prefix}.{label}: {value.hex()}")
    return "\n".join(lines) + "\n\n"


def parse_hexdump(text: str) -> list[CryptoCallRecord]:
    records = []
    cur = None
    for raw in text.splitlines():
        line = raw.strip()
        if not line:
            continue
        if line.startswith("# seq="):
            if cur is not None:
                records.append(CryptoCallRecord(**cur))
            parts = dict(p.split("=", 1) for p in line[2:].split())
            cur = dict(
                sequence=int(parts["seq"]),
                primitive=Primitive[parts["primitive"]],
                inputs={},
                outputs={},
                wall_time=float(parts.get("time", 0.0)),
            )
            continue
        if cur is None:
            continue
        title, _, hexval = line.partition(":")
        where, _, label = title.partition(".")
        target = cur["inputs"] if where == "in" else cur["outputs"]
        target[label] = bytes.fromhex(hexval.strip())
    if cur is not None:
        records.append(CryptoCallRecord(**cur))
    return records


def load_transcript(path: str | Path) -> list[CryptoCallRecord]:
    """Read either export format; a missing file is an empty transcript."""
    path = Path(path)
    if not path.exists():
        return []
    data = path.read_bytes()
    if not data:
        return []
    if data.startswith(b"#"):
        return parse_hexdump(data.decode())
    return decode_records(data)


# -- sinks ---------------------------------------------------------------------

class ListSink:
    def __init__(self):
        self.records: list[CryptoCallRecord] = []

    def __call__(self, rec: CryptoCallRecord) -> None:
        self.records.append(rec)

    def __iter__(self) -> Iterator[CryptoCallRecord]:
        return iter(self.records)

    def __len__(self) -> int:
        return len(self.records)


class HexDumpFileSink:
    """Appends the text hex dump to a local file."""

    def __init__(self, path: str | Path):
        self.path = Path(path)

    def __call__(self, rec: CryptoCallRecord) -> None:
        with open(self.path, "a") as fh:
            fh.write(hexdump_record(rec))


class BinaryFileSink:
    def __init__(self, path: str | Path):
        self.path = Path(path)

    def __call__(self, rec: CryptoCallRecord) -> None:
        with open(self.path, "ab") as fh:
            fh.write(encode_record(rec))


class StreamSink:
    """Ships length-prefixed binary frames to a remote collector."""

    def __init__(self, host: str, port: int, timeout: float = 5.0):
        self.address = (host, port)
        self.timeout = timeout
        self._sock: socket.socket | None = None

    def __call__(self, rec: CryptoCallRecord) -> None:
        if self._sock is None:
            self._sock = socket.create_connection(self.address, timeout=self.timeout)
        self._sock.sendall(encode_record(rec))

    def close(self) -> None:
        if self._sock is not None:
            self._sock.close()
            self._sock = None


class TeeSink:
    def __init__(self, *sinks: Sink):
        self.sinks = sinks

    def __call__(self, rec: CryptoCallRecord) -> None:
        for s in self.sinks:
            s(rec)


def read_frames(stream: io.RawIOBase | socket.socket) -> Iterator[CryptoCallRecord]:
    """Collector side of ``StreamSink``: yields records until EOF."""
    recv = stream.recv if isinstance(stream, socket.socket) else stream.read

    def exact(n: int) -> bytes | None:
        buf = b""
        while len(buf) < n:
            chunk = recv(n - len(buf))
            if not chunk:
                return None
            buf += chunk
        return buf

    while True:
        hdr = exact(4)
        if hdr is None:
            return
        (n,) = struct.unpack(">I", hdr)
        body = exact(n)
        if body is None:
            return
        yield from decode_records(hdr + body)


# -- the wrapper ---------------------------------------------------------------

def _kind(k: TransformationKind) -> bytes:
    return k.encode()


class TranscriptProvider:
    """Observationally identical proxy around another provider."""

    def __init__(self, inner, sink: Sink, clock: Callable[[], float] = time.time):
        self.inner = inner
        self.sink = sink
        self.clock = clock
        self.sink_errors: list[str] = []
        self._seq = 0
        self._lock = threading.Lock()

    @property
    def name(self) -> str:
        return f"transcript({self.inner.name})"

    def _emit(self, primitive: Primitive, inputs: dict[str, bytes], outputs: dict[str, bytes]):
        with self._lock:
            self._seq += 1
            rec = CryptoCallRecord(self._seq, primitive, inputs, outputs, self.clock())
            try:
                self.sink(rec)
            except Exception as exc:  # noqa: BLE001 - the spy must stay invisible
                self.sink_errors.append(f"{type(exc).__name__}: {exc}")

    def _call(self, primitive, inputs, fn, pack_out):
        try:
            result = fn()
        except Exception as exc:
            self._emit(primitive, inputs, {"error": type(exc).__name__.encode()})
            raise
        self._emit(primitive, inputs, pack_out(result))
        return result

    def generate_signing_key(self, *a, **kw):
        return self.inner.generate_signing_key(*a, **kw)

    def generate_ephemeral(self, *a, **kw):
        return self.inner.generate_ephemeral(*a, **kw)

    def sign(self, key: SigningKeyPair, message: bytes, rng=None) -> bytes:
        return self._call(
            Primitive.SIGN,
            {"private_key": key.private or b"", "message": message},
            lambda: self.inner.sign(key, message, rng),
            lambda sig: {"signature": sig},
        )

    def verify(self, public: bytes, message: bytes, signature: bytes) -> bool:
        return self._call(
            Primitive.VERIFY,
            {"public_key": public, "message": message, "signature": signature},
            lambda: self.inner.verify(public, message, signature),
            lambda ok: {"valid": b"\x01" if ok else b"\x00"},
        )

    def key_agree(self, mine: EphemeralKeyPair, peer_public: bytes, origin=("", "")):
        scalar = b"" if mine.private is None else mine.private.to_bytes(
            (mine.private.bit_length() + 7) // 8 or 1, "big"
        )
        return self._call(
            Primitive.KEY_AGREE,
            {
                "private_scalar": scalar,
                "local_public": mine.public,
                "peer_public": peer_public,
                "origin": "|".join(origin).encode(),
            },
            lambda: self.inner.key_agree(mine, peer_public, origin),
            lambda ss: {"shared_secret": ss.data},
        )

    def aead_encrypt(self, key: AeadKey, nonce: bytes, aad: bytes, plaintext: bytes):
        return self._call(
            Primitive.AEAD_ENCRYPT,
            {"key": key.data, "kind": _kind(key.kind), "nonce": nonce, "aad": aad, "plaintext": plaintext},
            lambda: self.inner.aead_encrypt(key, nonce, aad, plaintext),
            lambda r: {"ciphertext": r[0], "tag": r[1]},
        )

    def aead_decrypt(self, key: AeadKey, nonce: bytes, aad: bytes, ciphertext: bytes, tag: bytes):
        return self._call(
            Primitive.AEAD_DECRYPT,
            {"key": key.data, "kind": _kind(key.kind), "nonce": nonce, "aad": aad,
             "ciphertext": ciphertext, "tag": tag},
            lambda: self.inner.aead_decrypt(key, nonce, aad, ciphertext, tag),
            lambda p: {"plaintext": p},
        )

    def gmac(self, key: AeadKey, nonce: bytes, aad: bytes) -> bytes:
        return self._call(
            Primitive.GMAC,
            {"key": key.data, "kind": _kind(key.kind), "nonce": nonce, "aad": aad},
            lambda: self.inner.gmac(key, nonce, aad),
            lambda t: {"tag": t},
        )

    def digest(self, message: bytes) -> bytes:
        return self._call(
            Primitive.DIGEST, {"message": message},
            lambda: self.inner.digest(message), lambda d: {"digest": d},
        )

    def mac(self, key: bytes, message: bytes) -> bytes:
        return self._call(
            Primitive.MAC, {"key": key, "message": message},
            lambda: self.inner.mac(key, message), lambda m: {"mac": m},
        )


def transcript_wrap(inner, sink: Sink, clock: Callable[[], float] = time.time) -> TranscriptProvider:
    return TranscriptProvider(inner, sink, clock)


def records_of(records: Iterable[CryptoCallRecord], primitive: Primitive) -> list[CryptoCallRecord]:
    return [r for r in records if r.primitive is primitive]
