"""Per-channel key material and its derivation from a handshake secret.

Derivation is labeled HMAC-SHA-256 over a context of (sender GUID, receiver
GUID, key id). It is a stand-in for the vendor key-convolution tables and is
intentionally not interoperable with real DDS stacks.
"""
from __future__ import annotations

import threading
from dataclasses import dataclass, field

from ..codec.rtps import Guid
from ..crypto.keys import AeadKey, SharedSecret, TransformationKind
from ..errors import NonceExhausted

MAX_COUNTER = 1 << 64
MAX_SESSION = 1 << 32


@dataclass
class KeyMaterial:
    kind: TransformationKind
    key_id: bytes
    master_salt: bytes = field(repr=False)
    sender_key: AeadKey | None = field(repr=False)
    receiver_key: AeadKey | None = field(repr=False)
    session_id: int = 0
    counter: int = 0
    _lock: threading.Lock = field(default_factory=threading.Lock, repr=False, compare=False)

    def __post_init__(self):
        if len(self.key_id) != 4:
            raise ValueError("key id is 4 bytes")

    def next_nonce(self) -> tuple[bytes, bytes]:
        """Reserve the next (sessionId, initVectorSuffix) pair for sending."""
        with self._lock:
            if self.session_id >= MAX_SESSION:
                raise NonceExhausted(f"key {self.key_id.hex()} has no nonces left")
            sid, ctr = self.session_id, self.counter
            self.counter += 1
            if self.counter == MAX_COUNTER:
                self.counter = 0
                self.session_id += 1
        return sid.to_bytes(4, "big"), ctr.to_bytes(8, "big")

    def mirrored(self) -> "KeyMaterial":
        """The peer's view: sender and receiver keys swapped, fresh counters."""
        return KeyMaterial(
            self.kind, self.key_id, self.master_salt, self.receiver_key, self.sender_key
        )


def derive_key_material(
    secret: SharedSecret,
    sender: Guid,
    receiver: Guid,
    key_id: bytes,
    kind: TransformationKind,
    provider,
) -> KeyMaterial:
    ctx = sender.encode() + receiver.encode() + key_id
    salt = provider.mac(secret.data, b"salt" + ctx)
    if kind is TransformationKind.NONE:
        return KeyMaterial(kind, key_id, salt, None, None)
    n = kind.key_length
    send = provider.mac(secret.data, b"sender" + ctx)[:n]
    recv = provider.mac(secret.data, b"receiver" + ctx)[:n]
    return KeyMaterial(kind, key_id, salt, AeadKey(send, kind), AeadKey(recv, kind))
