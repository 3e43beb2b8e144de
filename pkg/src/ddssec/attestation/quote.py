"""Signed quotes over selected registers.

Binary layout::

    "QUOT" | selection[3] | nonce_len u16 | nonce | values (32 bytes each,
    ascending index) | sig_len u16 | signature

The signature covers ``selection || values || nonce``.
"""
from __future__ import annotations

import hmac
import struct
from dataclasses import dataclass
from typing import Mapping

from ..crypto.keys import SigningKeyPair
from ..errors import AttestationError
from .pcr import NUM_PCRS, PCR_SIZE, PcrBank

QUOTE_MAGIC = b"QUOT"
SELECTION_BYTES = 3


def selection_bitmap(selection) -> bytes:
    bits = 0
    for i in selection:
        if not 0 <= i < NUM_PCRS:
            raise AttestationError(f"PCR {i} cannot be selected")
        bits |= 1 << i
    return bits.to_bytes(SELECTION_BYTES, "little")


def selection_indices(bitmap: bytes) -> tuple[int, ...]:
    bits = int.from_bytes(bitmap, "little")
    return tuple(i for i in range(NUM_PCRS) if bits >> i & 1)


@dataclass(frozen=True)
class Quote:
    selection: bytes
    values: tuple[bytes, ...]
    nonce: bytes
    signature: bytes = b""

    @property
    def indices(self) -> tuple[int, ...]:
        return selection_indices(self.selection)

    def signed_bytes(self) -> bytes:
        return self.selection + b"".join(self.values) + self.nonce

    def encode(self) -> bytes:
        return (
            QUOTE_MAGIC + self.selection + struct.pack(">H", len(self.nonce)) + self.nonce
            + b"".join(self.values) + struct.pack(">H", len(self.signature)) + self.signature
        )

    @classmethod
    def decode(cls, raw: bytes) -> "Quote":
        try:
            if raw[:4] != QUOTE_MAGIC:
                raise AttestationError("not a quote")
            off = 4
            selection = raw[off:off + SELECTION_BYTES]
            off += SELECTION_BYTES
            (nlen,) = struct.unpack_from(">H", raw, off)
            off += 2
            nonce = raw[off:off + nlen]
            off += nlen
            count = len(selection_indices(selection))
            values = tuple(raw[off + i * PCR_SIZE: off + (i + 1) * PCR_SIZE] for i in range(count))
            off += count * PCR_SIZE
            (slen,) = struct.unpack_from(">H", raw, off)
            sig = raw[off + 2:off + 2 + slen]
            if len(sig) != slen or off + 2 + slen != len(raw) or len(nonce) != nlen:
                raise AttestationError("quote length fields disagree with its size")
        except struct.error as exc:
            raise AttestationError(f"truncated quote: {exc}") from None
        return cls(bytes(selection), values, bytes(nonce), bytes(sig))

    def hexdump(self) -> str:
        lines = [
            f"selection: {self.selection.hex()} ({','.join(map(str, self.indices))})",
            f"nonce: {self.nonce.hex()}",
        ]
        lines += [f"pcr{i:02d}: {v.hex()}" for i, v in zip(self.indices, self.values)]
        lines.append(f"signature: {self.signature.hex()}")
        return "\n".join(lines) + "\n"


def quote(bank: PcrBank, selection, nonce: bytes, key: SigningKeyPair, provider, rng=None) -> Quote:
    indices = sorted(set(selection))
    q = Quote(selection_bitmap(indices), tuple(bank[i] for i in indices), bytes(nonce))
    return Quote(q.selection, q.values, q.nonce, provider.sign(key, q.signed_bytes(), rng))


def verify_quote(q: Quote, expected: Mapping[int, bytes] | PcrBank, nonce: bytes, public: bytes, provider) -> bool:
    """True iff the signature verifies, the nonce is ours and every value matches."""
    if not provider.verify(public, q.signed_bytes(), q.signature):
        return False
    if not hmac.compare_digest(q.nonce, nonce):
        return False
    indices = q.indices
    if len(indices) != len(q.values):
        return False
    if isinstance(expected, PcrBank):
        expected = {i: expected[i] for i in indices}
    if set(expected) != set(indices):
        return False
    return all(hmac.compare_digest(v, expected[i]) for i, v in zip(indices, q.values))
