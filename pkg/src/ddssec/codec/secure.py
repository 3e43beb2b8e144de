"""Secure transforms at message, submessage and payload granularity.

Every protected element starts with a 20-byte SecureDataHeader::

    kind[4] | keyId[4] | sessionId[4] | initVectorSuffix[8]

and the AES nonce is ``sessionId || initVectorSuffix``. GCM kinds encrypt
the body; GMAC kinds leave it readable and only append a tag. The header is
always authenticated as associated data.

Layouts produced:

* RTPS level:     ``SRTPS_PREFIX(hdr)  [SEC_BODY | original subs...]  SRTPS_POSTFIX(tag)``
* METADATA level: ``SEC_PREFIX(hdr)    [SEC_BODY | original sub]       SEC_POSTFIX(tag)``
* DATA level:     ``SEC_BODY(hdr + body + tag)`` standing in for the serialized payload

Bodies are ``u32 length`` followed by ciphertext (GCM) or plaintext (GMAC).
"""
from __future__ import annotations

import enum
import hmac
import struct
from dataclasses import dataclass
from typing import Union

from ..crypto.keys import TransformationKind
from ..errors import (
    AuthenticationFailed,
    CodecError,
    MissingPostfix,
    UnknownKeyId,
    WrongKindForLevel,
)
from .rtps import (
    FLAG_E,
    SEC_BODY,
    SEC_POSTFIX,
    SEC_PREFIX,
    SRTPS_POSTFIX,
    SRTPS_PREFIX,
    RtpsMessage,
    Submessage,
    decode_message,
    decode_submessages,
    encode_message,
    encode_submessage,
)

SDH_LEN = 20
TAG_LEN = 16


class ProtectionLevel(enum.Enum):
    RTPS = "rtps"
    METADATA = "metadata"
    DATA = "data"


@dataclass(frozen=True)
class SecureDataHeader:
    kind: bytes  # raw 4 bytes; may not name a valid kind on a corrupted wire
    key_id: bytes
    session_id: bytes
    iv_suffix: bytes

    def encode(self) -> bytes:
        return self.kind + self.key_id + self.session_id + self.iv_suffix

    @classmethod
    def decode(cls, raw: bytes) -> "SecureDataHeader":
        if len(raw) != SDH_LEN:
            raise AuthenticationFailed(f"SecureDataHeader must be {SDH_LEN} bytes, got {len(raw)}")
        return cls(raw[0:4], raw[4:8], raw[8:12], raw[12:20])

    @property
    def nonce(self) -> bytes:
        return self.session_id + self.iv_suffix

    @property
    def transformation_kind(self) -> TransformationKind | None:
        try:
            return TransformationKind.decode(self.kind)
        except ValueError:
            return None


def _new_header(material) -> SecureDataHeader:
    if material.kind is TransformationKind.NONE:
        raise WrongKindForLevel("NONE material cannot protect anything")
    sid, suffix = material.next_nonce()
    return SecureDataHeader(material.kind.encode(), material.key_id, sid, suffix)


def _body(data: bytes) -> bytes:
    return struct.pack("<I", len(data)) + data


def _read_body(raw: bytes) -> bytes:
    if len(raw) < 4:
        raise AuthenticationFailed("secure body too short")
    (n,) = struct.unpack_from("<I", raw)
    if n != len(raw) - 4:
        raise AuthenticationFailed("secure body length disagrees with its container")
    return raw[4:]


def _seal(material, provider, header: SecureDataHeader, aad: bytes, content: bytes):
    """Returns (body bytes carried on the wire, tag)."""
    if material.kind.is_gcm:
        ct, tag = provider.aead_encrypt(material.sender_key, header.nonce, aad, content)
        return _body(ct), tag
    body = _body(content)
    return body, provider.gmac(material.sender_key, header.nonce, aad + body)


def _check_header(header: SecureDataHeader, material) -> None:
    if not hmac.compare_digest(header.kind, material.kind.encode()):
        raise AuthenticationFailed("transformation kind does not match key material")
    if header.key_id != material.key_id:
        raise UnknownKeyId(f"no material for key id {header.key_id.hex()}")


def _open(material, provider, header: SecureDataHeader, aad: bytes, body: bytes, tag: bytes) -> bytes:
    _check_header(header, material)
    if len(tag) != TAG_LEN:
        raise AuthenticationFailed("tag has wrong length")
    if material.kind.is_gcm:
        return provider.aead_decrypt(material.receiver_key, header.nonce, aad, _read_body(body), tag)
    expected = provider.gmac(material.receiver_key, header.nonce, aad + body)
    if not hmac.compare_digest(expected, tag):
        raise AuthenticationFailed("GMAC tag mismatch")
    return _read_body(body)


# -- DATA level --------------------------------------------------------------------

def protect_payload(payload: bytes, material, provider) -> Submessage:
    header = _new_header(material)
    hdr = header.encode()
    body, tag = _seal(material, provider, header, hdr, payload)
    return Submessage(SEC_BODY, FLAG_E, hdr + body + tag)


def unprotect_payload(protected: Submessage | bytes, material, provider) -> bytes:
    if isinstance(protected, (bytes, bytearray)):
        subs = decode_submessages(bytes(protected))
        if len(subs) != 1:
            raise CodecError("serialized secure payload must hold exactly one element")
        protected = subs[0]
    if protected.id != SEC_BODY:
        raise CodecError(f"expected SecurePayload (0x30), got 0x{protected.id:02x}")
    raw = protected.body
    if len(raw) < SDH_LEN + 4 + TAG_LEN:
        raise AuthenticationFailed("secure payload too short")
    header = SecureDataHeader.decode(raw[:SDH_LEN])
    return _open(material, provider, header, raw[:SDH_LEN], raw[SDH_LEN:-TAG_LEN], raw[-TAG_LEN:])


# -- METADATA level ------------------------------------------------------------------

def protect_submessage(sub: Submessage, material, provider) -> list[Submessage]:
    header = _new_header(material)
    hdr = header.encode()
    inner = encode_submessage(sub)
    if material.kind.is_gcm:
        body, tag = _seal(material, provider, header, hdr, inner)
        middle = Submessage(SEC_BODY, FLAG_E, body)
    else:
        tag = provider.gmac(material.sender_key, header.nonce, hdr + inner)
        middle = sub
    return [Submessage(SEC_PREFIX, FLAG_E, hdr), middle, Submessage(SEC_POSTFIX, FLAG_E, tag)]


def unprotect_submessage(subs: list[Submessage], material, provider) -> Submessage:
    if not subs or subs[0].id != SEC_PREFIX:
        raise CodecError("submessage protection must start with SEC_PREFIX")
    if subs[-1].id != SEC_POSTFIX or len(subs) < 3:
        raise MissingPostfix("SEC_PREFIX without a matching SEC_POSTFIX")
    if len(subs) != 3:
        raise AuthenticationFailed("exactly one submessage may sit between SEC_PREFIX and SEC_POSTFIX")
    header = SecureDataHeader.decode(subs[0].body)
    hdr = subs[0].body
    middle = subs[1]
    tag = subs[2].body
    if material.kind.is_gcm:
        if middle.id != SEC_BODY:
            raise AuthenticationFailed("encrypted submessage must be carried in SEC_BODY")
        inner = _open(material, provider, header, hdr, middle.body, tag)
        decoded = decode_submessages(inner)
        if len(decoded) != 1:
            raise AuthenticationFailed("decrypted body is not a single submessage")
        return decoded[0]
    _check_header(header, material)
    expected = provider.gmac(material.receiver_key, header.nonce, hdr + encode_submessage(middle))
    if not hmac.compare_digest(expected, tag):
        raise AuthenticationFailed("GMAC tag mismatch")
    return middle


# -- RTPS level ----------------------------------------------------------------------

def protect_message(m: RtpsMessage, material, provider) -> RtpsMessage:
    header = _new_header(material)
    hdr = header.encode()
    aad = m.header_bytes() + hdr
    if material.kind.is_gcm:
        body, tag = _seal(material, provider, header, aad, encode_message(m))
        middle = [Submessage(SEC_BODY, FLAG_E, body)]
    else:
        middle = list(m.submessages)
        clear = b"".join(encode_submessage(s) for s in middle)
        tag = provider.gmac(material.sender_key, header.nonce, aad + clear)
    return RtpsMessage(
        m.guid_prefix,
        [Submessage(SRTPS_PREFIX, FLAG_E, hdr), *middle, Submessage(SRTPS_POSTFIX, FLAG_E, tag)],
        m.version,
        m.vendor_id,
    )


def unprotect_message(m: RtpsMessage, material, provider) -> RtpsMessage:
    subs = m.submessages
    if not subs or subs[0].id != SRTPS_PREFIX:
        raise CodecError("message protection must start with SRTPS_PREFIX")
    if len(subs) < 2 or subs[-1].id != SRTPS_POSTFIX:
        raise MissingPostfix("SRTPS_PREFIX without a matching SRTPS_POSTFIX")
    hdr = subs[0].body
    header = SecureDataHeader.decode(hdr)
    aad = m.header_bytes() + hdr
    middle = subs[1:-1]
    tag = subs[-1].body
    if material.kind.is_gcm:
        if len(middle) != 1 or middle[0].id != SEC_BODY:
            raise AuthenticationFailed("encrypted message must be a single SEC_BODY")
        inner = decode_message(_open(material, provider, header, aad, middle[0].body, tag))
        if inner.guid_prefix != m.guid_prefix:
            raise AuthenticationFailed("inner and outer GUID prefix differ")
        return inner
    _check_header(header, material)
    clear = b"".join(encode_submessage(s) for s in middle)
    expected = provider.gmac(material.receiver_key, header.nonce, aad + clear)
    if not hmac.compare_digest(expected, tag):
        raise AuthenticationFailed("GMAC tag mismatch")
    return RtpsMessage(m.guid_prefix, list(middle), m.version, m.vendor_id)


# -- dispatch ------------------------------------------------------------------------

Protectable = Union[RtpsMessage, Submessage, bytes]


def protect(obj: Protectable, level: ProtectionLevel, material, provider):
    if level is ProtectionLevel.RTPS:
        return protect_message(obj, material, provider)
    if level is ProtectionLevel.METADATA:
        return protect_submessage(obj, material, provider)
    return protect_payload(obj, material, provider)


def unprotect(obj, level: ProtectionLevel, material, provider):
    if level is ProtectionLevel.RTPS:
        return unprotect_message(obj, material, provider)
    if level is ProtectionLevel.METADATA:
        return unprotect_submessage(obj, material, provider)
    return unprotect_payload(obj, material, provider)


def peek_header(obj) -> SecureDataHeader:
    """SecureDataHeader of a protected element, for key lookup before opening it."""
    if isinstance(obj, RtpsMessage):
        sub = obj.submessages[0] if obj.submessages else None
        if sub is None or sub.id != SRTPS_PREFIX:
            raise CodecError("not an RTPS-protected message")
        return SecureDataHeader.decode(sub.body)
    if isinstance(obj, list):
        return SecureDataHeader.decode(obj[0].body)
    if isinstance(obj, (bytes, bytearray)):
        obj = decode_submessages(bytes(obj))[0]
    return SecureDataHeader.decode(obj.body[:SDH_LEN])


def group_submessages(subs: list[Submessage]) -> list[Submessage | list[Submessage]]:
    """Split a submessage list into plain submessages and SEC_PREFIX..SEC_POSTFIX runs."""
    out: list[Submessage | list[Submessage]] = []
    i = 0
    while i < len(subs):
        if subs[i].id == SEC_PREFIX:
            j = i + 1
            while j < len(subs) and subs[j].id not in (SEC_POSTFIX, SEC_PREFIX):
                j += 1
            if j >= len(subs) or subs[j].id != SEC_POSTFIX:
                raise MissingPostfix("SEC_PREFIX without a matching SEC_POSTFIX")
            out.append(subs[i:j + 1])
            i = j + 1
        else:
            out.append(subs[i])
            i += 1
    return out


def is_rtps_protected(m: RtpsMessage) -> bool:
    return bool(m.submessages) and m.submessages[0].id == SRTPS_PREFIX


__all__ = [
    "ProtectionLevel",
    "SecureDataHeader",
    "group_submessages",
    "is_rtps_protected",
    "peek_header",
    "protect",
    "protect_message",
    "protect_payload",
    "protect_submessage",
    "unprotect",
    "unprotect_message",
    "unprotect_payload",
    "unprotect_submessage",
]
