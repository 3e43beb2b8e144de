"""Helpers shared by unit and acceptance tests."""
import random

from ddssec.auth.keymat import derive_key_material
from ddssec.codec.rtps import DataSubmessage, EntityId, Guid, RtpsMessage, encode_message
from ddssec.codec.secure import (
    ProtectionLevel,
    protect_message,
    protect_payload,
    protect_submessage,
    unprotect_message,
    unprotect_payload,
    unprotect_submessage,
)
from ddssec.crypto.keys import SharedSecret, TransformationKind
from ddssec.crypto.provider import CryptoProvider

PREFIX_A = bytes.fromhex("0102030405060708090a0b0c")
PREFIX_B = bytes.fromhex("1112131415161718191a1b1c")
WRITER = EntityId(b"\x00\x00\x01", 0x03)
READER = EntityId(b"\x00\x00\x01", 0x04)


def material(kind: TransformationKind, secret: bytes = b"\x42" * 32, key_id: bytes = b"\x00\x00\x00\x03"):
    """Sender-side material plus the receiver's mirrored view."""
    mat = derive_key_material(
        SharedSecret(secret),
        Guid(PREFIX_A, EntityId(b"\x00\x00\x01", 0xC1)),
        Guid(PREFIX_B, EntityId(b"\x00\x00\x01", 0xC1)),
        key_id,
        kind,
        CryptoProvider(),
    )
    return mat, mat.mirrored()


def sample_message(payload: bytes = b"Hello World 0") -> RtpsMessage:
    return RtpsMessage(PREFIX_A, [DataSubmessage(READER, WRITER, 1, payload).to_submessage()])


def corruption_case(level: ProtectionLevel, kind: TransformationKind, rng: random.Random):
    """Protect a sample at ``level``, flip one byte of the protected region.

    Returns a zero-argument callable that runs the receiver's unprotect on the
    corrupted element, plus a description of the flipped byte.
    """
    provider = CryptoProvider()
    tx, rx = material(kind)
    payload = rng.randbytes(rng.randrange(1, 64))
    if level is ProtectionLevel.DATA:
        sub = protect_payload(payload, tx, provider)
        region = bytearray(sub.body)  # header, body, tag
        i = rng.randrange(len(region))
        region[i] ^= 1 << rng.randrange(8)
        corrupted = type(sub)(sub.id, sub.flags, bytes(region))
        return (lambda: unprotect_payload(corrupted, rx, provider)), f"payload byte {i}"
    if level is ProtectionLevel.METADATA:
        subs = protect_submessage(DataSubmessage(READER, WRITER, 1, payload).to_submessage(), tx, provider)
        # prefix header, protected body, postfix tag
        which = rng.randrange(3)
        body = bytearray(subs[which].body)
        i = rng.randrange(len(body))
        body[i] ^= 1 << rng.randrange(8)
        subs = list(subs)
        subs[which] = type(subs[which])(subs[which].id, subs[which].flags, bytes(body))
        return (lambda: unprotect_submessage(subs, rx, provider)), f"submessage {which} byte {i}"
    msg = protect_message(sample_message(payload), tx, provider)
    which = rng.randrange(len(msg.submessages) + 1)
    if which == len(msg.submessages):
        # the RTPS header version/vendor fields are authenticated too
        field = rng.choice(["version", "vendor"])
        if field == "version":
            corrupted = RtpsMessage(msg.guid_prefix, msg.submessages, (msg.version[0] ^ 1, msg.version[1]),
                                    msg.vendor_id)
        else:
            corrupted = RtpsMessage(msg.guid_prefix, msg.submessages, msg.version,
                                    bytes([msg.vendor_id[0] ^ 1]) + msg.vendor_id[1:])
        return (lambda: unprotect_message(corrupted, rx, provider)), f"header {field}"
    subs = list(msg.submessages)
    body = bytearray(subs[which].body)
    i = rng.randrange(len(body))
    body[i] ^= 1 << rng.randrange(8)
    subs[which] = type(subs[which])(subs[which].id, subs[which].flags, bytes(body))
    corrupted = RtpsMessage(msg.guid_prefix, subs, msg.version, msg.vendor_id)
    return (lambda: unprotect_message(corrupted, rx, provider)), f"submessage {which} byte {i}"


def plaintext_absent(raw_messages, needles) -> bool:
    return not any(n in raw for raw in raw_messages for n in needles)


def encoded(msg: RtpsMessage) -> bytes:
    return encode_message(msg)


class Pki:
    """Two CAs plus helpers to mint identities, for handshake tests."""

    def __init__(self, seed: int = 1, algorithm=None):
        from ddssec.auth import TrustAnchors, self_signed_ca
        from ddssec.crypto.keys import SigningAlgorithm
        from ddssec.rng import Rng

        self.provider = CryptoProvider()
        self.rng = Rng(seed)
        self.algorithm = algorithm or SigningAlgorithm.ECDSA_P256
        self.ca_key = self.provider.generate_signing_key(self.algorithm, self.rng.child("ca"))
        self.ca = self_signed_ca("CN=Test Identity CA", self.ca_key, self.provider)
        self.pca_key = self.provider.generate_signing_key(self.algorithm, self.rng.child("pca"))
        self.pca = self_signed_ca("CN=Test Permissions CA", self.pca_key, self.provider)
        self.anchors = TrustAnchors(self.ca, self.pca)

    def identity(self, name: str, prefix: bytes, rules=None, domain: int = 0, ca_key=None, ca=None,
                 pca_key=None, subject=None):
        from ddssec.auth import LocalIdentity, PermissionsGrant, Rule, SignedDocument, issue_certificate, sign_document

        key = self.provider.generate_signing_key(self.algorithm, self.rng.child("id:" + name))
        cert = issue_certificate("CN=" + name, key.public, ca_key or self.ca_key, (ca or self.ca).subject,
                                 self.provider)
        rules = rules or (Rule("allow", "publish", "Hello*"), Rule("allow", "subscribe", "Hello*"))
        doc = PermissionsGrant(subject or "CN=" + name, domain, tuple(rules)).to_xml()
        perms = SignedDocument(doc, sign_document(doc, pca_key or self.pca_key, self.provider))
        return LocalIdentity(prefix, cert, key, perms)

    def sessions(self, a, b, kinds=None, **kw):
        from ddssec.auth import GovernancePolicy, new_session

        kinds = kinds or GovernancePolicy().kinds()
        sa = new_session(a, self.anchors, self.provider, b.guid_prefix, kinds, rng=self.rng.child("s:" + a.guid_prefix.hex()), **kw)
        sb = new_session(b, self.anchors, self.provider, a.guid_prefix, kinds, rng=self.rng.child("s:" + b.guid_prefix.hex()), **kw)
        return sa, sb
