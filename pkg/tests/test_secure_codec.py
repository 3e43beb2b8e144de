import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from support import corruption_case, material, sample_message

from ddssec.codec.rtps import SEC_BODY, SEC_POSTFIX, SEC_PREFIX, SRTPS_POSTFIX, SRTPS_PREFIX, decode_message, encode_message
from ddssec.codec.secure import (
    SDH_LEN,
    ProtectionLevel,
    SecureDataHeader,
    group_submessages,
    peek_header,
    protect,
    unprotect,
)
from ddssec.crypto.keys import TransformationKind
from ddssec.crypto.provider import CryptoProvider
from ddssec.errors import AuthenticationFailed, MissingPostfix, UnknownKeyId, WrongKindForLevel

KINDS = [k for k in TransformationKind if k is not TransformationKind.NONE]


def _sample(level, payload):
    msg = sample_message(payload)
    if level is ProtectionLevel.RTPS:
        return msg
    if level is ProtectionLevel.METADATA:
        return msg.submessages[0]
    return payload


@pytest.mark.parametrize("kind", KINDS, ids=lambda k: k.name)
@pytest.mark.parametrize("level", list(ProtectionLevel), ids=lambda lv: lv.value)
def test_roundtrip_every_level_and_kind(level, kind):
    provider = CryptoProvider()
    tx, rx = material(kind)
    for payload in (b"", b"Hello World 1", bytes(range(256)) * 4):
        obj = _sample(level, payload)
        prot = protect(obj, level, tx, provider)
        assert unprotect(prot, level, rx, provider) == obj
        hdr = peek_header(prot)
        assert hdr.transformation_kind is kind and hdr.key_id == tx.key_id


def test_wire_shapes_and_confidentiality():
    provider = CryptoProvider()
    tx, _ = material(TransformationKind.AES256_GCM)
    secret = b"Hello World 42"
    body = protect(secret, ProtectionLevel.DATA, tx, provider)
    assert body.id == SEC_BODY and len(body.body) == SDH_LEN + 4 + len(secret) + 16
    assert secret not in body.body
    subs = protect(sample_message(secret).submessages[0], ProtectionLevel.METADATA, tx, provider)
    assert [s.id for s in subs] == [SEC_PREFIX, SEC_BODY, SEC_POSTFIX]
    msg = protect(sample_message(secret), ProtectionLevel.RTPS, tx, provider)
    assert [s.id for s in msg.submessages] == [SRTPS_PREFIX, SEC_BODY, SRTPS_POSTFIX]
    raw = encode_message(msg)
    assert secret not in raw and decode_message(raw) == msg


def test_gmac_leaves_content_readable():
    provider = CryptoProvider()
    tx, _ = material(TransformationKind.AES128_GMAC)
    subs = protect(sample_message(b"visible").submessages[0], ProtectionLevel.METADATA, tx, provider)
    assert b"visible" in subs[1].body


def test_nonces_never_repeat():
    provider = CryptoProvider()
    tx, _ = material(TransformationKind.AES128_GCM)
    seen = {peek_header(protect(b"x", ProtectionLevel.DATA, tx, provider)).nonce for _ in range(200)}
    assert len(seen) == 200


@settings(max_examples=100, deadline=None)
@given(st.sampled_from(list(ProtectionLevel)), st.sampled_from(KINDS), st.integers(0, 2**32))
def test_single_byte_corruption_fails_authentication(level, kind, seed):
    run, where = corruption_case(level, kind, random.Random(seed))
    with pytest.raises(AuthenticationFailed):
        run()


def test_wrong_key_and_key_id():
    provider = CryptoProvider()
    tx, _ = material(TransformationKind.AES256_GCM)
    _, other = material(TransformationKind.AES256_GCM, secret=b"\x01" * 32)
    prot = protect(b"payload", ProtectionLevel.DATA, tx, provider)
    with pytest.raises(AuthenticationFailed):
        unprotect(prot, ProtectionLevel.DATA, other, provider)
    _, wrong_id = material(TransformationKind.AES256_GCM, key_id=b"\x00\x00\x00\x09")
    with pytest.raises(UnknownKeyId):
        unprotect(prot, ProtectionLevel.DATA, wrong_id, provider)
    _, wrong_kind = material(TransformationKind.AES256_GMAC)
    with pytest.raises(AuthenticationFailed):
        unprotect(prot, ProtectionLevel.DATA, wrong_kind, provider)


def test_structural_failures():
    provider = CryptoProvider()
    tx, rx = material(TransformationKind.AES128_GCM)
    subs = protect(sample_message().submessages[0], ProtectionLevel.METADATA, tx, provider)
    with pytest.raises(MissingPostfix):
        unprotect(subs[:2], ProtectionLevel.METADATA, rx, provider)
    with pytest.raises(MissingPostfix):
        group_submessages(subs[:2])
    assert group_submessages([*subs, *subs]) == [subs, subs]
    none_tx, _ = material(TransformationKind.NONE)
    with pytest.raises(WrongKindForLevel):
        protect(b"x", ProtectionLevel.DATA, none_tx, provider)
    with pytest.raises(AuthenticationFailed):
        SecureDataHeader.decode(b"\x00" * 19)
