import struct

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ddssec.codec.rtps import (
    DATA,
    DataSubmessage,
    EntityId,
    Guid,
    RtpsMessage,
    Submessage,
    decode_message,
    decode_parameter_list,
    decode_submessages,
    encode_message,
    encode_parameter_list,
    cdr_string,
    read_cdr_string,
)
from ddssec.codec.tables import (
    SECURE_BUILTIN_ENTITY_IDS,
    SECURITY_PIDS,
    TRANSFORMATION_KINDS,
    builtin_entity_id,
    member_pid,
)
from ddssec.crypto.keys import TransformationKind
from ddssec.errors import BadMagic, LengthMismatch, TruncatedSubmessage, UnknownBuiltin, UnknownPid

# values transcribed from the published mapping table
TABLE_ENTITY_IDS = {
    "SEDPbuiltinPublicationSecureWriter": "{{ff,00,03}, c2}",
    "SEDPbuiltinPublicationSecureReader": "{{ff,00,03}, c7}",
    "SEDPbuiltinSubscriptionSecureWriter": "{{ff,00,04}, c2}",
    "SEDPbuiltinSubscriptionSecureReader": "{{ff,00,04}, c7}",
    "BuiltinParticipantMessageSecureWriter": "{{ff,20,00}, c2}",
    "BuiltinParticipantMessageSecureReader": "{{ff,20,00}, c7}",
    "BuiltinParticipantStatelessMessageWriter": "{{00,20,01}, c3}",
    "BuiltinParticipantStatelessMessageReader": "{{00,20,01}, c4}",
    "BuiltinParticipantVolatileMessageSecureWriter": "{{ff,02,02}, c3}",
    "BuiltinParticipantVolatileMessageSecureReader": "{{ff,02,02}, c4}",
    "SPDPbuiltinParticipantsSecureWriter": "{{ff,01,01}, c2}",
    "SPDPbuiltinParticipantsSecureReader": "{{ff,01,01}, c7}",
}
TABLE_PIDS = {
    "PID_IDENTITY_TOKEN": 0x1001,
    "PID_PERMISSION_TOKEN": 0x1002,
    "PID_PARTICIPANT_SECURITY_INFO": 0x1005,
    "PID_PROPERTY_LIST": 0x0059,
}
TABLE_KINDS = {
    "CRYPTO_TRANSFORMATION_KIND_NONE": "{0, 0, 0, 0}",
    "CRYPTO_TRANSFORMATION_KIND_AES128_GMAC": "{0, 0, 0, 1}",
    "CRYPTO_TRANSFORMATION_KIND_AES128_GCM": "{0, 0, 0, 2}",
    "CRYPTO_TRANSFORMATION_KIND_AES256_GMAC": "{0, 0, 0, 3}",
    "CRYPTO_TRANSFORMATION_KIND_AES256_GCM": "{0, 0, 0, 4}",
}


def _parse_eid(text: str) -> bytes:
    key, kind = text.replace("{", "").replace("}", "").replace(" ", "").rsplit(",", 1)
    return bytes(int(x, 16) for x in key.split(",")) + bytes([int(kind, 16)])


def _parse_octets(text: str) -> bytes:
    return bytes(int(x) for x in text.strip("{}").split(","))


def check_table_values() -> list[str]:
    """Return every mismatch between the tables module and the transcribed values."""
    bad = []
    if set(SECURE_BUILTIN_ENTITY_IDS) != set(TABLE_ENTITY_IDS):
        bad.append("entity id name set")
    for name, text in TABLE_ENTITY_IDS.items():
        if builtin_entity_id(name).encode() != _parse_eid(text):
            bad.append(name)
    if set(SECURITY_PIDS) != set(TABLE_PIDS):
        bad.append("pid name set")
    for name, value in TABLE_PIDS.items():
        if member_pid(name) != value:
            bad.append(name)
    for name, text in TABLE_KINDS.items():
        if TRANSFORMATION_KINDS[name].encode() != _parse_octets(text):
            bad.append(name)
    return bad


def test_table_values_bit_exact():
    assert len(TABLE_ENTITY_IDS) == 12 and len(TABLE_PIDS) == 4 and len(TABLE_KINDS) == 5
    assert check_table_values() == []
    assert str(builtin_entity_id("SEDPbuiltinPublicationSecureWriter")) == "{{ff,00,03},c2}"
    assert TransformationKind.decode(b"\x00\x00\x00\x04") is TransformationKind.AES256_GCM


def test_unknown_table_names():
    with pytest.raises(UnknownBuiltin):
        builtin_entity_id("NoSuchWriter")
    with pytest.raises(UnknownPid):
        member_pid("PID_NOPE")
    with pytest.raises(ValueError):
        TransformationKind.decode(b"\x00\x00\x00\x09")


def test_golden_message_bytes():
    prefix = bytes(range(12))
    data = DataSubmessage(EntityId(b"\x00\x00\x01", 0x04), EntityId(b"\x00\x00\x01", 0x03), 5, b"hi")
    raw = encode_message(RtpsMessage(prefix, [data.to_submessage()]))
    # header, then submessage 0x15 flags E|D len 22, extraFlags 0, octetsToInlineQos 16, ids, sn high/low
    expected = (
        b"RTPS\x02\x02\xff\xfe" + prefix
        + bytes([0x15, 0x05]) + struct.pack("<H", 22)
        + b"\x00\x00\x10\x00" + b"\x00\x00\x01\x04" + b"\x00\x00\x01\x03"
        + struct.pack("<iI", 0, 5) + b"hi"
    )
    assert raw == expected
    msg = decode_message(raw)
    assert DataSubmessage.from_submessage(msg.submessages[0]) == data


entity_ids = st.builds(EntityId, st.binary(min_size=3, max_size=3), st.integers(0, 255))
submessages = st.one_of(
    st.builds(Submessage, st.integers(0, 255), st.integers(0, 255), st.binary(max_size=200)),
    st.builds(
        lambda r, w, sn, p: DataSubmessage(r, w, sn, p).to_submessage(),
        entity_ids, entity_ids, st.integers(0, 2**63 - 1), st.binary(max_size=200),
    ),
)
messages = st.builds(
    RtpsMessage,
    st.binary(min_size=12, max_size=12),
    st.lists(submessages, max_size=6),
    st.tuples(st.integers(0, 255), st.integers(0, 255)),
    st.binary(min_size=2, max_size=2),
)


@settings(max_examples=1000, deadline=None)
@given(messages)
def test_fuzzed_encode_decode_identity(m):
    raw = encode_message(m)
    assert decode_message(raw) == m
    assert encode_message(decode_message(raw)) == raw


@settings(max_examples=200, deadline=None)
@given(entity_ids, entity_ids, st.integers(0, 2**63 - 1), st.binary(max_size=64))
def test_data_submessage_roundtrip(r, w, sn, payload):
    d = DataSubmessage(r, w, sn, payload)
    assert DataSubmessage.from_submessage(d.to_submessage()) == d


def test_unknown_submessage_skipped_by_length():
    raw = encode_message(RtpsMessage(b"\x00" * 12, [Submessage(0x77, 1, b"abcd"), Submessage(DATA, 1, b"x" * 24)]))
    subs = decode_message(raw).submessages
    assert [s.id for s in subs] == [0x77, DATA]


def test_structural_errors():
    with pytest.raises(BadMagic):
        decode_message(b"RTPX" + b"\x00" * 16)
    with pytest.raises(LengthMismatch):
        decode_message(b"RTPS\x02\x02")
    with pytest.raises(TruncatedSubmessage):
        decode_submessages(b"\x15\x01\x10\x00abc")
    with pytest.raises(TruncatedSubmessage):
        decode_submessages(b"\x15\x01")
    with pytest.raises(LengthMismatch):
        encode_message(RtpsMessage(b"\x00" * 12, [Submessage(1, 0, b"x" * 70000)]))
    with pytest.raises(ValueError):
        Guid(b"\x00" * 11, EntityId(b"\x00\x00\x01", 0xC1))


@settings(max_examples=100)
@given(st.lists(st.tuples(st.integers(2, 0xFFFF), st.binary(max_size=40).map(lambda b: b + b"\x00" * (-len(b) % 4)))))
def test_parameter_list_roundtrip(params):
    assert decode_parameter_list(encode_parameter_list(params)) == params


def test_cdr_string():
    raw = cdr_string("HelloTopic")
    assert read_cdr_string(raw + b"\x00" * (-len(raw) % 4)) == ("HelloTopic", 16)
    with pytest.raises(LengthMismatch):
        read_cdr_string(raw[:-3])
