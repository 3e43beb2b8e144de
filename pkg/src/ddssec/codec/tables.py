"""Builtin mapping values transmitted during secure exchanges."""
from __future__ import annotations

from ..crypto.keys import TransformationKind
from ..errors import UnknownBuiltin, UnknownPid
from .rtps import PID_SENTINEL, EntityId  # noqa: F401


def _eid(key: str, kind: int) -> EntityId:
    return EntityId(bytes.fromhex(key), kind)


SECURE_BUILTIN_ENTITY_IDS: dict[str, EntityId] = {
    "SEDPbuiltinPublicationSecureWriter": _eid("ff0003", 0xC2),
    "SEDPbuiltinPublicationSecureReader": _eid("ff0003", 0xC7),
    "SEDPbuiltinSubscriptionSecureWriter": _eid("ff0004", 0xC2),
    "SEDPbuiltinSubscriptionSecureReader": _eid("ff0004", 0xC7),
    "BuiltinParticipantMessageSecureWriter": _eid("ff2000", 0xC2),
    "BuiltinParticipantMessageSecureReader": _eid("ff2000", 0xC7),
    "BuiltinParticipantStatelessMessageWriter": _eid("002001", 0xC3),
    "BuiltinParticipantStatelessMessageReader": _eid("002001", 0xC4),
    "BuiltinParticipantVolatileMessageSecureWriter": _eid("ff0202", 0xC3),
    "BuiltinParticipantVolatileMessageSecureReader": _eid("ff0202", 0xC4),
    "SPDPbuiltinParticipantsSecureWriter": _eid("ff0101", 0xC2),
    "SPDPbuiltinParticipantsSecureReader": _eid("ff0101", 0xC7),
}

# plain RTPS ids used alongside the secure ones
ENTITYID_PARTICIPANT = _eid("000001", 0xC1)
ENTITYID_SPDP_WRITER = _eid("000100", 0xC2)
ENTITYID_SPDP_READER = _eid("000100", 0xC7)
ENTITYID_UNKNOWN = _eid("000000", 0x00)

# user-defined endpoint kinds
KIND_WRITER_NO_KEY = 0x03
KIND_READER_NO_KEY = 0x04

SECURITY_PIDS: dict[str, int] = {
    "PID_IDENTITY_TOKEN": 0x1001,
    "PID_PERMISSION_TOKEN": 0x1002,
    "PID_PARTICIPANT_SECURITY_INFO": 0x1005,
    "PID_PROPERTY_LIST": 0x0059,
}

PID_TOPIC_NAME = 0x0005
PID_PARTICIPANT_GUID = 0x0050
PID_ENDPOINT_GUID = 0x005A

TRANSFORMATION_KINDS: dict[str, TransformationKind] = {
    f"CRYPTO_TRANSFORMATION_KIND_{k.name}": k for k in TransformationKind
}


def builtin_entity_id(name: str) -> EntityId:
    try:
        return SECURE_BUILTIN_ENTITY_IDS[name]
    except KeyError:
        raise UnknownBuiltin(name) from None


def member_pid(name: str) -> int:
    try:
        return SECURITY_PIDS[name]
    except KeyError:
        raise UnknownPid(name) from None
