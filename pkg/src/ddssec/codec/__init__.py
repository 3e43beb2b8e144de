from .rtps import (
    DataSubmessage,
    EntityId,
    Guid,
    RtpsMessage,
    Submessage,
    decode_message,
    encode_message,
)
from .secure import ProtectionLevel, SecureDataHeader, protect, unprotect
from .tables import builtin_entity_id, member_pid

__all__ = [
    "DataSubmessage",
    "EntityId",
    "Guid",
    "ProtectionLevel",
    "RtpsMessage",
    "SecureDataHeader",
    "Submessage",
    "builtin_entity_id",
    "decode_message",
    "encode_message",
    "member_pid",
    "protect",
    "unprotect",
]
