"""A secure DDS participant as a sequential event loop.

The participant announces itself in clear SPDP, authenticates every peer over
the stateless builtin endpoints, announces its endpoints over the secure SEDP
endpoints, and then exchanges topic samples protected at payload, submessage
and message level according to governance. Each call to :meth:`step`
handles at most one datagram, so a harness can interleave participants
deterministically.
"""
from __future__ import annotations

import hashlib
import logging
import struct
from dataclasses import dataclass, field
from typing import Callable

from ..auth.handshake import (
    HandshakeSession,
    LocalIdentity,
    State,
    TrustAnchors,
    handshake_step,
    new_session,
)
from ..auth.keymat import KeyMaterial
from ..auth.policy import GovernancePolicy, PermissionsGrant, SignedDocument, check_permission
from ..codec.rtps import (
    DATA,
    DataSubmessage,
    EntityId,
    Guid,
    RtpsMessage,
    Submessage,
    cdr_string,
    decode_message,
    decode_parameter_list,
    encode_message,
    encode_parameter_list,
    encode_submessage,
    read_cdr_string,
)
from ..codec.secure import (
    group_submessages,
    is_rtps_protected,
    peek_header,
    protect_message,
    protect_payload,
    protect_submessage,
    unprotect_message,
    unprotect_payload,
    unprotect_submessage,
)
from ..codec.tables import (
    ENTITYID_PARTICIPANT,
    ENTITYID_SPDP_READER,
    ENTITYID_SPDP_WRITER,
    KIND_READER_NO_KEY,
    KIND_WRITER_NO_KEY,
    PID_ENDPOINT_GUID,
    PID_PARTICIPANT_GUID,
    PID_TOPIC_NAME,
    builtin_entity_id,
    member_pid,
)
from ..config import CredentialSet
from ..crypto.keys import TransformationKind
from ..errors import AuthenticationFailed, CodecError, DdsSecError, PolicyError, StateViolation
from ..rng import Rng
from .transport import LoopbackBus

log = logging.getLogger(__name__)

STATELESS_WRITER = builtin_entity_id("BuiltinParticipantStatelessMessageWriter")
STATELESS_READER = builtin_entity_id("BuiltinParticipantStatelessMessageReader")
VOLATILE_WRITER = builtin_entity_id("BuiltinParticipantVolatileMessageSecureWriter")
VOLATILE_READER = builtin_entity_id("BuiltinParticipantVolatileMessageSecureReader")
PUB_WRITER = builtin_entity_id("SEDPbuiltinPublicationSecureWriter")
PUB_READER = builtin_entity_id("SEDPbuiltinPublicationSecureReader")
SUB_WRITER = builtin_entity_id("SEDPbuiltinSubscriptionSecureWriter")
SUB_READER = builtin_entity_id("SEDPbuiltinSubscriptionSecureReader")
LIVELINESS_WRITER = builtin_entity_id("BuiltinParticipantMessageSecureWriter")
LIVELINESS_READER = builtin_entity_id("BuiltinParticipantMessageSecureReader")

AUTH_CLASS = "DDS:Auth:PKI-DH:1.2"
ACCESS_CLASS = "DDS:Access:Permissions:1.2"
CRYPTO_CLASS = "DDS:Crypto:AES-GCM-GMAC:1.2"

# which channel protects the submessages of each builtin writer
_SUBMESSAGE_CHANNEL = {
    PUB_WRITER: "discovery",
    SUB_WRITER: "discovery",
    LIVELINESS_WRITER: "liveliness",
}

# security info attribute bits
ATTR_VALID = 1 << 31
ATTR_RTPS_PROTECTED = 1 << 0
ATTR_DISCOVERY_PROTECTED = 1 << 1
ATTR_LIVELINESS_PROTECTED = 1 << 2


@dataclass(frozen=True)
class Sample:
    topic: str
    payload: bytes
    writer: Guid
    sequence: int


@dataclass
class LocalWriter:
    entity: EntityId
    topic: str
    sequence: int = 0
    matched: set[tuple[bytes, EntityId]] = field(default_factory=set)


@dataclass
class LocalReader:
    entity: EntityId
    topic: str
    samples: list[Sample] = field(default_factory=list)


def spdp_payload(prefix: bytes, creds: CredentialSet, governance: GovernancePolicy) -> bytes:
    attrs = ATTR_VALID
    if governance.rtps.value != "NONE":
        attrs |= ATTR_RTPS_PROTECTED
    if governance.discovery.value != "NONE":
        attrs |= ATTR_DISCOVERY_PROTECTED
    if governance.liveliness.value != "NONE":
        attrs |= ATTR_LIVELINESS_PROTECTED
    props = [("dds.sec.auth.plugin_class", AUTH_CLASS),
             ("dds.sec.access.plugin_class", ACCESS_CLASS),
             ("dds.sec.crypto.plugin_class", CRYPTO_CLASS)]
    prop_list = struct.pack("<I", len(props)) + b"".join(cdr_string(k) + cdr_string(v) for k, v in props)
    return encode_parameter_list([
        (PID_PARTICIPANT_GUID, Guid(prefix, ENTITYID_PARTICIPANT).encode()),
        (member_pid("PID_IDENTITY_TOKEN"), cdr_string(AUTH_CLASS) + cdr_string(creds.subject)),
        (member_pid("PID_PERMISSION_TOKEN"),
         cdr_string(ACCESS_CLASS) + hashlib.sha256(creds.permissions.document).digest()),
        (member_pid("PID_PARTICIPANT_SECURITY_INFO"), struct.pack("<II", attrs, ATTR_VALID)),
        (member_pid("PID_PROPERTY_LIST"), prop_list),
    ])


def endpoint_payload(guid: Guid, topic: str) -> bytes:
    return encode_parameter_list([(PID_ENDPOINT_GUID, guid.encode()), (PID_TOPIC_NAME, cdr_string(topic))])


def parse_endpoint_payload(payload: bytes) -> tuple[Guid, str]:
    params = dict(decode_parameter_list(payload))
    try:
        return Guid.decode(params[PID_ENDPOINT_GUID]), read_cdr_string(params[PID_TOPIC_NAME])[0]
    except KeyError as exc:
        raise CodecError(f"endpoint announcement lacks parameter {exc}") from None


class Participant:
    def __init__(
        self,
        name: str,
        guid_prefix: bytes,
        creds: CredentialSet,
        provider,
        bus: LoopbackBus,
        rng: Rng,
        clock: Callable[[], float],
        key_bits: int = 256,
        governance: SignedDocument | None = None,
        enforce_local: bool = True,
    ):
        self.name = name
        self.prefix = guid_prefix
        self.creds = creds
        self.provider = provider
        self.rng = rng
        self.clock = clock
        self.enforce_local = enforce_local
        signed_gov = governance or creds.governance
        if not signed_gov.verify(creds.permissions_ca, provider):
            raise PolicyError(f"{name}: governance is not signed by the permissions CA")
        self.governance = GovernancePolicy.from_xml(signed_gov.document)
        self.kinds = self.governance.kinds(key_bits)
        self.grant = PermissionsGrant.from_xml(creds.permissions.document)
        self.identity = LocalIdentity(guid_prefix, creds.certificate, creds.key, creds.permissions)
        self.anchors = TrustAnchors(creds.identity_ca, creds.permissions_ca)
        self.endpoint = bus.attach(guid_prefix)
        self.sessions: dict[bytes, HandshakeSession] = {}
        self.rx_keys: dict[bytes, dict[bytes, tuple[str, KeyMaterial]]] = {}
        self.writers: dict[str, LocalWriter] = {}
        self.readers: dict[str, LocalReader] = {}
        self.remote_writers: dict[tuple[bytes, EntityId], str] = {}
        self.liveliness: set[bytes] = set()
        self.denied: list[tuple[str, str, str]] = []
        self.errors: list[str] = []
        self._next_entity = 1

    # -- application API ---------------------------------------------------------

    @property
    def subject(self) -> str:
        return self.creds.subject

    def _entity(self, kind: int) -> EntityId:
        eid = EntityId(self._next_entity.to_bytes(3, "big"), kind)
        self._next_entity += 1
        return eid

    def create_writer(self, topic: str) -> LocalWriter | None:
        if self.enforce_local and check_permission(self.grant, topic, "publish") != "allow":
            self.denied.append((topic, "publish", "local grant"))
            return None
        w = LocalWriter(self._entity(KIND_WRITER_NO_KEY), topic)
        self.writers[topic] = w
        for prefix in self.established_peers():
            self._announce_endpoint(prefix, w.entity, topic, PUB_WRITER, PUB_READER)
        return w

    def create_reader(self, topic: str) -> LocalReader | None:
        if self.enforce_local and check_permission(self.grant, topic, "subscribe") != "allow":
            self.denied.append((topic, "subscribe", "local grant"))
            return None
        r = LocalReader(self._entity(KIND_READER_NO_KEY), topic)
        self.readers[topic] = r
        for prefix in self.established_peers():
            self._announce_endpoint(prefix, r.entity, topic, SUB_WRITER, SUB_READER)
        return r

    def announce(self) -> None:
        sub = DataSubmessage(
            ENTITYID_SPDP_READER, ENTITYID_SPDP_WRITER, 1,
            spdp_payload(self.prefix, self.creds, self.governance),
        ).to_submessage()
        self.endpoint.send(encode_message(RtpsMessage(self.prefix, [sub])))

    def write(self, topic: str, payload: bytes) -> int:
        """Send one sample to every matched remote reader; returns the fan-out."""
        w = self.writers[topic]
        w.sequence += 1
        for dest, reader in sorted(w.matched, key=lambda m: (m[0], m[1].encode())):
            session = self.sessions[dest]
            data_kind = self.kinds["data"]
            body = payload
            if data_kind is not TransformationKind.NONE:
                body = encode_submessage(protect_payload(payload, session.derived["data"], self.provider))
            sub = DataSubmessage(reader, w.entity, w.sequence, body).to_submessage()
            self._send_secure(dest, sub, "metadata")
        return len(w.matched)

    def rekey(self, channel: str = "data") -> None:
        """Roll ``channel`` keys with every established peer and announce the new key ids."""
        for prefix in self.established_peers():
            session = self.sessions[prefix]
            mat = session.rekey(channel)
            self._register_key(prefix, channel, mat)
            note = cdr_string(channel) + mat.key_id
            body = encode_submessage(protect_payload(note, session.derived["volatile"], self.provider))
            sub = DataSubmessage(VOLATILE_READER, VOLATILE_WRITER, session._rekeys, body).to_submessage()
            self._send_secure(prefix, sub, None)

    def established_peers(self) -> list[bytes]:
        return sorted(p for p, s in self.sessions.items() if s.state is State.ESTABLISHED)

    def received(self, topic: str) -> list[Sample]:
        r = self.readers.get(topic)
        return list(r.samples) if r else []

    # -- event loop ----------------------------------------------------------------

    def step(self) -> bool:
        dg = self.endpoint.receive()
        if dg is None:
            return False
        try:
            self._on_datagram(dg.data)
        except DdsSecError as exc:
            self.errors.append(f"{type(exc).__name__}: {exc}")
            log.debug("%s dropped datagram: %s", self.name, exc)
        return True

    def _on_datagram(self, raw: bytes) -> None:
        msg = decode_message(raw)
        src = msg.guid_prefix
        if src == self.prefix:
            return
        rtps_ok = False
        if is_rtps_protected(msg):
            channel, mat = self._rx_material(src, peek_header(msg).key_id)
            if channel != "rtps":
                raise AuthenticationFailed("message-level protection under a non-rtps key")
            msg = unprotect_message(msg, mat, self.provider)
            rtps_ok = True
        for item in group_submessages(msg.submessages):
            channel = None
            if isinstance(item, list):
                channel, mat = self._rx_material(src, peek_header(item).key_id)
                item = unprotect_submessage(item, mat, self.provider)
            if item.id == DATA:
                self._on_data(src, DataSubmessage.from_submessage(item), rtps_ok, channel)

    def _rx_material(self, src: bytes, key_id: bytes) -> tuple[str, KeyMaterial]:
        try:
            return self.rx_keys[src][key_id]
        except KeyError:
            raise AuthenticationFailed(f"no key {key_id.hex()} for peer {src.hex()}") from None

    def _require(self, src: bytes, rtps_ok: bool, channel: str | None, expected: str | None) -> HandshakeSession:
        session = self.sessions.get(src)
        if session is None or session.state is not State.ESTABLISHED:
            raise AuthenticationFailed("secure traffic from an unauthenticated peer")
        if self.kinds["rtps"] is not TransformationKind.NONE and not rtps_ok:
            raise AuthenticationFailed("governance requires message protection")
        if expected is not None and self.kinds[expected] is not TransformationKind.NONE and channel != expected:
            raise AuthenticationFailed(f"governance requires {expected} protection")
        return session

    def _on_data(self, src: bytes, data: DataSubmessage, rtps_ok: bool, channel: str | None) -> None:
        wid = data.writer_id
        if wid == ENTITYID_SPDP_WRITER:
            self._on_spdp(src, data.payload)
        elif wid == STATELESS_WRITER:
            self._on_token(src, data.payload)
        elif wid == VOLATILE_WRITER:
            session = self._require(src, rtps_ok, channel, None)
            ch, mat = self._rx_material(src, peek_header(data.payload).key_id)
            if ch != "volatile":
                raise AuthenticationFailed("volatile message under the wrong key")
            note = unprotect_payload(data.payload, mat, self.provider)
            name, off = read_cdr_string(note)
            new = session.rekey(name)
            if new.key_id != note[off:off + 4]:
                raise AuthenticationFailed("rekey announcement out of step")
            self._register_key(src, name, new)
        elif wid in (PUB_WRITER, SUB_WRITER):
            session = self._require(src, rtps_ok, channel, "discovery")
            guid, topic = parse_endpoint_payload(data.payload)
            if wid == PUB_WRITER:
                self._on_remote_writer(src, session, guid, topic)
            else:
                self._on_remote_reader(src, session, guid, topic)
        elif wid == LIVELINESS_WRITER:
            self._require(src, rtps_ok, channel, "liveliness")
            self.liveliness.add(src)
        elif wid.kind == KIND_WRITER_NO_KEY:
            self._on_user_data(src, data, rtps_ok, channel)

    def _on_spdp(self, src: bytes, payload: bytes) -> None:
        params = dict(decode_parameter_list(payload))
        if member_pid("PID_IDENTITY_TOKEN") not in params:
            self.errors.append(f"peer {src.hex()} is not security-enabled; ignored")
            return
        self._session_for(src)
        session = self.sessions[src]
        if session.state is State.IDLE and session.is_initiator:
            self._advance(src, None)

    def _session_for(self, src: bytes) -> HandshakeSession:
        if src not in self.sessions:
            self.sessions[src] = new_session(
                self.identity, self.anchors, self.provider, src, self.kinds,
                rng=self.rng.child(f"hs-{src.hex()}"),
                now=self.clock(),
                domain_id=self.governance.domain_id,
            )
        return self.sessions[src]

    def _on_token(self, src: bytes, payload: bytes) -> None:
        self._session_for(src)
        self._advance(src, payload)

    def _advance(self, src: bytes, payload: bytes | None) -> None:
        session = self.sessions[src]
        try:
            _, out = handshake_step(session, payload)
        except StateViolation as exc:
            self.errors.append(f"StateViolation: {exc}")
            return
        except DdsSecError as exc:
            log.info("%s: handshake with %s failed: %s", self.name, src.hex(), exc)
            self.errors.append(f"handshake {src.hex()}: {type(exc).__name__}: {exc}")
            return
        if out is not None:
            sub = DataSubmessage(STATELESS_READER, STATELESS_WRITER, out.kind, out.encode()).to_submessage()
            self.endpoint.send(encode_message(RtpsMessage(self.prefix, [sub])), src)
        if session.state is State.ESTABLISHED:
            self._on_established(src)

    def _register_key(self, src: bytes, channel: str, mat: KeyMaterial) -> None:
        self.rx_keys.setdefault(src, {})[mat.key_id] = (channel, mat)

    def _on_established(self, src: bytes) -> None:
        session = self.sessions[src]
        for channel, mat in session.derived.items():
            self._register_key(src, channel, mat)
        for w in self.writers.values():
            self._announce_endpoint(src, w.entity, w.topic, PUB_WRITER, PUB_READER)
        for r in self.readers.values():
            self._announce_endpoint(src, r.entity, r.topic, SUB_WRITER, SUB_READER)
        beat = DataSubmessage(LIVELINESS_READER, LIVELINESS_WRITER, 1, self.prefix + b"\x00\x00\x00\x01")
        self._send_secure(src, beat.to_submessage(), "liveliness")

    def _announce_endpoint(self, dest: bytes, entity: EntityId, topic: str, writer: EntityId, reader: EntityId):
        payload = endpoint_payload(Guid(self.prefix, entity), topic)
        sub = DataSubmessage(reader, writer, 1, payload).to_submessage()
        self._send_secure(dest, sub, "discovery")

    def _send_secure(self, dest: bytes, sub: Submessage, channel: str | None) -> None:
        session = self.sessions[dest]
        subs = [sub]
        if channel is not None and self.kinds[channel] is not TransformationKind.NONE:
            subs = protect_submessage(sub, session.derived[channel], self.provider)
        msg = RtpsMessage(self.prefix, subs)
        if self.kinds["rtps"] is not TransformationKind.NONE:
            msg = protect_message(msg, session.derived["rtps"], self.provider)
        self.endpoint.send(encode_message(msg), dest)

    # -- matching ---------------------------------------------------------------------

    def _on_remote_writer(self, src: bytes, session: HandshakeSession, guid: Guid, topic: str) -> None:
        if guid.prefix != src:
            raise PolicyError("endpoint announced for another participant")
        if not session.peer_allows(topic, "publish"):
            self.denied.append((topic, "publish", f"remote grant of {session.peer.subject}"))
            return
        self.remote_writers[(src, guid.entity)] = topic

    def _on_remote_reader(self, src: bytes, session: HandshakeSession, guid: Guid, topic: str) -> None:
        if guid.prefix != src:
            raise PolicyError("endpoint announced for another participant")
        if not session.peer_allows(topic, "subscribe"):
            self.denied.append((topic, "subscribe", f"remote grant of {session.peer.subject}"))
            return
        w = self.writers.get(topic)
        if w is not None:
            w.matched.add((src, guid.entity))

    def _on_user_data(self, src: bytes, data: DataSubmessage, rtps_ok: bool, channel: str | None) -> None:
        self._require(src, rtps_ok, channel, "metadata")
        topic = self.remote_writers.get((src, data.writer_id))
        if topic is None:
            raise PolicyError("sample from an unmatched writer")
        reader = self.readers.get(topic)
        if reader is None or reader.entity != data.reader_id:
            raise PolicyError("sample addressed to no local reader")
        payload = data.payload
        if self.kinds["data"] is not TransformationKind.NONE:
            ch, mat = self._rx_material(src, peek_header(payload).key_id)
            if ch != "data":
                raise AuthenticationFailed("payload protected under a non-data key")
            payload = unprotect_payload(payload, mat, self.provider)
        reader.samples.append(Sample(topic, payload, Guid(src, data.writer_id), data.sequence))
