"""Three-message mutual authentication with ephemeral key agreement.

Request -> Reply -> Final. Each token carries the sender's certificate (first
two tokens), its signed permissions, an ephemeral public value and a
challenge, and is signed over the canonical encoding of every other field.
On completion both sides hold the same shared secret and mirrored key
material for every protected channel.
"""
from __future__ import annotations

import enum
import logging
from dataclasses import dataclass, field, replace

from ..codec.rtps import Guid
from ..codec.tables import ENTITYID_PARTICIPANT
from ..crypto.keys import (
    AgreementAlgorithm,
    EphemeralKeyPair,
    SharedSecret,
    SigningKeyPair,
    TransformationKind,
)
from ..errors import (
    BadSignature,
    BadTokenSignature,
    ChallengeMismatch,
    DdsSecError,
    HandshakeError,
    PolicyError,
    StateViolation,
    UnsupportedAlgorithm,
)
from ..rng import Rng
from .certs import Certificate, canonical, parse_canonical, validate_certificate
from .keymat import KeyMaterial, derive_key_material
from .policy import PermissionsGrant, SignedDocument, check_permission

log = logging.getLogger(__name__)

CHALLENGE_LEN = 32
TOKEN_MAGIC = b"DSHK"

# key ids per protected channel; identical on both sides of a session
CHANNEL_KEY_IDS = {
    "rtps": 1,
    "metadata": 2,
    "data": 3,
    "discovery": 4,
    "liveliness": 5,
    "volatile": 6,
}
REKEY_BASE = 0x100


class State(enum.Enum):
    IDLE = "IDLE"
    REQUEST_SENT = "REQUEST_SENT"
    REPLY_SENT = "REPLY_SENT"
    ESTABLISHED = "ESTABLISHED"
    FAILED = "FAILED"


class TokenKind(enum.IntEnum):
    REQUEST = 1
    REPLY = 2
    FINAL = 3


CLASS_IDS = {
    TokenKind.REQUEST: b"DDS:Auth:PKI-DH:1.0+Req",
    TokenKind.REPLY: b"DDS:Auth:PKI-DH:1.0+Reply",
    TokenKind.FINAL: b"DDS:Auth:PKI-DH:1.0+Final",
}


@dataclass(frozen=True)
class HandshakeToken:
    kind: TokenKind
    fields: tuple[tuple[str, bytes], ...]

    def get(self, name: str) -> bytes:
        for k, v in self.fields:
            if k == name:
                return v
        raise BadTokenSignature(f"{self.kind.name} token lacks field {name!r}")

    @property
    def names(self) -> list[str]:
        return [k for k, _ in self.fields]

    def signed_bytes(self) -> bytes:
        body = [(k, v) for k, v in self.fields if k != "signature"]
        return bytes([self.kind]) + canonical(body)

    def with_field(self, name: str, value: bytes) -> "HandshakeToken":
        return replace(self, fields=tuple((k, value if k == name else v) for k, v in self.fields))

    def encode(self) -> bytes:
        return TOKEN_MAGIC + bytes([self.kind]) + canonical(list(self.fields))

    @classmethod
    def decode(cls, raw: bytes) -> "HandshakeToken":
        if raw[:4] != TOKEN_MAGIC or len(raw) < 5:
            raise BadTokenSignature("not a handshake token")
        try:
            kind = TokenKind(raw[4])
            fields = parse_canonical(raw[5:])
        except ValueError as exc:
            raise BadTokenSignature(f"malformed token: {exc}") from exc
        return cls(kind, tuple(fields))


@dataclass
class LocalIdentity:
    guid_prefix: bytes
    certificate: Certificate
    key: SigningKeyPair
    permissions: SignedDocument


@dataclass(frozen=True)
class TrustAnchors:
    identity_ca: Certificate
    permissions_ca: Certificate


@dataclass(frozen=True)
class PeerIdentity:
    guid_prefix: bytes
    certificate: Certificate
    grant: PermissionsGrant

    @property
    def subject(self) -> str:
        return self.certificate.subject


@dataclass
class HandshakeSession:
    local: LocalIdentity
    anchors: TrustAnchors
    provider: object
    peer_guid_prefix: bytes
    kinds: dict[str, TransformationKind] = field(default_factory=dict)
    algorithm: AgreementAlgorithm = AgreementAlgorithm.ECDH_P256
    rng: Rng = field(default_factory=Rng)
    domain_id: int = 0
    now: float | None = None
    state: State = State.IDLE
    local_ephemeral: EphemeralKeyPair | None = None
    peer: PeerIdentity | None = None
    challenge1: bytes | None = None
    challenge2: bytes | None = None
    peer_ephemeral_public: bytes | None = None
    shared_secret: SharedSecret | None = field(default=None, repr=False)
    derived: dict[str, KeyMaterial] = field(default_factory=dict, repr=False)
    error: str | None = None
    _rekeys: int = 0

    @property
    def is_initiator(self) -> bool:
        return self.local.guid_prefix < self.peer_guid_prefix

    @property
    def initiator_prefix(self) -> bytes:
        return self.local.guid_prefix if self.is_initiator else self.peer_guid_prefix

    @property
    def responder_prefix(self) -> bytes:
        return self.peer_guid_prefix if self.is_initiator else self.local.guid_prefix

    def peer_allows(self, topic: str, action: str) -> bool:
        if self.peer is None:
            return False
        return check_permission(self.peer.grant, topic, action) == "allow"

    def rekey(self, channel: str = "data") -> KeyMaterial:
        """Fresh material for ``channel``; both peers calling this in step agree."""
        if self.state is not State.ESTABLISHED or self.shared_secret is None:
            raise StateViolation("rekey needs an established session")
        self._rekeys += 1
        key_id = (REKEY_BASE + self._rekeys).to_bytes(4, "big")
        mat = _derive(self, channel, key_id, self.derived[channel].kind)
        self.derived[channel] = mat
        return mat


def new_session(local, anchors, provider, peer_guid_prefix, kinds, rng=None, **kw) -> HandshakeSession:
    return HandshakeSession(local, anchors, provider, peer_guid_prefix, dict(kinds), rng=rng or Rng(), **kw)


def _sign(session: HandshakeSession, kind: TokenKind, fields: list[tuple[str, bytes]]) -> HandshakeToken:
    unsigned = HandshakeToken(kind, tuple([("class_id", CLASS_IDS[kind])] + fields))
    sig = session.provider.sign(session.local.key, unsigned.signed_bytes(), session.rng)
    return HandshakeToken(kind, unsigned.fields + (("signature", sig),))


def _identity_fields(session: HandshakeSession) -> list[tuple[str, bytes]]:
    perms = session.local.permissions
    return [
        ("guid", session.local.guid_prefix),
        ("cert", session.local.certificate.encode()),
        ("perm", perms.document),
        ("perm_sig", perms.signature),
        ("algo", session.algorithm.value.encode()),
    ]


def _check_signature(session: HandshakeSession, token: HandshakeToken, public: bytes) -> None:
    if not session.provider.verify(public, token.signed_bytes(), token.get("signature")):
        raise BadTokenSignature(f"{token.kind.name} signature does not verify")
    if token.get("class_id") != CLASS_IDS[token.kind]:
        raise BadTokenSignature("class id does not match token kind")


def _authenticate_peer(session: HandshakeSession, token: HandshakeToken) -> PeerIdentity:
    if token.get("guid") != session.peer_guid_prefix:
        raise HandshakeError("token comes from an unexpected participant")
    cert = Certificate.decode(token.get("cert"))
    validate_certificate(cert, session.anchors.identity_ca, session.provider, session.now)
    _check_signature(session, token, cert.public_key)
    perms = SignedDocument(token.get("perm"), token.get("perm_sig"))
    if not perms.verify(session.anchors.permissions_ca, session.provider):
        raise BadSignature("permissions are not signed by the permissions CA")
    grant = PermissionsGrant.from_xml(perms.document)
    if grant.subject_name != cert.subject:
        raise PolicyError(f"grant for {grant.subject_name!r} presented by {cert.subject!r}")
    if grant.domain_id != session.domain_id:
        raise PolicyError(f"grant is for domain {grant.domain_id}, not {session.domain_id}")
    try:
        algo = AgreementAlgorithm(token.get("algo").decode())
    except (ValueError, UnicodeDecodeError):
        raise UnsupportedAlgorithm("peer proposes an unknown agreement algorithm") from None
    if algo is not session.algorithm:
        raise UnsupportedAlgorithm(f"peer proposes {algo.value}, local policy is {session.algorithm.value}")
    return PeerIdentity(token.get("guid"), cert, grant)


def _expect(actual: bytes, expected: bytes | None, what: str) -> None:
    if expected is None or actual != expected:
        raise ChallengeMismatch(f"{what} echo does not match")


def _derive(session: HandshakeSession, channel: str, key_id: bytes, kind: TransformationKind) -> KeyMaterial:
    initiator = Guid(session.initiator_prefix, ENTITYID_PARTICIPANT)
    responder = Guid(session.responder_prefix, ENTITYID_PARTICIPANT)
    mat = derive_key_material(session.shared_secret, initiator, responder, key_id, kind, session.provider)
    return mat if session.is_initiator else mat.mirrored()


def _establish(session: HandshakeSession) -> None:
    session.shared_secret = session.provider.key_agree(
        session.local_ephemeral,
        session.peer_ephemeral_public,
        (session.initiator_prefix.hex(), session.responder_prefix.hex()),
    )
    session.local_ephemeral.erase()
    kinds = dict(session.kinds)
    kinds["volatile"] = TransformationKind.AES256_GCM
    for channel, key_num in CHANNEL_KEY_IDS.items():
        kind = kinds.get(channel, TransformationKind.AES256_GCM)
        session.derived[channel] = _derive(session, channel, key_num.to_bytes(4, "big"), kind)
    session.state = State.ESTABLISHED
    log.debug("session %s <-> %s established", session.local.guid_prefix.hex(), session.peer_guid_prefix.hex())


def _begin(session: HandshakeSession) -> HandshakeToken:
    session.local_ephemeral = session.provider.generate_ephemeral(session.algorithm, session.rng)
    session.challenge1 = session.rng.bytes(CHALLENGE_LEN)
    token = _sign(session, TokenKind.REQUEST, _identity_fields(session) + [
        ("dh1", session.local_ephemeral.public),
        ("challenge1", session.challenge1),
    ])
    session.state = State.REQUEST_SENT
    return token


def _on_request(session: HandshakeSession, token: HandshakeToken) -> HandshakeToken:
    session.peer = _authenticate_peer(session, token)
    session.peer_ephemeral_public = token.get("dh1")
    session.challenge1 = token.get("challenge1")
    if len(session.challenge1) != CHALLENGE_LEN:
        raise ChallengeMismatch("challenge has wrong length")
    session.local_ephemeral = session.provider.generate_ephemeral(session.algorithm, session.rng)
    session.challenge2 = session.rng.bytes(CHALLENGE_LEN)
    reply = _sign(session, TokenKind.REPLY, _identity_fields(session) + [
        ("dh2", session.local_ephemeral.public),
        ("dh1", session.peer_ephemeral_public),
        ("challenge1", session.challenge1),
        ("challenge2", session.challenge2),
    ])
    session.state = State.REPLY_SENT
    return reply


def _on_reply(session: HandshakeSession, token: HandshakeToken) -> HandshakeToken:
    session.peer = _authenticate_peer(session, token)
    _expect(token.get("dh1"), session.local_ephemeral.public, "dh1")
    _expect(token.get("challenge1"), session.challenge1, "challenge1")
    session.challenge2 = token.get("challenge2")
    if len(session.challenge2) != CHALLENGE_LEN:
        raise ChallengeMismatch("challenge has wrong length")
    session.peer_ephemeral_public = token.get("dh2")
    final = _sign(session, TokenKind.FINAL, [
        ("guid", session.local.guid_prefix),
        ("dh1", session.local_ephemeral.public),
        ("dh2", session.peer_ephemeral_public),
        ("challenge1", session.challenge1),
        ("challenge2", session.challenge2),
    ])
    _establish(session)
    return final


def _on_final(session: HandshakeSession, token: HandshakeToken) -> None:
    if token.get("guid") != session.peer_guid_prefix:
        raise HandshakeError("token comes from an unexpected participant")
    _check_signature(session, token, session.peer.certificate.public_key)
    _expect(token.get("dh1"), session.peer_ephemeral_public, "dh1")
    _expect(token.get("dh2"), session.local_ephemeral.public, "dh2")
    _expect(token.get("challenge1"), session.challenge1, "challenge1")
    _expect(token.get("challenge2"), session.challenge2, "challenge2")
    _establish(session)


_EXPECTED = {
    (State.IDLE, None): "begin",
    (State.IDLE, TokenKind.REQUEST): "request",
    (State.REQUEST_SENT, TokenKind.REPLY): "reply",
    (State.REPLY_SENT, TokenKind.FINAL): "final",
}


def handshake_step(
    session: HandshakeSession, incoming: HandshakeToken | bytes | None
) -> tuple[HandshakeSession, HandshakeToken | None]:
    """Advance the state machine by one token.

    Out-of-order and replayed tokens raise StateViolation and leave the
    session as it was, so a stray token cannot tear down a live session.
    Any other failure moves the session to FAILED and re-raises.
    """
    if isinstance(incoming, (bytes, bytearray)):
        incoming = HandshakeToken.decode(bytes(incoming))
    kind = None if incoming is None else incoming.kind
    step = _EXPECTED.get((session.state, kind))
    if step == "begin" and not session.is_initiator:
        return session, None  # the smaller prefix speaks first
    if step == "request" and session.is_initiator:
        step = None
    if step is None:
        raise StateViolation(f"{kind.name if kind else 'no token'} not acceptable in state {session.state.name}")
    try:
        if step == "begin":
            out = _begin(session)
        elif step == "request":
            out = _on_request(session, incoming)
        elif step == "reply":
            out = _on_reply(session, incoming)
        else:
            _on_final(session, incoming)
            out = None
    except DdsSecError as exc:
        session.state = State.FAILED
        session.error = f"{type(exc).__name__}: {exc}"
        session.shared_secret = None
        session.derived.clear()
        raise
    return session, out


def run_handshake(a: HandshakeSession, b: HandshakeSession) -> None:
    """Drive two in-memory sessions to completion (tests and tooling)."""
    first, second = (a, b) if a.is_initiator else (b, a)
    _, req = handshake_step(first, None)
    _, rep = handshake_step(second, req.encode())
    _, fin = handshake_step(first, rep.encode())
    handshake_step(second, fin.encode())

