"""Exception hierarchy shared by all subsystems."""


class DdsSecError(Exception):
    """Base class for every error raised by this package."""


# crypto provider
class CryptoError(DdsSecError):
    pass


class UnsupportedAlgorithm(CryptoError):
    pass


class MalformedKey(CryptoError):
    pass


class InvalidPeerPublic(CryptoError):
    pass


class WrongKind(CryptoError):
    pass


class AuthenticationFailed(CryptoError):
    pass


class EmptyKey(CryptoError):
    pass


# codec
class CodecError(DdsSecError):
    pass


class BadMagic(CodecError):
    pass


class TruncatedSubmessage(CodecError):
    pass


class LengthMismatch(CodecError):
    pass


class NonceExhausted(CodecError):
    pass


class WrongKindForLevel(CodecError):
    pass


class MissingPostfix(CodecError):
    pass


class UnknownKeyId(AuthenticationFailed):
    """No key material matches the key id carried on the wire.

    Subclasses AuthenticationFailed: an element whose key id was corrupted
    must be rejected the same way as any other tampering.
    """


class UnknownBuiltin(CodecError):
    pass


class UnknownPid(CodecError):
    pass


# authentication / access control
class HandshakeError(DdsSecError):
    pass


class BadSignature(HandshakeError):
    pass


class Expired(HandshakeError):
    pass


class UnknownIssuer(HandshakeError):
    pass


class BadTokenSignature(HandshakeError):
    pass


class StateViolation(HandshakeError):
    pass


class ChallengeMismatch(HandshakeError):
    pass


class PolicyError(DdsSecError):
    pass


# property configuration
class ConfigError(DdsSecError):
    pass


class MalformedXml(ConfigError):
    pass


class MissingRequiredKey(ConfigError):
    pass


class MalformedPem(ConfigError):
    pass


class CredentialFileNotFound(ConfigError, FileNotFoundError):
    pass


# harness
class HarnessError(DdsSecError):
    pass


class FixtureMissing(HarnessError):
    pass


class TransportFailure(HarnessError):
    pass


class KeyNotFound(HarnessError):
    pass


# attestation
class AttestationError(DdsSecError):
    pass


class IndexOutOfRange(AttestationError):
    pass
