from .keys import (
    AeadKey,
    AgreementAlgorithm,
    EphemeralKeyPair,
    SharedSecret,
    SigningAlgorithm,
    SigningKeyPair,
    TransformationKind,
)
from .provider import CryptoProvider
from .transcript import CryptoCallRecord, Primitive, TranscriptProvider, transcript_wrap

__all__ = [
    "AeadKey",
    "AgreementAlgorithm",
    "CryptoCallRecord",
    "CryptoProvider",
    "EphemeralKeyPair",
    "Primitive",
    "SharedSecret",
    "SigningAlgorithm",
    "SigningKeyPair",
    "TranscriptProvider",
    "TransformationKind",
    "transcript_wrap",
]
