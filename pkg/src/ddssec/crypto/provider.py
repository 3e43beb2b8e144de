"""The cryptographic provider: every primitive the security plugins call.

Participants never touch a crypto library directly; they go through a
provider object. That indirection is the attack surface the spy wrapper in
:mod:`ddssec.crypto.transcript` exploits, the same way a swapped shared
library sits underneath a vendor plugin.
"""
from __future__ import annotations

import hashlib
import hmac

from cryptography.exceptions import InvalidSignature, InvalidTag
from cryptography.hazmat.primitives import hashes
from cryptography.hazmat.primitives.asymmetric import ec, padding, rsa
from cryptography.hazmat.primitives.ciphers.aead import AESGCM

from ..errors import (
    AuthenticationFailed,
    EmptyKey,
    InvalidPeerPublic,
    MalformedKey,
    UnsupportedAlgorithm,
    WrongKind,
)
from ..rng import Rng
from . import keys, modp
from .keys import (
    AeadKey,
    AgreementAlgorithm,
    EphemeralKeyPair,
    SharedSecret,
    SigningAlgorithm,
    SigningKeyPair,
)

NONCE_LEN = 12
TAG_LEN = 16
DIGEST_LEN = 32
PSS_SALT_LEN = DIGEST_LEN


def _mgf1(seed: bytes, length: int) -> bytes:
    out = b""
    counter = 0
    while len(out) < length:
        out += hashlib.sha256(seed + counter.to_bytes(4, "big")).digest()
        counter += 1
    return out[:length]


def emsa_pss_encode(message: bytes, em_bits: int, salt: bytes) -> bytes:
    """EMSA-PSS encoding with SHA-256 and MGF1-SHA-256."""
    em_len = (em_bits + 7) // 8
    m_hash = hashlib.sha256(message).digest()
    if em_len < DIGEST_LEN + len(salt) + 2:
        raise ValueError("encoding error: modulus too short")
    h = hashlib.sha256(b"\x00" * 8 + m_hash + salt).digest()
    db = b"\x00" * (em_len - len(salt) - DIGEST_LEN - 2) + b"\x01" + salt
    masked = bytes(a ^ b for a, b in zip(db, _mgf1(h, em_len - DIGEST_LEN - 1)))
    masked = bytes([masked[0] & (0xFF >> (8 * em_len - em_bits))]) + masked[1:]
    return masked + h + b"\xbc"


def _rsa_pss_sign(key: rsa.RSAPrivateKey, message: bytes, salt: bytes) -> bytes:
    numbers = key.private_numbers()
    n = numbers.public_numbers.n
    mod_bits = n.bit_length()
    em = emsa_pss_encode(message, mod_bits - 1, salt)
    m = int.from_bytes(em, "big")
    # CRT exponentiation
    s1 = pow(m, numbers.dmp1, numbers.p)
    s2 = pow(m, numbers.dmq1, numbers.q)
    s = s2 + ((numbers.iqmp * (s1 - s2)) % numbers.p) * numbers.q
    return s.to_bytes((mod_bits + 7) // 8, "big")


class CryptoProvider:
    """Honest provider backed by the ``cryptography`` package.

    Holds no mutable state, so one instance may serve many sessions at once.
    Randomness is supplied per call, which keeps the provider itself
    deterministic and makes seeded protocol runs reproducible.
    """

    name = "honest"

    # key generation is not one of the observed primitives
    def generate_signing_key(self, algorithm=SigningAlgorithm.ECDSA_P256, rng: Rng | None = None):
        return keys.generate_signing_key(algorithm, rng)

    def generate_ephemeral(self, algorithm=AgreementAlgorithm.ECDH_P256, rng: Rng | None = None):
        return keys.generate_ephemeral(algorithm, rng)

    def sign(self, key: SigningKeyPair, message: bytes, rng: Rng | None = None) -> bytes:
        if not message:
            raise ValueError("refusing to sign an empty message")
        priv = key.private_key()
        if key.algorithm is SigningAlgorithm.ECDSA_P256:
            if not isinstance(priv, ec.EllipticCurvePrivateKey):
                raise MalformedKey("algorithm tag says ECDSA but key is not EC")
            # RFC 6979 nonce: reproducible without an rng
            return priv.sign(message, ec.ECDSA(hashes.SHA256(), deterministic_signing=True))
        if key.algorithm is SigningAlgorithm.RSASSA_PSS_2048:
            if not isinstance(priv, rsa.RSAPrivateKey) or priv.key_size != keys.RSA_BITS:
                raise MalformedKey("algorithm tag says RSA-2048 but key disagrees")
            salt = (rng or Rng()).bytes(PSS_SALT_LEN)
            return _rsa_pss_sign(priv, message, salt)
        raise UnsupportedAlgorithm(str(key.algorithm))

    def verify(self, public: bytes, message: bytes, signature: bytes) -> bool:
        pub = keys.public_key_object(public)
        keys._classify(pub)
        try:
            if isinstance(pub, rsa.RSAPublicKey):
                pub.verify(
                    signature,
                    message,
                    padding.PSS(mgf=padding.MGF1(hashes.SHA256()), salt_length=PSS_SALT_LEN),
                    hashes.SHA256(),
                )
            else:
                pub.verify(signature, message, ec.ECDSA(hashes.SHA256()))
        except (InvalidSignature, ValueError):
            return False
        return True

    def key_agree(
        self, mine: EphemeralKeyPair, peer_public: bytes, origin: tuple[str, str] = ("", "")
    ) -> SharedSecret:
        if mine.private is None:
            raise MalformedKey("ephemeral private key already erased")
        if mine.algorithm is AgreementAlgorithm.ECDH_P256:
            try:
                peer = ec.EllipticCurvePublicKey.from_encoded_point(ec.SECP256R1(), peer_public)
            except ValueError as exc:
                raise InvalidPeerPublic(str(exc)) from exc
            local = ec.derive_private_key(mine.private, ec.SECP256R1())
            raw = local.exchange(ec.ECDH(), peer)  # x-coordinate
        elif mine.algorithm is AgreementAlgorithm.DH_2048_MODP:
            if len(peer_public) != modp.ELEMENT_BYTES:
                raise InvalidPeerPublic("group element has wrong length")
            y = int.from_bytes(peer_public, "big")
            if not modp.is_valid_element(y):
                raise InvalidPeerPublic("element outside the prime-order subgroup")
            raw = pow(y, mine.private, modp.P).to_bytes(modp.ELEMENT_BYTES, "big")
        else:
            raise UnsupportedAlgorithm(str(mine.algorithm))
        return SharedSecret(hashlib.sha256(raw).digest(), origin)

    def aead_encrypt(
        self, key: AeadKey, nonce: bytes, aad: bytes, plaintext: bytes
    ) -> tuple[bytes, bytes]:
        if not key.kind.is_gcm:
            raise WrongKind(f"{key.kind.name} cannot encrypt")
        _check_nonce(nonce)
        out = AESGCM(key.data).encrypt(nonce, plaintext, aad)
        return out[:-TAG_LEN], out[-TAG_LEN:]

    def aead_decrypt(
        self, key: AeadKey, nonce: bytes, aad: bytes, ciphertext: bytes, tag: bytes
    ) -> bytes:
        if not key.kind.is_gcm:
            raise WrongKind(f"{key.kind.name} cannot decrypt")
        _check_nonce(nonce)
        if len(tag) != TAG_LEN:
            raise AuthenticationFailed("tag has wrong length")
        try:
            return AESGCM(key.data).decrypt(nonce, ciphertext + tag, aad)
        except InvalidTag:
            raise AuthenticationFailed("GCM tag mismatch") from None

    def gmac(self, key: AeadKey, nonce: bytes, aad: bytes) -> bytes:
        if not key.kind.is_gmac:
            raise WrongKind(f"{key.kind.name} is not a GMAC kind")
        _check_nonce(nonce)
        return AESGCM(key.data).encrypt(nonce, b"", aad)

    def digest(self, message: bytes) -> bytes:
        return hashlib.sha256(message).digest()

    def mac(self, key: bytes, message: bytes) -> bytes:
        if not key:
            raise EmptyKey("HMAC key must be non-empty")
        return hmac.new(key, message, hashlib.sha256).digest()


def _check_nonce(nonce: bytes) -> None:
    if len(nonce) != NONCE_LEN:
        raise ValueError(f"nonce must be {NONCE_LEN} bytes, got {len(nonce)}")


def gmac_equal(expected: bytes, actual: bytes) -> bool:
    return hmac.compare_digest(expected, actual)
