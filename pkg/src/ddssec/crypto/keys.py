"""Key containers, seeded key generation and PEM handling."""
from __future__ import annotations

import enum
import hashlib
from dataclasses import dataclass, field

from cryptography.hazmat.primitives import serialization
from cryptography.hazmat.primitives.asymmetric import ec, rsa

from ..errors import MalformedKey, MalformedPem, UnsupportedAlgorithm, WrongKind
from ..rng import Rng
from . import modp

P256_ORDER = 0xFFFFFFFF00000000FFFFFFFFFFFFFFFFBCE6FAADA7179E84F3B9CAC2FC632551
RSA_BITS = 2048
RSA_EXPONENT = 65537


class SigningAlgorithm(enum.Enum):
    RSASSA_PSS_2048 = "RSASSA-PSS-SHA256"
    ECDSA_P256 = "ECDSA-SHA256"


class AgreementAlgorithm(enum.Enum):
    ECDH_P256 = "ECDH+prime256v1-CEUM"
    DH_2048_MODP = "DH+MODP-2048"


class TransformationKind(enum.IntEnum):
    NONE = 0
    AES128_GMAC = 1
    AES128_GCM = 2
    AES256_GMAC = 3
    AES256_GCM = 4

    def encode(self) -> bytes:
        return int(self).to_bytes(4, "big")

    @classmethod
    def decode(cls, raw: bytes) -> "TransformationKind":
        if len(raw) != 4:
            raise ValueError("transformation kind is 4 bytes")
        return cls(int.from_bytes(raw, "big"))

    @property
    def key_length(self) -> int:
        if self is TransformationKind.NONE:
            return 0
        return 16 if self in (TransformationKind.AES128_GMAC, TransformationKind.AES128_GCM) else 32

    @property
    def is_gcm(self) -> bool:
        return self in (TransformationKind.AES128_GCM, TransformationKind.AES256_GCM)

    @property
    def is_gmac(self) -> bool:
        return self in (TransformationKind.AES128_GMAC, TransformationKind.AES256_GMAC)


@dataclass(frozen=True)
class SigningKeyPair:
    algorithm: SigningAlgorithm
    private: bytes | None  # PKCS#8 DER
    public: bytes  # SubjectPublicKeyInfo DER

    def private_key(self):
        if self.private is None:
            raise MalformedKey("no private half")
        try:
            return serialization.load_der_private_key(self.private, password=None)
        except ValueError as exc:
            raise MalformedKey(str(exc)) from exc

    @property
    def key_id(self) -> bytes:
        return hashlib.sha256(self.public).digest()[:8]

    def public_only(self) -> "SigningKeyPair":
        return SigningKeyPair(self.algorithm, None, self.public)

    def to_pem(self, passphrase: bytes | None = None) -> bytes:
        enc = (
            serialization.BestAvailableEncryption(passphrase)
            if passphrase
            else serialization.NoEncryption()
        )
        return self.private_key().private_bytes(
            serialization.Encoding.PEM, serialization.PrivateFormat.PKCS8, enc
        )

    def public_pem(self) -> bytes:
        return public_key_object(self.public).public_bytes(
            serialization.Encoding.PEM, serialization.PublicFormat.SubjectPublicKeyInfo
        )


@dataclass
class EphemeralKeyPair:
    algorithm: AgreementAlgorithm
    private: int | None = field(repr=False)
    public: bytes = b""

    def erase(self) -> None:
        self.private = None


@dataclass(frozen=True)
class SharedSecret:
    data: bytes = field(repr=False)
    origin: tuple[str, str] = ("", "")

    def __post_init__(self):
        if len(self.data) != 32:
            raise ValueError("shared secret must be 32 bytes")


@dataclass(frozen=True)
class AeadKey:
    data: bytes = field(repr=False)
    kind: TransformationKind

    def __post_init__(self):
        if self.kind is TransformationKind.NONE:
            raise WrongKind("NONE carries no key")
        if len(self.data) != self.kind.key_length:
            raise ValueError(f"{self.kind.name} needs a {self.kind.key_length}-byte key")


def _classify(key) -> SigningAlgorithm:
    if isinstance(key, (rsa.RSAPrivateKey, rsa.RSAPublicKey)):
        if key.key_size != RSA_BITS:
            raise UnsupportedAlgorithm(f"RSA-{key.key_size}")
        return SigningAlgorithm.RSASSA_PSS_2048
    if isinstance(key, (ec.EllipticCurvePrivateKey, ec.EllipticCurvePublicKey)):
        if not isinstance(key.curve, ec.SECP256R1):
            raise UnsupportedAlgorithm(key.curve.name)
        return SigningAlgorithm.ECDSA_P256
    raise UnsupportedAlgorithm(type(key).__name__)


def public_key_object(public: bytes):
    try:
        return serialization.load_der_public_key(public)
    except (ValueError, TypeError) as exc:
        raise MalformedKey(f"unparseable public key: {exc}") from exc


def algorithm_of_public(public: bytes) -> SigningAlgorithm:
    return _classify(public_key_object(public))


def keypair_from_private_object(key) -> SigningKeyPair:
    alg = _classify(key)
    return SigningKeyPair(
        alg,
        key.private_bytes(
            serialization.Encoding.DER,
            serialization.PrivateFormat.PKCS8,
            serialization.NoEncryption(),
        ),
        key.public_key().public_bytes(
            serialization.Encoding.DER, serialization.PublicFormat.SubjectPublicKeyInfo
        ),
    )


# -- seeded generation -------------------------------------------------------

_SMALL_PRIMES = [p for p in range(3, 2000) if all(p % d for d in range(2, int(p**0.5) + 1))]


def _probably_prime(n: int, rng: Rng, rounds: int = 40) -> bool:
    if n < 2:
        return False
    for sp in _SMALL_PRIMES:
        if n % sp == 0:
            return n == sp
    d, r = n - 1, 0
    while d % 2 == 0:
        d //= 2
        r += 1
    for _ in range(rounds):
        a = 2 + rng.randbelow(n - 3)
        x = pow(a, d, n)
        if x in (1, n - 1):
            continue
        for _ in range(r - 1):
            x = pow(x, 2, n)
            if x == n - 1:
                break
        else:
            return False
    return True


def _random_prime(bits: int, rng: Rng) -> int:
    while True:
        cand = int.from_bytes(rng.bytes(bits // 8), "big")
        cand |= (1 << (bits - 1)) | (1 << (bits - 2)) | 1
        if (cand - 1) % RSA_EXPONENT and _probably_prime(cand, rng):
            return cand


def _seeded_rsa(rng: Rng) -> rsa.RSAPrivateKey:
    while True:
        p = _random_prime(RSA_BITS // 2, rng)
        q = _random_prime(RSA_BITS // 2, rng)
        if p != q and (p * q).bit_length() == RSA_BITS:
            break
    if p < q:
        p, q = q, p
    phi = (p - 1) * (q - 1)
    d = pow(RSA_EXPONENT, -1, phi)
    numbers = rsa.RSAPrivateNumbers(
        p=p,
        q=q,
        d=d,
        dmp1=rsa.rsa_crt_dmp1(d, p),
        dmq1=rsa.rsa_crt_dmq1(d, q),
        iqmp=rsa.rsa_crt_iqmp(p, q),
        public_numbers=rsa.RSAPublicNumbers(RSA_EXPONENT, p * q),
    )
    return numbers.private_key()


def generate_signing_key(
    algorithm: SigningAlgorithm = SigningAlgorithm.ECDSA_P256, rng: Rng | None = None
) -> SigningKeyPair:
    rng = rng or Rng()
    if algorithm is SigningAlgorithm.ECDSA_P256:
        scalar = 1 + rng.randbelow(P256_ORDER - 1)
        return keypair_from_private_object(ec.derive_private_key(scalar, ec.SECP256R1()))
    if algorithm is SigningAlgorithm.RSASSA_PSS_2048:
        if rng.deterministic:
            key = _seeded_rsa(rng)
        else:
            key = rsa.generate_private_key(public_exponent=RSA_EXPONENT, key_size=RSA_BITS)
        return keypair_from_private_object(key)
    raise UnsupportedAlgorithm(str(algorithm))


def generate_ephemeral(
    algorithm: AgreementAlgorithm = AgreementAlgorithm.ECDH_P256, rng: Rng | None = None
) -> EphemeralKeyPair:
    rng = rng or Rng()
    if algorithm is AgreementAlgorithm.ECDH_P256:
        scalar = 1 + rng.randbelow(P256_ORDER - 1)
        pub = ec.derive_private_key(scalar, ec.SECP256R1()).public_key()
        return EphemeralKeyPair(
            algorithm,
            scalar,
            pub.public_bytes(
                serialization.Encoding.X962, serialization.PublicFormat.UncompressedPoint
            ),
        )
    if algorithm is AgreementAlgorithm.DH_2048_MODP:
        x = 2 + rng.randbelow((1 << modp.EXPONENT_BITS) - 2)
        y = pow(modp.G, x, modp.P)
        return EphemeralKeyPair(algorithm, x, y.to_bytes(modp.ELEMENT_BYTES, "big"))
    raise UnsupportedAlgorithm(str(algorithm))


# -- PEM -----------------------------------------------------------------------

def pem_label(data: bytes) -> str | None:
    for line in data.splitlines():
        line = line.strip()
        if line.startswith(b"-----BEGIN ") and line.endswith(b"-----"):
            return line[len(b"-----BEGIN "):-5].decode("ascii", "replace")
    return None


def load_private_key_pem(data: bytes, passphrase: bytes | None = None) -> SigningKeyPair:
    label = pem_label(data)
    if label is None or "PRIVATE KEY" not in label:
        raise MalformedPem(f"expected a PEM private key, found {label or 'no PEM block'}")
    try:
        key = serialization.load_pem_private_key(data, password=passphrase)
    except (ValueError, TypeError) as exc:
        raise MalformedPem(str(exc)) from exc
    try:
        return keypair_from_private_object(key)
    except UnsupportedAlgorithm as exc:
        raise MalformedPem(f"unsupported key type: {exc}") from exc


def load_public_key_pem(data: bytes) -> bytes:
    try:
        key = serialization.load_pem_public_key(data)
    except ValueError as exc:
        raise MalformedPem(str(exc)) from exc
    return key.public_bytes(
        serialization.Encoding.DER, serialization.PublicFormat.SubjectPublicKeyInfo
    )
