"""Fixture tree generation: CAs, participant credentials, policies, property file.

Layout under the fixture root::

    secure_hello_qos.xml                 property file
    security/                            what the property file points at
    adversary/                           same-CA credentials held by the attacker
    rogue/                               credentials from a foreign CA (control)
    ca/                                  CA private keys
    lib/libddscrypto.py[.ima]            provider artifact and its signature
    attestation/                         attestation and file-signing keys
"""
from __future__ import annotations

import hashlib
import logging
from dataclasses import dataclass
from pathlib import Path

from ..attestation.ima import ima_keyid, sign_digest
from ..auth.certs import Certificate, issue_certificate, self_signed_ca
from ..auth.policy import ALLOW, DENY, GovernancePolicy, PermissionsGrant, Rule, write_signed
from ..config import (
    CA_FILE,
    CERTIFICATE_FILE,
    CREATE_FUNCTION,
    GOVERNANCE_FILE,
    LIBRARY,
    PERMISSIONS_CA_FILE,
    PERMISSIONS_FILE,
    PRIVATE_KEY_FILE,
    AdversaryPaths,
    Profile,
    PropertyConfig,
    write_property_file,
)
from ..crypto.keys import SigningAlgorithm, SigningKeyPair, load_private_key_pem
from ..crypto.provider import CryptoProvider
from ..errors import FixtureMissing
from ..rng import Rng

log = logging.getLogger(__name__)

PROPERTY_FILE = "secure_hello_qos.xml"
LIBRARY_FILE = "lib/libddscrypto.py"
HELLO_TOPIC = "HelloTopic"
CAMERA_TOPIC = "CameraFrames"

IDENTITY_CA = "CN=DDS Identity CA"
PERMISSIONS_CA = "CN=DDS Permissions CA"
ROGUE_CA = "CN=Rogue CA"

HONEST_LIBRARY = '''"""Cryptographic provider library loaded by the security plugins."""
from ddssec.crypto.provider import CryptoProvider


def create_provider():
    return CryptoProvider()
'''

SPY_LIBRARY = '''"""Cryptographic provider library loaded by the security plugins."""
from ddssec.crypto.provider import CryptoProvider
from ddssec.crypto.transcript import {sink_class}, transcript_wrap

# one instance per process, like a shared object mapped once
_PROVIDER = transcript_wrap(CryptoProvider(), {sink_class}({sink_args}))


def create_provider():
    return _PROVIDER
'''


@dataclass(frozen=True)
class ParticipantCred:
    name: str
    directory: str
    cert: str
    key: str
    permissions: str


def _cred_paths(directory: str, name: str) -> ParticipantCred:
    return ParticipantCred(
        name, directory,
        f"{directory}/DP_{name}_cert.pem",
        f"{directory}/DP_{name}_key.pem",
        f"{directory}/signed_DP_{name}_permissions.xml",
    )


PUBLISHER = _cred_paths("security", "HelloPublisher")
SUBSCRIBER = _cred_paths("security", "HelloSubscriber")
OBSERVER = _cred_paths("security", "HelloObserver")
MALLORY = _cred_paths("adversary", "Mallory")
ROGUE = _cred_paths("rogue", "Rogue")

ADVERSARY_PATHS = AdversaryPaths(MALLORY.cert, MALLORY.key, MALLORY.permissions)
ROGUE_PATHS = AdversaryPaths(ROGUE.cert, ROGUE.key, ROGUE.permissions)


def _grants() -> dict[str, tuple[Rule, ...]]:
    return {
        "HelloPublisher": (Rule(ALLOW, "publish", "Hello*"), Rule(ALLOW, "publish", "Camera*")),
        "HelloSubscriber": (Rule(ALLOW, "subscribe", "Hello*"), Rule(ALLOW, "subscribe", "Camera*")),
        "HelloObserver": (Rule(DENY, "subscribe", "Hello*"), Rule(ALLOW, "subscribe", "*Status")),
        # what an attacker can obtain from the same permissions authority
        "Mallory": (Rule(ALLOW, "subscribe", "*"), Rule(ALLOW, "publish", "*")),
        "Rogue": (Rule(ALLOW, "subscribe", "*"), Rule(ALLOW, "publish", "*")),
    }


def base_property_config(plugin_library: str = "ddssecurity") -> PropertyConfig:
    shared = [
        (LIBRARY, plugin_library),
        (CREATE_FUNCTION, "DDSSEC_PluginSuite_create"),
        (CA_FILE, "security/cacert.pem"),
        (PERMISSIONS_CA_FILE, "security/permissions_cacert.pem"),
        (GOVERNANCE_FILE, "security/signed_Governance.xml"),
    ]

    def role(name: str, cred: ParticipantCred, default: bool = False) -> Profile:
        return Profile(name, "SecureProfile", default, [
            (CERTIFICATE_FILE, cred.cert),
            (PRIVATE_KEY_FILE, cred.key),
            (PERMISSIONS_FILE, cred.permissions),
        ])

    return PropertyConfig([
        Profile("SecureProfile", None, False, shared),
        role("SecureProfilePublisher", PUBLISHER, default=True),
        role("SecureProfileSubscriber", SUBSCRIBER),
        role("SecureProfileObserver", OBSERVER),
    ], "SecureHelloLibrary")


class FixtureTree:
    """Paths and key loading for a generated fixture root."""

    def __init__(self, root: str | Path):
        self.root = Path(root)

    def path(self, rel: str) -> Path:
        return self.root / rel

    @property
    def property_file(self) -> Path:
        return self.root / PROPERTY_FILE

    @property
    def library(self) -> Path:
        return self.root / LIBRARY_FILE

    @property
    def library_sidecar(self) -> Path:
        return self.library.with_name(self.library.name + ".ima")

    def require(self) -> None:
        for p in (self.property_file, self.library, self.path("ca/permissions_ca_key.pem")):
            if not p.exists():
                raise FixtureMissing(f"{p} missing; run keygen first")

    def key(self, rel: str) -> SigningKeyPair:
        p = self.path(rel)
        if not p.exists():
            raise FixtureMissing(f"{p} missing")
        return load_private_key_pem(p.read_bytes())

    def cert(self, rel: str) -> Certificate:
        return Certificate.from_pem(self.path(rel).read_bytes())

    @property
    def attestation_key(self) -> SigningKeyPair:
        return self.key("attestation/ak_key.pem")

    @property
    def vendor_key(self) -> SigningKeyPair:
        return self.key("attestation/vendor_key.pem")

    def spy_library_source(self, sink: str = "file", endpoint: str | Path = "") -> str:
        if sink == "file":
            return SPY_LIBRARY.format(sink_class="HexDumpFileSink", sink_args=repr(str(endpoint)))
        if sink == "stream":
            host, _, port = str(endpoint).rpartition(":")
            return SPY_LIBRARY.format(sink_class="StreamSink", sink_args=f"{host!r}, {int(port)}")
        raise ValueError(f"unknown sink kind {sink!r}")


def _write(path: Path, data: bytes | str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    if isinstance(data, str):
        data = data.encode()
    path.write_bytes(data)


def generate_fixtures(
    root: str | Path,
    seed: int = 0,
    force: bool = False,
    algorithm: SigningAlgorithm = SigningAlgorithm.ECDSA_P256,
    governance: GovernancePolicy | None = None,
) -> FixtureTree:
    tree = FixtureTree(root)
    if tree.property_file.exists() and not force:
        raise FileExistsError(f"{tree.property_file} exists; pass force=True to overwrite")
    provider = CryptoProvider()
    rng = Rng(seed)

    def keypair(label: str) -> SigningKeyPair:
        return provider.generate_signing_key(algorithm, rng.child(f"key:{label}"))

    id_key, perm_key, rogue_key = keypair("identity-ca"), keypair("permissions-ca"), keypair("rogue-ca")
    id_ca = self_signed_ca(IDENTITY_CA, id_key, provider, rng.child("sig:identity-ca"))
    perm_ca = self_signed_ca(PERMISSIONS_CA, perm_key, provider, rng.child("sig:permissions-ca"))
    rogue_ca = self_signed_ca(ROGUE_CA, rogue_key, provider, rng.child("sig:rogue-ca"))
    _write(tree.path("security/cacert.pem"), id_ca.to_pem())
    _write(tree.path("security/permissions_cacert.pem"), perm_ca.to_pem())
    _write(tree.path("rogue/cacert.pem"), rogue_ca.to_pem())
    _write(tree.path("ca/identity_ca_key.pem"), id_key.to_pem())
    _write(tree.path("ca/permissions_ca_key.pem"), perm_key.to_pem())
    _write(tree.path("ca/rogue_ca_key.pem"), rogue_key.to_pem())

    governance = governance or GovernancePolicy()
    write_signed(tree.path("security/signed_Governance.xml"), governance.to_xml(), perm_key, provider,
                 rng.child("sig:governance"))

    grants = _grants()
    for serial, cred in enumerate((PUBLISHER, SUBSCRIBER, OBSERVER, MALLORY, ROGUE), start=2):
        foreign = cred is ROGUE
        ca_key, ca_cert = (rogue_key, rogue_ca) if foreign else (id_key, id_ca)
        pca_key = rogue_key if foreign else perm_key
        k = keypair(cred.name)
        subject = f"CN={cred.name}"
        cert = issue_certificate(subject, k.public, ca_key, ca_cert.subject, provider, serial=serial,
                                 rng=rng.child(f"sig:cert:{cred.name}"))
        _write(tree.path(cred.cert), cert.to_pem())
        _write(tree.path(cred.key), k.to_pem())
        grant = PermissionsGrant(subject, governance.domain_id, grants[cred.name], DENY, f"{cred.name}Grant")
        write_signed(tree.path(cred.permissions), grant.to_xml(), pca_key, provider,
                     rng.child(f"sig:perm:{cred.name}"))

    write_property_file(base_property_config(), tree.property_file)

    ak, vendor = keypair("attestation"), keypair("vendor")
    _write(tree.path("attestation/ak_key.pem"), ak.to_pem())
    _write(tree.path("attestation/ak_pub.pem"), ak.public_pem())
    _write(tree.path("attestation/vendor_key.pem"), vendor.to_pem())
    _write(tree.path("attestation/vendor_pub.pem"), vendor.public_pem())
    install_library(tree, HONEST_LIBRARY, sign_with=vendor)
    log.info("fixture tree written to %s", tree.root)
    return tree


def install_library(tree: FixtureTree, source: str, sign_with: SigningKeyPair | None = None) -> None:
    """Place a provider artifact; a vendor key also refreshes its ``.ima`` signature."""
    _write(tree.library, source)
    if sign_with is not None:
        digest = hashlib.sha256(source.encode()).digest()
        _write(tree.library_sidecar, sign_digest(digest, sign_with, CryptoProvider()))


def vendor_keyid(tree: FixtureTree) -> bytes:
    return ima_keyid(tree.vendor_key.public)
