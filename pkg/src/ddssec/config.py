"""Security property files: parsing, credential loading, masquerade, diff.

A property file is a QoS library whose profiles carry ``<element>`` name/value
pairs. Six of them name the credential files the security plugins load.
Nothing in this module checks whether the file or the credentials it points
at have been swapped; that gap is the point of the masquerade scenario.
"""
from __future__ import annotations

import hashlib
import xml.etree.ElementTree as ET
from dataclasses import dataclass, field, replace
from pathlib import Path

from .auth.certs import Certificate
from .auth.policy import SignedDocument
from .crypto.keys import SigningKeyPair, load_private_key_pem
from .errors import CredentialFileNotFound, MalformedXml, MissingRequiredKey

PREFIX = "com.rti.serv.secure."
LIBRARY = PREFIX + "library"
CREATE_FUNCTION = PREFIX + "create_function"
CA_FILE = PREFIX + "authentication.ca_file"
PERMISSIONS_CA_FILE = PREFIX + "access_control.permissions_authority_file"
GOVERNANCE_FILE = PREFIX + "access_control.governance_file"
CERTIFICATE_FILE = PREFIX + "authentication.certificate_file"
PRIVATE_KEY_FILE = PREFIX + "authentication.private_key_file"
PERMISSIONS_FILE = PREFIX + "access_control.permissions_file"

REQUIRED_KEYS = (
    CA_FILE,
    PERMISSIONS_CA_FILE,
    GOVERNANCE_FILE,
    CERTIFICATE_FILE,
    PRIVATE_KEY_FILE,
    PERMISSIONS_FILE,
)
PARTICIPANT_KEYS = (CERTIFICATE_FILE, PRIVATE_KEY_FILE, PERMISSIONS_FILE)

ROLE_PROFILES = {
    "publisher": "SecureProfilePublisher",
    "subscriber": "SecureProfileSubscriber",
    "observer": "SecureProfileObserver",
}


def profile_name(profile: str) -> str:
    return ROLE_PROFILES.get(profile, profile)


@dataclass
class Profile:
    name: str
    base_name: str | None = None
    is_default: bool = False
    elements: list[tuple[str, str]] = field(default_factory=list)

    def get(self, key: str) -> str | None:
        for k, v in self.elements:
            if k == key:
                return v
        return None


@dataclass
class PropertyConfig:
    profiles: list[Profile]
    library_name: str = "SecurityLibrary"
    path: Path | None = None

    def profile(self, name: str) -> Profile:
        name = profile_name(name)
        for p in self.profiles:
            if p.name == name:
                return p
        raise KeyError(f"no qos_profile named {name!r}")

    def effective(self, name: str) -> dict[str, str]:
        """Resolved element map for a profile, base profiles first."""
        chain = []
        seen = set()
        p = self.profile(name)
        while p is not None:
            if p.name in seen:
                raise MalformedXml(f"base_name cycle at {p.name!r}")
            seen.add(p.name)
            chain.append(p)
            p = self.profile(p.base_name) if p.base_name else None
        out: dict[str, str] = {}
        for prof in reversed(chain):
            out.update(prof.elements)
        return out

    @property
    def plugin_library_name(self) -> str | None:
        for p in self.profiles:
            v = self.effective(p.name).get(LIBRARY)
            if v is not None:
                return v
        return None

    @property
    def base_dir(self) -> Path:
        return self.path.parent if self.path is not None else Path(".")

    def elements(self) -> list[tuple[str, str]]:
        """Flat ordered list keyed ``profile:name``."""
        return [(f"{p.name}:{k}", v) for p in self.profiles for k, v in p.elements]

    def leaf_profiles(self) -> list[Profile]:
        bases = {p.base_name for p in self.profiles if p.base_name}
        return [p for p in self.profiles if p.name not in bases]


# -- XML ------------------------------------------------------------------------

def _parse_profile(el: ET.Element) -> Profile:
    elements = []
    for item in el.iterfind("participant_qos/property/value/element"):
        name = item.findtext("name")
        if name is None:
            raise MalformedXml(f"element without <name> in profile {el.get('name')!r}")
        elements.append((name.strip(), (item.findtext("value") or "").strip()))
    return Profile(
        name=el.get("name", ""),
        base_name=el.get("base_name"),
        is_default=el.get("is_default_qos", "false").lower() == "true",
        elements=elements,
    )


def parse_property_text(text: bytes | str, path: Path | None = None) -> PropertyConfig:
    try:
        root = ET.fromstring(text)
    except ET.ParseError as exc:
        raise MalformedXml(f"{path or 'property file'}: {exc}") from exc
    lib = root if root.tag == "qos_library" else root.find("qos_library")
    if lib is None:
        raise MalformedXml("no qos_library element")
    profiles = [_parse_profile(p) for p in lib.iterfind("qos_profile")]
    if not profiles:
        raise MalformedXml("qos_library has no qos_profile")
    cfg = PropertyConfig(profiles, lib.get("name", "SecurityLibrary"), path)
    names = {p.name for p in profiles}
    for p in profiles:
        if p.base_name and p.base_name not in names:
            raise MalformedXml(f"profile {p.name!r} extends unknown {p.base_name!r}")
    for p in cfg.leaf_profiles():
        eff = cfg.effective(p.name)
        for key in REQUIRED_KEYS:
            if not eff.get(key):
                raise MissingRequiredKey(f"profile {p.name!r} lacks {key}")
    return cfg


def parse_property_file(path: str | Path) -> PropertyConfig:
    path = Path(path)
    try:
        data = path.read_bytes()
    except FileNotFoundError:
        raise CredentialFileNotFound(f"property file {path} not found") from None
    return parse_property_text(data, path.resolve())


def serialize(config: PropertyConfig) -> bytes:
    root = ET.Element("dds")
    lib = ET.SubElement(root, "qos_library", name=config.library_name)
    for p in config.profiles:
        attrs = {"name": p.name}
        if p.base_name:
            attrs["base_name"] = p.base_name
        if p.is_default:
            attrs["is_default_qos"] = "true"
        prof = ET.SubElement(lib, "qos_profile", attrs)
        value = ET.SubElement(ET.SubElement(ET.SubElement(prof, "participant_qos"), "property"), "value")
        for k, v in p.elements:
            item = ET.SubElement(value, "element")
            ET.SubElement(item, "name").text = k
            ET.SubElement(item, "value").text = v
    ET.indent(root)
    return b'<?xml version="1.0" encoding="UTF-8"?>\n' + ET.tostring(root) + b"\n"


def write_property_file(config: PropertyConfig, path: str | Path) -> None:
    Path(path).write_bytes(serialize(config))


# -- credentials ------------------------------------------------------------------

@dataclass(frozen=True)
class LoadedFile:
    path: Path
    data: bytes = field(repr=False)
    sha256: str = ""

    @classmethod
    def read(cls, path: Path) -> "LoadedFile":
        try:
            data = path.read_bytes()
        except FileNotFoundError:
            raise CredentialFileNotFound(f"credential file {path} not found") from None
        return cls(path, data, hashlib.sha256(data).hexdigest())


@dataclass(frozen=True)
class CredentialSet:
    identity_ca: Certificate
    permissions_ca: Certificate
    certificate: Certificate
    key: SigningKeyPair = field(repr=False)
    governance: SignedDocument = field(repr=False)
    permissions: SignedDocument = field(repr=False)
    files: dict[str, LoadedFile] = field(default_factory=dict, repr=False)

    @property
    def subject(self) -> str:
        return self.certificate.subject

    def hashes(self) -> dict[str, str]:
        return {k: f.sha256 for k, f in self.files.items()}


def resolve_path(config: PropertyConfig, value: str) -> Path:
    p = Path(value)
    return p if p.is_absolute() else config.base_dir / p


def _signed(config: PropertyConfig, key: str, value: str, files: dict) -> SignedDocument:
    path = resolve_path(config, value)
    files[key] = LoadedFile.read(path)
    sig_path = path.with_suffix(".p7s")
    files[key + ".p7s"] = LoadedFile.read(sig_path)
    return SignedDocument.load(path)


def resolve_credentials(config: PropertyConfig, profile: str, passphrase: bytes | None = None) -> CredentialSet:
    """Load every credential the profile names. Performs no authenticity check."""
    eff = config.effective(profile)
    files: dict[str, LoadedFile] = {}
    for key in (CA_FILE, PERMISSIONS_CA_FILE, CERTIFICATE_FILE, PRIVATE_KEY_FILE):
        if not eff.get(key):
            raise MissingRequiredKey(key)
        files[key] = LoadedFile.read(resolve_path(config, eff[key]))
    governance = _signed(config, GOVERNANCE_FILE, eff[GOVERNANCE_FILE], files)
    permissions = _signed(config, PERMISSIONS_FILE, eff[PERMISSIONS_FILE], files)
    return CredentialSet(
        identity_ca=Certificate.from_pem(files[CA_FILE].data),
        permissions_ca=Certificate.from_pem(files[PERMISSIONS_CA_FILE].data),
        certificate=Certificate.from_pem(files[CERTIFICATE_FILE].data),
        key=load_private_key_pem(files[PRIVATE_KEY_FILE].data, passphrase),
        governance=governance,
        permissions=permissions,
        files=files,
    )


# -- the attack and its witness -----------------------------------------------------

@dataclass(frozen=True)
class AdversaryPaths:
    certificate_file: str
    private_key_file: str
    permissions_file: str
    governance_file: str | None = None


def masquerade(config: PropertyConfig, adversary: AdversaryPaths, target: str) -> PropertyConfig:
    """Point the target profile's participant credentials at adversary files."""
    edits = {
        CERTIFICATE_FILE: adversary.certificate_file,
        PRIVATE_KEY_FILE: adversary.private_key_file,
        PERMISSIONS_FILE: adversary.permissions_file,
    }
    target = profile_name(target)
    profiles = []
    for p in config.profiles:
        if p.name == target:
            elements = [(k, edits.get(k, v)) for k, v in p.elements]
            missing = [(k, v) for k, v in edits.items() if p.get(k) is None]
            p = replace(p, elements=elements + missing)
        if adversary.governance_file is not None and p.get(GOVERNANCE_FILE) is not None:
            p = replace(p, elements=[
                (k, adversary.governance_file if k == GOVERNANCE_FILE else v) for k, v in p.elements
            ])
        profiles.append(p)
    return replace(config, profiles=profiles)


def config_diff(a: PropertyConfig, b: PropertyConfig) -> list[tuple[str, str | None, str | None]]:
    """Sorted ``(profile:key, old, new)`` for every element that differs."""
    da, db = dict(a.elements()), dict(b.elements())
    out = []
    for key in sorted(da.keys() | db.keys()):
        old, new = da.get(key), db.get(key)
        if old != new:
            out.append((key, old, new))
    return out
