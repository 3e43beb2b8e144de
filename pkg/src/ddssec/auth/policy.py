"""Governance and permissions documents, detached signatures, access checks."""
from __future__ import annotations

import enum
import fnmatch
import xml.etree.ElementTree as ET
from dataclasses import dataclass, field
from pathlib import Path

from ..crypto.keys import SigningKeyPair, TransformationKind
from ..errors import MalformedPem, PolicyError
from .certs import SIGNATURE_LABEL, Certificate, pem_decode, pem_encode

PUBLISH = "publish"
SUBSCRIBE = "subscribe"
ACTIONS = (PUBLISH, SUBSCRIBE)

ALLOW = "allow"
DENY = "deny"


class ProtectionKind(enum.Enum):
    NONE = "NONE"
    SIGN = "SIGN"
    ENCRYPT = "ENCRYPT"

    def transformation(self, key_bits: int = 256) -> TransformationKind:
        if self is ProtectionKind.NONE:
            return TransformationKind.NONE
        if key_bits == 128:
            return TransformationKind.AES128_GCM if self is ProtectionKind.ENCRYPT else TransformationKind.AES128_GMAC
        if key_bits == 256:
            return TransformationKind.AES256_GCM if self is ProtectionKind.ENCRYPT else TransformationKind.AES256_GMAC
        raise ValueError(f"unsupported key size {key_bits}")


SCOPES = ("discovery", "liveliness", "rtps", "metadata", "data")


def _xml_root(doc: bytes | str) -> ET.Element:
    try:
        return ET.fromstring(doc)
    except ET.ParseError as exc:
        raise PolicyError(f"policy document is not well-formed XML: {exc}") from exc


def _text(el: ET.Element | None, default: str | None = None) -> str:
    if el is None or el.text is None:
        if default is None:
            raise PolicyError("required policy element missing")
        return default
    return el.text.strip()


def _kind(el: ET.Element | None) -> ProtectionKind:
    value = _text(el, "NONE").upper()
    try:
        return ProtectionKind(value)
    except ValueError:
        raise PolicyError(f"unknown protection kind {value!r}") from None


def _pretty(root: ET.Element) -> bytes:
    ET.indent(root)
    return b'<?xml version="1.0" encoding="UTF-8"?>\n' + ET.tostring(root) + b"\n"


@dataclass(frozen=True)
class GovernancePolicy:
    domain_id: int = 0
    allow_unauthenticated: bool = False
    discovery: ProtectionKind = ProtectionKind.ENCRYPT
    liveliness: ProtectionKind = ProtectionKind.ENCRYPT
    rtps: ProtectionKind = ProtectionKind.ENCRYPT
    metadata: ProtectionKind = ProtectionKind.ENCRYPT
    data: ProtectionKind = ProtectionKind.ENCRYPT

    def kinds(self, key_bits: int = 256) -> dict[str, TransformationKind]:
        return {scope: getattr(self, scope).transformation(key_bits) for scope in SCOPES}

    def to_xml(self) -> bytes:
        root = ET.Element("dds")
        rule = ET.SubElement(ET.SubElement(root, "domain_access_rules"), "domain_rule")
        ET.SubElement(ET.SubElement(rule, "domains"), "id").text = str(self.domain_id)
        ET.SubElement(rule, "allow_unauthenticated_participants").text = str(self.allow_unauthenticated).lower()
        ET.SubElement(rule, "discovery_protection_kind").text = self.discovery.value
        ET.SubElement(rule, "liveliness_protection_kind").text = self.liveliness.value
        ET.SubElement(rule, "rtps_protection_kind").text = self.rtps.value
        topic = ET.SubElement(ET.SubElement(rule, "topic_access_rules"), "topic_rule")
        ET.SubElement(topic, "topic_expression").text = "*"
        ET.SubElement(topic, "metadata_protection_kind").text = self.metadata.value
        ET.SubElement(topic, "data_protection_kind").text = self.data.value
        return _pretty(root)

    @classmethod
    def from_xml(cls, doc: bytes | str) -> "GovernancePolicy":
        rule = _xml_root(doc).find("domain_access_rules/domain_rule")
        if rule is None:
            raise PolicyError("governance has no domain_rule")
        topic = rule.find("topic_access_rules/topic_rule")
        try:
            domain = int(_text(rule.find("domains/id"), "0"))
        except ValueError:
            raise PolicyError("domain id is not an integer") from None
        return cls(
            domain_id=domain,
            allow_unauthenticated=_text(rule.find("allow_unauthenticated_participants"), "false").lower() == "true",
            discovery=_kind(rule.find("discovery_protection_kind")),
            liveliness=_kind(rule.find("liveliness_protection_kind")),
            rtps=_kind(rule.find("rtps_protection_kind")),
            metadata=_kind(None if topic is None else topic.find("metadata_protection_kind")),
            data=_kind(None if topic is None else topic.find("data_protection_kind")),
        )


@dataclass(frozen=True)
class Rule:
    verdict: str  # allow | deny
    action: str  # publish | subscribe
    pattern: str

    def matches(self, topic: str, action: str) -> bool:
        return self.action == action and fnmatch.fnmatchcase(topic, self.pattern)


@dataclass(frozen=True)
class PermissionsGrant:
    subject_name: str
    domain_id: int = 0
    rules: tuple[Rule, ...] = field(default_factory=tuple)
    default: str = DENY
    name: str = "grant"

    def to_xml(self) -> bytes:
        root = ET.Element("dds")
        grant = ET.SubElement(ET.SubElement(root, "permissions"), "grant", name=self.name)
        ET.SubElement(grant, "subject_name").text = self.subject_name
        for rule in self.rules:
            el = ET.SubElement(grant, f"{rule.verdict}_rule")
            ET.SubElement(ET.SubElement(el, "domains"), "id").text = str(self.domain_id)
            topics = ET.SubElement(ET.SubElement(el, rule.action), "topics")
            ET.SubElement(topics, "topic").text = rule.pattern
        if not self.rules:
            # domains normally ride on each rule; keep the id when there are none
            ET.SubElement(ET.SubElement(grant, "domains"), "id").text = str(self.domain_id)
        ET.SubElement(grant, "default").text = self.default.upper()
        return _pretty(root)

    @classmethod
    def from_xml(cls, doc: bytes | str) -> "PermissionsGrant":
        grant = _xml_root(doc).find("permissions/grant")
        if grant is None:
            raise PolicyError("permissions document has no grant")
        rules = []
        top = grant.find("domains/id")
        domain = int(top.text.strip()) if top is not None and top.text else 0
        for el in grant:
            if el.tag not in ("allow_rule", "deny_rule"):
                continue
            verdict = el.tag.split("_")[0]
            dom = el.find("domains/id")
            if dom is not None and dom.text:
                domain = int(dom.text.strip())
            for action_el in el:
                if action_el.tag not in ACTIONS:
                    continue
                for t in action_el.iterfind("topics/topic"):
                    rules.append(Rule(verdict, action_el.tag, _text(t)))
        default = _text(grant.find("default"), "DENY").lower()
        if default not in (ALLOW, DENY):
            raise PolicyError(f"bad default {default!r}")
        return cls(
            subject_name=_text(grant.find("subject_name")),
            domain_id=domain,
            rules=tuple(rules),
            default=default,
            name=grant.get("name", "grant"),
        )


def check_permission(grant: PermissionsGrant, topic: str, action: str) -> str:
    """First matching rule wins; no match falls back to the grant default."""
    if action not in ACTIONS:
        raise ValueError(f"action must be one of {ACTIONS}")
    for rule in grant.rules:
        if rule.matches(topic, action):
            return rule.verdict
    return grant.default


# -- detached signatures ----------------------------------------------------------

def canonicalize(doc: bytes) -> bytes:
    # line-ending normalization only; the XML itself is signed as bytes
    return doc.replace(b"\r\n", b"\n")


def sign_document(doc: bytes, key: SigningKeyPair, provider, rng=None) -> bytes:
    return provider.sign(key, canonicalize(doc), rng)


def verify_document(doc: bytes, sig: bytes, ca: Certificate | bytes, provider) -> bool:
    public = ca.public_key if isinstance(ca, Certificate) else ca
    return provider.verify(public, canonicalize(doc), sig)


def signature_path(path: str | Path) -> Path:
    return Path(path).with_suffix(".p7s")


def write_signed(path: str | Path, doc: bytes, key: SigningKeyPair, provider, rng=None) -> Path:
    path = Path(path)
    path.write_bytes(doc)
    sig_path = signature_path(path)
    sig_path.write_bytes(pem_encode(SIGNATURE_LABEL, sign_document(doc, key, provider, rng)))
    return path


@dataclass(frozen=True)
class SignedDocument:
    document: bytes
    signature: bytes

    @classmethod
    def load(cls, path: str | Path) -> "SignedDocument":
        path = Path(path)
        sig_path = signature_path(path)
        if not sig_path.exists():
            raise MalformedPem(f"missing detached signature {sig_path}")
        return cls(path.read_bytes(), pem_decode(sig_path.read_bytes(), SIGNATURE_LABEL))

    def verify(self, ca: Certificate | bytes, provider) -> bool:
        return verify_document(self.document, self.signature, ca, provider)
