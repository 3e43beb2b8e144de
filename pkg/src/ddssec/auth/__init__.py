"""Authentication, access control and key derivation."""
from .certs import Certificate, IdentityCredential, issue_certificate, self_signed_ca, validate_certificate
from .handshake import (
    HandshakeSession,
    HandshakeToken,
    LocalIdentity,
    State,
    TokenKind,
    TrustAnchors,
    handshake_step,
    new_session,
    run_handshake,
)
from .keymat import KeyMaterial, derive_key_material
from .policy import (
    GovernancePolicy,
    PermissionsGrant,
    ProtectionKind,
    Rule,
    SignedDocument,
    check_permission,
    sign_document,
    verify_document,
)

__all__ = [
    "Certificate", "IdentityCredential", "issue_certificate", "self_signed_ca", "validate_certificate",
    "HandshakeSession", "HandshakeToken", "LocalIdentity", "State", "TokenKind", "TrustAnchors",
    "handshake_step", "new_session", "run_handshake",
    "KeyMaterial", "derive_key_material",
    "GovernancePolicy", "PermissionsGrant", "ProtectionKind", "Rule", "SignedDocument",
    "check_permission", "sign_document", "verify_document",
]
