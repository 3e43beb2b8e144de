"""Secure publish/subscribe testbed.

Reimplements DDS-Security style protocol machinery (secure RTPS transforms,
PKI handshake, governance and permissions), two attacks against it (a
transcripting crypto provider and property-file credential masquerade), and
a software integrity-measurement stack that detects both.
"""

__version__ = "0.1.0"
