"""The victim host: loads the property file and provider artifact from disk.

Mirrors what a DDS application does at start-up: read the property file,
load the credential files it names, and dynamically load the crypto library.
When an integrity monitor is attached, each file is measured before it is
used.
"""
from __future__ import annotations

import itertools
import logging
import types
from pathlib import Path

from ..attestation.monitor import IntegrityMonitor
from ..config import CredentialSet, PropertyConfig, parse_property_file, resolve_credentials
from ..errors import FixtureMissing, HarnessError
from .fixtures import FixtureTree

log = logging.getLogger(__name__)

_load_counter = itertools.count()


def load_library(path: Path):
    """Import the provider artifact fresh from disk and return its module."""
    if not path.exists():
        raise FixtureMissing(f"provider artifact {path} missing")
    # compiled straight from source: no bytecode cache is written next to the artifact
    module = types.ModuleType(f"_ddssec_provider_artifact_{next(_load_counter)}")
    module.__file__ = str(path)
    exec(compile(path.read_bytes(), str(path), "exec"), module.__dict__)
    if not hasattr(module, "create_provider"):
        raise HarnessError(f"{path} does not export create_provider()")
    return module


class Platform:
    def __init__(self, root: str | Path, monitor: IntegrityMonitor | None = None):
        self.tree = FixtureTree(root)
        self.monitor = monitor
        self._library = None
        self.config: PropertyConfig | None = None

    def _measure(self, path: Path) -> None:
        if self.monitor is not None:
            entry = self.monitor.measure_file(path)
            log.debug("measured %s -> %s", entry.filename_hint, entry.file_data_hash)

    def load_config(self) -> PropertyConfig:
        self.tree.require()
        self._measure(self.tree.property_file)
        self.config = parse_property_file(self.tree.property_file)
        return self.config

    def provider(self):
        if self._library is None:
            self._measure(self.tree.library)
            self._library = load_library(self.tree.library)
        return self._library.create_provider()

    def credentials(self, profile: str) -> CredentialSet:
        if self.config is None:
            self.load_config()
        return resolve_credentials(self.config, profile)
