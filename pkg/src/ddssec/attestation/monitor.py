"""Runtime integrity monitor: the measurement list and register bank as one unit."""
from __future__ import annotations

import hashlib
import threading
from pathlib import Path

from ..crypto.provider import CryptoProvider
from .appraise import Appraisal, GoldenDb, appraise
from .ima import BOOT_AGGREGATE, IMA_SIG, MeasurementEntry, MeasurementLog, make_entry
from .pcr import IMA_PCR, PcrBank, boot_aggregate, pcr_extend, scripted_boot
from .quote import Quote, quote

LOG_FILE = "ascii_runtime_measurements"
PCR_FILE = "pcrs"
SIDECAR_SUFFIX = ".ima"


def ima_sidecar(path: Path) -> Path:
    return path.with_name(path.name + SIDECAR_SUFFIX)


class IntegrityMonitor:
    """Owns PCRs and the measurement list; every measurement is append-and-extend under one lock."""

    def __init__(self, root: str | Path, state_dir: str | Path | None = None,
                 bank: PcrBank | None = None, log: MeasurementLog | None = None):
        self.root = Path(root).resolve()
        self.state_dir = Path(state_dir) if state_dir else self.root / "attestation"
        self._lock = threading.Lock()
        if bank is None:
            bank, log = self._boot()
        self.bank = bank
        self.log = log or MeasurementLog()

    @staticmethod
    def _boot() -> tuple[PcrBank, MeasurementLog]:
        bank = scripted_boot()
        entry = make_entry(boot_aggregate(bank), BOOT_AGGREGATE)
        bank = pcr_extend(bank, IMA_PCR, entry.template_hash)
        return bank, MeasurementLog([entry])

    # -- persistence ---------------------------------------------------------------

    @classmethod
    def has_state(cls, state_dir: str | Path) -> bool:
        return (Path(state_dir) / LOG_FILE).exists()

    @classmethod
    def open(cls, root: str | Path, state_dir: str | Path | None = None) -> "IntegrityMonitor":
        """Load persisted state, or boot fresh if there is none."""
        mon = cls(root, state_dir)
        if cls.has_state(mon.state_dir):
            mon.bank = PcrBank.from_text((mon.state_dir / PCR_FILE).read_text())
            mon.log = MeasurementLog.from_text((mon.state_dir / LOG_FILE).read_text())
        return mon

    def save(self) -> None:
        with self._lock:
            self.state_dir.mkdir(parents=True, exist_ok=True)
            (self.state_dir / LOG_FILE).write_text(self.log.to_text())
            (self.state_dir / PCR_FILE).write_text(self.bank.to_text())

    def reboot(self) -> None:
        with self._lock:
            self.bank, self.log = self._boot()

    # -- measurement -------------------------------------------------------------

    def hint_for(self, path: Path) -> str:
        path = path.resolve()
        try:
            return path.relative_to(self.root).as_posix()
        except ValueError:
            return str(path)

    def measure_file(self, path: str | Path, template: str | None = None) -> MeasurementEntry:
        """Hash, append and extend. ``ima-sig`` is used when a ``.ima`` sidecar exists."""
        path = Path(path)
        digest = hashlib.sha256(path.read_bytes()).digest()
        sidecar = ima_sidecar(path)
        signature = None
        if template != "ima-ng" and sidecar.exists():
            signature = sidecar.read_bytes()
        elif template == IMA_SIG:
            raise FileNotFoundError(f"ima-sig requested but {sidecar} does not exist")
        entry = make_entry(digest, self.hint_for(path), signature)
        with self._lock:
            self.log.append(entry)
            self.bank = pcr_extend(self.bank, IMA_PCR, entry.template_hash)
        return entry

    def snapshot(self) -> tuple[PcrBank, MeasurementLog]:
        with self._lock:
            return self.bank, self.log.copy()

    def appraise(self, golden: GoldenDb, provider=None) -> Appraisal:
        bank, log = self.snapshot()
        return appraise(log, bank, golden, provider or CryptoProvider())

    def quote(self, selection, nonce: bytes, key, provider=None) -> Quote:
        bank, _ = self.snapshot()
        return quote(bank, selection, nonce, key, provider or CryptoProvider())


def expected_bank(log: MeasurementLog) -> PcrBank:
    """What a remote verifier reconstructs: scripted boot PCRs plus log replay into PCR 10."""
    bank = scripted_boot()
    for e in log.entries:
        if e.pcr == IMA_PCR:
            bank = pcr_extend(bank, IMA_PCR, e.template_hash)
    return bank
