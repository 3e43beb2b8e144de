"""Extend-only register bank shaped like a TPM's 24 PCRs."""
from __future__ import annotations

import hashlib
from dataclasses import dataclass

from ..errors import IndexOutOfRange

NUM_PCRS = 24
PCR_SIZE = 32
IMA_PCR = 10
BOOT_PCRS = tuple(range(10))

# register usage, indices 0-23
PCR_LAYOUT = {
    0: "BIOS",
    1: "BIOS Configuration",
    2: "Option ROMs",
    3: "Option ROM configuration",
    4: "MBR (master boot record)",
    5: "MBR configuration",
    6: "State transitions and wake events",
    7: "Platform manufacturer specific measurements",
    8: "Static operating system",
    9: "Static operating system",
    10: "Integrity Measurement Architecture (IMA)",
    11: "Static operating system",
    12: "Static operating system",
    13: "Static operating system",
    14: "Static operating system",
    15: "Static operating system",
    16: "Debug",
    17: "DRTM and launch control policy",
    18: "Trusted OS start-up code (MLE)",
    19: "Trusted OS (for example OS configuration)",
    20: "Trusted OS (for example OS Kernel and other code)",
    21: "as defined by the Trusted OS",
    22: "as defined by the Trusted OS",
    23: "Application support",
}


def _check_index(index: int) -> None:
    if not 0 <= index < NUM_PCRS:
        raise IndexOutOfRange(f"PCR index {index} outside 0..{NUM_PCRS - 1}")


@dataclass(frozen=True)
class PcrBank:
    registers: tuple[bytes, ...] = (b"\x00" * PCR_SIZE,) * NUM_PCRS

    def __post_init__(self):
        if len(self.registers) != NUM_PCRS or any(len(r) != PCR_SIZE for r in self.registers):
            raise ValueError("a bank holds 24 registers of 32 bytes")

    def __getitem__(self, index: int) -> bytes:
        _check_index(index)
        return self.registers[index]

    def to_text(self) -> str:
        return "".join(f"PCR-{i:02d}: {r.hex()}\n" for i, r in enumerate(self.registers))

    @classmethod
    def from_text(cls, text: str) -> "PcrBank":
        regs = [b"\x00" * PCR_SIZE] * NUM_PCRS
        for line in text.splitlines():
            if not line.strip():
                continue
            label, _, value = line.partition(":")
            regs[int(label.strip().removeprefix("PCR-"))] = bytes.fromhex(value.strip())
        return cls(tuple(regs))


def pcr_extend(bank: PcrBank, index: int, m: bytes) -> PcrBank:
    """register[index] <- SHA-256(register[index] || m); a new bank is returned."""
    _check_index(index)
    if len(m) != PCR_SIZE:
        raise ValueError("measurements are 32-byte digests")
    regs = list(bank.registers)
    regs[index] = hashlib.sha256(regs[index] + m).digest()
    return PcrBank(tuple(regs))


def boot_measurements() -> list[tuple[int, bytes]]:
    """Fixed digests standing in for firmware, bootloader, kernel and initrd."""
    return [(i, hashlib.sha256(f"boot-component-{i}:{PCR_LAYOUT[i]}".encode()).digest()) for i in BOOT_PCRS]


def scripted_boot(bank: PcrBank | None = None) -> PcrBank:
    bank = bank or PcrBank()
    for index, digest in boot_measurements():
        bank = pcr_extend(bank, index, digest)
    return bank


def boot_aggregate(bank: PcrBank) -> bytes:
    return hashlib.sha256(b"".join(bank[i] for i in BOOT_PCRS)).digest()
