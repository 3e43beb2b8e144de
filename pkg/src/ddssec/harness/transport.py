"""In-process datagram bus with a passive tap.

Stands in for UDP over loopback. Every datagram is copied to the capture
before delivery, in send order, so the capture is a lossless record of what
a sniffer on the loopback interface would have seen.
"""
from __future__ import annotations

import threading
from collections import deque
from dataclasses import dataclass
from pathlib import Path

from ..errors import TransportFailure

MAX_DATAGRAM = 65507


@dataclass(frozen=True)
class Datagram:
    source: bytes
    dest: bytes | None
    data: bytes


class LoopbackBus:
    def __init__(self):
        self._lock = threading.Lock()
        self._inboxes: dict[bytes, deque[Datagram]] = {}
        self.capture: list[bytes] = []
        self.closed = False

    def attach(self, prefix: bytes) -> "Endpoint":
        with self._lock:
            if prefix in self._inboxes:
                raise TransportFailure(f"address {prefix.hex()} already in use")
            self._inboxes[prefix] = deque()
        return Endpoint(self, prefix)

    def send(self, source: bytes, data: bytes, dest: bytes | None = None) -> None:
        """Unicast to ``dest`` or, with ``dest=None``, multicast to every other endpoint."""
        if self.closed:
            raise TransportFailure("bus is closed")
        if len(data) > MAX_DATAGRAM:
            raise TransportFailure(f"datagram of {len(data)} bytes exceeds {MAX_DATAGRAM}")
        dg = Datagram(source, dest, bytes(data))
        with self._lock:
            self.capture.append(dg.data)
            if dest is None:
                for prefix, box in self._inboxes.items():
                    if prefix != source:
                        box.append(dg)
            elif dest in self._inboxes:
                self._inboxes[dest].append(dg)
            # unknown unicast destinations are dropped like on a real network

    def receive(self, prefix: bytes) -> Datagram | None:
        with self._lock:
            box = self._inboxes.get(prefix)
            return box.popleft() if box else None

    def pending(self) -> int:
        with self._lock:
            return sum(len(b) for b in self._inboxes.values())

    def close(self) -> None:
        self.closed = True


@dataclass
class Endpoint:
    bus: LoopbackBus
    prefix: bytes

    def send(self, data: bytes, dest: bytes | None = None) -> None:
        self.bus.send(self.prefix, data, dest)

    def receive(self) -> Datagram | None:
        return self.bus.receive(self.prefix)


def capture_wire(transport: LoopbackBus) -> list[bytes]:
    """Ordered copy of every datagram the bus has carried."""
    with transport._lock:
        return list(transport.capture)


def write_capture(path: str | Path, records: list[bytes]) -> None:
    Path(path).write_text("".join(r.hex() + "\n" for r in records))


def read_capture(path: str | Path) -> list[bytes]:
    return [bytes.fromhex(line) for line in Path(path).read_text().splitlines() if line.strip()]
