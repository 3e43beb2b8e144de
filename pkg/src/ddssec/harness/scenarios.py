"""End-to-end scenarios: honest baseline, spy intercept, masquerade, combined.

A scenario applies its file manipulation to the fixture tree (provider
artifact swap and/or property-file edit), runs every participant over a
tapped loopback bus, evaluates its success predicate and restores the
original files. Controls run the same flow with the manipulation defanged:
an honest provider for the spy, foreign-CA credentials for the masquerade.
"""
from __future__ import annotations

import enum
import json
import logging
import socket
import threading
from dataclasses import dataclass, field
from pathlib import Path

from ..attestation.monitor import IntegrityMonitor
from ..auth.handshake import State
from ..auth.policy import GovernancePolicy, SignedDocument, sign_document
from ..config import masquerade, parse_property_file, write_property_file
from ..crypto.transcript import encode_record, load_transcript, read_frames
from ..errors import KeyNotFound, TransportFailure
from ..rng import Rng
from .fixtures import (
    ADVERSARY_PATHS,
    CAMERA_TOPIC,
    HELLO_TOPIC,
    MALLORY,
    ROGUE,
    ROGUE_PATHS,
    FixtureTree,
    install_library,
)
from .offline import offline_decrypt_detailed
from .participant import Participant
from .platform import Platform
from .transport import LoopbackBus, capture_wire, write_capture

log = logging.getLogger(__name__)

VIRTUAL_EPOCH = 1_700_000_000.0

REPRODUCED = "reproduced"
NOT_REPRODUCED = "not_reproduced"
BASELINE_OK = "baseline-ok"
BASELINE_FAILED = "baseline-failed"


class ScenarioName(enum.Enum):
    BASELINE = "baseline"
    SPY_INTERCEPT = "spy-intercept"
    STEAL_SERVICES = "steal-services"
    MASQUERADE = "masquerade"
    COMBINED = "combined"

    @property
    def uses_spy(self) -> bool:
        return self in (ScenarioName.SPY_INTERCEPT, ScenarioName.STEAL_SERVICES, ScenarioName.COMBINED)

    @property
    def uses_masquerade(self) -> bool:
        return self in (ScenarioName.MASQUERADE, ScenarioName.COMBINED)


class SinkKind(enum.Enum):
    FILE = "file"
    STREAM = "stream"


@dataclass(frozen=True)
class ExfiltrationSink:
    kind: SinkKind = SinkKind.FILE
    endpoint: str = ""  # file path, or host:port; empty picks a default


@dataclass(frozen=True)
class ScriptItem:
    topic: str
    payload: bytes
    delay: float = 0.0


@dataclass(frozen=True)
class ParticipantSpec:
    name: str
    profile: str
    publish: tuple[str, ...] = ()
    subscribe: tuple[str, ...] = ()


DEFAULT_PARTICIPANTS = (
    ParticipantSpec("publisher", "publisher", publish=(HELLO_TOPIC, CAMERA_TOPIC)),
    ParticipantSpec("subscriber", "subscriber", subscribe=(HELLO_TOPIC, CAMERA_TOPIC)),
    ParticipantSpec("observer", "observer", subscribe=(HELLO_TOPIC,)),
)


def hello_script(count: int = 50, delay: float = 0.1) -> tuple[ScriptItem, ...]:
    return tuple(ScriptItem(HELLO_TOPIC, f"Hello World {i}".encode(), delay) for i in range(count))


def camera_script(count: int = 24, frame_bytes: int = 2048, seed: int = 0) -> tuple[ScriptItem, ...]:
    rng = Rng(seed).child("camera")
    frames = []
    for i in range(count):
        header = b"\xff\xd8\xff\xe0" + f"FRAME{i:04d}".encode()
        frames.append(ScriptItem(CAMERA_TOPIC, header + rng.bytes(frame_bytes - len(header)), 1 / 30))
    return tuple(frames)


@dataclass
class Scenario:
    name: ScenarioName
    root: Path
    work_dir: Path | None = None
    script: tuple[ScriptItem, ...] = field(default_factory=hello_script)
    participants: tuple[ParticipantSpec, ...] = DEFAULT_PARTICIPANTS
    governance: GovernancePolicy | None = None
    control: bool = False
    key_bits: int = 256
    rekey_every: int = 0
    sink: ExfiltrationSink = field(default_factory=ExfiltrationSink)
    target_profile: str = "subscriber"

    def __post_init__(self):
        self.root = Path(self.root)
        if self.work_dir is None:
            suffix = "-control" if self.control else ""
            self.work_dir = self.root / "runs" / f"{self.name.value}{suffix}"
        self.work_dir = Path(self.work_dir)

    @property
    def expected_verdict(self) -> str:
        if self.name is ScenarioName.BASELINE:
            return BASELINE_OK
        return NOT_REPRODUCED if self.control else REPRODUCED


def make_scenario(name: str | ScenarioName, root: str | Path, seed: int = 0, **kw) -> Scenario:
    name = ScenarioName(name)
    if name is ScenarioName.STEAL_SERVICES and "script" not in kw:
        kw["script"] = camera_script(seed=seed)
    return Scenario(name, Path(root), **kw)


@dataclass
class AttackReport:
    scenario: str
    control: bool
    seed: int
    verdict: str
    expected_verdict: str
    governance: dict
    participants: dict
    handshake_outcomes: dict
    delivered: dict
    denied: dict
    captured_records: dict
    recovered_keys: list
    decrypted_payloads: list
    gaps: int
    wire: dict
    manipulated_files: list
    notes: list = field(default_factory=list)

    @property
    def success(self) -> bool:
        return self.verdict == self.expected_verdict

    def to_dict(self) -> dict:
        d = dict(self.__dict__)
        d["success"] = self.success
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    def write(self, path: str | Path) -> None:
        Path(path).write_text(self.to_json())


# -- exfiltration collector -----------------------------------------------------------

class StreamCollector:
    """Remote end of the STREAM sink: appends received frames to a binary transcript."""

    def __init__(self, out: Path, host: str = "127.0.0.1", port: int = 0):
        self.out = out
        self._server = socket.create_server((host, port))
        self._server.settimeout(0.2)
        self.address = self._server.getsockname()
        self._stop = threading.Event()
        self._threads: list[threading.Thread] = []
        self._lock = threading.Lock()
        self._acceptor = threading.Thread(target=self._accept, daemon=True)
        self._acceptor.start()

    @property
    def endpoint(self) -> str:
        return f"{self.address[0]}:{self.address[1]}"

    def _accept(self) -> None:
        while not self._stop.is_set():
            try:
                conn, _ = self._server.accept()
            except socket.timeout:
                continue
            except OSError:
                return
            t = threading.Thread(target=self._drain, args=(conn,), daemon=True)
            t.start()
            self._threads.append(t)

    def _drain(self, conn: socket.socket) -> None:
        with conn:
            conn.settimeout(None)
            for rec in read_frames(conn):
                with self._lock, open(self.out, "ab") as fh:
                    fh.write(encode_record(rec))

    def close(self, timeout: float = 5.0) -> None:
        self._stop.set()
        self._acceptor.join(timeout)
        for t in self._threads:
            t.join(timeout)
        self._server.close()


# -- the run --------------------------------------------------------------------------

class VirtualClock:
    def __init__(self, start: float = VIRTUAL_EPOCH):
        self.t = start

    def now(self) -> float:
        return self.t

    def advance(self, dt: float) -> None:
        self.t += dt


def pump(participants: list[Participant], limit: int = 1_000_000) -> int:
    """Round-robin one datagram per participant until every inbox is empty."""
    handled = 0
    while True:
        progressed = False
        for p in participants:
            if p.step():
                progressed = True
                handled += 1
        if not progressed:
            return handled
        if handled > limit:
            raise TransportFailure("message storm: pump limit exceeded")


class _Manipulations:
    """Applies file manipulations and restores the originals afterwards."""

    def __init__(self):
        self._saved: dict[Path, bytes | None] = {}

    def save(self, path: Path) -> None:
        if path not in self._saved:
            self._saved[path] = path.read_bytes() if path.exists() else None

    @property
    def files(self) -> list[Path]:
        return sorted(self._saved)

    def restore(self) -> None:
        for path, data in self._saved.items():
            if data is None:
                path.unlink(missing_ok=True)
            else:
                path.write_bytes(data)


def _governance_override(tree: FixtureTree, policy: GovernancePolicy) -> SignedDocument:
    doc = policy.to_xml()
    return SignedDocument(doc, sign_document(doc, tree.key("ca/permissions_ca_key.pem"), _honest()))


def _honest():
    from ..crypto.provider import CryptoProvider
    return CryptoProvider()


def run_scenario(s: Scenario, seed: int = 0, monitor: IntegrityMonitor | None = None) -> AttackReport:
    tree = FixtureTree(s.root)
    tree.require()
    work = s.work_dir
    work.mkdir(parents=True, exist_ok=True)
    spy = s.name.uses_spy and not s.control
    stream = s.sink.kind is SinkKind.STREAM
    transcript = Path(s.sink.endpoint) if (s.sink.endpoint and not stream) else work / (
        "transcript.bin" if stream else "transcript.hex")
    transcript.unlink(missing_ok=True)
    capture_path = work / "capture.hex"
    edits = _Manipulations()
    collector = None
    rng = Rng(seed)
    participants: list[Participant] = []
    try:
        if spy:
            edits.save(tree.library)
            if stream:
                collector = StreamCollector(transcript)
                source = tree.spy_library_source("stream", s.sink.endpoint or collector.endpoint)
            else:
                source = tree.spy_library_source("file", transcript)
            install_library(tree, source)  # the attacker cannot refresh the vendor signature
        if s.name.uses_masquerade:
            edits.save(tree.property_file)
            cfg = parse_property_file(tree.property_file)
            write_property_file(masquerade(cfg, ROGUE_PATHS if s.control else ADVERSARY_PATHS, s.target_profile),
                                tree.property_file)

        platform = Platform(tree.root, monitor)
        platform.load_config()
        gov_doc = _governance_override(tree, s.governance) if s.governance else None
        bus = LoopbackBus()
        clock = VirtualClock()
        for spec in s.participants:
            prng = rng.child(f"participant:{spec.name}")
            p = Participant(
                spec.name, prng.bytes(12), platform.credentials(spec.profile), platform.provider(),
                bus, prng, clock.now, s.key_bits, gov_doc,
            )
            participants.append(p)
        for spec, p in zip(s.participants, participants):
            for topic in spec.publish:
                p.create_writer(topic)
            for topic in spec.subscribe:
                p.create_reader(topic)
        for p in participants:
            p.announce()
        pump(participants)

        writer = participants[0]
        for i, item in enumerate(s.script):
            clock.advance(item.delay)
            if s.rekey_every and i and i % s.rekey_every == 0:
                writer.rekey("data")
            if item.topic in writer.writers:
                writer.write(item.topic, item.payload)
            pump(participants)
        capture = capture_wire(bus)
        write_capture(capture_path, capture)
    finally:
        for p in participants:
            close = getattr(getattr(p.provider, "sink", None), "close", None)
            if close:
                close()
        if collector is not None:
            collector.close()
        edits.restore()

    return _evaluate(s, seed, participants, capture, capture_path, transcript,
                     [str(f.relative_to(tree.root)) for f in edits.files])


def _leaks(capture: list[bytes], script) -> int:
    return sum(1 for item in script for dg in capture if item.payload in dg)


def _evaluate(s, seed, participants, capture, capture_path, transcript, manipulated) -> AttackReport:
    names = {p.prefix: p.name for p in participants}
    by_name = {p.name: p for p in participants}
    script_payloads = [item.payload for item in s.script]
    script_topics = sorted({item.topic for item in s.script})
    notes: list[str] = []

    outcomes = {}
    for p in participants:
        peers = {}
        for prefix, session in sorted(p.sessions.items()):
            peers[names.get(prefix, prefix.hex())] = session.error or session.state.value
        outcomes[p.name] = peers

    def received(p: Participant) -> list[bytes]:
        return [smp.payload for t in script_topics for smp in p.received(t)]

    # spy post-processing works from files alone
    records = load_transcript(transcript)
    try:
        recovered, keys = offline_decrypt_detailed(transcript, capture)
    except KeyNotFound:
        recovered, keys = [], []
    decrypted = [r for r in recovered if not r.is_gap and r.topic in script_topics]
    gaps = sum(1 for r in recovered if r.is_gap)
    spy_ok = bool(keys) and bool(decrypted) and [r.plaintext for r in decrypted] == script_payloads

    kinds = participants[0].kinds if participants else {}
    encrypting = any(kinds.get(c) is not None and kinds[c].is_gcm for c in ("rtps", "metadata", "data"))
    leaks = _leaks(capture, s.script)

    if s.name is ScenarioName.BASELINE:
        sub, obs = by_name.get("subscriber"), by_name.get("observer")
        ok = sub is not None and received(sub) == script_payloads
        ok = ok and (obs is None or not received(obs))
        ok = ok and not (encrypting and leaks)
        verdict = BASELINE_OK if ok else BASELINE_FAILED
    else:
        results = []
        if s.name.uses_spy:
            results.append(spy_ok)
            notes.append(f"offline decryption recovered {len(decrypted)} of {len(script_payloads)} payloads")
        if s.name.uses_masquerade:
            adversary_subjects = {f"CN={MALLORY.name}", f"CN={ROGUE.name}"}
            adv = [p for p in participants if p.subject in adversary_subjects]
            pub = participants[0]
            masq_ok = any(
                pub.prefix in a.sessions and a.sessions[pub.prefix].state is State.ESTABLISHED
                and received(a) == script_payloads
                for a in adv
            )
            results.append(masq_ok)
            notes.append(f"adversary participants: {sorted(a.name + ' as ' + a.subject for a in adv)}")
        verdict = REPRODUCED if results and all(results) else NOT_REPRODUCED

    def text(b: bytes) -> str | None:
        try:
            return b.decode()
        except UnicodeDecodeError:
            return None

    return AttackReport(
        scenario=s.name.value,
        control=s.control,
        seed=seed,
        verdict=verdict,
        expected_verdict=s.expected_verdict,
        governance={k: v.name for k, v in sorted(kinds.items())},
        participants={p.name: {"subject": p.subject, "guid_prefix": p.prefix.hex()} for p in participants},
        handshake_outcomes=outcomes,
        delivered={p.name: {t: len(p.received(t)) for t in sorted(p.readers)} for p in participants},
        denied={p.name: [list(d) for d in p.denied] for p in participants if p.denied},
        captured_records={"count": len(records), "transcript": str(transcript) if records else None},
        recovered_keys=[{"key_id": k.key_id.hex(), "key": k.key.hex(), "record": k.sequence} for k in keys],
        decrypted_payloads=[
            {"topic": r.topic, "sequence": r.sequence, "datagram": r.index,
             "plaintext_hex": r.plaintext.hex(), "plaintext": text(r.plaintext)}
            for r in decrypted
        ],
        gaps=gaps,
        wire={"datagrams": len(capture), "capture": str(capture_path), "plaintext_leaks": leaks},
        manipulated_files=manipulated,
        notes=notes,
    )
