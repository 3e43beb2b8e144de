import hashlib
import subprocess
import sys

import pytest

from ddssec.auth.policy import GovernancePolicy, ProtectionKind
from ddssec.crypto.transcript import hexdump_record, load_transcript
from ddssec.errors import FixtureMissing, KeyNotFound, TransportFailure
from ddssec.harness import (
    BASELINE_OK,
    NOT_REPRODUCED,
    REPRODUCED,
    ExfiltrationSink,
    LoopbackBus,
    SinkKind,
    make_scenario,
    offline_decrypt,
    offline_decrypt_detailed,
    read_capture,
    run_scenario,
    write_capture,
)
from ddssec.harness.transport import MAX_DATAGRAM, capture_wire


def _tree_digest(tree):
    return {
        str(p.relative_to(tree.root)): hashlib.sha256(p.read_bytes()).hexdigest()
        for p in sorted(tree.root.rglob("*")) if p.is_file() and "runs" not in p.parts
    }


def test_bus_capture_counts_every_send():
    bus = LoopbackBus()
    a, b = bus.attach(b"a" * 12), bus.attach(b"b" * 12)
    bus.attach(b"c" * 12)
    sends = [(a, b"one", None), (b, b"two", a.prefix), (a, b"three", b"x" * 12)]
    for ep, data, dest in sends:
        ep.send(data, dest)
    assert capture_wire(bus) == [b"one", b"two", b"three"]
    assert b.receive().data == b"one" and a.receive().data == b"two" and a.receive() is None
    assert bus.pending() == 1
    with pytest.raises(TransportFailure):
        bus.attach(b"a" * 12)
    with pytest.raises(TransportFailure):
        a.send(b"\x00" * (MAX_DATAGRAM + 1))
    bus.close()
    with pytest.raises(TransportFailure):
        a.send(b"late")


def test_capture_file_roundtrip(tmp_path):
    recs = [b"", b"\x00\xff", bytes(range(40))]
    write_capture(tmp_path / "c.hex", recs)
    assert read_capture(tmp_path / "c.hex") == [r for r in recs if r]


def test_missing_fixtures(tmp_path):
    with pytest.raises(FixtureMissing):
        run_scenario(make_scenario("baseline", tmp_path))


def test_baseline_delivery_and_access_control(fresh_tree):
    rep = run_scenario(make_scenario("baseline", fresh_tree.root), seed=1)
    assert rep.verdict == BASELINE_OK and rep.success
    assert rep.delivered["subscriber"] == {"CameraFrames": 0, "HelloTopic": 50}
    assert rep.delivered["observer"] == {}
    assert rep.denied["observer"] == [["HelloTopic", "subscribe", "local grant"]]
    assert rep.wire["plaintext_leaks"] == 0
    assert rep.manipulated_files == []
    assert all(v == "ESTABLISHED" for peers in rep.handshake_outcomes.values() for v in peers.values())


def test_scenarios_restore_the_tree(fresh_tree):
    before = _tree_digest(fresh_tree)
    for name in ("spy-intercept", "masquerade", "combined"):
        rep = run_scenario(make_scenario(name, fresh_tree.root), seed=2)
        assert rep.verdict == REPRODUCED, name
        assert rep.manipulated_files
        assert _tree_digest(fresh_tree) == before


@pytest.mark.parametrize("name", ["spy-intercept", "steal-services", "masquerade", "combined"])
def test_controls_do_not_reproduce(fresh_tree, name):
    rep = run_scenario(make_scenario(name, fresh_tree.root, control=True), seed=3)
    assert rep.verdict == NOT_REPRODUCED and rep.success


def test_steal_services_recovers_frames(fresh_tree):
    s = make_scenario("steal-services", fresh_tree.root, seed=4)
    rep = run_scenario(s, seed=4)
    assert rep.verdict == REPRODUCED
    got = [bytes.fromhex(p["plaintext_hex"]) for p in rep.decrypted_payloads]
    assert got == [item.payload for item in s.script]
    assert got[0].startswith(b"\xff\xd8")


def test_reports_are_deterministic(fresh_tree):
    a = run_scenario(make_scenario("spy-intercept", fresh_tree.root), seed=5).to_json()
    b = run_scenario(make_scenario("spy-intercept", fresh_tree.root), seed=5).to_json()
    c = run_scenario(make_scenario("spy-intercept", fresh_tree.root), seed=6).to_json()
    assert a == b != c


def test_spy_output_is_sufficient_on_its_own(fresh_tree):
    """Decryption in a separate interpreter, from the transcript and capture files only."""
    s = make_scenario("spy-intercept", fresh_tree.root)
    rep = run_scenario(s, seed=7)
    code = (
        "import sys\n"
        "from ddssec.harness import offline_decrypt, read_capture\n"
        "out = offline_decrypt(sys.argv[1], read_capture(sys.argv[2]))\n"
        "for r in out:\n"
        "    if r.topic == 'HelloTopic' and not r.is_gap: print(r.plaintext.decode())\n"
    )
    proc = subprocess.run([sys.executable, "-c", code, str(s.work_dir / "transcript.hex"),
                           str(s.work_dir / "capture.hex")], capture_output=True, text=True, check=True)
    assert proc.stdout.splitlines() == [item.payload.decode() for item in s.script]
    assert len(rep.decrypted_payloads) == 50


def test_empty_transcript_has_no_keys(tmp_path):
    (tmp_path / "t.hex").write_text("")
    with pytest.raises(KeyNotFound):
        offline_decrypt(tmp_path / "t.hex", [])


def test_truncated_transcript_yields_gaps(fresh_tree, tmp_path):
    s = make_scenario("spy-intercept", fresh_tree.root, rekey_every=10)
    rep = run_scenario(s, seed=8)
    assert rep.verdict == REPRODUCED
    transcript = s.work_dir / "transcript.hex"
    capture = read_capture(s.work_dir / "capture.hex")
    _, keys = offline_decrypt_detailed(transcript, capture)
    last = max(k.sequence for k in keys)
    records = [r for r in load_transcript(transcript) if r.sequence < last]
    short = tmp_path / "short.hex"
    short.write_text("# truncated\n" + "".join(hexdump_record(r) for r in records))
    out = offline_decrypt(short, capture)
    hello = [r for r in out if r.topic == "HelloTopic"]
    gaps = [r for r in out if r.is_gap]
    assert gaps, "a missing key must surface as a gap"
    opened = [r.plaintext for r in hello if not r.is_gap]
    assert 0 < len(opened) < 50
    assert opened == [item.payload for item in s.script[:len(opened)]]


def test_stream_sink(fresh_tree):
    s = make_scenario("spy-intercept", fresh_tree.root, sink=ExfiltrationSink(SinkKind.STREAM))
    rep = run_scenario(s, seed=9)
    assert rep.verdict == REPRODUCED
    assert (s.work_dir / "transcript.bin").stat().st_size > 0


def test_sign_only_governance_leaks(fresh_tree):
    gov = GovernancePolicy(rtps=ProtectionKind.SIGN, metadata=ProtectionKind.SIGN, data=ProtectionKind.SIGN)
    rep = run_scenario(make_scenario("baseline", fresh_tree.root, governance=gov), seed=10)
    assert rep.verdict == BASELINE_OK
    assert rep.wire["plaintext_leaks"] > 0
