import hashlib
import shutil

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ddssec.attestation import ima as ima_mod
from ddssec.attestation.appraise import GoldenDb, appraise, check_attributes, protect_attributes
from ddssec.attestation.ima import (
    MeasurementLog,
    format_line,
    make_entry,
    parse_ima_signature,
    parse_line,
    template_hash_of,
)
from ddssec.attestation.monitor import IntegrityMonitor, expected_bank
from ddssec.attestation.pcr import IMA_PCR, NUM_PCRS, PCR_LAYOUT, PcrBank, boot_aggregate, pcr_extend, scripted_boot
from ddssec.attestation.quote import Quote, quote, selection_bitmap, selection_indices, verify_quote
from ddssec.errors import AttestationError, IndexOutOfRange

# measurement list lines as printed in the published examples; wrapped lines rejoined
NG_LINE = "10 91f34b5c671d73504b274a919661cf80dab1e127 ima-ng sha1:1801e1be3e65ef1eaa5c16617bec8f1274eaf6b3 boot_aggregate"
SIG_LINE = (
    "10 f63c10947347c71ff205ebfde5971009af27b0ba ima-sig "
    "sha256:6c118980083bccd259f069c2b3c3f3a2f5302d17a685409786564f4cf05b3939 "
    "/usr/lib64/libgspell-1.so.1.0.0 0302046e6c10460100aa43a4b1136f45735669632ad"
)

digests = st.binary(min_size=32, max_size=32)
# list lines are space separated, so hints are whitespace-free path strings
hints = st.text(st.characters(min_codepoint=0x21, max_codepoint=0x7E), min_size=1, max_size=20)


def test_published_lines_parse_and_emit():
    ng = parse_line(NG_LINE)
    assert (ng.pcr, ng.template_name, ng.hash_algo, ng.filename_hint) == (10, "ima-ng", "sha1", "boot_aggregate")
    assert ng.file_signature is None and format_line(ng) == NG_LINE
    sig = parse_line(SIG_LINE)
    assert sig.template_name == "ima-sig" and sig.hash_algo == "sha256" and len(sig.file_hash) == 32
    assert sig.filename_hint == "/usr/lib64/libgspell-1.so.1.0.0"
    assert format_line(sig) == SIG_LINE


def test_published_signature_header():
    # the dump is truncated, so only the header is decodable
    hdr = parse_ima_signature(parse_line(SIG_LINE).file_signature)
    assert (hdr.type, hdr.version, hdr.hash_algo) == (3, 2, 4)
    assert hdr.keyid == bytes.fromhex("6e6c1046") and hdr.size == 0x0100
    assert not hdr.complete
    assert (ima_mod.SIG_TYPE, ima_mod.SIG_VERSION, ima_mod.SIG_HASH_SHA256) == (3, 2, 4)


def test_entry_invariants():
    with pytest.raises(ValueError):
        parse_line("10 00 ima-sig sha256:00 /only/hint")
    with pytest.raises(ValueError):
        parse_line("10 00 ima-xx sha256:00 hint")
    with pytest.raises(ValueError):
        parse_line("10 00")


def test_table_layout():
    assert NUM_PCRS == 24 and sorted(PCR_LAYOUT) == list(range(24))
    assert PCR_LAYOUT[IMA_PCR] == "Integrity Measurement Architecture (IMA)"
    assert PCR_LAYOUT[0] == "BIOS" and PCR_LAYOUT[23] == "Application support"
    assert {PCR_LAYOUT[i] for i in (8, 9, 11, 12, 13, 14, 15)} == {"Static operating system"}


def test_extend_bootstrap_and_range():
    m = hashlib.sha256(b"m").digest()
    bank = pcr_extend(PcrBank(), 10, m)
    assert bank[10] == hashlib.sha256(b"\x00" * 32 + m).digest()
    assert all(bank[i] == b"\x00" * 32 for i in range(24) if i != 10)
    for bad in (24, -1):
        with pytest.raises(IndexOutOfRange):
            pcr_extend(bank, bad, m)
    with pytest.raises(ValueError):
        pcr_extend(bank, 0, b"short")
    assert PcrBank.from_text(bank.to_text()) == bank


@settings(max_examples=100)
@given(st.lists(digests, min_size=1, max_size=64))
def test_extend_never_revisits_a_value(ms):
    seen = {b"\x00" * 32}
    bank = PcrBank()
    for m in ms:
        bank = pcr_extend(bank, 3, m)
        assert bank[3] not in seen
        seen.add(bank[3])


@settings(max_examples=100)
@given(st.lists(st.tuples(st.sampled_from(["ng", "sig"]), digests, hints), max_size=20))
def test_log_replay_matches_live_register(items):
    mon = IntegrityMonitor("/tmp")
    for kind, digest, hint in items:
        e = make_entry(digest, hint, b"\x03\x02\x04" + b"\x00" * 6 if kind == "sig" else None)
        with mon._lock:
            mon.log.append(e)
            mon.bank = pcr_extend(mon.bank, IMA_PCR, e.template_hash)
    bank, log = mon.snapshot()
    assert log.replay() == bank[IMA_PCR]
    assert expected_bank(log) == bank
    assert MeasurementLog.from_text(log.to_text()) == log
    assert all(template_hash_of(e) == e.template_hash for e in log.entries)


def test_measure_file(tmp_path):
    f = tmp_path / "lib.so"
    f.write_bytes(b"\x7fELF")
    mon = IntegrityMonitor(tmp_path)
    a, b = mon.measure_file(f), mon.measure_file(f)
    assert a.file_hash == b.file_hash == hashlib.sha256(b"\x7fELF").digest()
    assert len(mon.log.entries) == 3 and a.template_name == "ima-ng" and a.filename_hint == "lib.so"
    (tmp_path / "lib.so.ima").write_bytes(b"\x03\x02\x04" + b"\x00" * 6)
    assert mon.measure_file(f).template_name == "ima-sig"
    assert mon.measure_file(f, "ima-ng").template_name == "ima-ng"
    with pytest.raises(FileNotFoundError):
        mon.measure_file(tmp_path / "missing")
    f2 = tmp_path / "other"
    f2.write_bytes(b"")
    with pytest.raises(FileNotFoundError):
        mon.measure_file(f2, "ima-sig")
    mon.save()
    again = IntegrityMonitor.open(tmp_path)
    assert again.snapshot() == mon.snapshot()
    assert again.log.replay() == again.bank[IMA_PCR]


def test_boot_aggregate_entry():
    mon = IntegrityMonitor("/tmp")
    first = mon.log.entries[0]
    assert first.filename_hint == "boot_aggregate" and first.file_hash == boot_aggregate(scripted_boot())
    assert mon.bank[0] != b"\x00" * 32 and mon.bank[11] == b"\x00" * 32


def _measured(tree, files):
    mon = IntegrityMonitor(tree.root)
    golden = GoldenDb()
    for rel in files:
        golden.enroll(mon.measure_file(tree.path(rel)))
    from ddssec.harness.fixtures import vendor_keyid
    golden.trust_key(vendor_keyid(tree), tree.vendor_key.public)
    return mon, golden


def test_appraise_honest_and_tampered_log(shared_tree):
    mon, golden = _measured(shared_tree, ["lib/libddscrypto.py", "secure_hello_qos.xml"])
    res = mon.appraise(golden)
    assert res.trusted, res.reasons
    assert mon.log.entries[1].template_name == "ima-sig"
    bank, log = mon.snapshot()
    forged = log.edited(2, file_hash=hashlib.sha256(b"x").digest())
    res = appraise(forged, bank, golden)
    assert not res.trusted and "secure_hello_qos.xml" in res.offending
    # re-hashing the template hides the field edit but not the replay mismatch
    e = forged.entries[2]
    forged = forged.edited(2, template_hash=template_hash_of(e))
    golden.files["secure_hello_qos.xml"] = forged.entries[2].file_data_hash
    res = appraise(forged, bank, golden)
    assert not res.trusted and res.reasons == ["measurement list replay does not reproduce PCR 10"]


def test_appraise_unknown_file_and_bad_signatures(shared_tree, tmp_path):
    mon, golden = _measured(shared_tree, ["lib/libddscrypto.py"])
    stray = tmp_path / "stray"
    stray.write_bytes(b"?")
    mon.measure_file(stray)
    res = mon.appraise(golden)
    assert res.offending == [mon.hint_for(stray)]
    mon2, golden2 = _measured(shared_tree, ["lib/libddscrypto.py"])
    golden2.keyring.clear()
    assert "lib/libddscrypto.py" in mon2.appraise(golden2).offending
    assert GoldenDb.from_json(golden.to_json()) == golden


def test_spy_library_fails_signature(fresh_tree):
    from ddssec.harness import install_library
    mon, golden = _measured(fresh_tree, ["lib/libddscrypto.py"])
    install_library(fresh_tree, fresh_tree.spy_library_source("file", "/tmp/x"))
    golden.files.clear()
    golden.enroll(mon.measure_file(fresh_tree.library))
    res = mon.appraise(golden)
    assert not res.trusted
    assert "file signature does not match contents" in res.files["lib/libddscrypto.py"]["reasons"]


def test_quote_roundtrip_and_mutations(shared_tree, provider):
    ak = shared_tree.attestation_key
    bank = scripted_boot()
    q = quote(bank, range(11), b"nonce-1", ak, provider)
    assert Quote.decode(q.encode()) == q
    assert q.indices == tuple(range(11))
    assert verify_quote(q, bank, b"nonce-1", ak.public, provider)
    assert not verify_quote(q, bank, b"nonce-0", ak.public, provider)
    assert not verify_quote(q, pcr_extend(bank, 10, b"\x01" * 32), b"nonce-1", ak.public, provider)
    sub = {i: bank[i] for i in range(10)}
    assert not verify_quote(q, sub, b"nonce-1", ak.public, provider)
    for mutated in (
        Quote(selection_bitmap(range(12)), q.values, q.nonce, q.signature),
        Quote(q.selection, (b"\x00" * 32,) + q.values[1:], q.nonce, q.signature),
        Quote(q.selection, q.values, b"nonce-2", q.signature),
        Quote(q.selection, q.values, q.nonce, q.signature[:-1] + bytes([q.signature[-1] ^ 1])),
    ):
        assert not verify_quote(mutated, bank, b"nonce-1", ak.public, provider)
    assert "pcr10" in q.hexdump()
    with pytest.raises(AttestationError):
        Quote.decode(q.encode()[:-3])
    with pytest.raises(AttestationError):
        Quote.decode(b"XXXX")


@settings(max_examples=100)
@given(st.sets(st.integers(0, 23)))
def test_selection_bitmap_roundtrip(sel):
    assert selection_indices(selection_bitmap(sel)) == tuple(sorted(sel))


def test_protected_attributes(tmp_path, shared_tree):
    signer = shared_tree.vendor_key
    f = tmp_path / "secure_hello_qos.xml"
    f.write_bytes(b"<dds/>")
    side = protect_attributes(f, signer, root=tmp_path)
    assert side.name == "secure_hello_qos.xml.sattr"
    assert check_attributes(f, side, signer.public, root=tmp_path)
    f.write_bytes(b"<dds/ >")
    assert not check_attributes(f, side, signer.public, root=tmp_path)
    f.write_bytes(b"<dds/>")
    moved = tmp_path / "renamed.xml"
    shutil.move(f, moved)
    assert not check_attributes(moved, side, signer.public, root=tmp_path)
    with pytest.raises(FileNotFoundError):
        check_attributes(f, side, signer.public, root=tmp_path)
