import socket
import threading

from hypothesis import given, settings
from hypothesis import strategies as st

from ddssec.crypto.keys import AeadKey, AgreementAlgorithm, TransformationKind, generate_signing_key
from ddssec.crypto.provider import CryptoProvider
from ddssec.crypto.transcript import (
    BinaryFileSink,
    CryptoCallRecord,
    HexDumpFileSink,
    ListSink,
    Primitive,
    StreamSink,
    decode_records,
    encode_record,
    hexdump_record,
    load_transcript,
    parse_hexdump,
    read_frames,
    records_of,
    transcript_wrap,
)
from ddssec.rng import Rng

fields = st.dictionaries(st.text("abcdefghij_", min_size=1, max_size=12), st.binary(max_size=64), max_size=5)
records = st.builds(
    CryptoCallRecord,
    st.integers(1, 2**31),
    st.sampled_from(list(Primitive)),
    fields,
    fields,
    st.floats(0, 2e9, allow_nan=False).map(lambda t: round(t, 6)),
)


@settings(max_examples=100)
@given(st.lists(records, max_size=5))
def test_binary_and_hexdump_roundtrip(recs):
    blob = b"".join(encode_record(r) for r in recs)
    assert decode_records(blob) == recs
    text = "".join(hexdump_record(r) for r in recs)
    assert parse_hexdump(text) == recs


def _exercise(p):
    key = AeadKey(b"\x01" * 32, TransformationKind.AES256_GCM)
    ct, tag = p.aead_encrypt(key, b"\x00" * 12, b"aad", b"secret payload")
    sk = generate_signing_key(rng=Rng(4))
    a = p.generate_ephemeral(AgreementAlgorithm.ECDH_P256, Rng(1))
    b = p.generate_ephemeral(AgreementAlgorithm.ECDH_P256, Rng(2))
    return (
        ct, tag,
        p.aead_decrypt(key, b"\x00" * 12, b"aad", ct, tag),
        p.gmac(AeadKey(b"\x02" * 16, TransformationKind.AES128_GMAC), b"\x00" * 12, b"x"),
        p.sign(sk, b"msg"),
        p.verify(sk.public, b"msg", p.sign(sk, b"msg")),
        p.key_agree(a, b.public, ("i", "r")).data,
        p.digest(b"d"),
        p.mac(b"k", b"m"),
    )


def test_wrapper_is_observationally_identical():
    sink = ListSink()
    spy = transcript_wrap(CryptoProvider(), sink)
    assert _exercise(spy) == _exercise(CryptoProvider())
    prims = [r.primitive for r in sink]
    assert Primitive.AEAD_ENCRYPT in prims and Primitive.KEY_AGREE in prims
    enc = records_of(sink, Primitive.AEAD_ENCRYPT)[0]
    assert enc.inputs["key"] == b"\x01" * 32 and enc.inputs["plaintext"] == b"secret payload"
    ka = records_of(sink, Primitive.KEY_AGREE)[0]
    assert ka.outputs["shared_secret"] == _exercise(CryptoProvider())[6]
    assert ka.inputs["origin"] == b"i|r"
    assert [r.sequence for r in sink] == list(range(1, len(sink) + 1))


def test_failed_calls_are_recorded_and_reraised():
    sink = ListSink()
    spy = transcript_wrap(CryptoProvider(), sink)
    key = AeadKey(b"\x01" * 16, TransformationKind.AES128_GCM)
    try:
        spy.aead_decrypt(key, b"\x00" * 12, b"", b"abc", b"\x00" * 16)
    except Exception as exc:
        assert type(exc).__name__ == "AuthenticationFailed"
    assert sink.records[-1].outputs == {"error": b"AuthenticationFailed"}


def test_broken_sink_stays_invisible():
    def bad(_):
        raise OSError("disk full")

    spy = transcript_wrap(CryptoProvider(), bad)
    assert spy.digest(b"x") == CryptoProvider().digest(b"x")
    assert spy.sink_errors and "disk full" in spy.sink_errors[0]


def test_file_sinks(tmp_path):
    hexp, binp = tmp_path / "t.hex", tmp_path / "t.bin"
    spy = transcript_wrap(transcript_wrap(CryptoProvider(), HexDumpFileSink(hexp)), BinaryFileSink(binp),
                          clock=lambda: 0.0)
    spy.mac(b"k", b"m")
    assert hexp.read_text().startswith("# seq=1 primitive=MAC")
    assert [r.primitive for r in load_transcript(hexp)] == [Primitive.MAC]
    assert load_transcript(binp)[0].outputs["mac"] == CryptoProvider().mac(b"k", b"m")
    assert load_transcript(tmp_path / "missing") == []


def test_stream_sink_frames_reach_collector():
    server = socket.create_server(("127.0.0.1", 0))
    got = []

    def collect():
        conn, _ = server.accept()
        with conn:
            got.extend(read_frames(conn))

    t = threading.Thread(target=collect)
    t.start()
    sink = StreamSink(*server.getsockname())
    spy = transcript_wrap(CryptoProvider(), sink)
    for i in range(5):
        spy.digest(bytes([i]))
    sink.close()
    t.join(5)
    server.close()
    assert [r.inputs["message"] for r in got] == [bytes([i]) for i in range(5)]
