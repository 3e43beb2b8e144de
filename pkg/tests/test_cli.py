import json
import os
import subprocess
import sys

import pytest

from ddssec.cli import EXIT_NEGATIVE, EXIT_OK, EXIT_RUNTIME, EXIT_USAGE, main
from ddssec.config import masquerade, parse_property_file, write_property_file
from ddssec.harness.fixtures import ADVERSARY_PATHS


@pytest.fixture(scope="module")
def home(tmp_path_factory):
    root = tmp_path_factory.mktemp("home")
    assert main(["keygen", str(root), "--seed", "3"]) == EXIT_OK
    return root


def _run(home, *argv):
    return main(["--home", str(home), *argv])


def _cli(home, *argv, **kw):
    env = dict(os.environ, DDSSEC_HOME=str(home))
    return subprocess.run([sys.executable, "-m", "ddssec", *argv], env=env, capture_output=True, **kw)


def test_keygen_refuses_overwrite(home, capsys):
    assert main(["keygen", str(home)]) == EXIT_RUNTIME
    assert "FileExistsError" in capsys.readouterr().err


def test_usage_errors(home):
    assert main([]) == EXIT_USAGE
    assert _run(home, "run", "no-such-scenario") == EXIT_USAGE
    assert _run(home, "quote", "--nonce", "zz") == EXIT_USAGE
    assert _run(home, "run", "baseline", "--protect", "bogus=encrypt") == EXIT_RUNTIME


def test_missing_inputs(tmp_path, home):
    assert main(["--home", str(tmp_path), "run", "baseline"]) == EXIT_RUNTIME
    assert _run(home, "appraise", "--golden", str(tmp_path / "nope.json")) == EXIT_RUNTIME


def test_measure_appraise_attack_cycle(home, tmp_path, capsys):
    golden = tmp_path / "golden.json"
    assert _run(home, "measure", "--reset", "--golden", str(golden),
                str(home / "lib/libddscrypto.py"), str(home / "secure_hello_qos.xml")) == EXIT_OK
    lines = capsys.readouterr().out.splitlines()
    assert lines[0].split()[2] == "ima-sig" and lines[1].split()[4] == "secure_hello_qos.xml"
    assert json.loads(golden.read_text())["keyring"]
    assert _run(home, "appraise", "--golden", str(golden)) == EXIT_OK

    report = tmp_path / "r.json"
    assert _run(home, "run", "spy-intercept", "--seed", "7", "--report", str(report)) == EXIT_OK
    assert json.loads(report.read_text())["verdict"] == "reproduced"
    assert _run(home, "run", "masquerade") == EXIT_OK
    capsys.readouterr()
    assert _run(home, "appraise", "--golden", str(golden), "--json") == EXIT_NEGATIVE
    res = json.loads(capsys.readouterr().out)
    bad = sorted(h for h, v in res["files"].items() if v["verdict"] == "untrusted")
    assert bad == ["lib/libddscrypto.py", "secure_hello_qos.xml"]


def test_run_is_reproducible(home, tmp_path):
    for name in ("a", "b"):
        assert _run(home, "run", "spy-intercept", "--seed", "11", "--no-measure",
                    "--report", str(tmp_path / name)) == EXIT_OK
    assert (tmp_path / "a").read_bytes() == (tmp_path / "b").read_bytes()


def test_run_options(home, tmp_path, capsys):
    assert _run(home, "run", "masquerade", "--control", "--no-measure") == EXIT_OK
    assert "not_reproduced" in capsys.readouterr().out
    report = tmp_path / "r.json"
    assert _run(home, "run", "baseline", "--no-measure", "--messages", "5", "--key-bits", "128",
                "--protect", "data=sign", "--report", str(report)) == EXIT_OK
    rep = json.loads(report.read_text())
    assert rep["delivered"]["subscriber"]["HelloTopic"] == 5
    assert rep["governance"]["data"] == "AES128_GMAC"
    assert _run(home, "run", "spy-intercept", "--no-measure", "--sink", "stream", "--rekey-every", "10") == EXIT_OK


def test_quote_pipe_verifies_out_of_process(home):
    q = _cli(home, "quote", "--nonce", "c0ffee", check=True).stdout
    ok = _cli(home, "verify-quote", "-", "--nonce", "c0ffee", input=q)
    assert ok.returncode == EXIT_OK and b"quote verified" in ok.stdout
    stale = _cli(home, "verify-quote", "-", "--nonce", "c0ffef", input=q)
    assert stale.returncode == EXIT_NEGATIVE


def test_quote_file_and_extra_extend(home, tmp_path, capsys):
    out = tmp_path / "q.bin"
    assert _run(home, "quote", "--nonce", "01", "--pcrs", "10", "--out", str(out), "--dump") == EXIT_OK
    assert "pcr10" in capsys.readouterr().err
    assert _run(home, "verify-quote", str(out), "--nonce", "01") == EXIT_OK
    extra = tmp_path / "extra"
    extra.write_text("x")
    assert _run(home, "measure", str(extra)) == EXIT_OK
    assert _run(home, "verify-quote", str(out), "--nonce", "01") == EXIT_NEGATIVE


def test_diff_config(home, tmp_path, capsys):
    cfg = parse_property_file(home / "secure_hello_qos.xml")
    evil = tmp_path / "evil.xml"
    write_property_file(masquerade(cfg, ADVERSARY_PATHS, "subscriber"), evil)
    assert main(["diff-config", str(home / "secure_hello_qos.xml"), str(home / "secure_hello_qos.xml")]) == EXIT_OK
    capsys.readouterr()
    assert main(["diff-config", str(home / "secure_hello_qos.xml"), str(evil)]) == EXIT_NEGATIVE
    assert len(capsys.readouterr().out.splitlines()) == 3


def test_rsa_keygen(tmp_path):
    assert main(["keygen", str(tmp_path / "rsa"), "--algorithm", "rsa"]) == EXIT_OK
    assert main(["--home", str(tmp_path / "rsa"), "run", "spy-intercept", "--no-measure"]) == EXIT_OK
