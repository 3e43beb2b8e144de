"""Command line entry point.

Exit codes: 0 success, 1 negative verdict, 2 usage error, 3 runtime error.
The fixture root comes from ``--home``, else ``$DDSSEC_HOME``, else the
current directory.
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

from .attestation import GoldenDb, IntegrityMonitor, Quote, expected_bank, verify_quote
from .attestation.ima import format_line, ima_keyid
from .auth.policy import SCOPES, GovernancePolicy, ProtectionKind
from .config import config_diff, parse_property_file
from .crypto.keys import SigningAlgorithm, load_public_key_pem
from .crypto.provider import CryptoProvider
from .errors import DdsSecError
from .harness import (
    ExfiltrationSink,
    FixtureTree,
    ScenarioName,
    SinkKind,
    generate_fixtures,
    hello_script,
    make_scenario,
    run_scenario,
)

EXIT_OK = 0
EXIT_NEGATIVE = 1
EXIT_USAGE = 2
EXIT_RUNTIME = 3

HOME_ENV = "DDSSEC_HOME"
DEFAULT_QUOTE_PCRS = "0-10"

log = logging.getLogger("ddssec")


def _home(args) -> Path:
    return Path(args.home or os.environ.get(HOME_ENV) or ".").resolve()


def _pcr_list(text: str) -> list[int]:
    out: set[int] = set()
    for part in text.split(","):
        lo, _, hi = part.partition("-")
        out.update(range(int(lo), int(hi or lo) + 1))
    return sorted(out)


def _hex(text: str) -> bytes:
    try:
        return bytes.fromhex(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a hex string: {text!r}") from None


def _monitor(root: Path) -> IntegrityMonitor:
    return IntegrityMonitor.open(root)


def cmd_keygen(args) -> int:
    root = Path(args.out).resolve() if args.out else _home(args)
    algo = SigningAlgorithm.RSASSA_PSS_2048 if args.algorithm == "rsa" else SigningAlgorithm.ECDSA_P256
    tree = generate_fixtures(root, seed=args.seed, force=args.force, algorithm=algo)
    mon = IntegrityMonitor(root)
    mon.save()
    files = sorted(p for p in root.rglob("*") if p.is_file())
    print(f"wrote {len(files)} files under {tree.root}")
    return EXIT_OK


def _governance(args) -> GovernancePolicy | None:
    if not args.protect:
        return None
    kinds = {}
    for item in args.protect:
        scope, _, kind = item.partition("=")
        if scope not in SCOPES or kind.upper() not in ProtectionKind.__members__:
            raise ValueError(f"bad --protect value {item!r}; expected SCOPE=none|sign|encrypt")
        kinds[scope] = ProtectionKind[kind.upper()]
    return GovernancePolicy(**kinds)


def cmd_run(args) -> int:
    root = Path(args.config).resolve().parent if args.config else _home(args)
    FixtureTree(root).require()
    mon = None if args.no_measure else _monitor(root)
    kw = dict(control=args.control, key_bits=args.key_bits, rekey_every=args.rekey_every,
              sink=ExfiltrationSink(SinkKind(args.sink)))
    gov = _governance(args)
    if gov is not None:
        kw["governance"] = gov
    if args.messages is not None and args.scenario != ScenarioName.STEAL_SERVICES.value:
        kw["script"] = hello_script(args.messages)
    scenario = make_scenario(args.scenario, root, seed=args.seed, **kw)
    report = run_scenario(scenario, seed=args.seed, monitor=mon)
    if mon is not None:
        mon.save()
    if args.report:
        report.write(args.report)
    print(f"{report.scenario}{' (control)' if report.control else ''}: {report.verdict} "
          f"(expected {report.expected_verdict})")
    for note in report.notes:
        print(f"  {note}")
    return EXIT_OK if report.success else EXIT_NEGATIVE


def _golden_keyring(root: Path, golden: GoldenDb) -> None:
    pub = root / "attestation" / "vendor_pub.pem"
    if pub.exists():
        key = load_public_key_pem(pub.read_bytes())
        golden.trust_key(ima_keyid(key), key)


def cmd_measure(args) -> int:
    root = _home(args)
    mon = _monitor(root)
    if args.reset:
        mon.reboot()
    golden = GoldenDb.load(args.golden) if args.golden else None
    for p in args.paths:
        entry = mon.measure_file(Path(p))
        print(format_line(entry))
        if golden is not None:
            golden.enroll(entry)
    mon.save()
    if golden is not None:
        _golden_keyring(root, golden)
        golden.save(args.golden)
    return EXIT_OK


def cmd_appraise(args) -> int:
    root = _home(args)
    if not Path(args.golden).exists():
        raise FileNotFoundError(args.golden)
    mon = _monitor(root)
    result = mon.appraise(GoldenDb.load(args.golden))
    if args.json:
        print(json.dumps(result.to_dict(), indent=2, sort_keys=True))
    else:
        print(result.verdict)
        for reason in result.reasons:
            print(f"  {reason}")
    return EXIT_OK if result.trusted else EXIT_NEGATIVE


def cmd_quote(args) -> int:
    root = _home(args)
    mon = _monitor(root)
    q = mon.quote(_pcr_list(args.pcrs), args.nonce, FixtureTree(root).attestation_key)
    if args.out and args.out != "-":
        Path(args.out).write_bytes(q.encode())
    else:
        print(q.encode().hex())
    if args.dump:
        sys.stderr.write(q.hexdump())
    return EXIT_OK


def cmd_verify_quote(args) -> int:
    root = _home(args)
    raw = sys.stdin.buffer.read() if args.quote == "-" else Path(args.quote).read_bytes()
    try:
        raw = bytes.fromhex(raw.decode().strip())
    except (UnicodeDecodeError, ValueError):
        pass  # binary form
    q = Quote.decode(raw)
    pub_path = Path(args.pubkey) if args.pubkey else root / "attestation" / "ak_pub.pem"
    public = load_public_key_pem(pub_path.read_bytes())
    expected = expected_bank(_monitor(root).log)
    ok = verify_quote(q, expected, args.nonce, public, CryptoProvider())
    print("quote verified" if ok else "quote rejected")
    return EXIT_OK if ok else EXIT_NEGATIVE


def cmd_diff_config(args) -> int:
    diffs = config_diff(parse_property_file(args.a), parse_property_file(args.b))
    for key, old, new in diffs:
        print(f"{key}: {old} -> {new}")
    return EXIT_NEGATIVE if diffs else EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="ddssec", description="DDS Security attack and attestation testbed")
    ap.add_argument("--home", help=f"fixture root (default ${HOME_ENV} or the current directory)")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("keygen", help="generate the fixture tree")
    p.add_argument("out", nargs="?")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--force", action="store_true")
    p.add_argument("--algorithm", choices=("ecdsa", "rsa"), default="ecdsa")
    p.set_defaults(func=cmd_keygen)

    p = sub.add_parser("run", help="run a scenario and write its report")
    p.add_argument("scenario", choices=[s.value for s in ScenarioName])
    p.add_argument("--config", help="property file; its directory is used as the fixture root")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--report")
    p.add_argument("--control", action="store_true")
    p.add_argument("--key-bits", type=int, choices=(128, 256), default=256)
    p.add_argument("--rekey-every", type=int, default=0)
    p.add_argument("--messages", type=int)
    p.add_argument("--sink", choices=[k.value for k in SinkKind], default="file")
    p.add_argument("--protect", action="append", metavar="SCOPE=KIND",
                   help="governance override, e.g. data=sign (repeatable)")
    p.add_argument("--no-measure", action="store_true", help="do not record measurements")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("measure", help="measure files into the runtime log")
    p.add_argument("paths", nargs="+")
    p.add_argument("--golden", help="also enroll the measurements as golden values")
    p.add_argument("--reset", action="store_true", help="reboot the register bank first")
    p.set_defaults(func=cmd_measure)

    p = sub.add_parser("appraise", help="appraise the log against golden values")
    p.add_argument("--golden", required=True)
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=cmd_appraise)

    p = sub.add_parser("quote", help="sign selected registers with a verifier nonce")
    p.add_argument("--nonce", type=_hex, required=True)
    p.add_argument("--pcrs", default=DEFAULT_QUOTE_PCRS)
    p.add_argument("--out")
    p.add_argument("--dump", action="store_true", help="hex dump to stderr")
    p.set_defaults(func=cmd_quote)

    p = sub.add_parser("verify-quote", help="check a quote against the log replay")
    p.add_argument("quote", help="quote file (binary or hex), or - for stdin")
    p.add_argument("--nonce", type=_hex, required=True)
    p.add_argument("--pubkey")
    p.set_defaults(func=cmd_verify_quote)

    p = sub.add_parser("diff-config", help="list property differences between two files")
    p.add_argument("a")
    p.add_argument("b")
    p.set_defaults(func=cmd_diff_config)
    return ap


def main(argv: list[str] | None = None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code not in (0, None) else EXIT_OK
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (DdsSecError, OSError, ValueError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
