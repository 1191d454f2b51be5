"""Command-line entry point: ``sigtriage <command> ...``.

Exit codes follow sysexits where one fits: 64 usage, 65 bad input data,
66 unreadable input, 73 output cannot be created. ``triage`` reports the
worst verdict instead: 0 all unknown, 3 suspicious, 4 likely or known
malicious, 2 if no file could be triaged at all.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

from .ctph import fuzzy_compare, fuzzy_hash, parse_signature
from .engine import CompileError, compile_rules, scan
from .errors import FileTooLarge, ImportRejected, InputError, SignatureFormatError
from .exacthash import digest_bytes
from .rulelang import RuleError, load_rules
from .sigstore import EXACT, FUZZY, SignatureStore, write_signatures
from .triage import (
    DEFAULT_MAX_FILE_SIZE, KNOWN, LIKELY, SUSPICIOUS, TriageConfig, read_capped, render_report,
    triage_file,
)

EX_OK = 0
EX_IOERR = 2
EX_SUSPICIOUS = 3
EX_MALICIOUS = 4
EX_USAGE = 64
EX_DATAERR = 65
EX_NOINPUT = 66
EX_CANTCREAT = 73

log = logging.getLogger("sigtriage")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EX_USAGE, f"{self.prog}: error: {message}\n")


def _threshold(text):
    value = int(text)
    if not 0 <= value <= 100:
        raise argparse.ArgumentTypeError("threshold must be within [0, 100]")
    return value


def _positive(text):
    value = int(text)
    if value <= 0:
        raise argparse.ArgumentTypeError("must be positive")
    return value


def thread_count() -> int:
    env = os.environ.get("SIGTRIAGE_THREADS")
    if env is not None and env.strip().isdigit():
        return int(env)
    return os.cpu_count() or 1


def expand_inputs(paths) -> list[Path]:
    """Files as given; directories are walked. Each group is sorted lexicographically."""
    out = []
    for p in paths:
        p = Path(p)
        if p.is_dir():
            out.extend(sorted((q for q in p.rglob("*") if q.is_file()), key=str))
        else:
            out.append(p)
    return out


def _map_files(fn, files):
    threads = thread_count()
    if threads > 1 and len(files) > 1:
        with ThreadPoolExecutor(threads) as pool:
            return list(pool.map(fn, files))
    return [fn(f) for f in files]


def _read(path, args):
    """File bytes, or an error string to report instead.

    Oversized files come back as ``(None, None)`` after a warning: they are
    skipped, not failed.
    """
    try:
        return read_capped(path, args.max_file_size), None
    except FileTooLarge as exc:
        print(f"warning: skipped {exc}", file=sys.stderr)
        return None, None
    except InputError as exc:
        return None, str(exc)


def _load_rules(args):
    try:
        return compile_rules(load_rules(args.rules or []))
    except (RuleError, CompileError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        raise SystemExit(EX_DATAERR)
    except InputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        raise SystemExit(EX_NOINPUT)


def _load_store(args):
    try:
        return SignatureStore.load(args.exact_db or [], args.fuzzy_db or [])
    except ImportRejected as exc:
        print(f"error: {exc}", file=sys.stderr)
        raise SystemExit(EX_DATAERR)
    except InputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        raise SystemExit(EX_NOINPUT)


def cmd_hash(args) -> int:
    files = expand_inputs(args.paths)

    def one(path):
        data, err = _read(path, args)
        if data is None:
            return None, err
        sig = fuzzy_hash(data).render() if data else "-"
        return f"{digest_bytes(data).hex}  {sig}  {path}", None

    status = EX_OK
    for line, err in _map_files(one, files):
        if err:
            print(f"error: {err}", file=sys.stderr)
            status = EX_IOERR
        elif line is not None:
            print(line)
    return status


def cmd_compare(args) -> int:
    sigs = []
    for label, text in (("first", args.sig_a), ("second", args.sig_b)):
        try:
            sigs.append(parse_signature(text))
        except SignatureFormatError as exc:
            print(f"error: {label} signature: {exc}", file=sys.stderr)
            return EX_DATAERR
    print(fuzzy_compare(*sigs))
    return EX_OK


def cmd_compile(args) -> int:
    compiled = _load_rules(args)
    print(f"{len(compiled.rules)} rules, {len(compiled.patterns)} patterns, {len(compiled.atoms)} atoms"
          + (", fuzzy predicates present" if compiled.fuzzy_needed else ""))
    return EX_OK


def cmd_scan(args) -> int:
    compiled = _load_rules(args)
    files = expand_inputs(args.paths)

    def one(path):
        data, err = _read(path, args)
        if data is None:
            return None, err
        return scan(compiled, data), None

    status = EX_OK
    docs = []
    for path, (result, err) in zip(files, _map_files(one, files)):
        if err:
            print(f"error: {err}", file=sys.stderr)
            status = EX_IOERR
            continue
        if result is None:
            continue
        if args.format == "json":
            docs.append({"file": str(path), **result.to_dict()})
        else:
            print(f"-{path}:")
            names = [m.name for m in result.matched]
            print("\n".join(names) if names else "(no matches)")
    if args.format == "json":
        print(json.dumps(docs, indent=2))
    return status


def cmd_triage(args) -> int:
    compiled = _load_rules(args)
    store = _load_store(args)
    cfg = TriageConfig(args.threshold, args.max_matches, args.max_file_size)
    files = expand_inputs(args.paths)

    def one(path):
        try:
            return triage_file(path, store, compiled, cfg), None
        except InputError as exc:
            return None, str(exc)

    reports = []
    failures = 0
    for report, err in _map_files(one, files):
        if err:
            print(f"error: {err}", file=sys.stderr)
            failures += 1
        else:
            reports.append(report)
    if args.format == "json":
        print(json.dumps([r.to_dict() for r in reports], indent=2))
    else:
        print("\n\n".join(render_report(r, "text") for r in reports))
    if failures and not reports:
        return EX_IOERR
    verdicts = {r.verdict for r in reports}
    if verdicts & {KNOWN, LIKELY}:
        return EX_MALICIOUS
    if SUSPICIOUS in verdicts:
        return EX_SUSPICIOUS
    return EX_OK


def cmd_import(args) -> int:
    store = SignatureStore()
    total = 0
    try:
        for path in args.paths:
            n = store.import_signatures(path, args.kind)
            print(f"{path}: {n} records")
            total += n
    except ImportRejected as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EX_DATAERR
    except InputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EX_NOINPUT
    records = list(store.exact.values()) if args.kind == EXACT else store.fuzzy_records
    print(f"{len(records)} unique of {total} accepted")
    if args.out:
        try:
            write_signatures(records, args.out)
        except OSError as exc:
            print(f"error: cannot write {args.out}: {exc}", file=sys.stderr)
            return EX_CANTCREAT
    return EX_OK


def cmd_eval(args) -> int:
    from .harness import CorpusManifest, run_eval

    out = Path(args.out)
    try:
        out.mkdir(parents=True, exist_ok=True)
        probe = out / ".write-test"
        probe.write_bytes(b"")
        probe.unlink()
    except OSError as exc:
        print(f"error: cannot write to {out}: {exc}", file=sys.stderr)
        return EX_CANTCREAT
    manifest = CorpusManifest(seed=args.seed, known_count=args.known, variant_count=args.variants,
                              novel_count=args.novel)
    cfg = TriageConfig(args.threshold, args.max_matches, args.max_file_size)
    try:
        table, _ = run_eval(out, manifest, cfg, threads=thread_count(), figures=not args.no_figures)
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EX_CANTCREAT
    print(table.to_text(), end="")
    return EX_OK


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="sigtriage", description="Signature-based malware triage.")
    parser.add_argument("-v", "--verbose", action="store_true", help="log warnings and info to stderr")
    sub = parser.add_subparsers(dest="command", required=True, metavar="command")

    def common(p, rules=False, dbs=False):
        p.add_argument("--max-file-size", type=_positive, default=DEFAULT_MAX_FILE_SIZE,
                       help="skip files larger than this many bytes (default 256 MiB)")
        if rules:
            p.add_argument("--rules", action="append", metavar="PATH",
                           help="rule file or directory of .yar files (repeatable)")
        if dbs:
            p.add_argument("--exact-db", action="append", metavar="CSV", help="exact signature CSV (repeatable)")
            p.add_argument("--fuzzy-db", action="append", metavar="CSV", help="fuzzy signature CSV (repeatable)")
            p.add_argument("--threshold", type=_threshold, default=50, help="fuzzy detection threshold")
            p.add_argument("--max-matches", type=_positive, default=10, help="fuzzy matches to keep")

    p = sub.add_parser("hash", help="print SHA-256 and fuzzy signature per file")
    p.add_argument("paths", nargs="+")
    common(p)
    p.set_defaults(func=cmd_hash)

    p = sub.add_parser("compare", help="similarity of two fuzzy signatures")
    p.add_argument("sig_a")
    p.add_argument("sig_b")
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("compile", help="check that rule files parse and compile")
    p.add_argument("--rules", action="append", metavar="PATH", required=True)
    p.set_defaults(func=cmd_compile)

    p = sub.add_parser("scan", help="list matching rules per file")
    p.add_argument("paths", nargs="+")
    common(p)
    p.add_argument("--rules", action="append", metavar="PATH", required=True,
                   help="rule file or directory of .yar files (repeatable)")
    p.add_argument("--format", choices=("text", "json"), default="text")
    p.set_defaults(func=cmd_scan)

    p = sub.add_parser("triage", help="verdict and classification per file")
    p.add_argument("paths", nargs="+")
    common(p, rules=True, dbs=True)
    p.add_argument("--format", choices=("text", "json"), default="text")
    p.set_defaults(func=cmd_triage)

    p = sub.add_parser("import", help="validate and merge signature CSV files")
    p.add_argument("paths", nargs="+")
    p.add_argument("--kind", choices=(EXACT, FUZZY), required=True)
    p.add_argument("--out", help="write the merged, normalized CSV here")
    p.set_defaults(func=cmd_import)

    p = sub.add_parser("eval", help="generate a synthetic corpus and tabulate detection")
    p.add_argument("--seed", type=int, default=2021)
    p.add_argument("--out", default="sigtriage-eval")
    p.add_argument("--known", type=int, default=15)
    p.add_argument("--variants", type=int, default=15)
    p.add_argument("--novel", type=int, default=0)
    p.add_argument("--no-figures", action="store_true", help="skip the PNG figures")
    common(p, dbs=False)
    p.add_argument("--threshold", type=_threshold, default=50)
    p.add_argument("--max-matches", type=_positive, default=10)
    p.set_defaults(func=cmd_eval)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s: %(message)s", force=True)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
