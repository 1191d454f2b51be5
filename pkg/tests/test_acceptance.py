"""Acceptance criteria, one test each. Every test records a PASS/FAIL line."""

import csv
import io
import itertools
import random
import signal
import time

import numpy as np
import pytest

import generators
from oracles import Env, interpret, naive_scan, osa_distance
from sigtriage.cli import main as cli_main
from sigtriage.ctph import fuzzy_compare, fuzzy_hash
from sigtriage.editdist import dl_distance
from sigtriage.engine import MatchContext, compile_rules, eval_condition, scan
from sigtriage.exacthash import digest_bytes, digest_stream
from sigtriage.regex import Regex
from sigtriage.rulelang import RuleError, parse_rules, render_rules

pytestmark = pytest.mark.acceptance

KIB = 1024
MIB = 1024 * KIB


def test_c1_edit_distance_oracle(acceptance):
    words = ["".join(p) for n in range(6) for p in itertools.product("abc", repeat=n)]
    start = time.perf_counter()
    mismatches = sum(dl_distance(a, b) != osa_distance(a, b) for a in words for b in words)
    elapsed = time.perf_counter() - start
    acceptance(1, mismatches == 0 and elapsed < 60,
               f"{len(words) ** 2} pairs, {mismatches} mismatches, {elapsed:.1f}s (limit 60s)")


class _Trickle(io.RawIOBase):
    """Returns reads in caller-chosen piece sizes, like a slow pipe."""

    def __init__(self, data, pieces):
        self.data = data
        self.pieces = list(pieces)
        self.pos = 0

    def readable(self):
        return True

    def readinto(self, buf):
        want = min(len(buf), self.pieces.pop(0) if self.pieces else len(buf))
        chunk = self.data[self.pos:self.pos + want]
        buf[:len(chunk)] = chunk
        self.pos += len(chunk)
        return len(chunk)


def test_c2_digest_vectors_and_chunking(acceptance):
    vectors_ok = (
        digest_bytes(b"").hex == "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855"
        and digest_bytes(b"abc").hex == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
    )
    rng = random.Random(2)
    failures = 0
    for _ in range(200):
        data = rng.randbytes(rng.randint(0, 20_000))
        pieces = [rng.randint(1, 4096) for _ in range(200)]
        chunk = rng.randint(1, 8192)
        got = digest_stream(_Trickle(data, pieces), chunk_size=chunk)
        failures += got != digest_bytes(data)
    acceptance(2, vectors_ok and failures == 0,
               f"FIPS vectors {'ok' if vectors_ok else 'WRONG'}, {failures}/200 partitions disagree")


def test_c3_fuzzy_self_similarity(acceptance):
    rng = random.Random(3)
    failures = 0
    for _ in range(100):
        size = int(2 ** rng.uniform(10, 20))
        sig = fuzzy_hash(rng.randbytes(size))
        failures += fuzzy_compare(sig, sig) != 100
    acceptance(3, failures == 0, f"{failures}/100 files fail self-compare = 100")


def test_c4_fuzzy_locality(acceptance):
    appended = flipped = 0
    for trial in range(100):
        rng = random.Random(4000 + trial)
        data = rng.randbytes(64 * KIB)
        base = fuzzy_hash(data)
        extra = data + rng.randbytes(len(data) // 100)
        appended += fuzzy_compare(base, fuzzy_hash(extra)) >= 50
        edit = bytearray(data)
        edit[rng.randrange(len(edit))] ^= 0xFF
        flipped += fuzzy_compare(base, fuzzy_hash(bytes(edit))) >= 90
    acceptance(4, appended >= 90 and flipped >= 90,
               f"append 1% scored >= 50 in {appended}/100; byte flip scored >= 90 in {flipped}/100 (need 90)")


def test_c5_fuzzy_discrimination(acceptance):
    zero = 0
    for trial in range(100):
        rng = random.Random(5000 + trial)
        a = fuzzy_hash(rng.randbytes(64 * KIB))
        b = fuzzy_hash(rng.randbytes(64 * KIB))
        zero += fuzzy_compare(a, b) == 0
    acceptance(5, zero >= 99, f"independent pairs scored 0 in {zero}/100 (need 99)")


def test_c6_matcher_oracle(acceptance):
    mismatches = 0
    for seed in range(1000):
        rs, data = generators.matcher_case(random.Random(6000 + seed))
        expected = naive_scan(rs, data)
        for r in scan(compile_rules(rs), data).rules:
            matched, offs = expected[r.name]
            got = {pid: list(v) for pid, v in r.offsets.items()}
            mismatches += r.matched != matched or got != offs
    acceptance(6, mismatches == 0, f"{mismatches}/1000 cases differ from the naive scan")


def test_c7_condition_equivalence(acceptance):
    mismatches = 0
    for seed in range(1000):
        rng = random.Random(7000 + seed)
        ids = [f"$s{k}" for k in range(rng.randint(0, 4))]
        expr = generators.condition(rng, ids, depth=4)
        offsets = {pid: tuple(sorted(rng.sample(range(40), rng.randint(0, 5)))) for pid in ids}
        data = rng.randbytes(rng.randint(0, 16))
        sig = generators.fuzzy_signature(rng) if rng.random() < 0.8 else None
        filesize = rng.randint(0, 300)
        got = eval_condition(expr, MatchContext(offsets, filesize, data, sig, ids))
        want = interpret(expr, Env(offsets, filesize, data, ids, sig, fuzzy_compare))
        mismatches += got != want
    acceptance(7, mismatches == 0, f"{mismatches}/1000 random condition trees disagree")


class _Hang(Exception):
    pass


def _on_alarm(signum, frame):
    raise _Hang()


_VOCAB = (
    "rule", "r", "x1", ":", "{", "}", "meta", "strings", "condition", "=", "$a", "$b", "$a*", "#a",
    '"MZ"', '"a\\x00"', "{ 4D ?? 5A }", "{ 4D [2-4] 5A }", "/ab+c/", "/(/", "nocase", "wide", "ascii",
    "fullword", "and", "or", "not", "(", ")", "any", "all", "of", "them", "at", "0", "0x10", "10KB",
    "filesize", "<", ">=", "==", "uint16(0)", "fuzzy_sim(", '"3:ABC:DE"', "true", "false", "//c\n",
    "/*", "*/", "severity", '"malicious"', ",", "[", "]", "\n", "\\", '"',
)


def _fuzz_inputs(rng):
    for k in range(10_000):
        kind = k % 4
        if kind == 0:
            text = render_rules(generators.ruleset(rng, 2))
            for _ in range(rng.randint(1, 6)):
                pos = rng.randrange(len(text) + 1)
                action = rng.random()
                if action < 0.4:
                    text = text[:pos] + text[pos + rng.randint(1, 8):]
                elif action < 0.8:
                    text = text[:pos] + rng.choice(_VOCAB) + text[pos:]
                else:
                    text = text[:pos] + chr(rng.randrange(1, 0x250)) + text[pos:]
            yield text
        elif kind == 1:
            yield " ".join(rng.choice(_VOCAB) for _ in range(rng.randint(0, 40)))
        elif kind == 2:
            yield "".join(chr(rng.randrange(32, 127)) for _ in range(rng.randint(0, 200)))
        else:
            yield rng.randbytes(rng.randint(0, 200)).decode("latin-1")
    # deep nesting and long inputs
    yield "rule r { condition: " + "(" * 5000 + "true" + ")" * 5000 + " }"
    yield "rule r { condition: " + "not " * 5000 + "true }"
    yield "rule r { strings: $a = /" + "(" * 3000 + "a" + ")" * 3000 + "/ condition: $a }"


def test_c8_parser_round_trip_and_fuzz(acceptance):
    round_trip_failures = 0
    for seed in range(500):
        rs = generators.ruleset(random.Random(8000 + seed))
        try:
            round_trip_failures += parse_rules(render_rules(rs)) != rs
        except RuleError:
            round_trip_failures += 1

    crashes, hangs, total = [], [], 0
    old = signal.signal(signal.SIGALRM, _on_alarm)
    try:
        for text in _fuzz_inputs(random.Random(8)):
            total += 1
            signal.setitimer(signal.ITIMER_REAL, 5.0)
            try:
                parse_rules(text)
            except RuleError:
                pass
            except _Hang:
                hangs.append(text[:80])
            except Exception as exc:   # anything else is a parser crash
                crashes.append(f"{type(exc).__name__}: {text[:80]!r}")
            finally:
                signal.setitimer(signal.ITIMER_REAL, 0)
    finally:
        signal.signal(signal.SIGALRM, old)
    acceptance(8, round_trip_failures == 0 and not crashes and not hangs and total >= 10_000,
               f"round-trip {500 - round_trip_failures}/500 equal; fuzz {total} inputs, "
               f"{len(crashes)} crashes, {len(hangs)} hangs" + (f"; first crash {crashes[0]}" if crashes else ""))


def test_c9_experiment_shape(acceptance, tmp_path, capsys):
    start = time.perf_counter()
    code = cli_main(["eval", "--out", str(tmp_path), "--no-figures"])
    elapsed = time.perf_counter() - start
    capsys.readouterr()
    rows = {(r["approach"], r["set"]): {k: int(r[k]) for k in ("size", "detected", "classified", "matched")}
            for r in csv.DictReader((tmp_path / "detection_table.csv").open())}
    exact_k, exact_v = rows[("exact", "known")], rows[("exact", "variant")]
    fuzzy_v, rules_v = rows[("fuzzy", "variant")], rows[("rules", "variant")]
    invariants = all(c["classified"] <= c["detected"] <= c["matched"] <= c["size"] == 15 for c in rows.values())
    ok = (code == 0 and exact_k["detected"] == 15 and exact_v["detected"] == 0
          and fuzzy_v["detected"] >= 10 and rules_v["matched"] >= fuzzy_v["matched"]
          and invariants and elapsed < 120)
    acceptance(9, ok, f"exact {exact_k['detected']}/15 known, {exact_v['detected']}/15 variants; "
                      f"fuzzy {fuzzy_v['detected']}/15 variants; matched rules {rules_v['matched']} "
                      f">= fuzzy {fuzzy_v['matched']}; invariants {'hold' if invariants else 'BROKEN'}; "
                      f"{elapsed:.1f}s (limit 120s)")


def _benchmark_rules(rng, count=200):
    """Rule mix for the throughput check.

    Text atoms of 8-16 bytes (a third nocase or wide), hex strings with
    wildcards and jumps anchored on 4-byte runs, and regexes gated by a
    5-byte literal. Conditions mix counts, quantifiers and header reads.
    """
    rules = []
    for k in range(count):
        strings = []
        for j in range(rng.randint(1, 4)):
            kind = rng.random()
            if kind < 0.6:
                word = "".join(rng.choice("abcdefghijklmnopqrstuvwxyz") for _ in range(rng.randint(8, 16)))
                mods = rng.choice(("", "", "nocase", "wide", "ascii wide"))
                strings.append(f'$s{j} = "{word}" {mods}')
            elif kind < 0.9:
                anchor = " ".join(f"{rng.randrange(256):02X}" for _ in range(4))
                tail = " ".join(f"{rng.randrange(256):02X}" for _ in range(3))
                strings.append(f"$s{j} = {{ {anchor} ?? [0-8] {tail} ?{rng.randrange(16):X} }}")
            else:
                lit = "".join(rng.choice("qwxyz") for _ in range(5))
                strings.append(f"$s{j} = /{lit}[0-9a-f]{{2,8}}(\\.dll|\\.exe)/")
        cond = rng.choice(("any of them", "all of them", "#s0 > 2", "$s0 and filesize > 1KB",
                           "uint16(0) == 0x5A4D and any of them"))
        rules.append(f"rule bench{k} {{ strings: {' '.join(strings)} condition: {cond} }}")
    return compile_rules(parse_rules("\n".join(rules)))


def _best_of(fn, repeat=3):
    best = float("inf")
    for _ in range(repeat):
        t = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t)
    return best


@pytest.mark.slow
def test_c10_throughput_and_linear_regex(acceptance):
    rng = random.Random(10)
    compiled = _benchmark_rules(rng)
    data = np.random.default_rng(10).integers(0, 256, 100 * MIB, dtype=np.uint8).tobytes()
    scan(compiled, data[:MIB])       # load compiled kernels before timing
    start = time.perf_counter()
    result = scan(compiled, data)
    scan_time = time.perf_counter() - start
    del data

    rx = Regex("(a+)+b")
    sizes = [128 * KIB << k for k in range(4)]
    rx.start_offsets(b"a" * 1024)
    times = [_best_of(lambda n=n: rx.start_offsets(b"a" * n)) for n in sizes]
    ratios = [later / earlier for earlier, later in zip(times, times[1:])]
    linear = all(r <= 4.0 for r in ratios)       # doubling input, allow twice the linear growth
    acceptance(10, scan_time < 10 and linear and len(result.rules) == 200,
               f"100 MiB x 200 rules in {scan_time:.2f}s (limit 10s); (a+)+b doubling ratios "
               + ", ".join(f"{r:.2f}" for r in ratios) + " (limit 4.0)")


def test_c11_fuzzy_predicate_in_rules(acceptance):
    hits = 0
    for trial in range(100):
        rng = random.Random(11_000 + trial)
        known = rng.randbytes(rng.choice((16, 32, 64, 128)) * KIB)
        rule = f'rule near_known {{ condition: fuzzy_sim("{fuzzy_hash(known).render()}") >= 50 }}'
        variant = known + rng.randbytes(len(known) // 100)
        hits += scan(compile_rules(parse_rules(rule)), variant)["near_known"].matched
    acceptance(11, hits >= 90, f"fuzzy_sim rule matched the 1%-appended variant in {hits}/100 (need 90)")
