import random

import pytest

import generators
from oracles import Env, interpret, naive_scan
from sigtriage.ctph import fuzzy_compare, fuzzy_hash
from sigtriage.engine import CompileError, MatchContext, compile_rules, eval_condition, scan
from sigtriage.engine.automaton import AhoCorasick
from sigtriage.engine.scanner import pattern_offsets
from sigtriage.rulelang import parse_rules
from sigtriage.rulelang.ast import (
    BoolLiteral, FuzzySim, Not, OfExpr, PatternDef, RegexPattern, Rule, RuleSet,
)


def compiled(text):
    return compile_rules(parse_rules(text))


def test_text_atom():
    c = compiled('rule r { strings: $a = "MZ" condition: $a }')
    assert [a.literal for a in c.atoms] == [b"MZ"]


def test_hex_atom_lowest_offset():
    c = compiled("rule r { strings: $a = { 4D ?? 5A [2-4] 90 } condition: $a }")
    (atom,) = c.atoms
    assert atom.literal == b"\x4d" and atom.offset == 0


def test_hex_atom_longest_run():
    c = compiled("rule r { strings: $a = { 4D ?? 5A 5B [2] 90 91 92 } condition: $a }")
    assert c.atoms[0].literal == b"\x90\x91\x92"


def test_wide_and_nocase_atoms():
    c = compiled('rule r { strings: $a = "Ab" ascii wide nocase condition: $a }')
    assert sorted(a.literal for a in c.atoms) == [b"a\x00b\x00", b"ab"]
    assert all(a.nocase for a in c.atoms)


def test_empty_ruleset():
    c = compile_rules(RuleSet(()))
    result = scan(c, b"anything")
    assert result.rules == () and result.matched == []


def test_empty_matching_regex_rejected():
    rs = RuleSet((Rule("r", BoolLiteral(True), patterns=(PatternDef("$a", RegexPattern("a*")),)),))
    with pytest.raises(CompileError) as info:
        compile_rules(rs)
    assert "$a" in str(info.value)


def test_overlapping_count():
    result = scan(compiled('rule r { strings: $a = "aa" condition: #a == 2 }'), b"aaa")
    assert result["r"].matched
    assert result["r"].offsets["$a"] == (0, 1)


def test_uint16_little_endian():
    c = compiled("rule r { condition: uint16(0) == 0x5A4D }")
    assert scan(c, b"MZ\x90\x00").matched
    assert not scan(c, b"M").matched


def test_absent_pattern():
    assert not scan(compiled('rule r { strings: $a = "xyz" condition: $a }'), b"abc")["r"].matched


def test_hex_jump_verification():
    c = compiled("rule r { strings: $a = { 4D ?? 5A [2-4] 90 } condition: $a }")
    data = b"..M\x00Z12\x90..MxZ12345\x90"
    assert scan(c, data)["r"].offsets["$a"] == (2,)


def test_hex_backward_jump():
    # atom sits in the last segment, so the verifier walks the jump backwards
    c = compiled("rule r { strings: $a = { 41 [1-3] 42 43 44 } condition: $a }")
    assert scan(c, b"A_BCD A__BCD A____BCD")["r"].offsets["$a"] == (0, 6)


def test_fullword():
    c = compiled('rule r { strings: $a = "cmd" fullword condition: $a }')
    assert scan(c, b"cmd.exe xcmd cmd1 (cmd)")["r"].offsets["$a"] == (0, 19)


def test_regex_without_atom_scans_everything():
    c = compiled(r"rule r { strings: $a = /[0-9][a-f]/ condition: #a == 2 }")
    assert c.patterns[0].full_scan
    assert scan(c, b"1a 2z 3f")["r"].matched


def test_nocase_text():
    c = compiled('rule r { strings: $a = "KeyState" nocase condition: $a }')
    assert scan(c, b"xx keystate KEYSTATE")["r"].offsets["$a"] == (3, 12)


def test_fuzzy_predicate_self_similarity():
    data = random.Random(3).randbytes(8192)
    sig = fuzzy_hash(data).render()
    c = compiled(f'rule r {{ condition: fuzzy_sim("{sig}") >= 50 }}')
    assert c.fuzzy_needed
    assert scan(c, data)["r"].matched
    assert not scan(c, b"")["r"].matched


def test_result_to_dict():
    c = compiled('rule r : t { meta: severity = "info" strings: $a = "ab" condition: $a }')
    d = scan(c, b"xxab").to_dict()
    assert d["filesize"] == 4
    assert d["matches"] == [{"rule": "r", "matched": True, "tags": ["t"], "meta": {"severity": "info"},
                             "strings": {"$a": [2]}, "truncated": []}]


def test_scan_deterministic():
    rng = random.Random(8)
    rs = generators.ruleset(rng)
    c = compile_rules(rs)
    data = rng.randbytes(500)
    assert scan(c, data) == scan(c, data)


def test_aho_corasick_against_naive():
    rng = random.Random(0)
    for _ in range(200):
        atoms = [bytes(rng.choice(b"abc") for _ in range(rng.randint(1, 4))) for _ in range(rng.randint(1, 6))]
        data = bytes(rng.choice(b"abc") for _ in range(rng.randint(0, 100)))
        expected = sorted((i, k) for k, a in enumerate(atoms)
                          for i in range(len(data) - len(a) + 1) if data[i:i + len(a)] == a)
        assert sorted(AhoCorasick(atoms).find_all(data)) == expected


def test_matcher_agrees_with_naive_scan():
    for seed in range(300):
        rs, data = generators.matcher_case(random.Random(seed), mixed=True)
        expected = naive_scan(rs, data)
        for r in scan(compile_rules(rs), data).rules:
            matched, offs = expected[r.name]
            assert r.matched == matched, seed
            assert {k: list(v) for k, v in r.offsets.items()} == offs, seed


def test_pattern_offsets_shape():
    c = compiled('rule r { strings: $a = "a" $b = "b" condition: $a } rule s { condition: true }')
    found = pattern_offsets(c, b"ab")
    assert found == [{"$a": {0}, "$b": {1}}, {}]


def test_condition_examples():
    ctx = MatchContext({"$a": (1,), "$b": (), "$c": ()}, 10)
    assert not eval_condition(Not(BoolLiteral(True)), ctx)
    assert eval_condition(OfExpr("any", "them"), ctx)
    assert not eval_condition(OfExpr("all", "them"), ctx)
    sig = fuzzy_hash(b"q" * 300)
    assert not eval_condition(FuzzySim(sig, ">=", 0), ctx)


def random_context(rng, ids):
    offsets = {pid: tuple(sorted(rng.sample(range(30), rng.randint(0, 4)))) for pid in ids}
    data = rng.randbytes(rng.randint(0, 12))
    sig = generators.fuzzy_signature(rng) if rng.random() < 0.8 else None
    return offsets, data, sig


def test_condition_agrees_with_interpreter():
    for seed in range(300):
        rng = random.Random(seed)
        ids = [f"$x{k}" for k in range(rng.randint(0, 4))]
        expr = generators.condition(rng, ids)
        offsets, data, sig = random_context(rng, ids)
        ctx = MatchContext(offsets, len(data) * 25, data, sig, ids)
        env = Env(offsets, len(data) * 25, data, ids, sig, fuzzy_compare)
        assert eval_condition(expr, ctx) == interpret(expr, env), (seed, expr)
