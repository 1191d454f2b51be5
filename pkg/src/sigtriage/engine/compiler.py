"""Turn a RuleSet into atoms, an automaton and per-pattern verifiers."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

from ..errors import SigTriageError
from ..regex import Regex, mandatory_literals
from ..rulelang.ast import FuzzySim, HexJump, HexPattern, RegexPattern, RuleSet, TextPattern, walk
from .automaton import AhoCorasick
from .condition import compile_condition

_ALNUM = frozenset(b"ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789")


class CompileError(SigTriageError, ValueError):
    def __init__(self, rule, pattern, message):
        self.rule = rule
        self.pattern = pattern
        super().__init__(f"rule {rule}, pattern {pattern}: {message}")


def widen(data: bytes) -> bytes:
    """UTF-16LE expansion of an 8-bit literal."""
    return bytes(b for c in data for b in (c, 0))


class TextVerifier:
    """The atom is the whole literal, so only the fullword boundary is left to check."""

    def __init__(self, literal, fullword):
        self.length = len(literal)
        self.fullword = fullword

    def starts(self, data, pos):
        if self.fullword:
            end = pos + self.length
            if pos > 0 and data[pos - 1] in _ALNUM:
                return ()
            if end < len(data) and data[end] in _ALNUM:
                return ()
        return (pos,)


class HexVerifier:
    """Checks masked segments around an atom and walks the jump windows both ways."""

    def __init__(self, tokens, atom_segment, atom_offset):
        self.segments = []   # (values, masks) per run of non-jump tokens
        self.jumps = []      # (min, max) between consecutive segments
        values, masks = [], []
        for tok in tokens:
            if isinstance(tok, HexJump):
                self.segments.append((bytes(values), bytes(masks)))
                self.jumps.append((tok.min, tok.max))
                values, masks = [], []
            else:
                values.append(tok.value & tok.mask)
                masks.append(tok.mask)
        self.segments.append((bytes(values), bytes(masks)))
        self.atom_segment = atom_segment
        self.atom_offset = atom_offset

    def _segment_at(self, data, k, pos):
        values, masks = self.segments[k]
        if pos < 0 or pos + len(values) > len(data):
            return False
        for i, (v, m) in enumerate(zip(values, masks)):
            if data[pos + i] & m != v:
                return False
        return True

    def starts(self, data, pos):
        k = self.atom_segment
        seg_start = pos - self.atom_offset
        if not self._segment_at(data, k, seg_start):
            return ()
        ends = {seg_start + len(self.segments[k][0])}
        for j in range(k + 1, len(self.segments)):
            lo, hi = self.jumps[j - 1]
            ends = {e + gap + len(self.segments[j][0]) for e in ends for gap in range(lo, hi + 1)
                    if self._segment_at(data, j, e + gap)}
            if not ends:
                return ()
        starts = {seg_start}
        for j in range(k - 1, -1, -1):
            lo, hi = self.jumps[j]
            seg_len = len(self.segments[j][0])
            starts = {s - gap - seg_len for s in starts for gap in range(lo, hi + 1)
                      if self._segment_at(data, j, s - gap - seg_len)}
            if not starts:
                return ()
        return starts


@dataclass(frozen=True)
class Atom:
    """A literal that drives the automaton, and how to confirm a hit on it."""
    literal: bytes
    rule: int
    pattern: str
    offset: int          # where the atom sits inside the (expanded) pattern
    nocase: bool
    verifier: object     # TextVerifier | HexVerifier | None for regex gating


@dataclass
class CompiledPattern:
    rule: int
    id: str
    regex: Optional[Regex] = None
    full_scan: bool = False


def _longest_run(runs):
    best = b""
    for r in runs:
        if len(r) > len(best):
            best = r
    return best


def _hex_atom(tokens):
    """Longest run of fully specified bytes; earliest wins ties."""
    best = (0, 0, 0)  # length, segment, offset-in-segment
    seg = off = 0
    run_len = run_start = 0
    for tok in tokens:
        if isinstance(tok, HexJump):
            seg += 1
            off = run_len = 0
            continue
        if tok.is_literal:
            if run_len == 0:
                run_start = off
            run_len += 1
            if run_len > best[0]:
                best = (run_len, seg, run_start)
        else:
            run_len = 0
        off += 1
    return best


class CompiledRuleSet:
    """Scan-ready form of a RuleSet. Immutable after construction."""

    def __init__(self, ruleset: RuleSet):
        self.ruleset = ruleset
        self.rules = tuple(ruleset)
        self.conditions = tuple(compile_condition(r.condition) for r in self.rules)
        self.fuzzy_needed = any(isinstance(n, FuzzySim) for r in self.rules for n in walk(r.condition))
        self.atoms: list[Atom] = []
        self.patterns: list[CompiledPattern] = []
        for ri, rule in enumerate(self.rules):
            for pdef in rule.patterns:
                self._add_pattern(ri, rule.name, pdef)
        self.atoms = tuple(self.atoms)
        exact = [i for i, a in enumerate(self.atoms) if not a.nocase]
        folded = [i for i, a in enumerate(self.atoms) if a.nocase]
        self.automaton = _Group(self.atoms, exact)
        self.folded_automaton = _Group(self.atoms, folded)

    def _add_pattern(self, ri, rule_name, pdef):
        body = pdef.body
        cp = CompiledPattern(ri, pdef.id)
        self.patterns.append(cp)
        if isinstance(body, TextPattern):
            nocase = "nocase" in body.modifiers
            variants = []
            if "ascii" in body.modifiers or "wide" not in body.modifiers:
                variants.append(body.value)
            if "wide" in body.modifiers:
                variants.append(widen(body.value))
            for literal in variants:
                atom = literal.lower() if nocase else literal
                self.atoms.append(Atom(atom, ri, pdef.id, 0, nocase,
                                       TextVerifier(literal, "fullword" in body.modifiers)))
        elif isinstance(body, HexPattern):
            length, seg, off = _hex_atom(body.tokens)
            if length == 0:
                raise CompileError(rule_name, pdef.id, "no fully specified byte to anchor on")
            verifier = HexVerifier(body.tokens, seg, off)
            values = verifier.segments[seg][0]
            self.atoms.append(Atom(values[off:off + length], ri, pdef.id, off, False, verifier))
        elif isinstance(body, RegexPattern):
            nocase = "nocase" in body.modifiers
            cp.regex = Regex(body.expression, nocase)
            if cp.regex.matches_empty:
                raise CompileError(rule_name, pdef.id, "regular expression matches the empty string")
            atom = _longest_run(mandatory_literals(cp.regex.ast))
            if atom:
                self.atoms.append(Atom(atom.lower() if nocase else atom, ri, pdef.id, 0, nocase, None))
            else:
                cp.full_scan = True
        else:
            raise CompileError(rule_name, pdef.id, f"unsupported pattern type {type(body).__name__}")

    @property
    def needs_folding(self) -> bool:
        return len(self.folded_automaton) > 0


class _Group:
    """One automaton over a subset of the atom table."""

    def __init__(self, atoms, indices):
        self.indices = indices
        self.automaton = AhoCorasick([atoms[i].literal for i in indices]) if indices else None

    def __len__(self):
        return len(self.indices)

    def find_all(self, data):
        if self.automaton is None:
            return []
        return [(start, self.indices[a]) for start, a in self.automaton.find_all(data)]


def compile_rules(rs: RuleSet) -> CompiledRuleSet:
    return CompiledRuleSet(rs)
