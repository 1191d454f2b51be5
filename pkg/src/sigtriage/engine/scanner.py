"""Scanning: one automaton pass, per-hit verification, then conditions."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

from ..ctph import FuzzySignature, fuzzy_hash
from .compiler import CompiledRuleSet
from .condition import MatchContext

MAX_OFFSETS = 1_000_000


@dataclass(frozen=True)
class RuleMatch:
    name: str
    matched: bool
    tags: tuple = ()
    meta: tuple = ()
    offsets: dict = field(default_factory=dict)    # pattern id -> sorted tuple of offsets
    truncated: frozenset = frozenset()

    def get_meta(self, key, default=None):
        return dict(self.meta).get(key, default)

    @property
    def severity(self):
        return self.get_meta("severity", "info")

    @property
    def family(self):
        return self.get_meta("family")

    def to_dict(self):
        return {
            "rule": self.name,
            "matched": self.matched,
            "tags": list(self.tags),
            "meta": {k: v for k, v in self.meta},
            "strings": {pid: list(offs) for pid, offs in self.offsets.items()},
            "truncated": sorted(self.truncated),
        }


@dataclass(frozen=True)
class MatchResult:
    rules: tuple
    filesize: int
    signature: Optional[FuzzySignature] = None

    @property
    def matched(self) -> list[RuleMatch]:
        return [r for r in self.rules if r.matched]

    def __getitem__(self, name) -> RuleMatch:
        for r in self.rules:
            if r.name == name:
                return r
        raise KeyError(name)

    def to_dict(self):
        return {
            "filesize": self.filesize,
            "ssdeep": self.signature.render() if self.signature else None,
            "matches": [r.to_dict() for r in self.rules if r.matched],
        }


def pattern_offsets(compiled: CompiledRuleSet, data: bytes) -> list[dict]:
    """Per rule, a mapping of pattern id to the set of match start offsets."""
    found = [{pid: set() for pid in rule.pattern_ids} for rule in compiled.rules]
    atoms = compiled.atoms
    hits = compiled.automaton.find_all(data)
    if compiled.needs_folding:
        hits += compiled.folded_automaton.find_all(data.lower())
    gated = set()
    for start, ai in hits:
        atom = atoms[ai]
        if atom.verifier is None:
            gated.add((atom.rule, atom.pattern))
            continue
        found[atom.rule][atom.pattern].update(atom.verifier.starts(data, start))
    for cp in compiled.patterns:
        if cp.regex is not None and (cp.full_scan or (cp.rule, cp.id) in gated):
            found[cp.rule][cp.id].update(cp.regex.start_offsets(data))
    return found


def scan(compiled: CompiledRuleSet, data: bytes, signature: Optional[FuzzySignature] = None) -> MatchResult:
    """Match every rule against ``data``.

    ``signature`` may carry a precomputed fuzzy hash of ``data``; otherwise it
    is computed here when some condition needs it.
    """
    data = bytes(data)
    if compiled.fuzzy_needed and data and signature is None:
        signature = fuzzy_hash(data)
    results = []
    for ri, (rule, offs) in enumerate(zip(compiled.rules, pattern_offsets(compiled, data))):
        offsets = {}
        truncated = set()
        for pid, found in offs.items():
            ordered = sorted(found)
            if len(ordered) > MAX_OFFSETS:
                truncated.add(pid)
                del ordered[MAX_OFFSETS:]
            offsets[pid] = tuple(ordered)
        ctx = MatchContext(offsets, len(data), data, signature if data else None, rule.pattern_ids)
        matched = compiled.conditions[ri](ctx)
        results.append(RuleMatch(rule.name, matched, rule.tags, rule.meta, offsets, frozenset(truncated)))
    return MatchResult(tuple(results), len(data), signature if data else None)
