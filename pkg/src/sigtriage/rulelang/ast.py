"""Rule AST. All nodes are frozen and compare structurally."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterator, Union

from ..ctph import FuzzySignature

SEVERITIES = ("malicious", "suspicious", "info")
COMPARATORS = ("==", "!=", "<", "<=", ">", ">=")
TEXT_MODIFIERS = ("nocase", "ascii", "wide", "fullword")
REGEX_MODIFIERS = ("nocase",)
MAX_JUMP = 256


@dataclass(frozen=True)
class TextPattern:
    value: bytes
    modifiers: frozenset = frozenset()


@dataclass(frozen=True)
class HexByte:
    """One hex-string position; ``mask`` selects the bits that must equal ``value``."""
    value: int
    mask: int = 0xFF

    @property
    def is_literal(self):
        return self.mask == 0xFF


@dataclass(frozen=True)
class HexJump:
    min: int
    max: int


@dataclass(frozen=True)
class HexPattern:
    tokens: tuple


@dataclass(frozen=True)
class RegexPattern:
    expression: str
    modifiers: frozenset = frozenset()


PatternBody = Union[TextPattern, HexPattern, RegexPattern]


@dataclass(frozen=True)
class PatternDef:
    id: str
    body: PatternBody


# Condition nodes

@dataclass(frozen=True)
class And:
    items: tuple


@dataclass(frozen=True)
class Or:
    items: tuple


@dataclass(frozen=True)
class Not:
    item: "ConditionExpr"


@dataclass(frozen=True)
class StringRef:
    id: str


@dataclass(frozen=True)
class CountCmp:
    id: str
    op: str
    value: int


@dataclass(frozen=True)
class At:
    id: str
    offset: int


@dataclass(frozen=True)
class OfExpr:
    quantifier: Union[str, int]   # "any", "all" or a count
    targets: Union[str, tuple]    # "them" or tuple of ids / "$prefix*" globs


@dataclass(frozen=True)
class Filesize:
    op: str
    value: int


@dataclass(frozen=True)
class UintRead:
    width: int
    offset: int
    op: str
    value: int


@dataclass(frozen=True)
class FuzzySim:
    signature: FuzzySignature
    op: str
    value: int


@dataclass(frozen=True)
class IntLiteral:
    value: int


@dataclass(frozen=True)
class BoolLiteral:
    value: bool


ConditionExpr = Union[And, Or, Not, StringRef, CountCmp, At, OfExpr, Filesize, UintRead,
                      FuzzySim, IntLiteral, BoolLiteral]


@dataclass(frozen=True)
class Rule:
    name: str
    condition: ConditionExpr
    tags: tuple = ()
    meta: tuple = ()          # ((key, value), ...) in source order
    patterns: tuple = ()

    def get_meta(self, key, default=None):
        for k, v in self.meta:
            if k == key:
                return v
        return default

    @property
    def severity(self) -> str:
        return self.get_meta("severity", "info")

    @property
    def family(self):
        return self.get_meta("family")

    @property
    def description(self):
        return self.get_meta("description")

    @property
    def pattern_ids(self) -> tuple:
        return tuple(p.id for p in self.patterns)


@dataclass(frozen=True)
class RuleSet:
    rules: tuple = ()

    def __iter__(self) -> Iterator[Rule]:
        return iter(self.rules)

    def __len__(self):
        return len(self.rules)

    def __getitem__(self, name: str) -> Rule:
        for r in self.rules:
            if r.name == name:
                return r
        raise KeyError(name)

    def __add__(self, other: "RuleSet") -> "RuleSet":
        return RuleSet(self.rules + other.rules)


def expand_targets(targets, pattern_ids) -> list[str]:
    """Resolve an ``of`` target set against a rule's pattern ids, keeping rule order."""
    if targets == "them":
        return list(pattern_ids)
    chosen = []
    for t in targets:
        if t.endswith("*"):
            prefix = t[:-1]
            chosen.extend(p for p in pattern_ids if p.startswith(prefix) and p not in chosen)
        elif t in pattern_ids and t not in chosen:
            chosen.append(t)
    return chosen


def walk(expr) -> Iterator:
    yield expr
    if isinstance(expr, (And, Or)):
        for item in expr.items:
            yield from walk(item)
    elif isinstance(expr, Not):
        yield from walk(expr.item)
