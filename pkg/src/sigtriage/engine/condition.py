"""Condition evaluation.

Conditions are compiled once into nested closures; :func:`eval_condition`
is the convenience entry point used for one-off evaluation.
"""

from __future__ import annotations

import bisect
import operator
from dataclasses import dataclass, field
from typing import Callable, Mapping, Optional, Sequence

from ..ctph import FuzzySignature, fuzzy_compare
from ..rulelang.ast import (
    And, At, BoolLiteral, CountCmp, Filesize, FuzzySim, IntLiteral, Not, OfExpr, Or, StringRef,
    UintRead, expand_targets,
)

OPERATORS = {
    "==": operator.eq, "!=": operator.ne, "<": operator.lt,
    "<=": operator.le, ">": operator.gt, ">=": operator.ge,
}


@dataclass
class MatchContext:
    offsets: Mapping[str, Sequence[int]]
    filesize: int
    data: bytes = b""
    signature: Optional[FuzzySignature] = None
    pattern_ids: Optional[Sequence[str]] = None
    _fuzzy_cache: dict = field(default_factory=dict, repr=False)

    def ids(self):
        return list(self.pattern_ids) if self.pattern_ids is not None else list(self.offsets)

    def similarity(self, sig: FuzzySignature) -> int:
        score = self._fuzzy_cache.get(sig)
        if score is None:
            score = self._fuzzy_cache[sig] = fuzzy_compare(self.signature, sig)
        return score


Predicate = Callable[[MatchContext], bool]


def compile_condition(expr) -> Predicate:
    if isinstance(expr, And):
        parts = [compile_condition(e) for e in expr.items]
        return lambda ctx: all(p(ctx) for p in parts)
    if isinstance(expr, Or):
        parts = [compile_condition(e) for e in expr.items]
        return lambda ctx: any(p(ctx) for p in parts)
    if isinstance(expr, Not):
        inner = compile_condition(expr.item)
        return lambda ctx: not inner(ctx)
    if isinstance(expr, BoolLiteral):
        value = bool(expr.value)
        return lambda ctx: value
    if isinstance(expr, IntLiteral):
        value = expr.value != 0
        return lambda ctx: value
    if isinstance(expr, StringRef):
        pid = expr.id
        return lambda ctx: bool(ctx.offsets.get(pid))
    if isinstance(expr, CountCmp):
        pid, op, value = expr.id, OPERATORS[expr.op], expr.value
        return lambda ctx: op(len(ctx.offsets.get(pid, ())), value)
    if isinstance(expr, At):
        pid, offset = expr.id, expr.offset

        def at(ctx):
            offs = ctx.offsets.get(pid, ())
            i = bisect.bisect_left(offs, offset)
            return i < len(offs) and offs[i] == offset
        return at
    if isinstance(expr, OfExpr):
        quantifier, targets = expr.quantifier, expr.targets

        def of(ctx):
            chosen = expand_targets(targets, ctx.ids())
            hits = sum(1 for pid in chosen if ctx.offsets.get(pid))
            if quantifier == "any":
                return hits >= 1
            if quantifier == "all":
                return hits == len(chosen)
            return hits >= quantifier
        return of
    if isinstance(expr, Filesize):
        op, value = OPERATORS[expr.op], expr.value
        return lambda ctx: op(ctx.filesize, value)
    if isinstance(expr, UintRead):
        width, offset, op, value = expr.width // 8, expr.offset, OPERATORS[expr.op], expr.value

        def uint(ctx):
            if offset + width > len(ctx.data):
                return False
            return op(int.from_bytes(ctx.data[offset:offset + width], "little"), value)
        return uint
    if isinstance(expr, FuzzySim):
        sig, op, value = expr.signature, OPERATORS[expr.op], expr.value

        def fuzzy(ctx):
            if ctx.signature is None:
                return False
            return op(ctx.similarity(sig), value)
        return fuzzy
    raise TypeError(f"unknown condition node {expr!r}")


def eval_condition(expr, ctx: MatchContext) -> bool:
    return compile_condition(expr)(ctx)
