"""Independent reference implementations used as test oracles.

Each oracle is deliberately naive: a direct recursion or a brute-force scan
that shares no code with the package beyond the AST dataclasses.
"""

from __future__ import annotations

import re
import struct
from functools import lru_cache

from sigtriage.rulelang.ast import (
    And, At, BoolLiteral, CountCmp, Filesize, FuzzySim, HexJump, HexPattern, IntLiteral, Not,
    OfExpr, Or, RegexPattern, StringRef, TextPattern, UintRead,
)


def osa_distance(a, b) -> int:
    """Restricted Damerau-Levenshtein by plain recursion over suffixes."""

    @lru_cache(maxsize=None)
    def d(i, j):
        if i == len(a):
            return len(b) - j
        if j == len(b):
            return len(a) - i
        best = min(d(i + 1, j) + 1, d(i, j + 1) + 1, d(i + 1, j + 1) + (a[i] != b[j]))
        if i + 1 < len(a) and j + 1 < len(b) and a[i] == b[j + 1] and a[i + 1] == b[j]:
            best = min(best, d(i + 2, j + 2) + 1)
        return best

    return d(0, 0)


def naive_triggers(data: bytes, blocksize: int) -> list[int]:
    """Trigger points of the 7-byte rolling hash, recomputed from scratch per window."""
    out = []
    for i in range(len(data)):
        window = [0] * max(0, 6 - i) + list(data[max(0, i - 6):i + 1])
        h1 = sum(window) & 0xFFFFFFFF
        h2 = sum((k + 1) * c for k, c in enumerate(window)) & 0xFFFFFFFF
        h3 = 0
        for c in window:     # older bytes have been shifted out of 32 bits
            h3 = ((h3 << 5) & 0xFFFFFFFF) ^ c
        if (h1 + h2 + h3) % blocksize == blocksize - 1:
            out.append(i)
    return out


_B64 = "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/"


def _block_chars(data, ends, limit):
    chars = []
    start = 0
    for end in list(ends) + ([len(data) - 1] if not ends or ends[-1] != len(data) - 1 else []):
        h = 0x28021967
        for c in data[start:end + 1]:
            h = ((h * 16777619) & 0xFFFFFFFF) ^ c
        if len(chars) == limit:
            chars[-1] = _B64[h % 64]
        else:
            chars.append(_B64[h % 64])
        start = end + 1
    return "".join(chars)


def reference_signature(data: bytes) -> str:
    """Rendered fuzzy signature built from the naive trigger list."""
    b = 3
    while 64 * b < len(data):
        b *= 2
    while True:
        sig1 = _block_chars(data, naive_triggers(data, b), 64)
        if len(sig1) < 32 and b > 3:
            b //= 2
            continue
        sig2 = _block_chars(data, naive_triggers(data, 2 * b), 32)
        return f"{b}:{sig1}:{sig2}"


# Pattern matching by brute force

_WORD_BYTES = set(b"ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789")


def _text_offsets(body: TextPattern, data: bytes) -> set:
    mods = body.modifiers
    forms = []
    if "ascii" in mods or "wide" not in mods:
        forms.append(body.value)
    if "wide" in mods:
        forms.append(b"".join(bytes([c, 0]) for c in body.value))
    hay = data.lower() if "nocase" in mods else data
    found = set()
    for form in forms:
        needle = form.lower() if "nocase" in mods else form
        for i in range(len(data) - len(needle) + 1):
            if hay[i:i + len(needle)] != needle:
                continue
            if "fullword" in mods:
                if i > 0 and data[i - 1] in _WORD_BYTES:
                    continue
                end = i + len(needle)
                if end < len(data) and data[end] in _WORD_BYTES:
                    continue
            found.add(i)
    return found


def hex_to_python_regex(body: HexPattern) -> bytes:
    parts = []
    for tok in body.tokens:
        if isinstance(tok, HexJump):
            parts.append(b".{%d,%d}" % (tok.min, tok.max))
        elif tok.mask == 0xFF:
            parts.append(re.escape(bytes([tok.value])))
        elif tok.mask == 0:
            parts.append(b".")
        else:
            members = [c for c in range(256) if c & tok.mask == tok.value & tok.mask]
            parts.append(b"[" + b"".join(b"\\x%02x" % c for c in members) + b"]")
    return b"".join(parts)


def _regex_offsets(pattern: bytes, flags: int, data: bytes) -> set:
    rx = re.compile(pattern, flags)
    return {i for i in range(len(data)) if rx.match(data, i)}


def pattern_offsets(body, data: bytes) -> set:
    if isinstance(body, TextPattern):
        return _text_offsets(body, data)
    if isinstance(body, HexPattern):
        return _regex_offsets(hex_to_python_regex(body), re.DOTALL, data)
    if isinstance(body, RegexPattern):
        flags = re.IGNORECASE if "nocase" in body.modifiers else 0
        return _regex_offsets(body.expression.encode("latin-1"), flags, data)
    raise TypeError(body)


def naive_scan(ruleset, data: bytes, signature=None, similarity=None):
    """``{rule name: (matched, {pattern id: sorted offsets})}``."""
    out = {}
    for rule in ruleset:
        offs = {p.id: sorted(pattern_offsets(p.body, data)) for p in rule.patterns}
        env = Env(offs, len(data), data, [p.id for p in rule.patterns], signature, similarity)
        out[rule.name] = (interpret(rule.condition, env), offs)
    return out


# Condition interpreter

class Env:
    def __init__(self, offsets, filesize, data=b"", ids=None, signature=None, similarity=None):
        self.offsets = offsets
        self.filesize = filesize
        self.data = data
        self.ids = list(offsets) if ids is None else list(ids)
        self.signature = signature
        self.similarity = similarity    # callable(sig_a, sig_b) -> int


def _cmp(op, a, b):
    return {"==": a == b, "!=": a != b, "<": a < b, "<=": a <= b, ">": a > b, ">=": a >= b}[op]


def _targets(targets, ids):
    if targets == "them":
        return list(ids)
    chosen = []
    for t in targets:
        for pid in ids:
            hit = pid.startswith(t[:-1]) if t.endswith("*") else pid == t
            if hit and pid not in chosen:
                chosen.append(pid)
    return chosen


def interpret(expr, env: Env) -> bool:
    kind = type(expr)
    if kind is And:
        result = True
        for item in expr.items:
            result = interpret(item, env) and result
        return result
    if kind is Or:
        result = False
        for item in expr.items:
            result = interpret(item, env) or result
        return result
    if kind is Not:
        return not interpret(expr.item, env)
    if kind is BoolLiteral:
        return expr.value is True
    if kind is IntLiteral:
        return expr.value > 0
    if kind is StringRef:
        return len(env.offsets.get(expr.id, [])) > 0
    if kind is CountCmp:
        return _cmp(expr.op, len(env.offsets.get(expr.id, [])), expr.value)
    if kind is At:
        return expr.offset in list(env.offsets.get(expr.id, []))
    if kind is OfExpr:
        chosen = _targets(expr.targets, env.ids)
        n = len([pid for pid in chosen if env.offsets.get(pid)])
        need = {"any": 1, "all": len(chosen)}.get(expr.quantifier, expr.quantifier)
        return n >= need
    if kind is Filesize:
        return _cmp(expr.op, env.filesize, expr.value)
    if kind is UintRead:
        fmt = {8: "<B", 16: "<H", 32: "<I"}[expr.width]
        size = struct.calcsize(fmt)
        if expr.offset + size > len(env.data):
            return False
        (value,) = struct.unpack_from(fmt, env.data, expr.offset)
        return _cmp(expr.op, value, expr.value)
    if kind is FuzzySim:
        if env.signature is None:
            return False
        return _cmp(expr.op, env.similarity(env.signature, expr.signature), expr.value)
    raise TypeError(expr)
