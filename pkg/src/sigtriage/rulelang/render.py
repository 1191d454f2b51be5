"""Canonical text form of a RuleSet; parsing the output yields an equal AST."""

from __future__ import annotations

from .ast import (
    TEXT_MODIFIERS, And, At, BoolLiteral, CountCmp, Filesize, FuzzySim, HexByte, HexJump,
    HexPattern, IntLiteral, Not, OfExpr, Or, RegexPattern, Rule, RuleSet, StringRef, TextPattern,
    UintRead,
)

_ESCAPES = {0x22: '\\"', 0x5C: "\\\\", 0x0A: "\\n", 0x09: "\\t", 0x0D: "\\r"}


def quote(data: bytes) -> str:
    out = []
    for b in data:
        if b in _ESCAPES:
            out.append(_ESCAPES[b])
        elif 0x20 <= b < 0x7F:
            out.append(chr(b))
        else:
            out.append(f"\\x{b:02x}")
    return '"' + "".join(out) + '"'


def _hex_token(tok) -> str:
    if isinstance(tok, HexJump):
        return f"[{tok.min}]" if tok.min == tok.max else f"[{tok.min}-{tok.max}]"
    hi = f"{tok.value >> 4:X}" if tok.mask & 0xF0 else "?"
    lo = f"{tok.value & 0xF:X}" if tok.mask & 0x0F else "?"
    return hi + lo


def render_pattern(body) -> str:
    if isinstance(body, TextPattern):
        mods = [m for m in TEXT_MODIFIERS if m in body.modifiers]
        return " ".join([quote(body.value)] + mods)
    if isinstance(body, HexPattern):
        return "{ " + " ".join(_hex_token(t) for t in body.tokens) + " }"
    if isinstance(body, RegexPattern):
        return " ".join([f"/{body.expression}/"] + sorted(body.modifiers))
    raise TypeError(f"unknown pattern body {body!r}")


def render_condition(expr) -> str:
    if isinstance(expr, (And, Or)):
        word = " and " if isinstance(expr, And) else " or "
        return word.join(_wrapped(item) for item in expr.items)
    if isinstance(expr, Not):
        return "not " + _wrapped(expr.item)
    if isinstance(expr, StringRef):
        return expr.id
    if isinstance(expr, CountCmp):
        return f"#{expr.id[1:]} {expr.op} {expr.value}"
    if isinstance(expr, At):
        return f"{expr.id} at {expr.offset}"
    if isinstance(expr, OfExpr):
        targets = "them" if expr.targets == "them" else "(" + ", ".join(expr.targets) + ")"
        return f"{expr.quantifier} of {targets}"
    if isinstance(expr, Filesize):
        return f"filesize {expr.op} {expr.value}"
    if isinstance(expr, UintRead):
        return f"uint{expr.width}({expr.offset}) {expr.op} {expr.value}"
    if isinstance(expr, FuzzySim):
        return f'fuzzy_sim("{expr.signature.render()}") {expr.op} {expr.value}'
    if isinstance(expr, IntLiteral):
        return str(expr.value)
    if isinstance(expr, BoolLiteral):
        return "true" if expr.value else "false"
    raise TypeError(f"unknown condition node {expr!r}")


def _wrapped(expr) -> str:
    text = render_condition(expr)
    return f"({text})" if isinstance(expr, (And, Or)) else text


def _meta_value(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, int):
        return str(value)
    return quote(value.encode("utf-8", "surrogateescape"))


def render_rule(rule: Rule) -> str:
    head = f"rule {rule.name}"
    if rule.tags:
        head += " : " + " ".join(rule.tags)
    lines = [head + " {"]
    if rule.meta:
        lines.append("    meta:")
        lines += [f"        {k} = {_meta_value(v)}" for k, v in rule.meta]
    if rule.patterns:
        lines.append("    strings:")
        lines += [f"        {p.id} = {render_pattern(p.body)}" for p in rule.patterns]
    lines.append("    condition:")
    lines.append("        " + render_condition(rule.condition))
    lines.append("}")
    return "\n".join(lines)


def render_rules(rs: RuleSet) -> str:
    return "\n\n".join(render_rule(r) for r in rs) + ("\n" if len(rs) else "")
