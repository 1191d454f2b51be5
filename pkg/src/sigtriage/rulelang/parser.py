"""Hand-written scanner and recursive-descent parser for rule files.

Grammar::

    rule NAME [: TAG ...] {
        [meta: KEY = STRING | INT | true | false ...]
        [strings: $ID = "text" MODS | { hex } | /regex/ MODS ...]
        condition: EXPR
    }

Hex strings and regular expressions are lexed on demand by the parser
since their bodies follow different lexical rules from the rest of the file.
"""

from __future__ import annotations

import bisect
import os
import re
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable

from ..ctph import parse_signature
from ..errors import SigTriageError, SignatureFormatError
from ..regex import RegexSyntaxError, parse_regex
from .ast import (
    COMPARATORS, MAX_JUMP, REGEX_MODIFIERS, SEVERITIES, TEXT_MODIFIERS, And, At, BoolLiteral,
    CountCmp, Filesize, FuzzySim, HexByte, HexJump, HexPattern, IntLiteral, Not, OfExpr, Or,
    PatternDef, RegexPattern, Rule, RuleSet, StringRef, TextPattern, UintRead, expand_targets,
)

KEYWORDS = frozenset({
    "rule", "meta", "strings", "condition", "and", "or", "not", "any", "all", "of", "them",
    "at", "filesize", "true", "false", "uint8", "uint16", "uint32", "fuzzy_sim",
    "nocase", "ascii", "wide", "fullword",
})
MAX_IDENT = 128
MAX_NESTING = 100
_UNITS = {"KB": 1024, "MB": 1024 * 1024}
_IDENT = re.compile(r"[A-Za-z_][A-Za-z0-9_]*")
_NUMBER = re.compile(r"0x[0-9A-Fa-f]+|[0-9]+")
_SYMBOLS = ("==", "!=", "<=", ">=", "<", ">", "{", "}", "(", ")", ":", "=", ",", "[", "]", "/")


class RuleError(SigTriageError, ValueError):
    """Diagnostic with a 1-based line and column."""

    def __init__(self, message, line, column, source=None):
        self.message = message
        self.line = line
        self.column = column
        self.source = source
        where = f"{source}:" if source else ""
        super().__init__(f"{where}{line}:{column}: {message}")


class RuleLexError(RuleError):
    pass


class RuleSyntaxError(RuleError):
    pass


class DuplicateRuleError(RuleError):
    pass


class UndefinedPatternError(RuleError):
    pass


class JumpBoundsError(RuleError):
    pass


@dataclass
class Token:
    kind: str      # ident, string, int, pattern, count, symbol, eof
    value: object
    pos: int
    end: int


class Scanner:
    def __init__(self, text: str, source=None):
        self.text = text
        self.pos = 0
        self.source = source
        self._lines = [0] + [m.end() for m in re.finditer("\n", text)]

    def location(self, pos):
        line = bisect.bisect_right(self._lines, pos)
        return line, pos - self._lines[line - 1] + 1

    def fail(self, cls, message, pos):
        line, col = self.location(min(pos, len(self.text)))
        raise cls(message, line, col, self.source)

    def skip_space(self):
        text, n = self.text, len(self.text)
        while self.pos < n:
            ch = text[self.pos]
            if ch in " \t\r\n\f\v":
                self.pos += 1
            elif text.startswith("//", self.pos):
                nl = text.find("\n", self.pos)
                self.pos = n if nl < 0 else nl + 1
            elif text.startswith("/*", self.pos):
                close = text.find("*/", self.pos + 2)
                if close < 0:
                    self.fail(RuleLexError, "unterminated comment", self.pos)
                self.pos = close + 2
            else:
                break

    def next(self) -> Token:
        self.skip_space()
        start = self.pos
        text = self.text
        if start >= len(text):
            return Token("eof", None, start, start)
        ch = text[start]
        if ch in "$#":
            m = _IDENT.match(text, start + 1)
            end = m.end() if m else start + 1
            name = "$" + (m.group() if m else "")
            if ch == "$" and end < len(text) and text[end] == "*":
                name += "*"
                end += 1
            if len(name) > MAX_IDENT:
                self.fail(RuleLexError, "identifier too long", start)
            self.pos = end
            return Token("pattern" if ch == "$" else "count", name, start, end)
        if ch == '"':
            value = self._string(start)
            return Token("string", value, start, self.pos)
        m = _NUMBER.match(text, start)
        if m:
            end = m.end()
            value = int(m.group(), 0) if m.group().startswith("0x") else int(m.group())
            unit = text[end:end + 2]
            if unit in _UNITS:
                value *= _UNITS[unit]
                end += 2
            if end < len(text) and (text[end].isalnum() or text[end] == "_"):
                self.fail(RuleLexError, "malformed number", start)
            self.pos = end
            return Token("int", value, start, end)
        m = _IDENT.match(text, start)
        if m:
            if len(m.group()) > MAX_IDENT:
                self.fail(RuleLexError, "identifier too long", start)
            self.pos = m.end()
            return Token("ident", m.group(), start, m.end())
        for sym in _SYMBOLS:
            if text.startswith(sym, start):
                self.pos = start + len(sym)
                return Token("symbol", sym, start, self.pos)
        self.fail(RuleLexError, f"unexpected character {ch!r}", start)

    def _string(self, start) -> bytes:
        text = self.text
        out = bytearray()
        i = start + 1
        while True:
            if i >= len(text) or text[i] == "\n":
                self.fail(RuleLexError, "unterminated string", start)
            ch = text[i]
            if ch == '"':
                self.pos = i + 1
                return bytes(out)
            if ch == "\\":
                esc = text[i + 1:i + 2]
                if esc == "x":
                    digits = text[i + 2:i + 4]
                    if len(digits) != 2 or any(d not in "0123456789abcdefABCDEF" for d in digits):
                        self.fail(RuleLexError, "\\x needs two hex digits", i)
                    out.append(int(digits, 16))
                    i += 4
                    continue
                mapped = {"n": b"\n", "t": b"\t", "r": b"\r", '"': b'"', "\\": b"\\"}.get(esc)
                if mapped is None:
                    self.fail(RuleLexError, f"unknown escape \\{esc}", i)
                out += mapped
                i += 2
                continue
            out += ch.encode("utf-8", "surrogatepass")
            i += 1

    def hex_body(self, open_pos):
        """Read hex tokens up to the closing brace; returns (tokens, positions)."""
        text = self.text
        tokens = []
        positions = []
        while True:
            self.skip_space()
            i = self.pos
            if i >= len(text):
                self.fail(RuleSyntaxError, "unterminated hex string", open_pos)
            ch = text[i]
            if ch == "}":
                self.pos = i + 1
                return tokens, positions
            if ch == "[":
                close = text.find("]", i)
                if close < 0:
                    self.fail(RuleSyntaxError, "unterminated jump", i)
                body = text[i + 1:close].replace(" ", "")
                m = re.fullmatch(r"([0-9]+)(?:-([0-9]+))?", body)
                if not m or len(body) > 9:
                    self.fail(RuleSyntaxError, f"malformed jump [{body}]", i)
                lo = int(m.group(1))
                hi = int(m.group(2)) if m.group(2) is not None else lo
                if not (0 <= lo <= hi <= MAX_JUMP):
                    self.fail(JumpBoundsError, f"jump bounds must satisfy 0 <= min <= max <= {MAX_JUMP}", i)
                tokens.append(HexJump(lo, hi))
                positions.append(i)
                self.pos = close + 1
                continue
            pair = text[i:i + 2]
            if len(pair) == 2 and all(c in "0123456789abcdefABCDEF?" for c in pair):
                value = mask = 0
                for shift, c in ((4, pair[0]), (0, pair[1])):
                    if c != "?":
                        value |= int(c, 16) << shift
                        mask |= 0xF << shift
                tokens.append(HexByte(value, mask))
                positions.append(i)
                self.pos = i + 2
                continue
            self.fail(RuleSyntaxError, f"unexpected {ch!r} in hex string", i)

    def regex_body(self, open_pos) -> str:
        text = self.text
        i = open_pos + 1
        while i < len(text) and text[i] != "\n":
            if text[i] == "\\":
                i += 2
                continue
            if text[i] == "/":
                self.pos = i + 1
                return text[open_pos + 1:i]
            i += 1
        self.fail(RuleLexError, "unterminated regular expression", open_pos)


class Parser:
    def __init__(self, text: str, source=None):
        self.scanner = Scanner(text, source)
        self.tok = self.scanner.next()
        self.depth = 0

    # token helpers

    def fail(self, message, tok=None, cls=RuleSyntaxError):
        tok = tok or self.tok
        self.scanner.fail(cls, message, tok.pos)

    def advance(self) -> Token:
        tok = self.tok
        self.tok = self.scanner.next()
        return tok

    def at(self, kind, value=None) -> bool:
        return self.tok.kind == kind and (value is None or self.tok.value == value)

    def accept(self, kind, value=None):
        if self.at(kind, value):
            return self.advance()
        return None

    def expect(self, kind, value=None, what=None) -> Token:
        if not self.at(kind, value):
            shown = "end of input" if self.tok.kind == "eof" else repr(self.tok.value)
            self.fail(f"expected {what or value or kind}, found {shown}")
        return self.advance()

    def keyword(self, word) -> bool:
        return self.at("ident", word)

    def identifier(self, what) -> Token:
        tok = self.expect("ident", what=what)
        if tok.value in KEYWORDS:
            self.fail(f"{tok.value!r} is a reserved word", tok)
        return tok

    # grammar

    def parse(self) -> RuleSet:
        rules = []
        seen = {}
        while not self.at("eof"):
            name_tok, rule = self.rule()
            if rule.name in seen:
                self.fail(f"duplicate rule name {rule.name!r}", name_tok, DuplicateRuleError)
            seen[rule.name] = rule
            rules.append(rule)
        return RuleSet(tuple(rules))

    def rule(self):
        if not self.keyword("rule"):
            self.fail("expected 'rule'")
        self.advance()
        name_tok = self.identifier("rule name")
        tags = []
        if self.accept("symbol", ":"):
            tags.append(self.identifier("tag").value)
            while self.at("ident") and self.tok.value not in KEYWORDS:
                tags.append(self.advance().value)
        self.expect("symbol", "{")
        meta = []
        patterns = []
        if self.keyword("meta"):
            self.advance()
            self.expect("symbol", ":")
            meta = self.meta_section()
        if self.keyword("strings"):
            self.advance()
            self.expect("symbol", ":")
            patterns = self.strings_section()
        if not self.keyword("condition"):
            self.fail("expected 'condition'")
        self.advance()
        self.expect("symbol", ":")
        self.pattern_ids = tuple(p.id for p in patterns)
        condition = self.expression()
        self.expect("symbol", "}")
        return name_tok, Rule(name_tok.value, condition, tuple(tags), tuple(meta), tuple(patterns))

    def meta_section(self):
        meta = []
        while self.at("ident") and self.tok.value not in ("strings", "condition"):
            key = self.advance()
            self.expect("symbol", "=")
            vtok = self.tok
            if self.at("string"):
                value = self.advance().value.decode("utf-8", "surrogateescape")
            elif self.at("int"):
                value = self.advance().value
            elif self.keyword("true") or self.keyword("false"):
                value = self.advance().value == "true"
            else:
                self.fail("meta value must be a string, integer or boolean")
            if key.value == "severity" and value not in SEVERITIES:
                self.fail(f"severity must be one of {', '.join(SEVERITIES)}", vtok)
            if key.value in ("family", "description") and not isinstance(value, str):
                self.fail(f"{key.value} must be a string", vtok)
            meta.append((key.value, value))
        return meta

    def strings_section(self):
        patterns = []
        ids = set()
        while self.at("pattern"):
            id_tok = self.advance()
            pid = id_tok.value
            if pid == "$" or pid.endswith("*"):
                self.fail("pattern definitions need a plain $name", id_tok)
            if pid in ids:
                self.fail(f"duplicate pattern {pid}", id_tok)
            ids.add(pid)
            if not self.at("symbol", "="):
                self.fail("expected '='")
            eq = self.tok
            # The body is lexed by hand, so look at the raw text right after '='.
            self.scanner.pos = eq.end
            self.scanner.skip_space()
            start = self.scanner.pos
            ch = self.scanner.text[start:start + 1]
            if ch == '"':
                self.tok = self.scanner.next()
                value = self.advance().value
                if not value:
                    self.fail("text pattern must not be empty", eq)
                mods = self.modifiers(TEXT_MODIFIERS)
                body = TextPattern(value, mods)
            elif ch == "{":
                self.scanner.pos = start + 1
                tokens, positions = self.scanner.hex_body(start)
                self.check_hex(tokens, positions, start)
                self.tok = self.scanner.next()
                body = HexPattern(tuple(tokens))
            elif ch == "/":
                expression = self.scanner.regex_body(start)
                try:
                    parse_regex(expression)
                except RegexSyntaxError as exc:
                    # best effort: map into the source (escaped slashes shift this slightly)
                    self.scanner.fail(RuleSyntaxError, f"bad regular expression: {exc}",
                                      start + 1 + min(exc.position, max(len(expression) - 1, 0)))
                except RecursionError:
                    self.scanner.fail(RuleSyntaxError, "regular expression nested too deeply", start)
                self.tok = self.scanner.next()
                body = RegexPattern(expression, self.modifiers(REGEX_MODIFIERS))
            else:
                self.scanner.fail(RuleSyntaxError, "expected text, hex or regex pattern", start)
            patterns.append(PatternDef(pid, body))
        return patterns

    def modifiers(self, allowed):
        mods = set()
        while self.at("ident") and self.tok.value in TEXT_MODIFIERS:
            tok = self.advance()
            if tok.value not in allowed:
                self.fail(f"modifier {tok.value!r} not allowed here", tok)
            if tok.value in mods:
                self.fail(f"duplicate modifier {tok.value!r}", tok)
            mods.add(tok.value)
        return frozenset(mods)

    def check_hex(self, tokens, positions, open_pos):
        if not tokens:
            self.scanner.fail(RuleSyntaxError, "empty hex string", open_pos)
        if isinstance(tokens[0], HexJump) or isinstance(tokens[-1], HexJump):
            bad = positions[0] if isinstance(tokens[0], HexJump) else positions[-1]
            self.scanner.fail(RuleSyntaxError, "hex string cannot start or end with a jump", bad)
        for a, b, pos in zip(tokens, tokens[1:], positions[1:]):
            if isinstance(a, HexJump) and isinstance(b, HexJump):
                self.scanner.fail(RuleSyntaxError, "consecutive jumps", pos)
        if not any(isinstance(t, HexByte) and t.is_literal for t in tokens):
            self.scanner.fail(RuleSyntaxError, "hex string needs at least one fully specified byte",
                              open_pos)

    # condition expressions

    def nest(self):
        self.depth += 1
        if self.depth > MAX_NESTING:
            self.fail("expression nested too deeply")

    def expression(self):
        self.nest()
        items = [self.and_expr()]
        while self.keyword("or"):
            self.advance()
            items.append(self.and_expr())
        self.depth -= 1
        return items[0] if len(items) == 1 else Or(tuple(items))

    def and_expr(self):
        items = [self.not_expr()]
        while self.keyword("and"):
            self.advance()
            items.append(self.not_expr())
        return items[0] if len(items) == 1 else And(tuple(items))

    def not_expr(self):
        if self.keyword("not"):
            self.advance()
            self.nest()
            inner = self.not_expr()
            self.depth -= 1
            return Not(inner)
        return self.primary()

    def comparison(self):
        tok = self.tok
        if not (tok.kind == "symbol" and tok.value in COMPARATORS):
            self.fail("expected a comparison operator")
        self.advance()
        self.value_tok = self.expect("int", what="integer")
        return tok.value, self.value_tok.value

    def pattern_ref(self, tok):
        if tok.value not in self.pattern_ids:
            self.fail(f"undefined pattern {tok.value}", tok, UndefinedPatternError)

    def primary(self):
        tok = self.tok
        if self.accept("symbol", "("):
            inner = self.expression()
            self.expect("symbol", ")")
            return inner
        if tok.kind == "pattern":
            self.advance()
            if tok.value.endswith("*") or tok.value == "$":
                self.fail("wildcard pattern only allowed inside 'of'", tok)
            self.pattern_ref(tok)
            if self.keyword("at"):
                self.advance()
                return At(tok.value, self.expect("int", what="offset").value)
            return StringRef(tok.value)
        if tok.kind == "count":
            self.advance()
            pid = tok.value
            if pid == "$":
                self.fail("expected a pattern name after '#'", tok)
            self.pattern_ref(tok)
            op, value = self.comparison()
            return CountCmp(pid, op, value)
        if tok.kind == "int":
            self.advance()
            if self.keyword("of"):
                return self.of_expr(tok.value)
            return IntLiteral(tok.value)
        if tok.kind == "ident":
            word = tok.value
            if word in ("true", "false"):
                self.advance()
                return BoolLiteral(word == "true")
            if word in ("any", "all"):
                self.advance()
                return self.of_expr(word)
            if word == "filesize":
                self.advance()
                return Filesize(*self.comparison())
            if word in ("uint8", "uint16", "uint32"):
                self.advance()
                self.expect("symbol", "(")
                offset = self.expect("int", what="offset").value
                self.expect("symbol", ")")
                op, value = self.comparison()
                return UintRead(int(word[4:]), offset, op, value)
            if word == "fuzzy_sim":
                self.advance()
                self.expect("symbol", "(")
                sig_tok = self.expect("string", what="fuzzy signature string")
                try:
                    sig = parse_signature(sig_tok.value.decode("utf-8", "replace"))
                except SignatureFormatError as exc:
                    self.scanner.fail(RuleSyntaxError, f"bad fuzzy signature: {exc}",
                                      sig_tok.pos + 1 + min(exc.position, sig_tok.end - sig_tok.pos - 2))
                self.expect("symbol", ")")
                op, value = self.comparison()
                if value > 100:
                    self.fail("fuzzy similarity is between 0 and 100", self.value_tok)
                return FuzzySim(sig, op, value)
        shown = "end of input" if tok.kind == "eof" else repr(tok.value)
        self.fail(f"unexpected {shown} in condition")

    def of_expr(self, quantifier):
        self.expect("ident", "of", what="'of'")
        tok = self.tok
        if self.keyword("them"):
            self.advance()
            if not self.pattern_ids:
                self.fail("'them' used in a rule without patterns", tok, UndefinedPatternError)
            return OfExpr(quantifier, "them")
        self.expect("symbol", "(")
        targets = []
        while True:
            ref = self.expect("pattern", what="pattern reference")
            if not expand_targets((ref.value,), self.pattern_ids):
                self.fail(f"{ref.value} matches no defined pattern", ref, UndefinedPatternError)
            targets.append(ref.value)
            if not self.accept("symbol", ","):
                break
        self.expect("symbol", ")")
        return OfExpr(quantifier, tuple(targets))


def parse_rules(text: str, source=None) -> RuleSet:
    """Parse rule source text into a validated :class:`RuleSet`."""
    return Parser(text, source).parse()


def rule_files(paths: Iterable) -> list[Path]:
    """Expand directories to their ``.yar`` files, in lexicographic order."""
    out = []
    for p in paths:
        p = Path(p)
        if p.is_dir():
            out.extend(sorted(q for q in p.rglob("*.yar") if q.is_file()))
        else:
            out.append(p)
    return sorted(out, key=lambda q: str(q))


def load_rules(paths: Iterable) -> RuleSet:
    """Parse and merge rule files; rule names must be unique across files."""
    from ..errors import InputError

    merged = []
    seen = {}
    for path in rule_files(paths):
        try:
            text = Path(path).read_text(encoding="utf-8")
        except (OSError, UnicodeDecodeError) as exc:
            raise InputError(path, exc) from exc
        rs = parse_rules(text, source=os.fspath(path))
        for rule in rs:
            if rule.name in seen:
                raise DuplicateRuleError(f"rule {rule.name!r} already defined in {seen[rule.name]}",
                                         1, 1, os.fspath(path))
            seen[rule.name] = os.fspath(path)
            merged.append(rule)
    return RuleSet(tuple(merged))
