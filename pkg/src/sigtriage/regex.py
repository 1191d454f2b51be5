"""Regular-expression subset over bytes with linear-time matching.

Supported syntax: literals, ``.``, character classes (ranges, negation,
``\\d \\w \\s`` and their complements), grouping, alternation, ``* + ?`` and
bounded ``{m}``, ``{m,}``, ``{m,n}``. No backreferences, anchors or lazy
quantifiers.

Matching never backtracks. The engine needs every offset at which some
match *starts*, so it runs the reversed expression backwards over the data
as a Thompson NFA, determinized lazily. A start offset ``i`` is reported
when the reversed automaton, fed ``data[j-1], ..., data[i]`` for some
``j >= i``, reaches acceptance.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Union

MAX_REPEAT = 255
MAX_DEPTH = 64
_DFA_CACHE_LIMIT = 4096

_WORD = frozenset(b"ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789_")
_DIGIT = frozenset(b"0123456789")
_SPACE = frozenset(b" \t\n\r\f\v")
_ALL = frozenset(range(256))
_DOT = _ALL - {0x0A}
_CLASS_ESCAPES = {
    "d": _DIGIT, "D": _ALL - _DIGIT,
    "w": _WORD, "W": _ALL - _WORD,
    "s": _SPACE, "S": _ALL - _SPACE,
}
_CHAR_ESCAPES = {"n": 0x0A, "t": 0x09, "r": 0x0D, "f": 0x0C, "v": 0x0B, "0": 0x00}
_META = set("()|*+?{}[].\\/^$")


class RegexSyntaxError(ValueError):
    def __init__(self, message, position):
        self.position = position
        super().__init__(f"{message} at offset {position}")


# AST nodes

@dataclass(frozen=True)
class Lit:
    byte: int


@dataclass(frozen=True)
class CharSet:
    members: frozenset
    negated: bool = False    # case folding applies before the complement


@dataclass(frozen=True)
class Cat:
    items: tuple


@dataclass(frozen=True)
class Alt:
    items: tuple


@dataclass(frozen=True)
class Repeat:
    item: "Node"
    min: int
    max: int | None


Node = Union[Lit, CharSet, Cat, Alt, Repeat]


class _Parser:
    def __init__(self, text: str):
        self.text = text
        self.pos = 0
        self.depth = 0

    def error(self, message, pos=None):
        raise RegexSyntaxError(message, self.pos if pos is None else pos)

    def peek(self):
        return self.text[self.pos] if self.pos < len(self.text) else None

    def parse(self) -> Node:
        node = self.alternation()
        if self.pos != len(self.text):
            self.error(f"unexpected {self.text[self.pos]!r}")
        return node

    def alternation(self) -> Node:
        items = [self.concatenation()]
        while self.peek() == "|":
            self.pos += 1
            items.append(self.concatenation())
        return items[0] if len(items) == 1 else Alt(tuple(items))

    def concatenation(self) -> Node:
        items = []
        while self.peek() not in (None, "|", ")"):
            items.append(self.repetition())
        return items[0] if len(items) == 1 else Cat(tuple(items))

    def repetition(self) -> Node:
        start = self.pos
        node = self.atom()
        while self.peek() in ("*", "+", "?", "{"):
            ch = self.text[self.pos]
            if ch == "{":
                lo, hi = self.bounds()
            else:
                self.pos += 1
                lo, hi = {"*": (0, None), "+": (1, None), "?": (0, 1)}[ch]
            if isinstance(node, Repeat):
                self.error("nested quantifier needs a group", start)
            node = Repeat(node, lo, hi)
        return node

    def bounds(self):
        open_at = self.pos
        self.pos += 1
        lo = self.number()
        hi = lo
        if self.peek() == ",":
            self.pos += 1
            hi = self.number() if self.peek() != "}" else None
        if lo is None:
            self.error("repetition needs a lower bound", open_at)
        if self.peek() != "}":
            self.error("unterminated repetition")
        self.pos += 1
        if (hi is not None and hi < lo) or lo > MAX_REPEAT or (hi or 0) > MAX_REPEAT:
            self.error(f"bad repetition bounds (limit {MAX_REPEAT})", open_at)
        return lo, hi

    def number(self):
        start = self.pos
        while self.peek() is not None and self.peek().isascii() and self.peek().isdigit():
            self.pos += 1
        if start == self.pos:
            return None
        if self.pos - start > 4:
            self.error("repetition bound too large", start)
        return int(self.text[start:self.pos])

    def atom(self) -> Node:
        ch = self.peek()
        if ch == "(":
            open_at = self.pos
            self.pos += 1
            self.depth += 1
            if self.depth > MAX_DEPTH:
                self.error("groups nested too deeply", open_at)
            node = self.alternation()
            if self.peek() != ")":
                self.error("unbalanced parenthesis", open_at)
            self.pos += 1
            self.depth -= 1
            return Cat((node,)) if not isinstance(node, Cat) else node
        if ch == "[":
            return self.char_class()
        if ch == ".":
            self.pos += 1
            return CharSet(_DOT)
        if ch == "\\":
            return self.escape(in_class=False)
        if ch in ("*", "+", "?", "{", "}", ")", "]", "^", "$", "/"):
            self.error(f"unexpected {ch!r}")
        self.pos += 1
        encoded = ch.encode("utf-8")
        if len(encoded) == 1:
            return Lit(encoded[0])
        return Cat(tuple(Lit(b) for b in encoded))

    def escape(self, in_class):
        start = self.pos
        self.pos += 1
        ch = self.peek()
        if ch is None:
            self.error("dangling backslash", start)
        self.pos += 1
        if ch in _CLASS_ESCAPES:
            return CharSet(_CLASS_ESCAPES[ch])
        if ch in _CHAR_ESCAPES:
            return Lit(_CHAR_ESCAPES[ch])
        if ch == "x":
            digits = self.text[self.pos:self.pos + 2]
            if len(digits) != 2 or any(d not in "0123456789abcdefABCDEF" for d in digits):
                self.error("\\x needs two hex digits", start)
            self.pos += 2
            return Lit(int(digits, 16))
        if ch in _META or ch == "-" or (ch.isascii() and not ch.isalnum()):
            return Lit(ord(ch))
        self.error(f"unsupported escape \\{ch}", start)

    def char_class(self):
        open_at = self.pos
        self.pos += 1
        negate = False
        if self.peek() == "^":
            negate = True
            self.pos += 1
        members = set()
        first = True
        while True:
            ch = self.peek()
            if ch is None:
                self.error("unterminated character class", open_at)
            if ch == "]" and not first:
                self.pos += 1
                break
            first = False
            lo = self.class_item()
            if isinstance(lo, CharSet):
                members |= lo.members
                continue
            if self.peek() == "-" and self.pos + 1 < len(self.text) and self.text[self.pos + 1] != "]":
                dash = self.pos
                self.pos += 1
                hi = self.class_item()
                if isinstance(hi, CharSet) or hi.byte < lo.byte:
                    self.error("bad range in character class", dash)
                members.update(range(lo.byte, hi.byte + 1))
            else:
                members.add(lo.byte)
        if negate:
            members = set(_ALL) - members
        if not members:
            self.error("empty character class", open_at)
        return CharSet(frozenset(members), negate)

    def class_item(self):
        ch = self.peek()
        if ch == "\\":
            return self.escape(in_class=True)
        encoded = ch.encode("utf-8")
        if len(encoded) != 1:
            self.error("non-ASCII character in class")
        self.pos += 1
        return Lit(encoded[0])


def parse_regex(text: str) -> Node:
    if not text:
        raise RegexSyntaxError("empty expression", 0)
    return _Parser(text).parse()


def nullable(node: Node) -> bool:
    """True if the expression matches the empty string."""
    if isinstance(node, (Lit, CharSet)):
        return False
    if isinstance(node, Cat):
        return all(nullable(n) for n in node.items)
    if isinstance(node, Alt):
        return any(nullable(n) for n in node.items)
    return node.min == 0 or nullable(node.item)


def mandatory_literals(node: Node) -> list[bytes]:
    """Literal runs that every match must contain, in pattern order."""
    runs: list[bytes] = []
    cur = bytearray()
    _collect(node, runs, cur)
    runs.append(bytes(cur))
    return [r for r in runs if r]


def _collect(node, runs, cur):
    # cur is the run in progress; callers flush it when the chain breaks.
    if isinstance(node, Lit):
        cur.append(node.byte)
        return
    if isinstance(node, Cat):
        for item in node.items:
            _collect(item, runs, cur)
        return
    if isinstance(node, Repeat) and isinstance(node.item, Lit) and node.min >= 1:
        cur.extend(bytes([node.item.byte]) * node.min)
        if node.max != node.min:
            runs.append(bytes(cur))
            cur.clear()
        return
    runs.append(bytes(cur))
    cur.clear()
    if isinstance(node, Repeat) and node.min >= 1:
        inner = bytearray()
        _collect(node.item, runs, inner)
        runs.append(bytes(inner))


def reverse(node: Node) -> Node:
    if isinstance(node, Cat):
        return Cat(tuple(reverse(n) for n in reversed(node.items)))
    if isinstance(node, Alt):
        return Alt(tuple(reverse(n) for n in node.items))
    if isinstance(node, Repeat):
        return Repeat(reverse(node.item), node.min, node.max)
    return node


def _fold(members):
    out = set(members)
    for b in members:
        if 0x41 <= b <= 0x5A:
            out.add(b + 32)
        elif 0x61 <= b <= 0x7A:
            out.add(b - 32)
    return frozenset(out)


class NFA:
    """Thompson automaton: byte-set edges plus epsilon edges."""

    def __init__(self, node: Node, nocase: bool = False):
        self.nocase = nocase
        self.edges: list[tuple[frozenset, int] | None] = []
        self.eps: list[list[int]] = []
        self.start, self.accept = self._build(node)

    def _state(self):
        self.edges.append(None)
        self.eps.append([])
        return len(self.edges) - 1

    def _build(self, node):
        if isinstance(node, (Lit, CharSet)):
            members = frozenset([node.byte]) if isinstance(node, Lit) else node.members
            if self.nocase:
                if isinstance(node, CharSet) and node.negated:
                    members = _ALL - _fold(_ALL - members)
                else:
                    members = _fold(members)
            s, e = self._state(), self._state()
            self.edges[s] = (members, e)
            return s, e
        if isinstance(node, Cat):
            s = e = self._state()
            for item in node.items:
                a, b = self._build(item)
                self.eps[e].append(a)
                e = b
            return s, e
        if isinstance(node, Alt):
            s, e = self._state(), self._state()
            for item in node.items:
                a, b = self._build(item)
                self.eps[s].append(a)
                self.eps[b].append(e)
            return s, e
        s = e = self._state()
        for _ in range(node.min):
            a, b = self._build(node.item)
            self.eps[e].append(a)
            e = b
        if node.max is None:
            a, b = self._build(node.item)
            end = self._state()
            self.eps[e] += [a, end]
            self.eps[b] += [a, end]
            return s, end
        end = self._state()
        for _ in range(node.max - node.min):
            a, b = self._build(node.item)
            self.eps[e] += [a, end]
            e = b
        self.eps[e].append(end)
        return s, end

    def closure(self, states) -> frozenset:
        seen = set(states)
        stack = list(states)
        while stack:
            for t in self.eps[stack.pop()]:
                if t not in seen:
                    seen.add(t)
                    stack.append(t)
        return frozenset(seen)


class _SearchDFA:
    """Lazily determinized unanchored automaton: each step re-adds the start."""

    def __init__(self, nfa: NFA):
        self.nfa = nfa
        self.start_closure = nfa.closure([nfa.start])
        self._reset()

    def _reset(self):
        self.ids: dict[frozenset, int] = {}
        self.sets: list[frozenset] = []
        self.table: list[list[int]] = []
        self.accepting: list[bool] = []
        self.initial = self._intern(self.start_closure)

    def _intern(self, states):
        idx = self.ids.get(states)
        if idx is None:
            idx = len(self.sets)
            self.ids[states] = idx
            self.sets.append(states)
            self.table.append([-1] * 256)
            self.accepting.append(self.nfa.accept in states)
        return idx

    def step(self, idx, byte):
        edges = self.nfa.edges
        moved = []
        for s in self.sets[idx]:
            edge = edges[s]
            if edge is not None and byte in edge[0]:
                moved.append(edge[1])
        target = self.nfa.closure(moved) | self.start_closure
        if len(self.sets) >= _DFA_CACHE_LIMIT:
            current = self.sets[idx]
            self._reset()
            idx = self._intern(current)
        nxt = self._intern(target)
        self.table[idx][byte] = nxt
        return idx, nxt


class Regex:
    """Compiled expression that reports every match start offset."""

    def __init__(self, expression: str, nocase: bool = False):
        self.expression = expression
        self.nocase = nocase
        self.ast = parse_regex(expression)
        self._dfa = _SearchDFA(NFA(reverse(self.ast), nocase))

    @property
    def matches_empty(self) -> bool:
        return nullable(self.ast)

    def start_offsets(self, data: bytes, limit: int | None = None) -> list[int]:
        """Sorted offsets ``i < len(data)`` where a match begins."""
        dfa = self._dfa
        table, accepting = dfa.table, dfa.accepting
        state = dfa.initial
        found = []
        for i in range(len(data) - 1, -1, -1):
            byte = data[i]
            nxt = table[state][byte]
            if nxt < 0:
                state, nxt = dfa.step(state, byte)
                table, accepting = dfa.table, dfa.accepting
            state = nxt
            if accepting[state]:
                found.append(i)
        found.reverse()
        if limit is not None:
            del found[limit:]
        return found
