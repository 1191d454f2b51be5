"""Damerau-Levenshtein (optimal string alignment) distance and similarity."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence, Union

Text = Union[str, bytes, Sequence[int]]


@dataclass(frozen=True)
class EditCosts:
    insert: int = 1
    delete: int = 1
    substitute: int = 1
    transpose: int = 1

    def __post_init__(self):
        for name in ("insert", "delete", "substitute", "transpose"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} cost must be non-negative")


UNIT = EditCosts()


def dl_distance(a: Text, b: Text, costs: EditCosts = UNIT) -> int:
    """Minimum cost to turn ``a`` into ``b``.

    Allowed edits are insertion, deletion, substitution and transposition of
    two adjacent characters, with no substring edited more than once (the
    restricted variant). Runs in O(len(a) * len(b)) time and keeps three rows.
    """
    if a == b:
        return 0
    ins, dele, sub, tra = costs.insert, costs.delete, costs.substitute, costs.transpose
    n, m = len(a), len(b)
    if n == 0:
        return m * ins
    if m == 0:
        return n * dele

    prev2 = None
    prev = [j * ins for j in range(m + 1)]
    for i in range(1, n + 1):
        ai = a[i - 1]
        cur = [i * dele] + [0] * m
        for j in range(1, m + 1):
            bj = b[j - 1]
            best = prev[j - 1] if ai == bj else prev[j - 1] + sub
            d = prev[j] + dele
            if d < best:
                best = d
            d = cur[j - 1] + ins
            if d < best:
                best = d
            if prev2 is not None and j > 1 and ai == b[j - 2] and a[i - 2] == bj:
                d = prev2[j - 2] + tra
                if d < best:
                    best = d
            cur[j] = best
        prev2, prev = prev, cur
    return prev[m]


def similarity_pct(a: Text, b: Text) -> int:
    """Integer similarity in [0, 100]; 100 exactly when ``a == b``.

    floor(100 * (1 - D / max(len(a), len(b)))) with unit-cost distance D.
    """
    longest = max(len(a), len(b))
    if longest == 0:
        return 100
    d = dl_distance(a, b)
    return (100 * (longest - d)) // longest
