"""Context-triggered piecewise hashing.

A rolling hash over a 7-byte window picks content-defined block boundaries;
each block is reduced to one base64 character by an FNV-style hash. Two
signature levels are produced in a single pass, at blocksize ``b`` and
``2b``, so that files whose blocksizes differ by a factor of two remain
comparable.
"""

from __future__ import annotations

import re
from dataclasses import dataclass

import numpy as np

from ._jit import njit
from .editdist import similarity_pct
from .errors import SignatureFormatError

ALPHABET = "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/"
_ALPHABET_SET = frozenset(ALPHABET)

WINDOW = 7
MIN_BLOCKSIZE = 3
SIG1_MAX = 64
SIG2_MAX = 32
HASH_INIT = 0x28021967
FNV_PRIME = 16777619
GATE_LENGTH = 7
# Scores at blocksizes below this are capped to damp coincidences on tiny inputs.
CAP_BLOCKSIZE = 99 * MIN_BLOCKSIZE

_M32 = 0xFFFFFFFF
_DIGITS = re.compile(r"[0-9]+\Z")
_RUNS = re.compile(r"(.)\1{3,}")


def is_valid_blocksize(b: int) -> bool:
    if b < MIN_BLOCKSIZE or b % MIN_BLOCKSIZE:
        return False
    q = b // MIN_BLOCKSIZE
    return q & (q - 1) == 0


@dataclass(frozen=True)
class FuzzySignature:
    blocksize: int
    sig1: str
    sig2: str

    def __post_init__(self):
        if not is_valid_blocksize(self.blocksize):
            raise SignatureFormatError(f"blocksize {self.blocksize} is not 3*2^i", "blocksize", 0)
        base = len(str(self.blocksize)) + 1
        _check_part(self.sig1, "sig1", SIG1_MAX, base)
        _check_part(self.sig2, "sig2", SIG2_MAX, base + len(self.sig1) + 1)

    def render(self) -> str:
        return f"{self.blocksize}:{self.sig1}:{self.sig2}"

    def __str__(self):
        return self.render()


def _check_part(text, field, limit, base):
    if len(text) > limit:
        raise SignatureFormatError(f"{field} longer than {limit} characters", field, base + limit)
    for i, ch in enumerate(text):
        if ch not in _ALPHABET_SET:
            raise SignatureFormatError(f"illegal character {ch!r} in {field}", field, base + i)


def parse_signature(text: str) -> FuzzySignature:
    """Parse the ``blocksize:sig1:sig2`` form."""
    parts = text.split(":")
    if len(parts) != 3:
        raise SignatureFormatError(f"expected 3 colon-separated fields, got {len(parts)}", "fields",
                                   min(len(text), sum(len(p) + 1 for p in parts[:3])))
    bs, sig1, sig2 = parts
    if not _DIGITS.match(bs):
        raise SignatureFormatError(f"blocksize {bs!r} is not a decimal integer", "blocksize", 0)
    return FuzzySignature(int(bs), sig1, sig2)


@njit(cache=True, nogil=True)
def _ctph_pass(data, b):
    out1 = np.zeros(64, np.int64)
    out2 = np.zeros(32, np.int64)
    window = np.zeros(7, np.int64)
    n1 = 0
    n2 = 0
    h1 = 0
    h2 = 0
    h3 = 0
    idx = 0
    s1 = 0x28021967
    s2 = 0x28021967
    open1 = False
    open2 = False
    b2 = 2 * b
    for k in range(data.shape[0]):
        c = np.int64(data[k])
        h2 = (h2 - h1 + 7 * c) & 0xFFFFFFFF
        h1 = (h1 + c - window[idx]) & 0xFFFFFFFF
        window[idx] = c
        idx += 1
        if idx == 7:
            idx = 0
        h3 = ((h3 << 5) ^ c) & 0xFFFFFFFF
        roll = (h1 + h2 + h3) & 0xFFFFFFFF
        s1 = ((s1 * 16777619) ^ c) & 0xFFFFFFFF
        s2 = ((s2 * 16777619) ^ c) & 0xFFFFFFFF
        open1 = True
        open2 = True
        if roll % b == b - 1:
            if n1 < 64:
                n1 += 1
            out1[n1 - 1] = s1 & 63
            s1 = 0x28021967
            open1 = False
            if roll % b2 == b2 - 1:
                if n2 < 32:
                    n2 += 1
                out2[n2 - 1] = s2 & 63
                s2 = 0x28021967
                open2 = False
    if open1:
        if n1 < 64:
            n1 += 1
        out1[n1 - 1] = s1 & 63
    if open2:
        if n2 < 32:
            n2 += 1
        out2[n2 - 1] = s2 & 63
    return out1[:n1], out2[:n2]


@njit(cache=True, nogil=True)
def _trigger_pass(data, b):
    hits = np.empty(data.shape[0], np.int64)
    n = 0
    window = np.zeros(7, np.int64)
    h1 = 0
    h2 = 0
    h3 = 0
    idx = 0
    for k in range(data.shape[0]):
        c = np.int64(data[k])
        h2 = (h2 - h1 + 7 * c) & 0xFFFFFFFF
        h1 = (h1 + c - window[idx]) & 0xFFFFFFFF
        window[idx] = c
        idx += 1
        if idx == 7:
            idx = 0
        h3 = ((h3 << 5) ^ c) & 0xFFFFFFFF
        if ((h1 + h2 + h3) & 0xFFFFFFFF) % b == b - 1:
            hits[n] = k
            n += 1
    return hits[:n]


def _as_array(data) -> np.ndarray:
    return np.frombuffer(bytes(data) if not isinstance(data, (bytes, bytearray, memoryview)) else data,
                         dtype=np.uint8)


def trigger_offsets(data: bytes, blocksize: int) -> list[int]:
    """Offsets of the bytes that end a block at ``blocksize``."""
    return _trigger_pass(_as_array(data), blocksize).tolist()


def initial_blocksize(length: int) -> int:
    b = MIN_BLOCKSIZE
    while b * SIG1_MAX < length:
        b *= 2
    return b


def fuzzy_hash(data: bytes) -> FuzzySignature:
    if len(data) == 0:
        raise ValueError("cannot fuzzy-hash empty input")
    arr = _as_array(data)
    b = initial_blocksize(len(arr))
    while True:
        c1, c2 = _ctph_pass(arr, b)
        if len(c1) < SIG1_MAX // 2 and b > MIN_BLOCKSIZE:
            b //= 2
            continue
        break
    return FuzzySignature(b, "".join(ALPHABET[i] for i in c1), "".join(ALPHABET[i] for i in c2))


def collapse_runs(s: str) -> str:
    """Shorten runs of more than three identical characters to three."""
    return _RUNS.sub(r"\1\1\1", s)


def _has_common_substring(a: str, b: str, n: int = GATE_LENGTH) -> bool:
    if len(a) < n or len(b) < n:
        return False
    grams = {a[i:i + n] for i in range(len(a) - n + 1)}
    return any(b[i:i + n] in grams for i in range(len(b) - n + 1))


def _score_level(a: str, b: str, blocksize: int) -> int:
    a = collapse_runs(a)
    b = collapse_runs(b)
    if not _has_common_substring(a, b):
        return 0
    score = similarity_pct(a, b)
    if blocksize < CAP_BLOCKSIZE:
        score = min(score, (blocksize // MIN_BLOCKSIZE) * min(len(a), len(b)))
    return score


def compatible(b1: int, b2: int) -> bool:
    return b1 == b2 or b1 == 2 * b2 or b2 == 2 * b1


def fuzzy_compare(a: FuzzySignature, b: FuzzySignature) -> int:
    """Similarity of two signatures in [0, 100]."""
    if a == b:
        return 100
    ba, bb = a.blocksize, b.blocksize
    if ba == bb:
        return max(_score_level(a.sig1, b.sig1, ba), _score_level(a.sig2, b.sig2, 2 * ba))
    if ba == 2 * bb:
        return _score_level(a.sig1, b.sig2, ba)
    if bb == 2 * ba:
        return _score_level(a.sig2, b.sig1, bb)
    return 0
