"""The kernels must give the same answers when numba is unavailable."""

import random

import numpy as np

from sigtriage.ctph import _ctph_pass, _trigger_pass
from sigtriage.engine.automaton import AhoCorasick, _ac_scan


def plain(fn):
    return getattr(fn, "py_func", fn)


def test_ctph_kernels_match_plain_python():
    rng = random.Random(0)
    for _ in range(10):
        arr = np.frombuffer(rng.randbytes(rng.randint(1, 5000)), dtype=np.uint8)
        for b in (3, 12, 48):
            for got, want in zip(_ctph_pass(arr, b), plain(_ctph_pass)(arr, b)):
                assert got.tolist() == want.tolist()
            assert _trigger_pass(arr, b).tolist() == plain(_trigger_pass)(arr, b).tolist()


def test_automaton_kernel_matches_plain_python():
    rng = random.Random(1)
    ac = AhoCorasick([b"ab", b"bca", b"c"])
    arr = np.frombuffer(bytes(rng.choice(b"abc") for _ in range(3000)), dtype=np.uint8)
    results = []
    for fn in (_ac_scan, plain(_ac_scan)):
        pos, state, hits = 0, 0, []
        out_pos, out_state = np.empty(7, np.int64), np.empty(7, np.int32)
        while pos < len(arr):
            pos, state, n = fn(ac.table, ac.has_out, arr, pos, state, out_pos, out_state)
            hits += list(zip(out_pos[:n].tolist(), out_state[:n].tolist()))
        results.append(hits)
    assert results[0] == results[1] and results[0]
