"""Aho-Corasick automaton over byte atoms, flattened to a dense DFA table."""

from __future__ import annotations

from collections import deque

import numpy as np

from .._jit import njit

BUFFER = 1 << 16      # hits collected per kernel call


@njit(cache=True, nogil=True)
def _ac_scan(table, has_out, data, start, state, out_pos, out_state):
    """Run from ``start`` until the data ends or the output buffers fill.

    Returns ``(next offset, state, hits written)``. Keeping the buffers fixed
    lets the inner loop stay a plain table walk.
    """
    cap = out_pos.shape[0]
    n = 0
    stop = data.shape[0]
    for i in range(start, data.shape[0]):
        state = table[state, data[i]]
        if has_out[state]:
            out_pos[n] = i
            out_state[n] = state
            n += 1
            if n == cap:
                stop = i + 1
                break
    return stop, state, n


class AhoCorasick:
    """Recognizes every occurrence of every atom in one pass.

    ``outputs[state]`` lists the atom indices that end at a state, including
    those inherited along failure links.
    """

    def __init__(self, atoms):
        self.atoms = list(atoms)
        children = [{}]
        own = [[]]
        for idx, atom in enumerate(self.atoms):
            if not atom:
                raise ValueError("atoms must be non-empty")
            node = 0
            for b in atom:
                nxt = children[node].get(b)
                if nxt is None:
                    nxt = len(children)
                    children[node][b] = nxt
                    children.append({})
                    own.append([])
                node = nxt
            own[node].append(idx)

        size = len(children)
        table = np.zeros((size, 256), dtype=np.int32)
        fail = [0] * size
        outputs = [list(o) for o in own]
        queue = deque()
        for b, child in children[0].items():
            table[0, b] = child
            queue.append(child)
        while queue:
            u = queue.popleft()
            table[u] = table[fail[u]]
            for b, child in children[u].items():
                table[u, b] = child
                fail[child] = table[fail[u], b] if u else 0
                queue.append(child)
            if u:
                outputs[u] = outputs[u] + [a for a in outputs[fail[u]] if a not in outputs[u]]
        self.table = table
        self.outputs = [tuple(o) for o in outputs]
        self.has_out = np.array([bool(o) for o in outputs], dtype=np.uint8)

    def __len__(self):
        return len(self.atoms)

    def iter_hits(self, data):
        """Yield ``(end_offset, state)`` for each position where some atom ends."""
        if not self.atoms or not data:
            return
        arr = np.frombuffer(data, dtype=np.uint8)
        out_pos = np.empty(BUFFER, np.int64)
        out_state = np.empty(BUFFER, np.int32)
        pos = state = 0
        while pos < len(arr):
            pos, state, n = _ac_scan(self.table, self.has_out, arr, pos, state, out_pos, out_state)
            yield from zip(out_pos[:n].tolist(), out_state[:n].tolist())

    def find_all(self, data):
        """Every ``(start, atom_index)`` occurrence, overlapping ones included."""
        out = []
        for end, state in self.iter_hits(data):
            for a in self.outputs[state]:
                out.append((end - len(self.atoms[a]) + 1, a))
        return out
