"""Objective/gradient over observed entries, with backend selection.

Observed multi-indices are sorted lexicographically and organized as a
prefix trie: depth ``k`` holds one node per distinct ``(i_1, ..., i_k)``.
A forward sweep computes each prefix's left chain once, and the backward
sweep pushes residual-weighted right chains up the same tree, so entries
sharing a prefix share the work.

The compiled extension is used when it imports; otherwise the numpy
implementation takes over. Set ``TTWOPT_PURE_PYTHON=1`` to force the
fallback.
"""
from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np

from . import _pykernels

BACKEND = "python"
_impl = _pykernels.trie_fg

if os.environ.get("TTWOPT_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from . import _ckernels
    except ImportError:  # extension not built
        pass
    else:
        BACKEND = "compiled"
        _impl = _ckernels.trie_fg

__all__ = [
    "BACKEND",
    "Trie",
    "build_trie",
    "observed_fg",
    "python_observed_fg",
    "compiled_observed_fg",
]


@dataclass(eq=False)
class Trie:
    shape: tuple
    parents: list  # parents[k][j]: node at depth k-1 owning node j at depth k
    indices: list  # indices[k][j]: 0-based index along mode k+1
    values: np.ndarray  # observed value per leaf

    @property
    def n_nodes(self) -> int:
        return sum(p.size for p in self.parents)


def build_trie(index, values, shape) -> Trie:
    """Prefix trie of unique 0-based multi-indices ``index`` (M x N)."""
    index = np.asarray(index, dtype=np.intp)
    values = np.asarray(values, dtype=np.float64)
    M, N = index.shape
    if M == 0:
        return Trie(tuple(shape), [np.zeros(0, np.intp)] * N, [np.zeros(0, np.intp)] * N, values)
    order = np.lexsort(index.T[::-1])
    index = index[order]
    values = np.ascontiguousarray(values[order])
    parents, indices = [], []
    new_node = np.zeros(M, dtype=bool)
    new_node[0] = True
    prev_id = np.zeros(M, dtype=np.intp)
    for k in range(N):
        new_node[1:] |= index[1:, k] != index[:-1, k]
        starts = np.flatnonzero(new_node)
        parents.append(np.ascontiguousarray(prev_id[starts]))
        indices.append(np.ascontiguousarray(index[starts, k]))
        prev_id = np.cumsum(new_node) - 1
    if len(parents[-1]) != M:
        raise ValueError("observed indices must be unique")
    return Trie(tuple(int(d) for d in shape), parents, indices, values)


def _prepare(cores):
    return [np.ascontiguousarray(c, dtype=np.float64) for c in cores]


def observed_fg(cores, trie: Trie, want_grad=True):
    """Half squared residual over observed entries, and its core gradients."""
    return _impl(_prepare(cores), trie, want_grad)


def python_observed_fg(cores, trie: Trie, want_grad=True):
    return _pykernels.trie_fg(_prepare(cores), trie, want_grad)


def compiled_observed_fg(cores, trie: Trie, want_grad=True):
    from . import _ckernels

    return _ckernels.trie_fg(_prepare(cores), trie, want_grad)
