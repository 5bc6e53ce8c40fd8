"""Pure numpy fallback for the observed-entry kernel."""
from __future__ import annotations

import numpy as np


def _groups(trie, k):
    # positions of the depth-k nodes grouped by their index value, cached on the trie
    cache = trie.__dict__.setdefault("_groups", {})
    if k not in cache:
        index = trie.indices[k]
        order = np.argsort(index, kind="stable")
        bounds = np.searchsorted(index[order], np.arange(trie.shape[k] + 1))
        cache[k] = [
            (i, order[bounds[i]:bounds[i + 1]]) for i in range(trie.shape[k]) if bounds[i + 1] > bounds[i]
        ]
    return cache[k]


def trie_fg(cores, trie, want_grad=True):
    """Objective and gradient restricted to the observed entries.

    Parameters
    ----------
    cores : sequence of ndarray
        TT cores of shape ``(r_{n-1}, I_n, r_n)``.
    trie : ttwopt.kernels.Trie
        Prefix trie of the observed multi-indices.
    want_grad : bool
        Skip the backward sweep when False.

    Returns
    -------
    f : float
        ``0.5 * sum((model - y) ** 2)`` over the observed entries.
    grads : list of ndarray or None
        Gradient with respect to each core.
    """
    N = len(cores)
    lefts = [np.ones((1, 1))]
    for k, c in enumerate(cores):
        parent = trie.parents[k]
        out = np.empty((parent.size, c.shape[2]))
        for i, pos in _groups(trie, k):
            out[pos] = lefts[k][parent[pos]] @ c[:, i, :]
        lefts.append(out)
    res = lefts[N][:, 0] - trie.values
    f = 0.5 * float(np.dot(res, res))
    if not want_grad:
        return f, None
    grads = [None] * N
    acc = res[:, None]
    for k in range(N - 1, -1, -1):
        c = cores[k]
        parent = trie.parents[k]
        g = np.zeros(c.shape)
        pushed = np.empty((parent.size, c.shape[0]))
        for i, pos in _groups(trie, k):
            g[:, i, :] = lefts[k][parent[pos]].T @ acc[pos]
            pushed[pos] = acc[pos] @ c[:, i, :].T
        # children of one parent are contiguous because entries are sorted
        starts = np.flatnonzero(np.r_[True, parent[1:] != parent[:-1]])
        acc = np.add.reduceat(pushed, starts, axis=0)
        grads[k] = g
    return f, grads
