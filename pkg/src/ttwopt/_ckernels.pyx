# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled prefix-trie sweep over the observed entries.

Same contract as ``ttwopt._pykernels.trie_fg``.
"""
import numpy as np
cimport numpy as cnp

cnp.import_array()


cdef void _forward(const double[:, ::1] prev, double[:, ::1] out,
                   const cnp.intp_t[::1] parent, const cnp.intp_t[::1] index,
                   const double[:, :, ::1] core) noexcept nogil:
    # out[j] = prev[parent[j]] @ core[index[j]]
    cdef Py_ssize_t j, a, b, r0 = core.shape[1], r1 = core.shape[2]
    cdef double la
    cdef const double *s
    cdef const double *lp
    cdef double *o
    for j in range(out.shape[0]):
        lp = &prev[parent[j], 0]
        s = &core[index[j], 0, 0]
        o = &out[j, 0]
        for b in range(r1):
            o[b] = 0.0
        for a in range(r0):
            la = lp[a]
            for b in range(r1):
                o[b] += la * s[a * r1 + b]


cdef void _backward(const double[:, ::1] prev, const double[:, ::1] acc, double[:, ::1] acc_prev,
                    const cnp.intp_t[::1] parent, const cnp.intp_t[::1] index,
                    const double[:, :, ::1] core, double[:, :, ::1] grad) noexcept nogil:
    # grad[index[j]] += outer(prev[parent[j]], acc[j]);  acc_prev[parent[j]] += core[index[j]] @ acc[j]
    cdef Py_ssize_t j, a, b, r0 = core.shape[1], r1 = core.shape[2]
    cdef double la, s_acc
    cdef const double *s
    cdef const double *lp
    cdef const double *v
    cdef double *g
    cdef double *ap
    for j in range(acc.shape[0]):
        lp = &prev[parent[j], 0]
        v = &acc[j, 0]
        s = &core[index[j], 0, 0]
        g = &grad[index[j], 0, 0]
        ap = &acc_prev[parent[j], 0]
        for a in range(r0):
            la = lp[a]
            s_acc = 0.0
            for b in range(r1):
                g[a * r1 + b] += la * v[b]
                s_acc = s_acc + s[a * r1 + b] * v[b]
            ap[a] += s_acc


def trie_fg(cores, trie, bint want_grad=True):
    cdef Py_ssize_t N = len(cores), k
    # slice-major copies: core_t[i] is the r0 x r1 slice of index i
    core_t = [np.ascontiguousarray(np.transpose(c, (1, 0, 2))) for c in cores]
    lefts = [np.ones((1, 1))]
    for k in range(N):
        out = np.empty((trie.parents[k].shape[0], core_t[k].shape[2]))
        _forward(lefts[k], out, trie.parents[k], trie.indices[k], core_t[k])
        lefts.append(out)
    res = lefts[N][:, 0] - trie.values
    f = 0.5 * float(np.dot(res, res))
    if not want_grad:
        return f, None
    grads = [None] * N
    acc = np.ascontiguousarray(res[:, None])
    for k in range(N - 1, -1, -1):
        g = np.zeros_like(core_t[k])
        acc_prev = np.zeros((lefts[k].shape[0], core_t[k].shape[1]))
        _backward(lefts[k], acc, acc_prev, trie.parents[k], trie.indices[k], core_t[k], g)
        grads[k] = np.ascontiguousarray(np.transpose(g, (1, 0, 2)))
        acc = acc_prev
    return f, grads
