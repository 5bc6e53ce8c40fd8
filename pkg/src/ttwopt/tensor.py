"""Dense tensor primitives.

Tensors are plain float64 :class:`numpy.ndarray` objects. Every reshape in
this package follows the colexicographic convention (first index varies
fastest, ``order="F"``), so the mode-1 unfolding is a pure reinterpretation
of the flat buffer.

Mode numbers and permutation orders in the public API are 1-based.
"""
from __future__ import annotations

import numpy as np

__all__ = [
    "ShapeError",
    "as_tensor",
    "unfold",
    "fold",
    "kronecker",
    "hadamard",
    "inner",
    "norm",
    "permute",
    "reshape",
    "flat",
    "from_flat",
]


class ShapeError(ValueError):
    """Raised when tensor or matrix dimensions are inconsistent."""


def as_tensor(t) -> np.ndarray:
    """Return ``t`` as a float64 array with at least one mode."""
    t = np.asarray(t, dtype=np.float64)
    if t.ndim == 0:
        t = t.reshape(1)
    if any(d < 1 for d in t.shape):
        raise ShapeError(f"all dimensions must be >= 1, got {t.shape}")
    return t


def _check_mode(n: int, ndim: int) -> int:
    if not 1 <= n <= ndim:
        raise ShapeError(f"mode {n} out of range for a {ndim}-way tensor")
    return n - 1


def unfold(t, n: int) -> np.ndarray:
    """Mode-``n`` matricization (Kolda-Bader column ordering).

    Element ``(i_1, ..., i_N)`` lands in row ``i_n``; the column index runs
    colexicographically over the remaining modes in ascending order.
    """
    t = as_tensor(t)
    k = _check_mode(n, t.ndim)
    return np.moveaxis(t, k, 0).reshape((t.shape[k], -1), order="F")


def fold(m, n: int, shape) -> np.ndarray:
    """Inverse of :func:`unfold`."""
    m = np.asarray(m, dtype=np.float64)
    shape = tuple(int(d) for d in shape)
    k = _check_mode(n, len(shape))
    rest = shape[:k] + shape[k + 1:]
    if m.ndim != 2 or m.shape != (shape[k], int(np.prod(rest, dtype=np.int64))):
        raise ShapeError(f"matrix of shape {m.shape} cannot fold into {shape} at mode {n}")
    t = m.reshape((shape[k],) + rest, order="F")
    return np.moveaxis(t, 0, k)


def kronecker(a, b) -> np.ndarray:
    """Kronecker product; block ``(i, j)`` equals ``a[i, j] * b``."""
    a = np.atleast_2d(np.asarray(a, dtype=np.float64))
    b = np.atleast_2d(np.asarray(b, dtype=np.float64))
    return np.kron(a, b)


def _same_shape(a: np.ndarray, b: np.ndarray) -> None:
    if a.shape != b.shape:
        raise ShapeError(f"shape mismatch: {a.shape} vs {b.shape}")


def hadamard(a, b) -> np.ndarray:
    a, b = as_tensor(a), as_tensor(b)
    _same_shape(a, b)
    return a * b


def inner(a, b) -> float:
    a, b = as_tensor(a), as_tensor(b)
    _same_shape(a, b)
    return float(np.dot(a.ravel(order="F"), b.ravel(order="F")))


def norm(a) -> float:
    a = as_tensor(a).ravel(order="F")
    return float(np.sqrt(np.dot(a, a)))


def permute(t, order) -> np.ndarray:
    """Move mode ``order[k]`` to position ``k`` (1-based ``order``)."""
    t = as_tensor(t)
    order = [int(o) for o in order]
    if sorted(order) != list(range(1, t.ndim + 1)):
        raise ShapeError(f"{order} is not a permutation of 1..{t.ndim}")
    return np.transpose(t, [o - 1 for o in order])


def reshape(t, newshape) -> np.ndarray:
    """Reinterpret the colexicographic buffer of ``t`` with a new shape."""
    t = as_tensor(t)
    newshape = tuple(int(d) for d in newshape)
    if any(d < 1 for d in newshape) or int(np.prod(newshape, dtype=np.int64)) != t.size:
        raise ShapeError(f"cannot reshape {t.shape} into {newshape}")
    return t.reshape(newshape, order="F")


def flat(t) -> np.ndarray:
    """Colexicographic flat buffer of ``t``."""
    return as_tensor(t).ravel(order="F")


def from_flat(values, shape) -> np.ndarray:
    values = np.asarray(values, dtype=np.float64).ravel()
    shape = tuple(int(d) for d in shape)
    if values.size != int(np.prod(shape, dtype=np.int64)):
        raise ShapeError(f"buffer of length {values.size} does not match shape {shape}")
    return values.reshape(shape, order="F")
