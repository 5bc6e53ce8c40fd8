"""Tensor-train representation.

Core ``n`` is a 3-way array of shape ``(r_{n-1}, I_n, r_n)`` with border
ranks ``r_0 = r_N = 1``. Subchains are the contractions of all cores on one
side of a position and feed both the unfolding identity and the gradient.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .tensor import ShapeError, as_tensor

__all__ = [
    "RankError",
    "TTCores",
    "new_tt",
    "eval_element",
    "full",
    "subchain_left",
    "subchain_right",
    "left_matrix",
    "right_matrix",
    "num_params",
    "DEFAULT_MAX_ELEMENTS",
]

DEFAULT_MAX_ELEMENTS = 10**8


class RankError(ValueError):
    """Raised for an invalid TT rank chain."""


@dataclass(frozen=True)
class TTCores:
    """Validated sequence of TT cores. Build with :func:`new_tt`."""

    cores: tuple
    shape: tuple
    ranks: tuple

    @property
    def ndim(self) -> int:
        return len(self.cores)

    def __len__(self) -> int:
        return len(self.cores)

    def __iter__(self):
        return iter(self.cores)

    def __getitem__(self, n):
        return self.cores[n]


def new_tt(cores) -> TTCores:
    """Validate ``cores`` and wrap them as :class:`TTCores`.

    The arrays are copied and frozen, so later edits to the inputs do not
    leak into the model.
    """
    cores = [np.array(c, dtype=np.float64) for c in cores]
    if not cores:
        raise RankError("a tensor train needs at least one core")
    for k, c in enumerate(cores, 1):
        if c.ndim != 3:
            raise RankError(f"core {k} must be 3-way, got shape {c.shape}")
        if min(c.shape) < 1:
            raise RankError(f"core {k} has an empty dimension: {c.shape}")
    if cores[0].shape[0] != 1:
        raise RankError(f"first border rank must be 1, got {cores[0].shape[0]}")
    if cores[-1].shape[2] != 1:
        raise RankError(f"last border rank must be 1, got {cores[-1].shape[2]}")
    for k in range(len(cores) - 1):
        a, b = cores[k].shape[2], cores[k + 1].shape[0]
        if a != b:
            raise RankError(f"rank mismatch between cores {k + 1} and {k + 2}: {a}!={b}")
    for c in cores:
        c.flags.writeable = False
    shape = tuple(c.shape[1] for c in cores)
    ranks = (1,) + tuple(c.shape[2] for c in cores)
    return TTCores(tuple(cores), shape, ranks)


def num_params(tt: TTCores) -> int:
    return sum(c.size for c in tt.cores)


def eval_element(tt: TTCores, index) -> float:
    """Value at the 1-based multi-index ``index`` as a product of core slices."""
    index = tuple(int(i) for i in index)
    if len(index) != tt.ndim:
        raise ShapeError(f"index {index} has wrong length for a {tt.ndim}-way tensor")
    v = np.ones((1, 1))
    for c, i, dim in zip(tt.cores, index, tt.shape):
        if not 1 <= i <= dim:
            raise IndexError(f"index {index} out of range for shape {tt.shape}")
        v = v @ c[:, i - 1, :]
    return float(v[0, 0])


def left_matrix(tt: TTCores, n: int) -> np.ndarray:
    """Left subchain of position ``n`` as a ``(I_1*...*I_{n-1}, r_{n-1})`` matrix."""
    m = np.ones((1, 1))
    for c in tt.cores[: n - 1]:
        r0, dim, r1 = c.shape
        m = (m @ c.reshape((r0, dim * r1), order="F")).reshape((-1, r1), order="F")
    return m


def right_matrix(tt: TTCores, n: int) -> np.ndarray:
    """Right subchain of position ``n`` as a ``(r_n, I_{n+1}*...*I_N)`` matrix."""
    m = np.ones((1, 1))
    for c in reversed(tt.cores[n:]):
        r0, dim, r1 = c.shape
        m = (c.reshape((r0 * dim, r1), order="F") @ m).reshape((r0, -1), order="F")
    return m


def _check_position(tt: TTCores, n: int) -> None:
    if not 1 <= n <= tt.ndim:
        raise ShapeError(f"position {n} out of range for a {tt.ndim}-core train")


def subchain_left(tt: TTCores, n: int) -> np.ndarray:
    """Contraction of cores ``1..n-1``, shape ``(I_1, ..., I_{n-1}, r_{n-1})``.

    For ``n = 1`` this is the 1x1 tensor holding 1.
    """
    _check_position(tt, n)
    if n == 1:
        return np.ones((1, 1))
    return left_matrix(tt, n).reshape(tt.shape[: n - 1] + (tt.ranks[n - 1],), order="F")


def subchain_right(tt: TTCores, n: int) -> np.ndarray:
    """Contraction of cores ``n+1..N``, shape ``(r_n, I_{n+1}, ..., I_N)``.

    For ``n = N`` this is the 1x1 tensor holding 1.
    """
    _check_position(tt, n)
    if n == tt.ndim:
        return np.ones((1, 1))
    return right_matrix(tt, n).reshape((tt.ranks[n],) + tt.shape[n:], order="F")


def full(tt: TTCores, max_elements: int = DEFAULT_MAX_ELEMENTS) -> np.ndarray:
    """Dense reconstruction by sequential chain contraction."""
    size = int(np.prod(tt.shape, dtype=np.int64))
    if size > max_elements:
        raise MemoryError(
            f"refusing to materialize {size} elements (cap {max_elements}); "
            "raise max_elements explicitly if intended"
        )
    return as_tensor(left_matrix(tt, tt.ndim + 1).reshape(tt.shape, order="F"))
