"""Image tensorization into a high-order block tensor.

An ``H x W x C`` image with ``H = W = 2**k`` is reshaped to ``2 x ... x 2 x C``
(modes ``1..k`` hold the row bits, modes ``k+1..2k`` the column bits, finest
bit first), the row and column bits are interleaved, and adjacent pairs are
merged into ``4 x ... x 4 x C``. Mode 1 of the result then runs over a 2x2
pixel block and each further mode over a block twice as large.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .tensor import ShapeError, as_tensor, permute, reshape

__all__ = ["TensorizationPlan", "make_plan", "plan_for_stage2", "tensorize", "detensorize"]


@dataclass(frozen=True)
class TensorizationPlan:
    source_shape: tuple
    stage1_shape: tuple
    perm: tuple
    stage2_shape: tuple
    levels: int

    @property
    def inverse_perm(self) -> tuple:
        inv = [0] * len(self.perm)
        for pos, mode in enumerate(self.perm, 1):
            inv[mode - 1] = pos
        return tuple(inv)


def _levels(h: int) -> int:
    k = int(h).bit_length() - 1
    if h < 2 or (1 << k) != h:
        raise ShapeError(f"image side {h} is not a power of two >= 2")
    return k


def make_plan(h: int, w: int, c: int) -> TensorizationPlan:
    if h != w:
        raise ShapeError(f"image must be square, got {h}x{w}")
    if c < 1:
        raise ShapeError("channel count must be >= 1")
    k = _levels(h)
    perm = []
    for j in range(1, k + 1):
        perm += [j, k + j]
    perm.append(2 * k + 1)
    return TensorizationPlan(
        source_shape=(h, w, c),
        stage1_shape=(2,) * (2 * k) + (c,),
        perm=tuple(perm),
        stage2_shape=(4,) * k + (c,),
        levels=k,
    )


def plan_for_stage2(shape) -> TensorizationPlan:
    """Recover the plan from a tensorized shape ``(4, ..., 4, C)``."""
    shape = tuple(int(d) for d in shape)
    if len(shape) < 2 or any(d != 4 for d in shape[:-1]):
        raise ShapeError(f"{shape} is not a tensorized image shape (4, ..., 4, C)")
    side = 2 ** (len(shape) - 1)
    return make_plan(side, side, shape[-1])


def tensorize(img, plan: TensorizationPlan) -> np.ndarray:
    img = as_tensor(img)
    if img.shape != plan.source_shape:
        raise ShapeError(f"image shape {img.shape} does not match plan {plan.source_shape}")
    t = permute(reshape(img, plan.stage1_shape), plan.perm)
    return np.ascontiguousarray(reshape(t, plan.stage2_shape))


def detensorize(t, plan: TensorizationPlan) -> np.ndarray:
    t = as_tensor(t)
    if t.shape != plan.stage2_shape:
        raise ShapeError(f"tensor shape {t.shape} does not match plan {plan.stage2_shape}")
    interleaved = tuple(plan.stage1_shape[m - 1] for m in plan.perm)
    img = permute(reshape(t, interleaved), plan.inverse_perm)
    return np.ascontiguousarray(reshape(img, plan.source_shape))
