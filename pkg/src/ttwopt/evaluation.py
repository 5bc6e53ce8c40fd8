"""Metrics, synthetic problem generators and the finite-difference oracle."""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

from .tensor import ShapeError, as_tensor, norm
from .tt import TTCores, new_tt
from .wopt import ObservedProblem, objective

__all__ = [
    "MetricReport",
    "cp_to_dense",
    "gen_cp_problem",
    "gen_mask",
    "rse",
    "psnr",
    "mse",
    "finite_diff_gradient",
    "max_relative_error",
    "report",
]


@dataclass
class MetricReport:
    rse: float
    psnr: float | None = None
    n_observed: int | None = None
    n_missing: int | None = None

    def to_dict(self) -> dict:
        return asdict(self)


def cp_to_dense(factors) -> np.ndarray:
    """Sum of ``R`` rank-one terms; factor ``n`` has shape ``(I_n, R)``."""
    factors = [np.atleast_2d(np.asarray(f, dtype=np.float64)) for f in factors]
    if not factors:
        raise ShapeError("need at least one factor matrix")
    rank = factors[0].shape[1]
    if any(f.ndim != 2 or f.shape[1] != rank for f in factors):
        raise ShapeError(f"factor matrices must share a column count; got {[f.shape for f in factors]}")
    # Khatri-Rao accumulation in colexicographic order, then one matrix product
    kr = np.ones((1, rank))
    for f in factors[1:]:
        kr = (f[:, None, :] * kr[None, :, :]).reshape(-1, rank)
    out = factors[0] @ kr.T
    return out.reshape(tuple(f.shape[0] for f in factors), order="F")


def gen_cp_problem(dims, rank: int, seed: int) -> np.ndarray:
    """Tensor with CP rank ``rank`` built from standard Gaussian factors."""
    if rank < 1:
        raise ValueError("CP rank must be >= 1")
    rng = np.random.default_rng(seed)
    return cp_to_dense([rng.standard_normal((int(d), rank)) for d in dims])


def gen_mask(dims, missing_rate: float, seed: int) -> np.ndarray:
    """Binary weight tensor with exactly ``round(rate * size)`` zeros."""
    if not 0.0 <= missing_rate <= 1.0:
        raise ValueError(f"missing rate must lie in [0, 1], got {missing_rate}")
    dims = tuple(int(d) for d in dims)
    size = int(np.prod(dims, dtype=np.int64))
    n_missing = int(math.floor(missing_rate * size + 0.5))
    rng = np.random.default_rng(seed)
    w = np.ones(size)
    w[rng.choice(size, n_missing, replace=False)] = 0.0
    return w.reshape(dims, order="F")


def rse(x, xhat) -> float:
    x, xhat = as_tensor(x), as_tensor(xhat)
    if x.shape != xhat.shape:
        raise ShapeError(f"shape mismatch: {x.shape} vs {xhat.shape}")
    ref = norm(x)
    if ref == 0.0:
        raise ValueError("relative error undefined for a zero reference tensor")
    return norm(x - xhat) / ref


def mse(x, xhat, mask=None) -> float:
    x, xhat = as_tensor(x), as_tensor(xhat)
    if x.shape != xhat.shape:
        raise ShapeError(f"shape mismatch: {x.shape} vs {xhat.shape}")
    d = (x - xhat).ravel(order="F")
    if mask is not None:
        d = d[as_tensor(mask).ravel(order="F") != 0.0]
        if d.size == 0:
            raise ValueError("empty selection for MSE")
    return float(np.dot(d, d) / d.size)


def psnr(x, xhat, peak: float = 255.0, mask=None) -> float:
    """``10 log10(peak^2 / MSE)`` in dB; ``inf`` when the MSE is zero.

    ``mask`` restricts the MSE to its non-zero positions.
    """
    err = mse(x, xhat, mask)
    if err == 0.0:
        return math.inf
    return 10.0 * math.log10(peak * peak / err)


def report(truth, est, w=None, with_psnr=False, peak=255.0, missing_only=False) -> MetricReport:
    truth, est = as_tensor(truth), as_tensor(est)
    rep = MetricReport(rse=rse(truth, est))
    if w is not None:
        w = as_tensor(w)
        rep.n_observed = int(np.count_nonzero(w))
        rep.n_missing = int(w.size - rep.n_observed)
    if with_psnr:
        sel = None
        if missing_only:
            if w is None:
                raise ValueError("missing-only PSNR needs a mask")
            sel = 1.0 - w
        rep.psnr = psnr(truth, est, peak, sel)
    return rep


def finite_diff_gradient(p: ObservedProblem, tt: TTCores, h: float = 1e-6) -> list:
    """Central differences of :func:`ttwopt.wopt.objective` for every core entry."""
    if not h > 0:
        raise ValueError("step must be positive")
    cores = [np.array(c) for c in tt.cores]
    grads = []
    for k, c in enumerate(cores):
        g = np.zeros_like(c)
        for pos in np.ndindex(c.shape):
            orig = c[pos]
            c[pos] = orig + h
            fp = objective(p, new_tt(cores))
            c[pos] = orig - h
            fm = objective(p, new_tt(cores))
            c[pos] = orig
            g[pos] = (fp - fm) / (2.0 * h)
        grads.append(g)
    return grads


def max_relative_error(analytic, numeric, floor: float = 1e-8) -> float:
    """Largest componentwise ``|a - b| / max(|a|, |b|)``.

    Components whose absolute error is below ``floor`` count as exact.
    """
    worst = 0.0
    for a, b in zip(analytic, numeric):
        a, b = np.asarray(a).ravel(), np.asarray(b).ravel()
        err = np.abs(a - b)
        scale = np.maximum(np.abs(a), np.abs(b))
        rel = np.where(err <= floor, 0.0, err / np.where(scale > 0, scale, 1.0))
        if rel.size:
            worst = max(worst, float(rel.max()))
    return worst
