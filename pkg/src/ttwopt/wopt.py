"""Weighted tensor-train completion (TT-WOPT).

The cores are fitted to the observed entries by minimizing
``f = 0.5 * ||W * X - W * full(G)||^2`` with a first-order method.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .tensor import ShapeError, as_tensor, hadamard, inner, kronecker, norm, unfold
from .tt import (
    DEFAULT_MAX_ELEMENTS,
    RankError,
    TTCores,
    full,
    left_matrix,
    new_tt,
    right_matrix,
)

log = logging.getLogger(__name__)

__all__ = [
    "ObservedProblem",
    "OptimizerConfig",
    "OptimizerTrace",
    "TraceRecord",
    "OptimizationError",
    "DivergenceError",
    "ZeroGradientError",
    "rank_chain",
    "init_scale",
    "init_cores",
    "objective",
    "gradient",
    "gradient_kron",
    "optimize",
    "complete",
]

METHODS = ("ncg", "gd")
BACKENDS = ("auto", "dense", "observed")


class OptimizationError(RuntimeError):
    def __init__(self, msg, trace=None):
        super().__init__(msg)
        self.trace = trace


class DivergenceError(OptimizationError):
    """The objective became non-finite."""


class ZeroGradientError(OptimizationError):
    """The starting point is already stationary (e.g. all-zero cores)."""


@dataclass
class ObservedProblem:
    """Observed data ``x`` with a binary weight tensor ``w`` (1 = observed).

    Values of ``x`` at missing positions are irrelevant; ``y = w * x`` is
    cached at construction.
    """

    x: np.ndarray
    w: np.ndarray
    y: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        self.x = as_tensor(self.x).copy()
        self.w = as_tensor(self.w).copy()
        if self.x.shape != self.w.shape:
            raise ShapeError(f"data {self.x.shape} and weights {self.w.shape} differ in shape")
        if not np.all((self.w == 0.0) | (self.w == 1.0)):
            raise ValueError("weight tensor entries must be exactly 0 or 1")
        # missing entries may hold NaN placeholders; they never enter the fit
        self.y = np.where(self.w == 1.0, self.x, 0.0)
        if not np.all(np.isfinite(self.y)):
            raise ValueError("observed entries must be finite")
        for a in (self.x, self.w, self.y):
            a.flags.writeable = False
        mask = self.w.ravel(order="F") == 1.0
        offsets = np.flatnonzero(mask)
        self._obs_idx = np.ascontiguousarray(
            np.stack(np.unravel_index(offsets, self.shape, order="F"), axis=1), dtype=np.intp
        )
        self._obs_val = self.y.ravel(order="F")[offsets].copy()
        self._trie = None

    @property
    def shape(self) -> tuple:
        return self.x.shape

    @property
    def n_observed(self) -> int:
        return int(self._obs_val.size)

    @property
    def n_missing(self) -> int:
        return int(self.x.size - self._obs_val.size)

    @property
    def observed_index(self) -> np.ndarray:
        """0-based ``(M, N)`` indices of observed entries, colexicographic order."""
        return self._obs_idx

    @property
    def observed_values(self) -> np.ndarray:
        return self._obs_val

    @property
    def trie(self) -> kernels.Trie:
        """Prefix trie of the observed entries, built on first use."""
        if self._trie is None:
            self._trie = kernels.build_trie(self._obs_idx, self._obs_val, self.shape)
        return self._trie


@dataclass
class OptimizerConfig:
    """Settings for :func:`optimize`.

    ``init_scheme`` is ``("gaussian", sigma)`` or ``("uniform", low, high)``.
    A gaussian ``sigma`` of ``None`` picks the scale from the observed data
    (see :func:`init_scale`).
    """

    method: str = "ncg"
    max_iters: int = 1000
    rel_tol: float = 1e-10
    grad_tol: float = 1e-8
    init_scheme: tuple = ("gaussian", None)
    seed: int = 0
    backend: str = "auto"
    armijo_c: float = 1e-4
    shrink: float = 0.5
    max_backtracks: int = 60

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"method must be one of {METHODS}, got {self.method!r}")
        if self.backend not in BACKENDS:
            raise ValueError(f"backend must be one of {BACKENDS}, got {self.backend!r}")
        if self.max_iters < 0:
            raise ValueError("max_iters must be >= 0")
        if not (self.rel_tol > 0 and self.grad_tol > 0):
            raise ValueError("tolerances must be positive")
        kind = self.init_scheme[0]
        if kind == "gaussian":
            if len(self.init_scheme) != 2:
                raise ValueError("gaussian init takes one parameter (sigma or None)")
            sigma = self.init_scheme[1]
            if sigma is not None and sigma < 0:
                raise ValueError("gaussian sigma must be >= 0")
        elif kind == "uniform":
            if len(self.init_scheme) != 3 or not self.init_scheme[1] <= self.init_scheme[2]:
                raise ValueError("uniform init takes (low, high) with low <= high")
        else:
            raise ValueError(f"unknown init scheme {kind!r}")


@dataclass(frozen=True)
class TraceRecord:
    iteration: int
    f: float
    gnorm: float
    step: float


@dataclass
class OptimizerTrace:
    records: list = field(default_factory=list)
    f0: float = math.nan
    gnorm0: float = math.nan
    termination: str = ""

    def __len__(self):
        return len(self.records)

    @property
    def f(self) -> np.ndarray:
        return np.array([r.f for r in self.records])


def rank_chain(ranks, ndim: int) -> tuple:
    """Expand a uniform rank into ``(1, r, ..., r, 1)`` and validate a chain."""
    if np.isscalar(ranks):
        r = int(ranks)
        chain = (1,) + (r,) * (ndim - 1) + (1,)
    else:
        chain = tuple(int(r) for r in ranks)
    if len(chain) != ndim + 1:
        raise RankError(f"rank chain {chain} needs {ndim + 1} entries for a {ndim}-way tensor")
    if chain[0] != 1 or chain[-1] != 1:
        raise RankError(f"border ranks must be 1, got {chain}")
    if min(chain) < 1:
        raise RankError(f"ranks must be positive, got {chain}")
    return chain


def init_scale(observed_values, ranks) -> float:
    """Gaussian sigma giving reconstructed entries roughly the data's spread.

    With i.i.d. N(0, s^2) cores a TT entry has standard deviation
    ``s^N * sqrt(prod of inner ranks)``; solve that for the observed std.
    """
    ranks = tuple(ranks)
    ndim = len(ranks) - 1
    target = float(np.std(observed_values)) if len(observed_values) else 0.0
    if not target > 0:
        target = float(np.sqrt(np.mean(np.square(observed_values)))) if len(observed_values) else 0.0
    if not target > 0:
        target = 1.0
    log_inner = sum(math.log(r) for r in ranks[1:-1])
    return math.exp((math.log(target) - 0.5 * log_inner) / ndim)


def init_cores(shape, ranks, config: OptimizerConfig, data_scale: float | None = None) -> TTCores:
    """Random cores drawn from ``config.init_scheme`` with ``config.seed``.

    ``data_scale`` supplies sigma when the gaussian scheme leaves it unset.
    """
    shape = tuple(int(d) for d in shape)
    chain = rank_chain(ranks, len(shape))
    rng = np.random.default_rng(config.seed)
    kind, *params = config.init_scheme
    cores = []
    for k, dim in enumerate(shape):
        core_shape = (chain[k], dim, chain[k + 1])
        if kind == "gaussian":
            sigma = params[0] if params[0] is not None else data_scale
            if sigma is None:
                raise ValueError("gaussian sigma unset and no data scale given")
            cores.append(sigma * rng.standard_normal(core_shape))
        else:
            cores.append(rng.uniform(params[0], params[1], core_shape))
    return new_tt(cores)


def _check_shapes(p: ObservedProblem, tt: TTCores) -> None:
    if tuple(tt.shape) != p.shape:
        raise ShapeError(f"model shape {tt.shape} does not match data shape {p.shape}")


def objective(p: ObservedProblem, tt: TTCores) -> float:
    """``0.5*||Y||^2 - <Y, Z> + 0.5*||Z||^2`` with ``Z = W * full(tt)``."""
    _check_shapes(p, tt)
    z = hadamard(p.w, full(tt))
    return 0.5 * norm(p.y) ** 2 - inner(p.y, z) + 0.5 * norm(z) ** 2


def _dense_fg(p: ObservedProblem, tt: TTCores, want_grad=True, max_elements=DEFAULT_MAX_ELEMENTS):
    resid = p.w * full(tt, max_elements) - p.y
    flat = resid.ravel(order="F")
    f = 0.5 * float(np.dot(flat, flat))
    if not want_grad:
        return f, None
    N = tt.ndim
    rights = [None] * N
    right = np.ones((1, 1))
    for n in range(N - 1, -1, -1):
        rights[n] = right  # (r_n, P_right)
        r0, dim, r1 = tt.cores[n].shape
        right = (tt.cores[n].reshape((r0 * dim, r1), order="F") @ right).reshape((r0, -1), order="F")
    grads = []
    left = np.ones((1, 1))  # (P_left, r_{n-1})
    for n, core in enumerate(tt.cores):
        r0, dim, r1 = core.shape
        d = flat.reshape((left.shape[0], -1), order="F")
        # contract the left modes, then the right modes
        t = (left.T @ d).reshape((r0 * dim, -1), order="F")
        grads.append((t @ rights[n].T).reshape((r0, dim, r1), order="F"))
        left = (left @ core.reshape((r0, dim * r1), order="F")).reshape((-1, r1), order="F")
    return f, grads


def gradient(p: ObservedProblem, tt: TTCores) -> list:
    """Core gradients of the weighted objective.

    Equivalent to ``(Z_(n) - Y_(n)) (G^{>n}_(1) kron G^{<n}_(n))^T`` folded
    back to core shape, but contracts the residual against each subchain
    instead of forming the Kronecker product.
    """
    _check_shapes(p, tt)
    return _dense_fg(p, tt)[1]


def gradient_kron(p: ObservedProblem, tt: TTCores) -> list:
    """Literal Kronecker-product form of the gradient. Small problems only."""
    _check_shapes(p, tt)
    z = hadamard(p.w, full(tt))
    grads = []
    for n, core in enumerate(tt.cores, 1):
        r0, dim, r1 = core.shape
        kr = kronecker(right_matrix(tt, n), left_matrix(tt, n).T)
        g2 = (unfold(z, n) - unfold(p.y, n)) @ kr.T  # (I_n, r0*r1)
        grads.append(g2.reshape((dim, r0, r1), order="F").transpose(1, 0, 2))
    return grads


def complete(p: ObservedProblem, tt: TTCores, max_elements: int = DEFAULT_MAX_ELEMENTS) -> np.ndarray:
    """Observed entries pass through; missing entries come from the model."""
    _check_shapes(p, tt)
    return np.where(p.w == 1.0, p.x, full(tt, max_elements))


class _Objective:
    """Flat-vector view of the objective for the line-search loop."""

    def __init__(self, p: ObservedProblem, chain, backend: str):
        self.p = p
        self.shapes = [(chain[k], d, chain[k + 1]) for k, d in enumerate(p.shape)]
        self.sizes = [int(np.prod(s)) for s in self.shapes]
        self.backend = backend

    def unpack(self, theta):
        out, pos = [], 0
        for s, n in zip(self.shapes, self.sizes):
            out.append(theta[pos:pos + n].reshape(s))
            pos += n
        return out

    @staticmethod
    def pack(cores):
        return np.concatenate([np.ascontiguousarray(c).ravel() for c in cores])

    def __call__(self, theta, want_grad=True):
        cores = self.unpack(theta)
        if self.backend == "observed":
            f, g = kernels.observed_fg(cores, self.p.trie, want_grad)
        else:
            f, g = _dense_fg(self.p, new_tt(cores), want_grad)
        return (f, self.pack(g)) if want_grad else (f, None)


def _resolve_backend(p: ObservedProblem, backend: str) -> str:
    if backend != "auto":
        return backend
    # the trie sweep does work per prefix node, the dense sweep per tensor
    # entry at BLAS speed; the trie wins once it is much smaller
    return "observed" if p.trie.n_nodes < 0.5 * p.x.size else "dense"


def optimize(p: ObservedProblem, ranks, config: OptimizerConfig | None = None, init: TTCores | None = None):
    """Fit TT cores to the observed entries.

    Parameters
    ----------
    p : ObservedProblem
    ranks : int or sequence of int
        Uniform inner rank or full chain ``(1, r_1, ..., r_{N-1}, 1)``.
    config : OptimizerConfig, optional
    init : TTCores, optional
        Starting cores; drawn with :func:`init_cores` when omitted.

    Returns
    -------
    tt : TTCores
    trace : OptimizerTrace
        ``trace.termination`` is one of ``"iteration budget"``,
        ``"relative tolerance"``, ``"gradient tolerance"``,
        ``"exact fit"`` or ``"line search failure"``.
    """
    config = config or OptimizerConfig()
    chain = rank_chain(ranks, len(p.shape))
    if init is None:
        scale = init_scale(p.observed_values, chain)
        init = init_cores(p.shape, chain, config, data_scale=scale)
    elif tuple(init.ranks) != chain or tuple(init.shape) != p.shape:
        raise RankError(f"initial cores {init.shape}/{init.ranks} do not match {p.shape}/{chain}")
    backend = _resolve_backend(p, config.backend)
    fun = _Objective(p, chain, backend)
    theta = fun.pack(init.cores)
    nparams = theta.size
    trace = OptimizerTrace()

    if config.max_iters == 0:
        trace.termination = "iteration budget"
        return init, trace

    f, g = fun(theta)
    gnorm = float(np.linalg.norm(g))
    trace.f0, trace.gnorm0 = f, gnorm
    if not math.isfinite(f):
        trace.termination = "diverged"
        raise DivergenceError("objective is not finite at the initial point", trace)
    if gnorm == 0.0 and f > 0.0:
        trace.termination = "zero gradient"
        raise ZeroGradientError("gradient vanishes at the initial point", trace)

    d = -g
    step = None
    f_prev = f
    for it in range(1, config.max_iters + 1):
        if f == 0.0:
            trace.termination = "exact fit"
            break
        slope = float(np.dot(g, d))
        if not slope < 0:
            d, slope = -g, -gnorm * gnorm
        if step is None:
            # exact for a quadratic whose minimum value is zero
            alpha = 2.0 * f / -slope
        else:
            # interpolate from the last decrease, allowing at most 10x growth
            alpha = min(1.01 * 2.0 * (f_prev - f) / -slope, 10.0 * step)

        # refine the trial step with the minimizer of the quadratic through
        # f(0), f'(0) and f(alpha); Armijo halving remains the fallback
        trial = theta + alpha * d
        f_new, _ = fun(trial, want_grad=False)
        curv = 2.0 * (f_new - f - slope * alpha)
        if math.isfinite(f_new) and curv > 0:
            alpha_q = min(max(-slope * alpha * alpha / curv, 0.1 * alpha), 10.0 * alpha)
            trial_q = theta + alpha_q * d
            f_q, _ = fun(trial_q, want_grad=False)
            if f_q < f_new:
                alpha, trial, f_new = alpha_q, trial_q, f_q
        accepted = False
        for _ in range(config.max_backtracks):
            if math.isfinite(f_new) and f_new <= f + config.armijo_c * alpha * slope:
                accepted = True
                break
            alpha *= config.shrink
            trial = theta + alpha * d
            f_new, _ = fun(trial, want_grad=False)
        if not accepted:
            if config.method == "ncg" and not np.array_equal(d, -g):
                log.debug("iteration %d: line search failed on NCG direction, restarting", it)
                d, step = -g, None
                continue
            trace.termination = "line search failure"
            break

        f_prev = f
        theta = trial
        f, g_new = fun(theta)
        if not math.isfinite(f):
            trace.termination = "diverged"
            raise DivergenceError(f"objective became non-finite at iteration {it}", trace)
        gnorm = float(np.linalg.norm(g_new))
        trace.records.append(TraceRecord(it, f, gnorm, alpha))

        if config.method == "ncg":
            # Polak-Ribiere+ with automatic restart
            beta = max(0.0, float(np.dot(g_new, g_new - g)) / float(np.dot(g, g)))
            d = -g_new + beta * d
        else:
            d = -g_new
        g = g_new
        step = alpha

        if gnorm / nparams < config.grad_tol:
            trace.termination = "gradient tolerance"
            break
        if abs(f_prev - f) / max(f_prev, np.finfo(float).tiny) < config.rel_tol:
            trace.termination = "relative tolerance"
            break
    else:
        trace.termination = "iteration budget"

    log.info("optimize: %s after %d iterations, f=%.6g", trace.termination, len(trace), f)
    return new_tt(fun.unpack(theta)), trace
