"""Command line interface: ``ttwopt <subcommand> ...``."""
from __future__ import annotations

import argparse
import contextlib
import json
import logging
import os
import sys

import numpy as np

from . import evaluation as ev
from . import io
from .tensorize import detensorize, make_plan, plan_for_stage2, tensorize
from .tt import full, new_tt
from .wopt import ObservedProblem, OptimizerConfig, complete, gradient, init_cores, optimize, rank_chain

log = logging.getLogger("ttwopt")

GRADCHECK_LIMIT = 1e-4


class CLIError(Exception):
    pass


def _int_list(text):
    try:
        vals = [int(v) for v in str(text).replace(" ", "").split(",") if v]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from exc
    if not vals:
        raise argparse.ArgumentTypeError("empty list")
    return vals


def _ranks(text):
    vals = _int_list(text)
    return vals[0] if len(vals) == 1 else tuple(vals)


def _init_scheme(text):
    text = str(text).strip()
    if text == "auto":
        return ("gaussian", None)
    kind, _, params = text.partition(":")
    try:
        nums = [float(v) for v in params.split(",") if v]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"bad init parameters {params!r}") from exc
    if kind == "gaussian" and len(nums) == 1:
        return ("gaussian", nums[0])
    if kind == "uniform" and len(nums) == 2:
        return ("uniform", nums[0], nums[1])
    raise argparse.ArgumentTypeError("init must be auto, gaussian:SIGMA or uniform:LOW,HIGH")


def read_config_file(path) -> dict:
    """``key = value`` lines; ``#`` starts a comment. Keys use flag names."""
    out = {}
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            key, sep, value = line.partition("=")
            if not sep:
                raise CLIError(f"{path}:{lineno}: expected key=value")
            out[key.strip().lstrip("-").replace("-", "_")] = value.strip()
    return out


def _load_data(path):
    if str(path).lower().endswith(".ppm"):
        return io.read_ppm(path)
    return io.read_tensor(path)


def _save_data(path, t):
    if str(path).lower().endswith(".ppm"):
        io.write_ppm(path, t)
    else:
        io.write_tensor(path, t)


def cmd_generate(args):
    if args.tt_ranks is not None:
        cfg = OptimizerConfig(seed=args.seed, init_scheme=("gaussian", 1.0))
        x = full(init_cores(args.dims, rank_chain(args.tt_ranks, len(args.dims)), cfg))
    else:
        x = ev.gen_cp_problem(args.dims, args.cp_rank, args.seed)
    _save_data(args.output, x)


def cmd_mask(args):
    if (args.like is None) == (args.dims is None):
        raise CLIError("give exactly one of --like or --dims")
    dims = _load_data(args.like).shape if args.like else args.dims
    io.write_tensor(args.output, ev.gen_mask(dims, args.rate, args.seed))


def cmd_complete(args):
    x = _load_data(args.x)
    w = _load_data(args.w)
    p = ObservedProblem(x, w)
    cfg = OptimizerConfig(
        method=args.method,
        max_iters=args.max_iters,
        rel_tol=args.rel_tol,
        grad_tol=args.grad_tol,
        init_scheme=args.init,
        seed=args.seed,
        backend=args.backend,
    )
    tt, trace = optimize(p, args.ranks, cfg)
    log.info("termination: %s after %d iterations", trace.termination, len(trace))
    if args.trace:
        io.write_trace_csv(args.trace, trace)
    _save_data(args.output, full(tt) if args.model else complete(p, tt))


def cmd_tensorize(args):
    img = _load_data(args.input)
    if img.ndim != 3:
        raise CLIError(f"expected an (H, W, C) image, got shape {img.shape}")
    io.write_tensor(args.output, tensorize(img, make_plan(*img.shape)))


def cmd_detensorize(args):
    t = io.read_tensor(args.input)
    _save_data(args.output, detensorize(t, plan_for_stage2(t.shape)))


def cmd_eval(args):
    truth, est = _load_data(args.truth), _load_data(args.est)
    if truth.shape != est.shape:
        raise CLIError(f"shape mismatch: truth {truth.shape} vs estimate {est.shape}")
    w = _load_data(args.mask) if args.mask else None
    if w is not None and w.shape != truth.shape:
        raise CLIError(f"mask shape {w.shape} does not match {truth.shape}")
    rep = ev.report(
        truth, est, w,
        with_psnr=args.psnr or args.psnr_missing_only,
        peak=args.peak,
        missing_only=args.psnr_missing_only,
    )
    d = rep.to_dict()
    if args.pretty:
        for k, v in d.items():
            print(f"{k:<12} {'-' if v is None else v}")
    else:
        if d["psnr"] is not None and not np.isfinite(d["psnr"]):
            d["psnr"] = "inf"
        print(json.dumps(d))


def cmd_gradcheck(args):
    rng = np.random.default_rng(args.seed)
    dims = tuple(args.dims)
    chain = rank_chain(args.ranks, len(dims))
    x = rng.standard_normal(dims)
    w = ev.gen_mask(dims, args.rate, args.seed)
    p = ObservedProblem(x, w)
    tt = new_tt([rng.standard_normal((chain[k], d, chain[k + 1])) for k, d in enumerate(dims)])
    err = ev.max_relative_error(gradient(p, tt), ev.finite_diff_gradient(p, tt, args.h))
    print(f"max relative gradient error: {err:.3e}")
    return 0 if err <= GRADCHECK_LIMIT else 2


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="ttwopt", description="Tensor-train completion of tensors with missing entries.")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", help="synthetic ground-truth tensor")
    g.add_argument("--dims", type=_int_list, required=True)
    g.add_argument("--cp-rank", type=int, default=10)
    g.add_argument("--tt-ranks", type=_ranks, help="build from random TT cores instead of CP factors")
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("-o", "--output", required=True)
    g.set_defaults(func=cmd_generate)

    m = sub.add_parser("mask", help="random binary weight tensor")
    m.add_argument("--rate", type=float, required=True, help="fraction of missing entries")
    m.add_argument("--seed", type=int, default=0)
    m.add_argument("--like")
    m.add_argument("--dims", type=_int_list)
    m.add_argument("-o", "--output", required=True)
    m.set_defaults(func=cmd_mask)

    c = sub.add_parser("complete", help="fit TT cores and fill missing entries")
    c.add_argument("--config", help="key=value file; flags override it")
    c.add_argument("-x", required=True)
    c.add_argument("-w", required=True)
    c.add_argument("--ranks", type=_ranks, help="uniform rank or full chain, e.g. 1,20,20,1")
    c.add_argument("--method", choices=["ncg", "gd"])
    c.add_argument("--max-iters", type=int)
    c.add_argument("--rel-tol", type=float)
    c.add_argument("--grad-tol", type=float)
    c.add_argument("--init", type=_init_scheme, help="auto, gaussian:SIGMA or uniform:LOW,HIGH")
    c.add_argument("--backend", choices=["auto", "dense", "observed"])
    c.add_argument("--seed", type=int)
    c.add_argument("--trace")
    c.add_argument("--model", action="store_true", help="write the fitted TT tensor without passing observed entries through")
    c.add_argument("-o", "--output", required=True)
    c.set_defaults(func=cmd_complete)

    t = sub.add_parser("tensorize", help="image -> (4, ..., 4, C) block tensor")
    t.add_argument("-i", "--input", required=True)
    t.add_argument("-o", "--output", required=True)
    t.set_defaults(func=cmd_tensorize)

    d = sub.add_parser("detensorize", help="block tensor -> image")
    d.add_argument("-i", "--input", required=True)
    d.add_argument("-o", "--output", required=True)
    d.set_defaults(func=cmd_detensorize)

    e = sub.add_parser("eval", help="RSE / PSNR of an estimate")
    e.add_argument("--truth", required=True)
    e.add_argument("--est", required=True)
    e.add_argument("--mask")
    e.add_argument("--psnr", action="store_true")
    e.add_argument("--psnr-missing-only", action="store_true")
    e.add_argument("--peak", type=float, default=255.0)
    e.add_argument("--pretty", action="store_true")
    e.set_defaults(func=cmd_eval)

    k = sub.add_parser("gradcheck", help="analytic vs finite-difference gradient")
    k.add_argument("--dims", type=_int_list, required=True)
    k.add_argument("--ranks", type=_ranks, required=True)
    k.add_argument("--rate", type=float, default=0.5)
    k.add_argument("--seed", type=int, default=0)
    k.add_argument("--h", type=float, default=1e-6)
    k.set_defaults(func=cmd_gradcheck)
    return ap


_CONFIG_TYPES = {
    "ranks": _ranks,
    "method": str,
    "max_iters": int,
    "rel_tol": float,
    "grad_tol": float,
    "init": _init_scheme,
    "backend": str,
    "seed": int,
    "trace": str,
}

COMPLETE_DEFAULTS = {
    "method": "ncg",
    "max_iters": 1000,
    "rel_tol": 1e-10,
    "grad_tol": 1e-8,
    "init": ("gaussian", None),
    "backend": "auto",
    "seed": 0,
}


def _parse(argv):
    args = build_parser().parse_args(argv)
    if args.command != "complete":
        return args
    values = {}
    if args.config:
        raw = read_config_file(args.config)
        unknown = set(raw) - set(_CONFIG_TYPES)
        if unknown:
            raise CLIError(f"{args.config}: unknown keys {sorted(unknown)}")
        try:
            values = {k: _CONFIG_TYPES[k](v) for k, v in raw.items()}
        except (ValueError, argparse.ArgumentTypeError) as exc:
            raise CLIError(f"{args.config}: {exc}") from exc
    for key in _CONFIG_TYPES:
        if getattr(args, key) is None:
            setattr(args, key, values.get(key, COMPLETE_DEFAULTS.get(key)))
    if args.ranks is None:
        raise CLIError("complete: --ranks is required (flag or config file)")
    if args.method not in ("ncg", "gd") or args.backend not in ("auto", "dense", "observed"):
        raise CLIError(f"invalid method/backend {args.method!r}/{args.backend!r}")
    return args


def _output_paths(args):
    return [p for p in (getattr(args, "output", None), getattr(args, "trace", None)) if p]


def _thread_limit():
    n = os.environ.get("TT_THREADS")
    if not n:
        return contextlib.nullcontext()
    from threadpoolctl import threadpool_limits

    return threadpool_limits(int(n))


def main(argv=None) -> int:
    try:
        args = _parse(argv)
    except CLIError as exc:
        print(f"ttwopt: error: {exc}", file=sys.stderr)
        return 1
    except SystemExit as exc:
        # argparse usage errors exit with 2; normalize validation failures to 1
        return 0 if exc.code == 0 else 1
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    existed = {p for p in _output_paths(args) if os.path.exists(p)}
    try:
        with _thread_limit():
            code = args.func(args)
        return int(code or 0)
    except Exception as exc:
        for p in _output_paths(args):
            if p not in existed:
                with contextlib.suppress(FileNotFoundError):
                    os.unlink(p)
        print(f"ttwopt: error: {exc}", file=sys.stderr)
        if args.verbose:
            raise
        return 1


if __name__ == "__main__":
    sys.exit(main())
