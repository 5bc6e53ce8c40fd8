"""Completion of high-order tensors with missing entries by fitting tensor-train cores."""
from .evaluation import MetricReport, cp_to_dense, gen_cp_problem, gen_mask, psnr, rse
from .kernels import BACKEND as KERNEL_BACKEND
from .tensorize import TensorizationPlan, detensorize, make_plan, tensorize
from .tt import TTCores, eval_element, full, new_tt, num_params, subchain_left, subchain_right
from .wopt import (
    ObservedProblem,
    OptimizerConfig,
    OptimizerTrace,
    complete,
    gradient,
    init_cores,
    objective,
    optimize,
)

__version__ = "0.1.0"
