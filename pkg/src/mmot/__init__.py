"""Entropic multimarginal optimal transport via primal-dual accelerated alternating minimization."""

from .dual import (
    Problem,
    KernelEvaluation,
    eval_kernel,
    dual_value,
    dual_gradient,
    block_minimize,
    reconstruct_primal,
    primal_value,
    to_lambda,
    from_lambda,
)
from .pdaam import (
    StoppingRule,
    SolveReport,
    Certificate,
    solve_regularized,
    solve_mot,
)
from .rounding import round_to_polytope, mode_scale, RoundingReport
from .baselines import sinkhorn_solve, lp_solve, LPSolution, finite_diff_gradient
from .tensor import TensorShape, marginal, all_marginals, inner, norm1, norm_inf, entropy

__version__ = "0.1.0"
