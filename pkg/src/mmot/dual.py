"""Entropic MOT dual in u-coordinates.

With ``B(U)_I = exp(sum_k u_k[i_k] - C_I / gamma)`` and ``Sigma(U) = sum B``,
the minimization-form dual is

    phi(U) = gamma * (ln Sigma(U) - sum_k <u_k, p_k>)

whose gradient block k is ``gamma * (p_k(B) / Sigma - p_k)``.  Everything here
is computed in the log domain with one global max-shift, since ``C / gamma``
reaches the thousands at useful accuracies.
"""

from dataclasses import dataclass, replace

import numpy as np

from . import _kernels
from .errors import ArgumentError, NumericalFailure
from .tensor import TensorShape, as_tensor, inner, entropy

# mantissas below this have lost relative precision to underflow
_MANTISSA_FLOOR = 1e-200


@dataclass(frozen=True, eq=False)
class Problem:
    """Cost tensor, marginals and (optionally) the regularization ``gamma``.

    ``marginals`` is an ``(m, n)`` array, row k being p_k.  ``gamma=None``
    describes the unregularized LP used by ``solve_mot`` and the LP oracle.
    """

    cost: np.ndarray
    marginals: np.ndarray
    gamma: float | None = None
    simplex_tol: float = 1e-12

    def __post_init__(self):
        cost = as_tensor(self.cost)
        shape = TensorShape.of(cost)
        p = np.array(self.marginals, dtype=np.float64)
        if p.shape != (shape.m, shape.n):
            raise ArgumentError(f"marginals must have shape {(shape.m, shape.n)}, got {p.shape}")
        if not np.all(np.isfinite(cost)) or np.any(cost < 0):
            raise ArgumentError("cost entries must be finite and >= 0")
        if np.any(p < 0) or np.any(np.abs(p.sum(axis=1) - 1.0) > self.simplex_tol):
            raise ArgumentError(f"every marginal must lie on the simplex (tol {self.simplex_tol:g})")
        if self.gamma is not None and not self.gamma > 0:
            raise ArgumentError(f"gamma must be positive, got {self.gamma!r}")
        cost.setflags(write=False)
        p.setflags(write=False)
        object.__setattr__(self, "cost", cost)
        object.__setattr__(self, "marginals", p)

    @property
    def m(self):
        return self.cost.ndim

    @property
    def n(self):
        return self.cost.shape[0]

    @property
    def shape(self):
        return TensorShape(self.m, self.n)

    @property
    def cost_inf(self):
        return float(self.cost.max())

    def with_gamma(self, gamma):
        return replace(self, gamma=float(gamma))

    def with_marginals(self, marginals):
        return replace(self, marginals=marginals)

    def _require_gamma(self):
        if self.gamma is None:
            raise ArgumentError("this operation needs a regularized problem (gamma is None)")
        return self.gamma


def zeros_dual(problem):
    return np.zeros((problem.m, problem.n))


def to_lambda(U, gamma):
    """u-coordinates to Lagrange multipliers: lambda_k = -gamma u_k - gamma/m."""
    U = np.asarray(U, dtype=np.float64)
    return -gamma * U - gamma / U.shape[0]


def from_lambda(lam, gamma):
    lam = np.asarray(lam, dtype=np.float64)
    return -lam / gamma - 1.0 / lam.shape[0]


def log_nu(problem):
    """``ln nu = -||C||_inf / gamma`` (nu itself underflows at small gamma)."""
    return -problem.cost_inf / problem._require_gamma()


@dataclass(frozen=True, eq=False)
class KernelEvaluation:
    """``log B(U)``, ``ln Sigma(U)`` and the marginals of B as shifted mantissas.

    ``p_k(B)[j] = exp(shift) * mantissa[k, j]``.
    """

    log_b: np.ndarray
    shift: float
    mantissa: np.ndarray
    log_sigma: float

    def normalized_marginals(self):
        """``p_k(B) / Sigma`` for every k, each row summing to one."""
        return self.mantissa / self.mantissa.sum(axis=1, keepdims=True)

    def log_marginal(self, k):
        mk = self.mantissa[k]
        if np.all(mk >= _MANTISSA_FLOOR):
            return self.shift + np.log(mk)
        return slice_logsumexp(self.log_b, k)


def slice_logsumexp(log_b, k):
    """``ln p_k(exp(log_b))`` by a per-slice log-sum-exp."""
    axes = tuple(j for j in range(log_b.ndim) if j != k)
    top = log_b.max(axis=axes, keepdims=True)
    with np.errstate(divide="ignore"):
        out = np.log(np.exp(log_b - top).sum(axis=axes, keepdims=True)) + top
    return out.reshape(-1)


def _check_dual(problem, U):
    U = np.asarray(U, dtype=np.float64)
    if U.shape != (problem.m, problem.n):
        raise ArgumentError(f"dual point must have shape {(problem.m, problem.n)}, got {U.shape}")
    if not np.all(np.isfinite(U)):
        raise ArgumentError("dual point has non-finite entries")
    return U


def kernel_from_log(log_b):
    shift, mant = _kernels.exp_marginals(log_b)
    total = mant[-1].sum()
    log_sigma = shift + np.log(total)
    if not (np.isfinite(shift) and np.isfinite(log_sigma) and total > 0):
        raise NumericalFailure(
            f"kernel evaluation failed: exponent range [{log_b.min():g}, {log_b.max():g}]"
        )
    return KernelEvaluation(log_b, shift, mant, float(log_sigma))


def eval_kernel(problem, U):
    gamma = problem._require_gamma()
    U = _check_dual(problem, U)
    log_b = _kernels.log_kernel(problem.cost / gamma, U)
    return kernel_from_log(log_b)


def dual_value(problem, U, kernel=None):
    gamma = problem._require_gamma()
    U = _check_dual(problem, U)
    if kernel is None:
        kernel = eval_kernel(problem, U)
    return gamma * (kernel.log_sigma - float(np.sum(U * problem.marginals)))


def dual_gradient(problem, U, kernel=None):
    gamma = problem._require_gamma()
    if kernel is None:
        kernel = eval_kernel(problem, U)
    return gamma * (kernel.normalized_marginals() - problem.marginals)


def block_minimize(problem, U, k, kernel=None):
    """Exact minimization of phi over block k: ``u_k += ln p_k - ln p_k(B(U))``."""
    U = _check_dual(problem, U)
    if not 0 <= k < problem.m:
        raise ArgumentError(f"block index {k} out of range")
    pk = problem.marginals[k]
    if np.any(pk <= 0):
        raise NumericalFailure(f"marginal {k} has a zero entry; block minimization is undefined")
    if kernel is None:
        kernel = eval_kernel(problem, U)
    log_pb = kernel.log_marginal(k)
    if not np.all(np.isfinite(log_pb)):
        raise NumericalFailure(f"marginal {k} of B(U) vanished; cannot take its logarithm")
    out = U.copy()
    out[k] = U[k] + np.log(pk) - log_pb
    return out


def reconstruct_primal(problem, U, kernel=None):
    """``X(U) = B(U) / Sigma(U)``."""
    if kernel is None:
        kernel = eval_kernel(problem, U)
    return _kernels.exp_shifted(kernel.log_b, kernel.log_sigma)


def primal_value(problem, X):
    """``F(X) = <C, X> - gamma H(X)``."""
    gamma = problem._require_gamma()
    X = np.asarray(X, dtype=np.float64)
    if np.any(X < 0):
        raise ArgumentError("primal point has negative entries")
    return inner(problem.cost, X) - gamma * entropy(X)


class DualLine:
    """phi restricted to the segment ``eta + beta (zeta - eta)``.

    ``log B`` is affine in beta, so after one O(n^m) setup each evaluation is a
    single log-sum-exp pass.
    """

    def __init__(self, problem, eta, zeta, base=None):
        gamma = problem._require_gamma()
        self.gamma = gamma
        self.eta = _check_dual(problem, eta)
        self.zeta = _check_dual(problem, zeta)
        step = self.zeta - self.eta
        self.step = step
        self.base = _kernels.log_kernel(problem.cost / gamma, self.eta) if base is None else base
        self.direction = _kernels.log_kernel(np.zeros_like(problem.cost), step)
        self.lin0 = float(np.sum(self.eta * problem.marginals))
        self.lin1 = float(np.sum(step * problem.marginals))

    def __call__(self, beta):
        lse = _kernels.lse_line(self.base, self.direction, beta)
        value = self.gamma * (lse - self.lin0 - beta * self.lin1)
        if not np.isfinite(value):
            raise NumericalFailure(f"dual value is not finite at beta={beta!r}")
        return value

    def point(self, beta):
        return self.eta + beta * self.step
