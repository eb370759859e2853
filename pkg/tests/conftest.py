import itertools
import math

import numpy as np
import pytest

from mmot import Problem, _kernels


def random_problem(rng, m, n, gamma=None, cost_scale=1.0, floor=0.0):
    cost = rng.random((n,) * m) * cost_scale
    p = rng.random((m, n)) + floor
    p /= p.sum(axis=1, keepdims=True)
    return Problem(cost, p, gamma)


def brute_marginal(A, k):
    """Triple-loop style marginal over explicit multi-indices."""
    n, m = A.shape[0], A.ndim
    out = [0.0] * n
    for idx in itertools.product(range(n), repeat=m):
        out[idx[k]] += float(A[idx])
    return np.array(out)


def direct_log_sigma(problem, U):
    """ln Sigma(U) by exact summation with math.fsum over a shifted exponent list."""
    n, m = problem.n, problem.m
    exps = []
    for idx in itertools.product(range(n), repeat=m):
        exps.append(sum(U[k, idx[k]] for k in range(m)) - problem.cost[idx] / problem.gamma)
    top = max(exps)
    return top + math.log(math.fsum(math.exp(e - top) for e in exps))


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture(params=["numba", "numpy"])
def backend(request):
    before = _kernels.BACKEND
    _kernels.set_backend(request.param)
    yield request.param
    _kernels.set_backend(before)
