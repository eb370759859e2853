"""Reference solvers: greedy multimarginal Sinkhorn and an exact LP oracle.

``sinkhorn_solve`` is the non-accelerated counterpart of PD-AAM on the same
dual: each iteration exactly minimizes the block whose normalized marginal
has the largest l1 violation.  ``lp_solve`` is a dense two-phase primal
simplex (Bland's rule) for instances small enough to write the LP out.
"""

import time
from dataclasses import dataclass

import numpy as np

from .dual import (
    block_minimize,
    dual_value,
    eval_kernel,
    reconstruct_primal,
    zeros_dual,
)
from .errors import ArgumentError, ScaleCapExceeded
from .pdaam import IterationRecord, SolveReport, primal_gap_terms
from .tensor import inner

ORACLE_CAP = 10**4
LP_TOL = 1e-9


def sinkhorn_block(normalized, targets):
    """Block with the largest l1 marginal violation (first on ties)."""
    return int(np.argmax(np.abs(normalized - targets).sum(axis=1)))


def sinkhorn_solve(problem, stopping):
    """Greedy block-coordinate minimization of the dual, same stopping rule as PD-AAM.

    Returns ``(X(U), U, report)``.
    """
    if problem.gamma is None:
        raise ArgumentError("sinkhorn_solve needs gamma")
    if np.any(problem.marginals <= 0):
        raise ArgumentError("marginals must be strictly positive; smooth them first")
    report = SolveReport("sinkhorn")
    start = time.perf_counter()
    U = zeros_dual(problem)
    t, block = 0, -1
    while True:
        kern = eval_kernel(problem, U)
        phi = dual_value(problem, U, kern)
        X = reconstruct_primal(problem, U, kern)
        gap, viol1, viol2 = primal_gap_terms(problem, X, phi)
        crit = 2.0 * viol1 + gap
        report.trace.append(
            IterationRecord(t, phi, gap, viol1, crit, block, time.perf_counter() - start, viol2)
        )
        if crit <= stopping.tol:
            report.status = "converged"
            break
        if t >= stopping.max_iter:
            report.status = "incomplete"
            break
        block = sinkhorn_block(kern.normalized_marginals(), problem.marginals)
        U = block_minimize(problem, U, block, kern)
        t += 1
    report.wall_time = time.perf_counter() - start
    report.iterations = t
    report.final_phi, report.final_gap, report.final_violation = phi, gap, viol1
    return X, U, report


def finite_diff_gradient(problem, U, h=1e-6):
    """Central differences of ``dual_value`` per coordinate."""
    if not h > 0:
        raise ArgumentError("step h must be positive")
    U = np.asarray(U, dtype=np.float64)
    out = np.empty_like(U)
    for k in range(U.shape[0]):
        for j in range(U.shape[1]):
            up, dn = U.copy(), U.copy()
            up[k, j] += h
            dn[k, j] -= h
            out[k, j] = (dual_value(problem, up) - dual_value(problem, dn)) / (2 * h)
    return out


@dataclass(frozen=True, eq=False)
class LPSolution:
    optimal_value: float
    plan: np.ndarray
    status: str
    pivots: int = 0


def marginal_constraints(m, n, drop_redundant=True):
    """Equality rows ``p_k(X)[j] = p_k[j]`` over the flattened tensor.

    Returns ``(A, rows)`` with ``rows`` the kept ``(k, j)`` pairs.  With
    ``drop_redundant`` the last row of each block after the first is removed,
    since all blocks share the total mass.
    """
    idx = np.indices((n,) * m).reshape(m, -1)
    rows = [(k, j) for k in range(m) for j in range(n)
            if not (drop_redundant and k > 0 and j == n - 1)]
    A = np.zeros((len(rows), n**m))
    for r, (k, j) in enumerate(rows):
        A[r] = idx[k] == j
    return A, rows


def _pivot(T, i, j):
    T[i] /= T[i, j]
    col = T[:, j].copy()
    col[i] = 0.0
    T -= np.outer(col, T[i])


def _bland(T, basis, ncols, max_pivots, tol):
    """Minimize with reduced costs in ``T[-1, :ncols]``; returns (status, pivots)."""
    for it in range(max_pivots):
        rc = T[-1, :ncols]
        enter = np.flatnonzero(rc < -tol)
        if enter.size == 0:
            return "optimal", it
        j = int(enter[0])
        col = T[:-1, j]
        pos = col > tol
        if not pos.any():
            return "unbounded", it
        ratios = np.full(col.shape, np.inf)
        ratios[pos] = T[:-1, -1][pos] / col[pos]
        best = ratios.min()
        ties = np.flatnonzero(ratios <= best + 1e-12)
        i = int(ties[np.argmin(basis[ties])])
        _pivot(T, i, j)
        basis[i] = j
    return "iteration-limit", max_pivots


def lp_solve(problem, max_pivots=100_000, tol=LP_TOL):
    """Exact optimum of ``min <C, X>`` over the multimarginal transport polytope."""
    m, n = problem.m, problem.n
    N = n**m
    if N > ORACLE_CAP:
        raise ScaleCapExceeded(f"LP oracle is limited to n**m <= {ORACLE_CAP}, got {N}")
    A, rows = marginal_constraints(m, n)
    b = np.array([problem.marginals[k, j] for k, j in rows])
    c = problem.cost.reshape(-1)
    r = A.shape[0]

    # phase 1: artificial basis, minimize the sum of artificials
    T = np.zeros((r + 1, N + r + 1))
    T[:r, :N] = A
    T[:r, N:N + r] = np.eye(r)
    T[:r, -1] = b
    T[-1, :N] = -A.sum(axis=0)
    T[-1, -1] = -b.sum()
    basis = np.arange(N, N + r)
    status, piv1 = _bland(T, basis, N + r, max_pivots, tol)
    if status == "iteration-limit":
        return LPSolution(np.nan, np.zeros(problem.shape.dims), status, piv1)
    if -T[-1, -1] > tol:
        return LPSolution(np.nan, np.zeros(problem.shape.dims), "infeasible", piv1)

    # drive degenerate artificials out of the basis; drop rows that cannot be pivoted
    keep = []
    for i in range(r):
        if basis[i] >= N:
            cand = np.flatnonzero(np.abs(T[i, :N]) > tol)
            if cand.size == 0:
                continue
            _pivot(T, i, int(cand[0]))
            basis[i] = cand[0]
        keep.append(i)
    T = np.vstack([T[keep][:, list(range(N)) + [N + r]], np.zeros((1, N + 1))])
    basis = basis[keep]

    # phase 2
    cb = c[basis]
    T[-1, :N] = c - cb @ T[:-1, :N]
    T[-1, -1] = -cb @ T[:-1, -1]
    status, piv2 = _bland(T, basis, N, max_pivots - piv1, tol)
    x = np.zeros(N)
    x[basis] = np.maximum(T[:-1, -1], 0.0)
    plan = x.reshape(problem.shape.dims)
    if status != "optimal":
        status = "iteration-limit"
    return LPSolution(inner(problem.cost, plan), plan, status, piv1 + piv2)
