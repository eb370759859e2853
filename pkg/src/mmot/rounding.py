"""Rounding of an approximate coupling onto the exact transport polytope.

Each mode is scaled down so no marginal exceeds its target, then the missing
mass is added back as a rank-one tensor built from the per-mode deficits.
The l1 change is at most twice the total input marginal violation.
"""

from dataclasses import dataclass
from functools import reduce

import numpy as np

from .errors import ArgumentError
from .tensor import all_marginals, marginal


@dataclass(frozen=True)
class RoundingReport:
    input_violation: np.ndarray
    l1_change: float
    bound: float
    clamped: float = 0.0

    @property
    def within_bound(self):
        return self.l1_change <= self.bound + 1e-9


def mode_scale(V, r, d):
    """Scale mode ``r`` of ``V`` entrywise: ``out[I] = V[I] * d[i_r]``."""
    V = np.asarray(V, dtype=np.float64)
    d = np.asarray(d, dtype=np.float64)
    if np.any(d < 0):
        raise ArgumentError("scaling vector must be nonnegative")
    shape = [1] * V.ndim
    shape[r] = V.shape[r]
    return V * d.reshape(shape)


def _scaling(target, current):
    # min(target / current, 1), with 0/0 -> 1
    out = np.ones_like(target)
    pos = current > 0
    out[pos] = np.minimum(target[pos] / current[pos], 1.0)
    return out


def round_to_polytope(V, targets):
    """Return ``(V_hat, report)`` with every marginal of ``V_hat`` equal to ``targets``."""
    V = np.asarray(V, dtype=np.float64)
    targets = np.asarray(targets, dtype=np.float64)
    m, n = V.ndim, V.shape[0]
    if targets.shape != (m, n):
        raise ArgumentError(f"targets must have shape {(m, n)}, got {targets.shape}")
    if np.any(V < 0):
        raise ArgumentError("input tensor has negative entries")
    mass = V.sum()
    if abs(mass - 1.0) > 1e-6:
        raise ArgumentError(f"input tensor mass {mass!r} deviates from 1 by more than 1e-6")
    if np.any(targets < 0) or np.any(np.abs(targets.sum(axis=1) - 1.0) > 1e-9):
        raise ArgumentError("targets must lie on the simplex")

    violation = np.abs(all_marginals(V) - targets).sum(axis=1)
    W = V
    for r in range(m):
        x = _scaling(targets[r], marginal(W, r))
        if np.any(x != 1.0):
            W = mode_scale(W, r, x)
    err = targets - all_marginals(W)
    err_mass = float(np.abs(err[-1]).sum())
    if err_mass > 0:
        corr = reduce(np.multiply.outer, err)
        out = W + corr / err_mass ** (m - 1)
    else:
        out = W.copy() if W is V else W

    clamped = 0.0
    if out.min() < 0:
        clamped = float(-out[out < 0].sum())
        out = np.maximum(out, 0.0)
    l1 = float(np.abs(V - out).sum())
    return out, RoundingReport(violation, l1, 2.0 * float(violation.sum()), clamped)
