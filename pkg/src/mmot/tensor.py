"""Dense order-m tensors and their marginal / inner-product / entropy primitives.

Tensors are C-ordered float64 ndarrays of shape ``(n,) * m``, so multi-index
``(i_1, ..., i_m)`` is stored row-major with ``i_1`` slowest.
"""

from dataclasses import dataclass

import numpy as np

from .errors import ArgumentError, ScaleCapExceeded

DEFAULT_ELEMENT_CAP = 2**31


@dataclass(frozen=True)
class TensorShape:
    m: int
    n: int
    cap: int = DEFAULT_ELEMENT_CAP

    def __post_init__(self):
        if int(self.m) != self.m or self.m < 2:
            raise ArgumentError(f"m must be an integer >= 2, got {self.m!r}")
        if int(self.n) != self.n or self.n < 1:
            raise ArgumentError(f"n must be a positive integer, got {self.n!r}")
        if self.n**self.m > self.cap:
            raise ScaleCapExceeded(f"n**m = {self.n}**{self.m} exceeds the element cap {self.cap}")

    @property
    def size(self):
        return self.n**self.m

    @property
    def dims(self):
        return (self.n,) * self.m

    @classmethod
    def of(cls, A):
        A = np.asarray(A)
        if A.ndim < 2 or len(set(A.shape)) != 1:
            raise ArgumentError(f"expected an n x ... x n tensor, got shape {A.shape}")
        return cls(A.ndim, A.shape[0])


def as_tensor(data, shape=None):
    """Validate ``data`` as a dense tensor; a flat array is reshaped by ``shape``."""
    A = np.ascontiguousarray(data, dtype=np.float64)
    if shape is not None:
        if A.size != shape.size:
            raise ArgumentError(f"data has {A.size} entries, expected n**m = {shape.size}")
        return A.reshape(shape.dims)
    TensorShape.of(A)
    return A


def marginal(A, k):
    """Sum of ``A`` over every mode except ``k`` (0-based)."""
    A = np.asarray(A)
    if not 0 <= k < A.ndim:
        raise ArgumentError(f"mode index {k} out of range for an order-{A.ndim} tensor")
    return A.sum(axis=tuple(j for j in range(A.ndim) if j != k))


def all_marginals(A):
    """All m marginals as an ``(m, n)`` array; row k equals ``marginal(A, k)``."""
    A = np.asarray(A)
    return np.stack([marginal(A, k) for k in range(A.ndim)])


def inner(A, B):
    A = np.asarray(A)
    B = np.asarray(B)
    if A.shape != B.shape:
        raise ArgumentError(f"shape mismatch: {A.shape} vs {B.shape}")
    return float(np.sum(A * B))


def norm1(A):
    return float(np.abs(A).sum())


def norm_inf(A):
    return float(np.abs(A).max())


def entropy(X):
    """``-sum X log X`` with ``0 log 0 = 0``."""
    X = np.asarray(X)
    if np.any(X < 0):
        raise ArgumentError("entropy is undefined for negative entries")
    pos = X[X > 0]
    return float(-np.sum(pos * np.log(pos)))
