"""Hot loops over the dense n**m tensor.

Each kernel exists twice, as a numba ``@njit`` function and as a plain numpy
function with the same signature. The numba set is used when numba imports
and ``MMOT_DISABLE_NUMBA`` is unset (or ``0``); ``set_backend`` switches at
runtime, mostly for tests and the benchmark.

All tensors are C-contiguous float64 arrays of shape ``(n,) * m``; the numba
versions walk them flat with an odometer over the m mode indices.

Exponents below ``EXP_FLOOR`` are treated as exact zeros.  Besides being
correct to double precision (the summands are shifted so the largest is 1),
this keeps both backends off the slow subnormal path, which is hit by most
entries once ``C / gamma`` is in the thousands.
"""

import os

import numpy as np

try:
    import numba
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba = None

EXP_FLOOR = -708.0

__all__ = [
    "BACKEND",
    "EXP_FLOOR",
    "set_backend",
    "log_kernel",
    "exp_marginals",
    "lse_line",
    "primal_stats",
    "exp_shifted",
]


def _env_disabled():
    return os.environ.get("MMOT_DISABLE_NUMBA", "").strip().lower() not in ("", "0", "false", "no")


# numpy --------------------------------------------------------------------


def _mode_view(vec, k, m):
    shape = [1] * m
    shape[k] = vec.shape[0]
    return vec.reshape(shape)


def _marginals_np(A):
    m = A.ndim
    out = np.empty((m, A.shape[0]))
    for k in range(m):
        out[k] = A.sum(axis=tuple(j for j in range(m) if j != k))
    return out


def log_kernel_np(scaled_cost, U):
    out = -scaled_cost
    m = U.shape[0]
    for k in range(m):
        out = out + _mode_view(U[k], k, m)
    return np.ascontiguousarray(out)


def exp_shifted_np(log_b, shift):
    z = log_b - shift
    out = np.zeros_like(z)
    np.exp(z, out=out, where=z > EXP_FLOOR)
    return out


def exp_marginals_np(log_b):
    shift = float(log_b.max())
    return shift, _marginals_np(exp_shifted_np(log_b, shift))


def lse_line_np(base, direction, beta):
    z = base + beta * direction
    top = float(z.max())
    return float(top + np.log(exp_shifted_np(z, top).sum()))


def primal_stats_np(cost, X):
    inner = float(np.vdot(cost, X))
    pos = X > 0
    xlogx = float(np.sum(X[pos] * np.log(X[pos])))
    return inner, xlogx, _marginals_np(X)


# numba --------------------------------------------------------------------

if numba is not None:

    # Loops run over rows of the last (contiguous) mode; the odometer only walks
    # the leading m - 1 indices, so inner loops are plain strided-by-one passes.
    _FM = {"reassoc", "contract"}

    @numba.njit(cache=True)
    def _advance(idx, n):
        k = idx.shape[0] - 1
        while k >= 0:
            idx[k] += 1
            if idx[k] < n:
                return
            idx[k] = 0
            k -= 1

    # exp by Cody-Waite range reduction, z = k ln2 + r with |r| <= ln2 / 2, and a
    # degree-12 Taylor polynomial (about 1.5 ulp).  Written as straight-line
    # arithmetic so LLVM vectorizes it; libm's scalar exp is several times slower.
    _LOG2E = 1.4426950408889634
    _LN2_HI = 6.93147180369123816490e-01
    _LN2_LO = 1.90821492927058770002e-10

    @numba.njit(cache=True, fastmath=_FM)
    def _vexp_inplace(buf, bits):
        """``buf[i] <- exp(buf[i])`` for ``buf[i] > EXP_FLOOR``, else 0; returns the sum."""
        for f in range(buf.shape[0]):
            z = buf[f]
            x = min(max(z, EXP_FLOOR), 709.0)
            k = np.floor(x * _LOG2E + 0.5)
            r = (x - k * _LN2_HI) - k * _LN2_LO
            p = 1.0 / 479001600.0
            p = p * r + 1.0 / 39916800.0
            p = p * r + 1.0 / 3628800.0
            p = p * r + 1.0 / 362880.0
            p = p * r + 1.0 / 40320.0
            p = p * r + 1.0 / 5040.0
            p = p * r + 1.0 / 720.0
            p = p * r + 1.0 / 120.0
            p = p * r + 1.0 / 24.0
            p = p * r + 1.0 / 6.0
            p = p * r + 0.5
            p = p * r + 1.0
            p = p * r + 1.0
            buf[f] = p * (z > EXP_FLOOR)
            bits[f] = (np.int64(k) + 1023) << 52
        scale = bits.view(np.float64)
        total = 0.0
        for f in range(buf.shape[0]):
            buf[f] *= scale[f]
            total += buf[f]
        return total

    @numba.njit(cache=True, fastmath=_FM)
    def _shifted_exp(src, shift):
        buf = np.empty_like(src)
        for f in range(src.shape[0]):
            buf[f] = src[f] - shift
        _vexp_inplace(buf, np.empty(src.shape[0], np.int64))
        return buf

    @numba.njit(cache=True, fastmath=_FM)
    def _log_kernel_nb(negc, U, out):
        m, n = U.shape
        last = U[m - 1]
        idx = np.zeros(m - 1, np.int64)
        for r in range(negc.shape[0] // n):
            part = 0.0
            for k in range(m - 1):
                part += U[k, idx[k]]
            o = r * n
            for j in range(n):
                out[o + j] = negc[o + j] + part + last[j]
            _advance(idx, n)

    @numba.njit(cache=True, fastmath=_FM)
    def _max_nb(a):
        top = -np.inf
        for f in range(a.shape[0]):
            top = max(top, a[f])
        return top

    @numba.njit(cache=True, fastmath=_FM)
    def _exp_marginals_nb(logb, m, n):
        top = _max_nb(logb)
        e = _shifted_exp(logb, top)
        mant = np.zeros((m, n))
        lastrow = mant[m - 1]
        idx = np.zeros(m - 1, np.int64)
        for r in range(e.shape[0] // n):
            o = r * n
            s = 0.0
            for j in range(n):
                lastrow[j] += e[o + j]
                s += e[o + j]
            for k in range(m - 1):
                mant[k, idx[k]] += s
            _advance(idx, n)
        return top, mant

    @numba.njit(cache=True, fastmath=_FM)
    def _exp_shifted_nb(logb, shift, out):
        for f in range(logb.shape[0]):
            out[f] = logb[f] - shift
        _vexp_inplace(out, np.empty(out.shape[0], np.int64))

    @numba.njit(cache=True, fastmath=_FM)
    def _lse_line_nb(base, direction, beta):
        z = np.empty_like(base)
        top = -np.inf
        for f in range(base.shape[0]):
            z[f] = base[f] + beta * direction[f]
            top = max(top, z[f])
        for f in range(base.shape[0]):
            z[f] -= top
        return top + np.log(_vexp_inplace(z, np.empty(z.shape[0], np.int64)))

    @numba.njit(cache=True, fastmath=_FM)
    def _primal_stats_nb(cost, X, m, n):
        inner = 0.0
        xlogx = 0.0
        marg = np.zeros((m, n))
        lastrow = marg[m - 1]
        idx = np.zeros(m - 1, np.int64)
        for r in range(X.shape[0] // n):
            o = r * n
            s = 0.0
            for j in range(n):
                x = X[o + j]
                inner += cost[o + j] * x
                xlogx += x * np.log(max(x, 1e-300)) * (x > 0.0)
                lastrow[j] += x
                s += x
            for k in range(m - 1):
                marg[k, idx[k]] += s
            _advance(idx, n)
        return inner, xlogx, marg

    def log_kernel_nb(scaled_cost, U):
        negc = -np.ascontiguousarray(scaled_cost).ravel()
        out = np.empty_like(negc)
        _log_kernel_nb(negc, np.ascontiguousarray(U, dtype=np.float64), out)
        return out.reshape(scaled_cost.shape)

    def exp_marginals_nb(log_b):
        m, n = log_b.ndim, log_b.shape[0]
        top, mant = _exp_marginals_nb(np.ascontiguousarray(log_b).ravel(), m, n)
        return float(top), mant

    def exp_shifted_nb(log_b, shift):
        out = np.empty(log_b.size)
        _exp_shifted_nb(np.ascontiguousarray(log_b).ravel(), float(shift), out)
        return out.reshape(log_b.shape)

    def lse_line_nb(base, direction, beta):
        return float(_lse_line_nb(base.ravel(), direction.ravel(), float(beta)))

    def primal_stats_nb(cost, X):
        m, n = X.ndim, X.shape[0]
        inner, xlogx, marg = _primal_stats_nb(
            np.ascontiguousarray(cost).ravel(), np.ascontiguousarray(X).ravel(), m, n
        )
        return float(inner), float(xlogx), marg


_NUMPY = {
    "log_kernel": log_kernel_np,
    "exp_marginals": exp_marginals_np,
    "lse_line": lse_line_np,
    "primal_stats": primal_stats_np,
    "exp_shifted": exp_shifted_np,
}
_NUMBA = (
    {
        "log_kernel": log_kernel_nb,
        "exp_marginals": exp_marginals_nb,
        "lse_line": lse_line_nb,
        "primal_stats": primal_stats_nb,
        "exp_shifted": exp_shifted_nb,
    }
    if numba is not None
    else None
)

BACKEND = "numpy"
log_kernel = exp_marginals = lse_line = primal_stats = exp_shifted = None


def set_backend(name):
    """Select ``"numba"`` or ``"numpy"`` kernels for the whole package."""
    global BACKEND, log_kernel, exp_marginals, lse_line, primal_stats, exp_shifted
    if name == "numba":
        if _NUMBA is None:
            raise RuntimeError("numba is not installed")
        table = _NUMBA
    elif name == "numpy":
        table = _NUMPY
    else:
        raise ValueError(f"unknown backend {name!r}")
    BACKEND = name
    log_kernel = table["log_kernel"]
    exp_marginals = table["exp_marginals"]
    lse_line = table["lse_line"]
    primal_stats = table["primal_stats"]
    exp_shifted = table["exp_shifted"]


def kernels(name):
    """Return the kernel table for one backend without switching globally."""
    if name == "numba":
        if _NUMBA is None:
            raise RuntimeError("numba is not installed")
        return dict(_NUMBA)
    return dict(_NUMPY)


set_backend("numba" if numba is not None and not _env_disabled() else "numpy")
