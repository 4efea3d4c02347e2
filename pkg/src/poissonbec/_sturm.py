"""Compiled kernels for symmetric tridiagonal matrices.

The matrix has diagonal ``d`` (length n) and off-diagonal ``e`` (length
n-1). A zero entry in ``e`` decouples the matrix into independent blocks,
which is how Neumann cuts are represented.
"""

import numpy as np
from numba import njit

_MAX_ITER = 200


@njit(cache=True, nogil=True)
def count_below(d, e2, x, pivmin):
    """Number of eigenvalues strictly less than ``x`` (Sylvester inertia).

    ``e2`` holds the squared off-diagonal. Pivots smaller than ``pivmin`` in
    magnitude are replaced by ``-pivmin``, as in LAPACK's dstebz.
    """
    n = d.shape[0]
    count = 0
    q = d[0] - x
    if abs(q) < pivmin:
        q = -pivmin
    if q < 0.0:
        count += 1
    for i in range(1, n):
        q = d[i] - x - e2[i - 1] / q
        if abs(q) < pivmin:
            q = -pivmin
        if q < 0.0:
            count += 1
    return count


@njit(cache=True, nogil=True)
def gershgorin(d, e):
    n = d.shape[0]
    lo = np.inf
    hi = -np.inf
    for i in range(n):
        r = 0.0
        if i > 0:
            r += abs(e[i - 1])
        if i < n - 1:
            r += abs(e[i])
        lo = min(lo, d[i] - r)
        hi = max(hi, d[i] + r)
    return lo, hi


@njit(cache=True, nogil=True)
def smallest_eigenvalues(d, e, k, tol):
    """Bisection brackets for the ``k`` smallest eigenvalues.

    Returns ``(lo, hi, status)``. Each count tightens every bracket it
    informs, so work is shared across eigenvalues. ``status`` is -1 on
    success, otherwise the index of the first eigenvalue whose bracket could
    not be shrunk to ``tol`` (iteration cap or floating-point exhaustion).
    """
    n = d.shape[0]
    e2 = np.empty(max(n - 1, 0))
    emax = 0.0
    for i in range(n - 1):
        e2[i] = e[i] * e[i]
        emax = max(emax, e2[i])
    g_lo, g_hi = gershgorin(d, e)
    scale = max(abs(g_lo), abs(g_hi), 1.0)
    pivmin = 2.2250738585072014e-308 * max(1.0, emax) * 4.0
    pad = 2.0 * 2.220446049250313e-16 * scale * n + 2.0 * pivmin
    g_lo -= pad
    g_hi += pad
    lo = np.full(k, g_lo)
    hi = np.full(k, g_hi)
    for m in range(k):
        if m > 0 and lo[m] < lo[m - 1]:
            lo[m] = lo[m - 1]
        it = 0
        while hi[m] - lo[m] > tol:
            mid = 0.5 * (lo[m] + hi[m])
            if mid <= lo[m] or mid >= hi[m] or it >= _MAX_ITER:
                return lo, hi, m
            c = count_below(d, e2, mid, pivmin)
            # c eigenvalues lie below mid: brackets m' < c get hi <= mid
            for j in range(m, k):
                if j < c:
                    if mid < hi[j]:
                        hi[j] = mid
                else:
                    if mid > lo[j]:
                        lo[j] = mid
            it += 1
    return lo, hi, -1


@njit(cache=True, nogil=True)
def count_below_many(d, e, xs):
    """Eigenvalue counts below each entry of ``xs``."""
    n = d.shape[0]
    e2 = np.empty(max(n - 1, 0))
    emax = 0.0
    for i in range(n - 1):
        e2[i] = e[i] * e[i]
        emax = max(emax, e2[i])
    pivmin = 2.2250738585072014e-308 * max(1.0, emax) * 4.0
    out = np.empty(xs.shape[0], dtype=np.int64)
    for i in range(xs.shape[0]):
        out[i] = count_below(d, e2, xs[i], pivmin)
    return out
