"""Tridiagonal (Thomas) solver."""
from __future__ import annotations

import numpy as np
from numba import njit

__all__ = ["thomas_solve", "ZeroPivotError"]


class ZeroPivotError(ArithmeticError):
    pass


def thomas_solve(lower, diag, upper, rhs) -> np.ndarray:
    """Solve ``A x = rhs`` for tridiagonal ``A``.

    Parameters
    ----------
    lower : array, length n-1
        Sub-diagonal, ``lower[i] = A[i+1, i]``.
    diag : array, length n
        Main diagonal.
    upper : array, length n-1
        Super-diagonal, ``upper[i] = A[i, i+1]``.
    rhs : array, length n

    No pivoting is done; the system is expected to be diagonally dominant
    (row- or column-wise), which every caller in this package guarantees.
    """
    diag = np.ascontiguousarray(diag, dtype=np.float64)
    rhs = np.ascontiguousarray(rhs, dtype=np.float64)
    n = diag.shape[0]
    if rhs.shape != (n,):
        raise ValueError("rhs must have the same length as diag")
    if n == 0:
        return np.empty(0)
    lower = np.ascontiguousarray(lower, dtype=np.float64)
    upper = np.ascontiguousarray(upper, dtype=np.float64)
    if lower.shape != (n - 1,) or upper.shape != (n - 1,):
        raise ValueError("lower and upper must have length len(diag) - 1")
    x = np.empty(n)
    if not _thomas(lower, diag, upper, rhs, x):
        raise ZeroPivotError("zero pivot in tridiagonal elimination")
    return x


@njit(cache=True, nogil=True)
def _thomas(a, b, c, d, x):
    n = b.shape[0]
    cp = np.empty(n)
    dp = np.empty(n)
    if b[0] == 0.0:
        return False
    cp[0] = c[0] / b[0] if n > 1 else 0.0
    dp[0] = d[0] / b[0]
    for i in range(1, n):
        denom = b[i] - a[i - 1] * cp[i - 1]
        if denom == 0.0:
            return False
        if i < n - 1:
            cp[i] = c[i] / denom
        dp[i] = (d[i] - a[i - 1] * dp[i - 1]) / denom
    x[n - 1] = dp[n - 1]
    for i in range(n - 2, -1, -1):
        x[i] = dp[i] - cp[i] * x[i + 1]
    return True
