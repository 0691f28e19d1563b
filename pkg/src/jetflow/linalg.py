"""Small dense solves used at every evaluation point."""

from __future__ import annotations

import numpy as np
import scipy.linalg as sla

PIVOT_TOL = 1e-12


class FactorError(np.linalg.LinAlgError):
    pass


_potrf, _potrs = sla.lapack.get_lapack_funcs(("potrf", "potrs"), (np.zeros(1),))
_last_factor: list = [None, None]


def cholesky(a: np.ndarray) -> np.ndarray:
    """Lower Cholesky factor; FactorError when ``a`` is not positive definite.

    The strict upper triangle of the result is not zeroed; use it only
    through ``cho_solve``.  The last factorisation is memoised, since the
    same metric is typically factored more than once per evaluation point.
    """
    a = np.asarray(a, dtype=float)
    key = a.tobytes()
    if key == _last_factor[0]:
        return _last_factor[1]
    c, info = _potrf(a, lower=1, clean=0)
    if info != 0:
        raise FactorError(f"matrix not positive definite (lapack info {info})")
    if c.diagonal().min() <= PIVOT_TOL:
        raise FactorError("Cholesky pivot below threshold")
    _last_factor[0], _last_factor[1] = key, c
    return c


def cho_solve(c: np.ndarray, b: np.ndarray) -> np.ndarray:
    x, info = _potrs(c, b, lower=1)
    if info != 0:
        raise FactorError(f"potrs failed (lapack info {info})")
    return x


def lu_solve(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """LU with partial pivoting; FactorError on a pivot below ``PIVOT_TOL``."""
    lu, piv = sla.lu_factor(a, check_finite=False)
    if np.min(np.abs(np.diag(lu))) <= PIVOT_TOL:
        raise FactorError("LU pivot below threshold")
    return sla.lu_solve((lu, piv), b, check_finite=False)


def solve(a: np.ndarray, b: np.ndarray, spd: bool) -> np.ndarray:
    if spd:
        return cho_solve(cholesky(a), b)
    return lu_solve(a, b)


def is_positive_definite(a: np.ndarray) -> bool:
    try:
        cholesky(a)
    except FactorError:
        return False
    return True


def numerical_rank(a: np.ndarray, rtol: float = 1e-10) -> int:
    """Rank from column-pivoted QR, counting pivots above ``rtol * max|a|``."""
    a = np.atleast_2d(np.asarray(a, dtype=float))
    if a.size == 0:
        return 0
    scale = np.max(np.abs(a))
    if scale == 0.0:
        return 0
    if a.shape[0] == 1:
        return 1
    r = sla.qr(a, mode="r", pivoting=True, check_finite=False)[0]
    d = np.abs(np.diag(r))
    return int(np.sum(d > rtol * scale))


def kernel_basis(a: np.ndarray, m: int, rtol: float = 1e-10) -> np.ndarray:
    """Orthonormal (Euclidean) basis of ker a as columns, shape (m, m - rank)."""
    a = np.asarray(a, dtype=float).reshape(-1, m)
    if a.shape[0] == 0:
        return np.eye(m)
    u, s, vt = np.linalg.svd(a)
    scale = s[0] if s.size else 0.0
    rank = int(np.sum(s > rtol * max(scale, 1e-300))) if scale > 0 else 0
    return vt[rank:].T.copy()


def small_cho_solve(a: list[list[float]], rhs: list[list[float]]) -> list[list[float]]:
    """Solve a x = b for each b in ``rhs`` with a plain-float Cholesky.

    For the 1x1 to 6x6 systems met inside an integrator stage, Python floats
    beat numpy call overhead by a wide margin.  The pivot test matches
    ``cholesky``.
    """
    n = len(a)
    L = [[0.0] * n for _ in range(n)]
    for i in range(n):
        Li, ai = L[i], a[i]
        for j in range(i + 1):
            Lj = L[j]
            s = ai[j]
            for k in range(j):
                s -= Li[k] * Lj[k]
            if i == j:
                if not s > PIVOT_TOL * PIVOT_TOL:
                    raise FactorError("Cholesky pivot below threshold")
                Li[i] = s ** 0.5
            else:
                Li[j] = s / Lj[j]
    out = []
    for b in rhs:
        y = [0.0] * n
        for i in range(n):
            s = b[i]
            Li = L[i]
            for k in range(i):
                s -= Li[k] * y[k]
            y[i] = s / Li[i]
        x = [0.0] * n
        for i in range(n - 1, -1, -1):
            s = y[i]
            for k in range(i + 1, n):
                s -= L[k][i] * x[k]
            x[i] = s / L[i][i]
        out.append(x)
    return out
