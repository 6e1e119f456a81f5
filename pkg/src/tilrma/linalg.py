"""Small dense complex-matrix kernels used once per frequency bin.

All routines target tiny systems (dimension <= 8, one per frequency bin),
so a plain LU factorization with partial pivoting beats anything blocked:
it is deterministic, allocation-light, and trivially auditable.
"""

import numpy as np

from .errors import SingularMatrixError

MAX_DIM = 8

# Pivot magnitudes below this are treated as exact singularity.  Recovery
# (e.g. ridge loading) is the caller's decision, not the kernel's.
PIVOT_MIN = 1e-300


def _lu_factor(mat):
    """LU with partial pivoting. Returns (packed LU, row permutation)."""
    lu = np.array(mat, dtype=np.complex128)
    n = lu.shape[0]
    if lu.shape != (n, n):
        raise ValueError(f"matrix must be square, got shape {lu.shape}")
    perm = np.arange(n)
    for k in range(n):
        pivot_row = k + int(np.argmax(np.abs(lu[k:, k])))
        if abs(lu[pivot_row, k]) < PIVOT_MIN:
            raise SingularMatrixError(
                f"pivot magnitude below {PIVOT_MIN:g} at elimination step {k}"
            )
        if pivot_row != k:
            lu[[k, pivot_row]] = lu[[pivot_row, k]]
            perm[[k, pivot_row]] = perm[[pivot_row, k]]
        lu[k + 1 :, k] /= lu[k, k]
        lu[k + 1 :, k + 1 :] -= np.outer(lu[k + 1 :, k], lu[k, k + 1 :])
    return lu, perm


def _lu_solve(lu, perm, rhs):
    n = lu.shape[0]
    x = np.asarray(rhs, dtype=np.complex128)[perm].copy()
    for k in range(1, n):
        x[k] -= lu[k, :k] @ x[:k]
    for k in range(n - 1, -1, -1):
        x[k] = (x[k] - lu[k, k + 1 :] @ x[k + 1 :]) / lu[k, k]
    return x


def invert(mat):
    """Inverse of a small square complex matrix.

    Parameters
    ----------
    mat: ndarray (n, n), n <= 8

    Raises
    ------
    SingularMatrixError
        If a pivot underflows during elimination.
    """
    mat = np.asarray(mat)
    n = mat.shape[0]
    if n > MAX_DIM:
        raise ValueError(f"kernel sized for dimension <= {MAX_DIM}, got {n}")
    lu, perm = _lu_factor(mat)
    out = np.empty((n, n), dtype=np.complex128)
    eye = np.eye(n, dtype=np.complex128)
    for k in range(n):
        out[:, k] = _lu_solve(lu, perm, eye[:, k])
    return out


def solve_column(mat, n):
    """Solve mat @ v = e_n for the n-th unit vector without forming mat^-1."""
    mat = np.asarray(mat)
    dim = mat.shape[0]
    lu, perm = _lu_factor(mat)
    rhs = np.zeros(dim, dtype=np.complex128)
    rhs[n] = 1.0
    return _lu_solve(lu, perm, rhs)


def log_abs_det(mat):
    """log|det(mat)| from LU pivots.

    Per-bin determinants are summed across thousands of bins in the cost
    function; working in the log domain avoids overflow there.

    Raises
    ------
    SingularMatrixError
        If |det| underflows to zero (instead of returning -inf).
    """
    lu, _ = _lu_factor(np.asarray(mat))
    return float(np.sum(np.log(np.abs(np.diagonal(lu)))))


def hermitian_outer_accumulate(acc, x, weight):
    """Return acc + weight * x x^H, Hermitian bitwise by construction.

    The lower triangle is the exact conjugate mirror of the upper one and
    the diagonal is exactly real (naive complex products are only Hermitian
    to rounding because the two mirror evaluations round differently), so a
    Hermitian accumulator stays Hermitian with no drift at all.
    """
    x = np.asarray(x, dtype=np.complex128)
    outer = weight * np.outer(x, np.conj(x))
    upper = np.triu_indices(x.shape[0], 1)
    outer[(upper[1], upper[0])] = np.conj(outer[upper])
    np.fill_diagonal(outer, outer.diagonal().real)
    return np.asarray(acc, dtype=np.complex128) + outer
