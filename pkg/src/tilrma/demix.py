"""Spatial half of the separation: weighted covariances, iterative-projection
row updates, per-iteration rescaling, and back-projection to source images.

All operations here work on one frequency bin at a time; bins are mutually
independent, so the engine is free to sweep them in any order or in parallel
as long as each bin's demixing matrix is mutated exclusively.
"""

import math

import numpy as np

from . import linalg
from .errors import DegenerateSourceError, SingularMatrixError
from .source_model import FLOOR, scale_floor

# Sources whose average power drops below this are considered collapsed.
DEGENERATE_POWER = 1e-150

PIVOT_FLOOR = 1e-300


def weighted_covariance(x_frames, y, sigma_sq, nu):
    """Weighted sample covariance for one (bin, source) pair.

    Parameters
    ----------
    x_frames: ndarray (channels, frames), complex
        Observed vectors of this bin, one column per frame.
    y: ndarray (frames,), complex
        Current estimate of this source in this bin.
    sigma_sq: ndarray (frames,)
        Squared scale of this source in this bin.
    nu: float
        Degrees of freedom; ``inf`` gives (1/J) sum x x^H / sigma^2 exactly.

    Returns
    -------
    ndarray (channels, channels), Hermitian positive semidefinite.
    """
    num_frames = x_frames.shape[1]
    # sigma_sq >= FLOOR is a caller contract (the source model keeps
    # sigma^2 floored); it bounds the weight spread within one bin at
    # levels the accumulation can represent without rank collapse.
    if math.isinf(nu):
        w = 1.0 / sigma_sq
        gain = 1.0 / num_frames
    else:
        w = 1.0 / (sigma_sq + (2.0 / nu) * np.abs(y) ** 2)
        gain = (1.0 + 2.0 / nu) / num_frames
    return gain * ((x_frames * w) @ x_frames.conj().T)


def ip_update(w_mat, cov, n):
    """Iterative-projection update of one demixing row.

    Solves (W U) w = e_n, then rescales so that w^H U w = 1.  The returned
    vector is the new filter w; the caller stores its conjugate as row n.

    Raises
    ------
    SingularMatrixError
        If W U cannot be solved; the caller is expected to retry with a
        ridge-loaded covariance.
    """
    w = linalg.solve_column(w_mat @ cov, n)
    quad = np.real(np.conj(w) @ cov @ w)
    if quad < PIVOT_FLOOR:
        raise SingularMatrixError("quadratic form collapsed in IP rescaling")
    w = w / math.sqrt(quad)
    if w.shape[0] == 1:
        # scalar case has a free phase; pin it to the positive real axis
        w = np.abs(w).astype(np.complex128)
    return w


def ridge_covariance(cov):
    """Covariance with a small diagonal load, for singular-system recovery."""
    n = cov.shape[0]
    eps = 1e-12 * np.real(np.trace(cov)) / n
    return cov + eps * np.eye(n)


def head_residual(w_mat, cov_list):
    """max |w_k^H U_n w_n - delta_kn|, a fixed-point diagnostic for one bin."""
    rows = w_mat.conj()  # rows of W are w_n^H, so w_n = conj(row n)
    worst = 0.0
    for n, cov in enumerate(cov_list):
        target = cov @ rows[n]
        for k in range(w_mat.shape[0]):
            val = np.conj(rows[k]) @ target
            val -= 1.0 if k == n else 0.0
            worst = max(worst, abs(val))
    return worst


def normalize(w_stack, y_values, sigma_p, factors):
    """Rescale every source to unit average power, in place.

    Applies w <- w/eta, y <- y/eta, sigma^p <- sigma^p eta^-p, T <- T eta^-p
    with eta the per-source RMS of y.  The cost function is invariant under
    this rescaling; it only fixes the scale ambiguity between W and the
    source models.

    Returns
    -------
    ndarray (sources,) of the eta coefficients.

    Raises
    ------
    DegenerateSourceError
        If a source's average power has collapsed to zero.
    """
    num_sources = y_values.shape[2]
    eta = np.empty(num_sources)
    for n in range(num_sources):
        eta[n] = math.sqrt(np.mean(np.abs(y_values[:, :, n]) ** 2))
        if eta[n] < DEGENERATE_POWER:
            raise DegenerateSourceError(f"source {n} has (near-)zero power")
        p = factors[n].p
        w_stack[:, n, :] /= eta[n]
        y_values[:, :, n] /= eta[n]
        np.maximum(sigma_p[n] * eta[n] ** (-p), scale_floor(p), out=sigma_p[n])
        np.maximum(factors[n].basis * eta[n] ** (-p), FLOOR, out=factors[n].basis)
    return eta


def back_project(w_stack, y_values, n):
    """Multichannel image of source n, one bin at a time.

    y_hat_ij = W_i^-1 (e_n o y_ij) reduces to y_ij,n times column n of
    W_i^-1, since the masked vector has a single nonzero entry.

    Returns
    -------
    ndarray (bins, frames, channels), complex.
    """
    num_bins, num_frames, _ = y_values.shape
    out = np.empty((num_bins, num_frames, w_stack.shape[1]), dtype=np.complex128)
    for i in range(num_bins):
        try:
            mix_col = linalg.invert(w_stack[i])[:, n]
        except SingularMatrixError as exc:
            raise SingularMatrixError(f"bin {i}: {exc}") from exc
        out[i] = y_values[i, :, n, None] * mix_col[None, :]
    return out
