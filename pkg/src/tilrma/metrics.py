"""Separation-quality scores: scale-invariant SDR, projection SDR with a
time-invariant allowed-distortion filter, and output-to-reference alignment.

Scores are capped at +/-100 dB so reports stay finite and comparable; a
perfect match reports the cap rather than infinity.
"""

import itertools
from dataclasses import dataclass

import numpy as np

from .errors import IllConditionedProjectionError, ZeroReferenceError

CAP_DB = 100.0

# Normal-equation condition numbers beyond this make the projection filter
# numerically meaningless.
MAX_CONDITION = 1e12


def _capped_db(signal_energy, error_energy):
    if error_energy <= signal_energy * 10.0 ** (-CAP_DB / 10.0):
        return CAP_DB
    if signal_energy <= error_energy * 10.0 ** (-CAP_DB / 10.0):
        return -CAP_DB
    return float(10.0 * np.log10(signal_energy / error_energy))


def si_sdr(reference, estimate):
    """Scale-invariant signal-to-distortion ratio in dB.

    The estimate is compared against the closest scaled copy of the
    reference, so any positive or negative gain on the estimate leaves the
    score unchanged.

    Raises
    ------
    ZeroReferenceError
        If the reference signal is identically zero.
    """
    reference = np.asarray(reference, dtype=np.float64)
    estimate = np.asarray(estimate, dtype=np.float64)
    if reference.shape != estimate.shape:
        raise ValueError("reference and estimate must have equal length")
    ref_energy = float(reference @ reference)
    if ref_energy == 0.0:
        raise ZeroReferenceError("reference signal is all-zero")
    alpha = float(estimate @ reference) / ref_energy
    target = alpha * reference
    err = estimate - target
    return _capped_db(float(target @ target), float(err @ err))


def sdr_projection(reference, estimate, taps):
    """SDR after projecting onto delayed copies of the reference.

    The allowed distortion is a time-invariant filter of ``taps``
    coefficients applied to the reference (delays 0..taps-1, signals
    treated as zero-padded).  ``taps=1`` reduces exactly to ``si_sdr``.

    Raises
    ------
    IllConditionedProjectionError
        If the Toeplitz normal equations are near-singular.
    """
    reference = np.asarray(reference, dtype=np.float64)
    estimate = np.asarray(estimate, dtype=np.float64)
    if taps < 1:
        raise ValueError("taps must be >= 1")
    if reference.shape != estimate.shape:
        raise ValueError("reference and estimate must have equal length")
    length = reference.shape[0]
    if float(reference @ reference) == 0.0:
        raise ZeroReferenceError("reference signal is all-zero")

    # autocorrelation lags 0..taps-1; zero padding makes the Gram matrix
    # of the delayed references exactly Toeplitz
    lags = np.array([reference[d:] @ reference[: length - d] for d in range(taps)])
    gram = np.empty((taps, taps))
    for a in range(taps):
        for b in range(taps):
            gram[a, b] = lags[abs(a - b)]
    rhs = np.array([estimate[d:] @ reference[: length - d] for d in range(taps)])

    if np.linalg.cond(gram) > MAX_CONDITION:
        raise IllConditionedProjectionError(
            f"projection normal equations ill-conditioned (taps={taps})"
        )
    coef = np.linalg.solve(gram, rhs)

    padded = np.zeros(length + taps - 1)
    for d in range(taps):
        padded[d : d + length] += coef[d] * reference
    err = np.concatenate([estimate, np.zeros(taps - 1)]) - padded
    return _capped_db(float(padded @ padded), float(err @ err))


@dataclass
class EvalReport:
    """Alignment result: scores are indexed by reference, after permutation."""

    per_source_sdr: list
    permutation: tuple
    baseline_sdr: list | None = None
    mean_improvement_db: float | None = None


def align_permutation(references, estimates, taps=1, mixture=None):
    """Best assignment of estimates to references by exhaustive search.

    Parameters
    ----------
    references, estimates: sequences of equal-length 1-D arrays (N <= 8)
    taps: filter length for the underlying SDR (1 = scale-invariant)
    mixture: optional unprocessed signal; when given, per-source SDR
        improvements over it are reported.

    Returns
    -------
    EvalReport where ``permutation[r]`` is the estimate index assigned to
    reference r.
    """
    num = len(references)
    if len(estimates) != num:
        raise ValueError("need as many estimates as references")
    if num > 8:
        raise ValueError("exhaustive alignment is limited to 8 sources")
    scores = np.empty((num, num))
    for r in range(num):
        for e in range(num):
            scores[r, e] = sdr_projection(references[r], estimates[e], taps)
    best_perm, best_total = None, -np.inf
    for perm in itertools.permutations(range(num)):
        total = sum(scores[r, perm[r]] for r in range(num))
        if total > best_total:
            best_perm, best_total = perm, total
    per_source = [float(scores[r, best_perm[r]]) for r in range(num)]

    baseline = None
    improvement = None
    if mixture is not None:
        baseline = [sdr_projection(references[r], mixture, taps) for r in range(num)]
        improvement = float(np.mean([s - b for s, b in zip(per_source, baseline)]))
    return EvalReport(per_source, best_perm, baseline, improvement)
