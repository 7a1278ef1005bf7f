"""Hot numeric kernels with numba acceleration.

Set the environment variable ``TECAUSAL_NO_NUMBA=1`` to force the pure
numpy fallbacks (useful on platforms where numba is unavailable and for
the benchmark in ``benchmarks/bench_kernels.py``). Both paths compute
identical values up to floating-point reassociation.
"""

import os

import numpy as np

USE_NUMBA = os.environ.get("TECAUSAL_NO_NUMBA", "0") not in ("1", "true", "yes")

if USE_NUMBA:
    try:
        import numba
    except ImportError:  # pragma: no cover
        USE_NUMBA = False


def _sq_frobenius_errors_np(samples, sigma_diag):
    trials, n, d = samples.shape
    # uncentered second-moment estimator per trial
    cov = np.einsum("tij,tik->tjk", samples, samples) / n
    cov[:, np.arange(d), np.arange(d)] -= sigma_diag
    return np.einsum("tjk,tjk->t", cov, cov)


def _bin_second_moments_np(samples):
    k, t, n, d = samples.shape
    return np.einsum("etij,etik->etjk", samples, samples) / n


if USE_NUMBA:

    @numba.njit(parallel=True, cache=True)
    def _sq_frobenius_errors_nb(samples, sigma_diag):  # pragma: no cover - jit
        trials, n, d = samples.shape
        out = np.empty(trials)
        for t in numba.prange(trials):
            cov = np.zeros((d, d))
            for i in range(n):
                row = samples[t, i]
                for j in range(d):
                    for k in range(d):
                        cov[j, k] += row[j] * row[k]
            err = 0.0
            for j in range(d):
                for k in range(d):
                    diff = cov[j, k] / n - (sigma_diag[j] if j == k else 0.0)
                    err += diff * diff
            out[t] = err
        return out

    @numba.njit(parallel=True, cache=True)
    def _bin_second_moments_nb(samples):  # pragma: no cover - jit
        ke, tt, n, d = samples.shape
        out = np.zeros((ke, tt, d, d))
        for flat in numba.prange(ke * tt):
            e = flat // tt
            t = flat % tt
            for i in range(n):
                row = samples[e, t, i]
                for j in range(d):
                    for k in range(d):
                        out[e, t, j, k] += row[j] * row[k]
            for j in range(d):
                for k in range(d):
                    out[e, t, j, k] /= n
        return out


def sq_frobenius_errors(samples, sigma_diag):
    """Per-trial squared Frobenius error of the uncentered covariance.

    samples: (trials, n, d); sigma_diag: (d,) true diagonal covariance.
    Returns (trials,) with ||(1/n) X^T X - diag(sigma)||_F^2 per trial.
    """
    samples = np.ascontiguousarray(samples, dtype=np.float64)
    sigma_diag = np.ascontiguousarray(sigma_diag, dtype=np.float64)
    if USE_NUMBA:
        return _sq_frobenius_errors_nb(samples, sigma_diag)
    return _sq_frobenius_errors_np(samples, sigma_diag)


def bin_second_moments(samples):
    """Uncentered per-bin second moments for a (k, T, n, d) sample tensor."""
    samples = np.ascontiguousarray(samples, dtype=np.float64)
    if USE_NUMBA:
        return _bin_second_moments_nb(samples)
    return _bin_second_moments_np(samples)
