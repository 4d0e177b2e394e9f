"""Pure-NumPy reference implementations of the hot kernels.

These define the semantics; the compiled versions in ``_ckernels`` must
match them (exactly for the integer outputs, to float rounding for the
rest). Keep both files in sync.
"""

from __future__ import annotations

import numpy as np


def topk_rows(scores: np.ndarray, k: int) -> tuple[np.ndarray, np.ndarray]:
    """Per-row top-k of a dense score matrix.

    Returns ``(indices, values)``, each of shape ``(rows, k)``, ordered by
    descending score. Ties are broken in favor of the lower column index.
    """
    scores = np.ascontiguousarray(scores, dtype=np.float64)
    if scores.ndim != 2:
        raise ValueError("scores must be 2-d")
    m = scores.shape[1]
    if not 1 <= k <= m:
        raise ValueError(f"k={k} out of range for {m} columns")
    # stable sort of the negated scores: equal scores keep ascending index order
    order = np.argsort(-scores, axis=1, kind="stable")[:, :k]
    values = np.take_along_axis(scores, order, axis=1)
    return order.astype(np.int64), values


def topk_mean_rows(scores: np.ndarray, k: int) -> np.ndarray:
    """Mean of the k largest entries of each row."""
    scores = np.ascontiguousarray(scores, dtype=np.float64)
    if scores.ndim != 2:
        raise ValueError("scores must be 2-d")
    m = scores.shape[1]
    if not 1 <= k <= m:
        raise ValueError(f"k={k} out of range for {m} columns")
    part = np.partition(scores, m - k, axis=1)[:, m - k :]
    return part.mean(axis=1)


def posterior_columns(
    sqdist: np.ndarray, inv_two_sigma2: float, log_c: float
) -> tuple[np.ndarray, np.ndarray]:
    """Column-normalized Gaussian responsibilities with a uniform outlier term.

    Given squared distances ``sqdist[m, n]`` between centroid m and point n,
    computes

        P[m, n] = exp(-sqdist[m, n] * inv_two_sigma2) / denom[n]
        denom[n] = sum_m exp(-sqdist[m, n] * inv_two_sigma2) + exp(log_c)

    evaluated in a shift-stable way. Returns ``(P, logdenom)``; the outlier
    posterior of column n is ``exp(log_c - logdenom[n])``. Pass
    ``log_c = -inf`` for no outlier component.
    """
    sqdist = np.ascontiguousarray(sqdist, dtype=np.float64)
    if sqdist.ndim != 2:
        raise ValueError("sqdist must be 2-d")
    e = -inv_two_sigma2 * sqdist
    emax = e.max(axis=0)
    lse = emax + np.log(np.exp(e - emax).sum(axis=0))
    logdenom = np.logaddexp(lse, log_c)
    p = np.exp(e - logdenom)
    return p, logdenom
