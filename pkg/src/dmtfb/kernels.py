"""Per-trial outage kernels.

Two interchangeable implementations of the same three kernels:

* ``level_outage(H, rates, levels, m)`` -> ``(N, K)`` uint8, outage of the
  whole MAC when every user transmits at ``levels[k]``;
* ``outage(H, rates, powers, m)`` -> ``(N,)`` uint8, outage with per-trial,
  per-user powers ``powers[t, s]``;
* ``corrupt(index, u_err, u_pick, eps, K)`` -> ``(N, L)`` received indices.

``H`` has shape ``(N, L, n, m)``. Indices are 0-based here. The numba path
is used when numba imports and ``DMTFB_DISABLE_NUMBA`` is unset or ``0``;
set it to ``1`` to force the pure-numpy path.
"""

from __future__ import annotations

import itertools
import math
import os

import numpy as np

LN2 = math.log(2.0)

try:
    from numba import njit

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    HAVE_NUMBA = False


def numba_enabled() -> bool:
    return HAVE_NUMBA and os.environ.get("DMTFB_DISABLE_NUMBA", "0") in ("", "0")


def subset_masks(L: int) -> np.ndarray:
    """``(2^L - 1, L)`` boolean membership table of the non-empty subsets."""
    rows = [
        [i in S for i in range(L)]
        for size in range(1, L + 1)
        for S in itertools.combinations(range(L), size)
    ]
    return np.array(rows, dtype=np.bool_)


# -- numpy path --------------------------------------------------------------


def _grams(H):
    # H_s H_s^dagger for every trial and user: (N, L, n, n)
    return np.einsum("tsij,tskj->tsik", H, H.conj())


def _logdet2_np(A):
    chol = np.linalg.cholesky(A)
    diag = np.real(np.diagonal(chol, axis1=-2, axis2=-1))
    return 2.0 * np.sum(np.log(diag), axis=-1) / LN2


def level_outage_np(H, rates, levels, m):
    N, L, n, _ = H.shape
    G = _grams(H)
    eye = np.eye(n)
    out = np.zeros((N, len(levels)), dtype=np.uint8)
    for mask in subset_masks(L):
        GS = G[:, mask].sum(axis=1)
        need = rates[mask].sum()
        for k, P in enumerate(levels):
            info = _logdet2_np(eye + (P / m) * GS)
            out[:, k] |= info < need
    return out


def outage_np(H, rates, powers, m):
    N, L, n, _ = H.shape
    G = _grams(H) * (powers / m)[:, :, None, None]
    eye = np.eye(n)
    out = np.zeros(N, dtype=np.uint8)
    for mask in subset_masks(L):
        info = _logdet2_np(eye + G[:, mask].sum(axis=1))
        out |= info < rates[mask].sum()
    return out


def corrupt_np(index, u_err, u_pick, eps, K):
    if K == 1:
        return np.zeros(u_err.shape, dtype=np.int64)
    i = np.broadcast_to(index[:, None], u_err.shape)
    j = np.minimum((u_pick * (K - 1)).astype(np.int64), K - 2)
    wrong = j + (j >= i)
    return np.where(u_err < eps, wrong, i).astype(np.int64)


# -- numba path --------------------------------------------------------------

if HAVE_NUMBA:

    @njit(cache=True, nogil=True)
    def _det_nb(A, n):
        # in-place complex Cholesky of a Hermitian PD matrix (lower triangle);
        # det is the product of the squared pivots, each >= 1 for I + PSD
        det = 1.0
        for j in range(n):
            s = A[j, j].real
            for k in range(j):
                s -= A[j, k].real ** 2 + A[j, k].imag ** 2
            det *= s
            d = math.sqrt(s)
            A[j, j] = d
            for i in range(j + 1, n):
                z = A[i, j]
                for k in range(j):
                    z -= A[i, k] * A[j, k].conjugate()
                A[i, j] = z / d
        return det

    @njit(cache=True, nogil=True)
    def _grams_nb(H, t, G):
        L, n, m = H.shape[1], H.shape[2], H.shape[3]
        for s in range(L):
            for i in range(n):
                for j in range(i + 1):
                    z = 0j
                    for a in range(m):
                        z += H[t, s, i, a] * H[t, s, j, a].conjugate()
                    G[s, i, j] = z

    @njit(cache=True, nogil=True)
    def level_outage_nb(H, thresholds, levels, m, masks):
        N, L, n = H.shape[0], H.shape[1], H.shape[2]
        K = levels.shape[0]
        out = np.zeros((N, K), dtype=np.uint8)
        G = np.empty((L, n, n), dtype=np.complex128)
        GS = np.empty((n, n), dtype=np.complex128)
        A = np.empty((n, n), dtype=np.complex128)
        for t in range(N):
            _grams_nb(H, t, G)
            for q in range(masks.shape[0]):
                for i in range(n):
                    for j in range(i + 1):
                        z = 0j
                        for s in range(L):
                            if masks[q, s]:
                                z += G[s, i, j]
                        GS[i, j] = z
                for k in range(K):
                    if out[t, k]:
                        continue
                    c = levels[k] / m
                    for i in range(n):
                        for j in range(i + 1):
                            A[i, j] = c * GS[i, j]
                        A[i, i] += 1.0
                    if _det_nb(A, n) < thresholds[q]:
                        out[t, k] = 1
        return out

    @njit(cache=True, nogil=True)
    def outage_nb(H, thresholds, powers, m, masks):
        N, L, n = H.shape[0], H.shape[1], H.shape[2]
        out = np.zeros(N, dtype=np.uint8)
        G = np.empty((L, n, n), dtype=np.complex128)
        A = np.empty((n, n), dtype=np.complex128)
        for t in range(N):
            _grams_nb(H, t, G)
            for q in range(masks.shape[0]):
                for i in range(n):
                    for j in range(i + 1):
                        z = 0j
                        for s in range(L):
                            if masks[q, s]:
                                z += (powers[t, s] / m) * G[s, i, j]
                        A[i, j] = z
                    A[i, i] += 1.0
                if _det_nb(A, n) < thresholds[q]:
                    out[t] = 1
                    break
        return out

    @njit(cache=True, nogil=True)
    def corrupt_nb(index, u_err, u_pick, eps, K):
        N, L = u_err.shape
        out = np.empty((N, L), dtype=np.int64)
        for t in range(N):
            i = index[t]
            for s in range(L):
                if K > 1 and u_err[t, s] < eps:
                    j = min(int(u_pick[t, s] * (K - 1)), K - 2)
                    out[t, s] = j + 1 if j >= i else j
                else:
                    out[t, s] = i
        return out


def _det_thresholds(rates, masks):
    # outage iff det(I + ...) < 2^(sum of subset rates)
    return np.exp2(masks.astype(np.float64) @ rates)


# -- dispatch ----------------------------------------------------------------


def level_outage(H, rates, levels, m, use_numba=None):
    rates = np.asarray(rates, dtype=np.float64)
    levels = np.asarray(levels, dtype=np.float64)
    if numba_enabled() if use_numba is None else use_numba:
        masks = subset_masks(H.shape[1])
        return level_outage_nb(np.ascontiguousarray(H), _det_thresholds(rates, masks),
                               levels, float(m), masks)
    return level_outage_np(H, rates, levels, m)


def outage(H, rates, powers, m, use_numba=None):
    rates = np.asarray(rates, dtype=np.float64)
    powers = np.asarray(powers, dtype=np.float64)
    if numba_enabled() if use_numba is None else use_numba:
        masks = subset_masks(H.shape[1])
        return outage_nb(np.ascontiguousarray(H), _det_thresholds(rates, masks),
                         powers, float(m), masks)
    return outage_np(H, rates, powers, m)


def corrupt(index, u_err, u_pick, eps, K, use_numba=None):
    index = np.asarray(index, dtype=np.int64)
    if numba_enabled() if use_numba is None else use_numba:
        return corrupt_nb(index, u_err, u_pick, float(eps), int(K))
    return corrupt_np(index, u_err, u_pick, eps, K)


def feedback_from_levels(U):
    """Index rule on an ``(N, K)`` level-outage table (0-based result).

    Index 0 when even the top level is in outage, else the first level
    without outage.
    """
    first_ok = np.argmin(U, axis=1)
    return np.where(U[:, -1] == 1, 0, first_ok).astype(np.int64)
