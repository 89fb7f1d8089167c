"""Hot loops of the pre-averaging estimator, in numba and numpy flavours.

Both flavours take the same arguments and return the same arrays; the
public entry points dispatch on :func:`sipvol._accel.use_numba`, which reads
``SIPVOL_BACKEND`` at call time.

Index conventions: ``dy`` holds the ``m`` increments ``Y_j - Y_{j-1}``,
``j = 1..m``, at 0-based positions ``0..m-1``. Pre-averaged returns are
indexed ``i = 0..m-k`` (``i = s - 1``) and sit at time ``i / m``.
"""

import math

import numpy as np

from ._accel import njit, use_numba


# -- numpy ---------------------------------------------------------------

def preaverage_numpy(dy, gvec, hvec):
    # gvec[l] = g(l/k) for l = 0..k-1, hvec[l] = (g(l/k) - g((l-1)/k))^2 for l = 0..k
    k = gvec.shape[0]
    m = dy.shape[0]
    ybar = np.correlate(dy, gvec, mode="valid")[: m - k + 1]
    dy2 = np.zeros(m + 1)
    dy2[:m] = dy * dy
    yhat = np.correlate(dy2, hvec, mode="valid")[: m - k + 1]
    return ybar, yhat


def bipower_numpy(dy):
    a = np.abs(dy)
    return 0.5 * math.pi * float(np.dot(a[:-1], a[1:]))


def window_sums_numpy(contrib, lo, hi):
    csum = np.concatenate(([0.0], np.cumsum(contrib)))
    return csum[hi] - csum[lo]


# -- numba ---------------------------------------------------------------

@njit(fastmath=True)
def preaverage_numba(dy, gvec, hvec):
    # separate loops so each inner sum vectorizes
    k = gvec.shape[0]
    m = dy.shape[0]
    count = m - k + 1
    ybar = np.empty(count)
    yhat = np.empty(count)
    for i in range(count):
        acc = 0.0
        for l in range(1, k):
            acc += gvec[l] * dy[i + l]
        ybar[i] = acc
    sq = np.zeros(m + 1)  # trailing zero drops the last term at day end
    for j in range(m):
        sq[j] = dy[j] * dy[j]
    for i in range(count):
        acc = 0.0
        for l in range(1, k + 1):
            acc += hvec[l] * sq[i + l]
        yhat[i] = acc
    return ybar, yhat


@njit
def bipower_numba(dy):
    acc = 0.0
    for j in range(1, dy.shape[0]):
        acc += abs(dy[j - 1]) * abs(dy[j])
    return 0.5 * math.pi * acc


@njit
def window_sums_numba(contrib, lo, hi):
    out = np.zeros(lo.shape[0])
    for t in range(lo.shape[0]):
        acc = 0.0
        for i in range(lo[t], hi[t]):
            acc += contrib[i]
        out[t] = acc
    return out


# -- dispatch ------------------------------------------------------------

def preaverage_all(dy, gvec, hvec):
    dy = np.ascontiguousarray(dy, dtype=np.float64)
    gvec = np.ascontiguousarray(gvec, dtype=np.float64)
    hvec = np.ascontiguousarray(hvec, dtype=np.float64)
    if use_numba():
        return preaverage_numba(dy, gvec, hvec)
    return preaverage_numpy(dy, gvec, hvec)


def bipower(dy):
    dy = np.ascontiguousarray(dy, dtype=np.float64)
    if use_numba():
        return float(bipower_numba(dy))
    return bipower_numpy(dy)


def window_sums(contrib, lo, hi):
    contrib = np.ascontiguousarray(contrib, dtype=np.float64)
    lo = np.ascontiguousarray(lo, dtype=np.int64)
    hi = np.ascontiguousarray(hi, dtype=np.int64)
    if use_numba():
        return window_sums_numba(contrib, lo, hi)
    return window_sums_numpy(contrib, lo, hi)
