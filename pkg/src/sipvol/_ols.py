"""Least squares that drops linearly dependent regressors instead of failing."""

import numpy as np


def independent_columns(X, rtol=1e-10):
    """Greedy left-to-right selection of linearly independent columns."""
    X = np.asarray(X, dtype=float)
    kept = []
    basis = np.zeros((X.shape[0], 0))
    for j in range(X.shape[1]):
        col = X[:, j]
        norm = np.linalg.norm(col)
        if norm == 0.0:
            continue
        resid = col - basis @ (basis.T @ col)
        resid = resid - basis @ (basis.T @ resid)
        rnorm = np.linalg.norm(resid)
        if rnorm > rtol * norm:
            kept.append(j)
            basis = np.column_stack([basis, resid / rnorm])
    return np.array(kept, dtype=np.int64)


def ols(X, y, rtol=1e-10):
    """Coefficients for every column of ``X`` (zero where dropped) and the kept mask."""
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    kept = independent_columns(X, rtol)
    beta = np.zeros(X.shape[1])
    if kept.size:
        beta[kept] = np.linalg.lstsq(X[:, kept], y, rcond=None)[0]
    mask = np.zeros(X.shape[1], dtype=bool)
    mask[kept] = True
    return beta, mask
