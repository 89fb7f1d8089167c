"""Low-rank completion of the day x intraday volatility matrix, plus baselines.

The matrix is split as

            n1      n2
    D-1  [ S11     S12 ]
      1  [ S21     S22 ]   <- S22 is the unobserved remainder of day D

and SIP predicts ``S22 = S21 V (U' S11 V)^{-1} U' S12`` where ``U`` holds the
leading left singular vectors of ``[S11 S12]`` and ``V`` the leading right
singular vectors of ``[S11; S21]``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ._ols import ols
from .errors import ConfigError, DataError, IllConditionedError

METHODS = ("sip", "ave", "ar1", "pc", "har_d")


@dataclass(frozen=True)
class VolMatrix:
    """Spot variances, one row per day; the last row is observed up to column ``n1``.

    Entries of the last row past ``n1`` are ignored by every predictor.
    """

    data: np.ndarray
    n1: int
    days: np.ndarray | None = None
    grid: np.ndarray | None = None

    def __post_init__(self):
        data = np.asarray(self.data, dtype=float)
        if data.ndim != 2:
            raise DataError("VolMatrix data must be two-dimensional")
        D, n = data.shape
        if D < 2:
            raise DataError("VolMatrix needs at least 2 days")
        if not (1 <= self.n1 < n):
            raise DataError(f"n1 must satisfy 1 <= n1 < n = {n}, got {self.n1}")
        if not np.all(np.isfinite(data[:-1])) or not np.all(np.isfinite(data[-1, : self.n1])):
            raise DataError("VolMatrix has non-finite entries in the observed region")
        object.__setattr__(self, "data", data)

    @classmethod
    def from_omega(cls, data, omega: float, **kwargs) -> "VolMatrix":
        n = np.asarray(data).shape[1]
        return cls(data, split_point(n, omega), **kwargs)

    @property
    def D(self) -> int:
        return self.data.shape[0]

    @property
    def n(self) -> int:
        return self.data.shape[1]

    @property
    def n2(self) -> int:
        return self.n - self.n1

    @property
    def history(self) -> np.ndarray:
        return self.data[:-1]

    @property
    def s11(self) -> np.ndarray:
        return self.data[:-1, : self.n1]

    @property
    def s12(self) -> np.ndarray:
        return self.data[:-1, self.n1:]

    @property
    def s21(self) -> np.ndarray:
        return self.data[-1:, : self.n1]

    @property
    def s22(self) -> np.ndarray:
        return self.data[-1, self.n1:]


def split_point(n: int, omega: float) -> int:
    """``n1 = round(omega * n)`` clamped to ``1..n-1``."""
    if not (0.0 < omega < 1.0):
        raise ConfigError(f"omega must lie in (0, 1), got {omega}")
    return int(min(max(round(omega * n), 1), n - 1))


@dataclass(frozen=True)
class SvdFactors:
    U: np.ndarray
    S: np.ndarray
    V: np.ndarray

    @property
    def rank(self) -> int:
        return self.S.shape[0]

    def reconstruct(self) -> np.ndarray:
        return (self.U * self.S) @ self.V.T


@dataclass
class Prediction:
    method: str
    values: np.ndarray
    rank_used: int | None = None
    conditioning: float | None = None
    flags: list = field(default_factory=list)
    details: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "method": self.method,
            "rank": self.rank_used,
            "values": [float(v) for v in self.values],
            "conditioning": self.conditioning,
            "flags": list(self.flags),
        }


@dataclass(frozen=True)
class RankPolicy:
    """``mode`` is ``"fixed"`` (use ``r``), ``"ratio"`` or ``"gap"`` (search up to ``r_max``)."""

    mode: str = "ratio"
    r: int = 1
    r_max: int = 10

    def __post_init__(self):
        if self.mode not in ("fixed", "ratio", "gap"):
            raise ConfigError(f"unknown rank mode {self.mode!r}")
        if self.r < 1 or self.r_max < 1:
            raise ConfigError("rank and r_max must be >= 1")


def truncated_svd(M, r: int) -> SvdFactors:
    M = np.asarray(M, dtype=float)
    if M.ndim != 2:
        raise DataError("truncated_svd expects a matrix")
    if not np.all(np.isfinite(M)):
        raise DataError("matrix has non-finite entries")
    if not (1 <= r <= min(M.shape)):
        raise ConfigError(f"rank {r} outside 1..{min(M.shape)}")
    U, S, Vt = np.linalg.svd(M, full_matrices=False)
    U, S, V = U[:, :r], S[:r], Vt[:r].T
    # deterministic signs: each left vector sums to >= 0
    flip = np.where(U.sum(axis=0) < 0, -1.0, 1.0)
    return SvdFactors(U * flip, S.copy(), V * flip)


def select_rank(singular_values, r_max: int, method: str = "ratio") -> int:
    """Eigenvalue-ratio or largest-gap rank; ties go to the smaller rank."""
    lam = np.asarray(singular_values, dtype=float)
    if np.any(lam < 0):
        raise ValueError("singular values must be >= 0")
    if not (1 <= r_max < lam.shape[0]):
        raise ValueError(f"r_max must satisfy 1 <= r_max < {lam.shape[0]}")
    if method not in ("ratio", "gap"):
        raise ValueError(f"unknown rank-selection method {method!r}")
    head, nxt = lam[:r_max], lam[1 : r_max + 1]
    if method == "gap":
        return int(np.argmax(head - nxt)) + 1
    zero = np.flatnonzero(nxt == 0.0)
    if zero.size:
        return int(zero[0]) + 1
    return int(np.argmax(head / nxt)) + 1


def resolve_rank(vm: VolMatrix, policy: RankPolicy | int | None, limit: int | None = None) -> int:
    """Rank for ``vm`` under ``policy``; data-driven ranks use the singular values of ``[S11 S12]``."""
    if limit is None:
        limit = min(vm.D - 1, vm.n1)
    if isinstance(policy, (int, np.integer)):
        return int(policy)
    policy = policy or RankPolicy()
    if policy.mode == "fixed":
        return policy.r
    sv = np.linalg.svd(vm.history, compute_uv=False)
    r_max = min(policy.r_max, limit, sv.shape[0] - 1)
    if r_max < 1:
        return 1
    return min(select_rank(sv, r_max, policy.mode), limit)


def _sip_from_factors(s11, s12, s21, U, V, ridge=0.0, max_condition=1e12):
    core = U.T @ s11 @ V
    if ridge:
        core = core + ridge * np.eye(core.shape[0])
    cond = float(np.linalg.cond(core))
    if not math.isfinite(cond) or cond > max_condition:
        raise IllConditionedError(
            f"core matrix condition number {cond:.3g} exceeds {max_condition:.3g}", cond
        )
    left = s21 @ V
    right = U.T @ s12
    return (left @ np.linalg.solve(core, right)).ravel(), cond


def sip_predict(vm: VolMatrix, r: int = 1, ridge: float = 0.0, max_condition: float = 1e12) -> Prediction:
    if not (1 <= r <= min(vm.D - 1, vm.n1)):
        raise ConfigError(f"rank {r} outside 1..{min(vm.D - 1, vm.n1)}")
    row_block = vm.history  # (D-1) x n
    col_block = vm.data[:, : vm.n1]  # D x n1
    U = truncated_svd(row_block, r).U
    V = truncated_svd(col_block, r).V
    values, cond = _sip_from_factors(vm.s11, vm.s12, vm.s21, U, V, ridge, max_condition)
    return Prediction("sip", values, rank_used=r, conditioning=cond)


def pc_predict(vm: VolMatrix, r: int = 1) -> Prediction:
    hist = vm.history
    if not (1 <= r <= min(hist.shape)):
        raise ConfigError(f"rank {r} outside 1..{min(hist.shape)}")
    f = truncated_svd(hist, r)
    last = (f.U[-1] * f.S) @ f.V.T
    return Prediction("pc", last[vm.n1:], rank_used=r)


def ave_predict(vm: VolMatrix) -> Prediction:
    return Prediction("ave", vm.s12.mean(axis=0))


def ar1_predict(vm: VolMatrix) -> Prediction:
    """Per-column AR(1) by OLS on the history rows."""
    if vm.D < 3:
        raise DataError("AR(1) needs D >= 3")
    hist = vm.s12
    x, y = hist[:-1], hist[1:]
    xm, ym = x.mean(axis=0), y.mean(axis=0)
    sxx = ((x - xm) ** 2).sum(axis=0)
    sxy = ((x - xm) * (y - ym)).sum(axis=0)
    flat = sxx <= 1e-14 * np.maximum((x ** 2).sum(axis=0), 1e-300)
    beta = np.where(flat, 0.0, sxy / np.where(flat, 1.0, sxx))
    alpha = ym - beta * xm
    values = alpha + beta * hist[-1]
    values = np.where(flat, hist.mean(axis=0), values)
    flags = ["zero-variance column, used column mean"] if flat.any() else []
    return Prediction(
        "ar1", values, flags=flags, details={"alpha": alpha, "beta": beta, "fallback": flat}
    )


def daily_rv(rows) -> np.ndarray:
    """Daily realized variance proxy: mean of a day's spot estimates."""
    return np.asarray(rows, dtype=float).mean(axis=1)


def har_d_design(vm: VolMatrix, diurnal=None):
    """Pooled HAR-D regression over target columns.

    Rows are (day i, column j > n1) with regressors
    ``[1, RV_d(i-1), RV_w(i-1), RV_m(i-1), diurnal_j, c_{i,n1}]``. Returns the
    training design, response, and the design rows for day D.
    """
    D, n1, n2 = vm.D, vm.n1, vm.n2
    if D < 24:
        raise DataError("HAR-D needs D >= 24 (22 trailing days plus one training day)")
    hist = vm.history
    rv = daily_rv(hist)
    if diurnal is None:
        diurnal = hist.mean(axis=0)
    diurnal = np.asarray(diurnal, dtype=float)[n1:]

    def block(i, last_obs):
        rv_d = rv[i - 1]
        rv_w = rv[i - 5 : i].mean()
        rv_m = rv[i - 22 : i].mean()
        base = np.array([1.0, rv_d, rv_w, rv_m])
        return np.column_stack([np.tile(base, (n2, 1)), diurnal, np.full(n2, last_obs)])

    train_days = range(22, D - 1)
    X = np.vstack([block(i, hist[i, n1 - 1]) for i in train_days])
    y = np.concatenate([hist[i, n1:] for i in train_days])
    X_new = block(D - 1, vm.data[-1, n1 - 1])
    return X, y, X_new


HAR_D_TERMS = ("const", "rv_d", "rv_w", "rv_m", "diurnal", "last_intraday")


def har_d_predict(vm: VolMatrix, diurnal=None) -> Prediction:
    X, y, X_new = har_d_design(vm, diurnal)
    beta, kept = ols(X, y)
    flags = []
    if not kept.all():
        dropped = [HAR_D_TERMS[j] for j in np.flatnonzero(~kept)]
        flags.append("collinear regressors dropped: " + ",".join(dropped))
    return Prediction(
        "har_d", X_new @ beta, flags=flags, details={"coef": beta, "kept": kept}
    )


def predict(method: str, vm: VolMatrix, rank: RankPolicy | int | None = None, ridge: float = 0.0) -> Prediction:
    """Dispatch by method name; ``rank`` only matters for ``sip`` and ``pc``."""
    if method == "sip":
        return sip_predict(vm, resolve_rank(vm, rank), ridge=ridge)
    if method == "pc":
        return pc_predict(vm, resolve_rank(vm, rank, limit=min(vm.D - 1, vm.n)))
    if method == "ave":
        return ave_predict(vm)
    if method == "ar1":
        return ar1_predict(vm)
    if method == "har_d":
        return har_d_predict(vm)
    raise ConfigError(f"unknown method {method!r}; choose from {', '.join(METHODS)}")
