"""Jump-robust pre-averaging estimator of spot variance.

For one day of noisy log prices ``Y_0..Y_m`` the estimate at ``tau / n`` is

    c(tau) = (m / phi_k) * sum_s w_s(tau) * (Ybar_s^2 - Yhat_s / 2) * 1{|Ybar_s| <= nu}

where ``w_s`` is the uniform kernel ``K_b(t_{s-1} - tau/n) / m``. In the
interior the weights already sum to one and this is the textbook kernel sum
``(1/phi_k) sum_s K_b(...) (...)``; with ``boundary_renormalize`` the weights
are rescaled to unit mass everywhere, and windows that run past the ends of
the day are shifted inward to keep their width.
"""

from __future__ import annotations

import dataclasses
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from . import kernels
from .errors import ConfigError, DataError, EmptyWindowError

KERNELS = ("uniform-symmetric", "uniform-left")
WINDOW_RULES = ("plugin", "sqrt")
WEIGHTS = ("skewed", "standard")


@dataclass(frozen=True)
class PreAvgConfig:
    k_m: int | None = None
    # "plugin": per-day MSE-minimising window; "sqrt": ceil(theta * sqrt(m))
    window_rule: str = "plugin"
    theta: float = 1.0
    bandwidth: float | None = None
    kernel: str = "uniform-symmetric"
    trunc_const: float = 1.8
    trunc_exp: float = 0.47
    truncate: bool = True
    boundary_renormalize: bool = True
    # "skewed": g(x) = min(2x, 1 - x); "standard": g(x) = min(x, 1 - x)
    weight: str = "skewed"
    floor_eps: float = 1e-12

    def validate(self, m: int | None = None) -> "PreAvgConfig":
        if self.kernel not in KERNELS:
            raise ConfigError(f"kernel must be one of {KERNELS}")
        if self.window_rule not in WINDOW_RULES:
            raise ConfigError(f"window_rule must be one of {WINDOW_RULES}")
        if self.weight not in WEIGHTS:
            raise ConfigError(f"weight must be one of {WEIGHTS}")
        if self.bandwidth is not None and not (0.0 < self.bandwidth <= 1.0):
            raise ConfigError("bandwidth must lie in (0, 1]")
        if self.trunc_const <= 0.0:
            raise ConfigError("trunc_const must be > 0")
        if not (0.0 < self.trunc_exp < 1.0):
            raise ConfigError("trunc_exp must lie in (0, 1)")
        if self.theta <= 0.0:
            raise ConfigError("theta must be > 0")
        if self.k_m is not None and self.k_m < 2:
            raise ConfigError("k_m must be >= 2")
        if m is not None and self.k_m is not None and self.k_m > m / 2:
            raise ConfigError(f"k_m = {self.k_m} exceeds m / 2 = {m / 2}")
        return self

    def window(self, prices, n: int = 78) -> int:
        """Pre-averaging window for one day of prices."""
        y = _as_prices(prices)
        m = y.shape[0] - 1
        if self.k_m is not None:
            return self.k_m
        if self.window_rule == "sqrt":
            k = default_window(m, self.theta)
        else:
            b = self.bandwidth if self.bandwidth is not None else 1.0 / n
            k = plugin_window(y, b, self.weight)
        return min(k, m // 2)

    def replace(self, **changes) -> "PreAvgConfig":
        return dataclasses.replace(self, **changes)


@dataclass(frozen=True)
class SpotCurve:
    values: np.ndarray
    grid: np.ndarray
    k_m: int
    bpv: float
    nu: float
    truncated: int
    negatives: int
    # before flooring
    raw: np.ndarray | None = None

    def diagnostics(self) -> dict:
        return {
            "k_m": self.k_m,
            "bpv": self.bpv,
            "nu": self.nu,
            "truncated": self.truncated,
            "negatives": self.negatives,
        }


def weight_g(x, kind: str = "skewed"):
    x_arr = np.asarray(x, dtype=float)
    if np.any((x_arr < 0.0) | (x_arr > 1.0)) or np.any(np.isnan(x_arr)):
        raise ValueError("weight_g is defined on [0, 1]")
    slope = 2.0 if kind == "skewed" else 1.0
    out = np.minimum(slope * x_arr, 1.0 - x_arr)
    return float(out) if out.ndim == 0 else out


def phi(k_m: int, kind: str = "skewed") -> float:
    """``sum_{i=1}^{k} g(i/k)^2``."""
    return float(np.sum(weight_g(np.arange(1, k_m + 1) / k_m, kind) ** 2))


def _weight_vectors(k_m: int, kind: str):
    g = weight_g(np.arange(k_m + 1) / k_m, kind)
    gvec = g[:k_m].copy()
    gvec[0] = 0.0  # l runs from 1 in Ybar
    hvec = np.zeros(k_m + 1)
    hvec[1:] = np.diff(g) ** 2
    return gvec, hvec


def _as_prices(prices) -> np.ndarray:
    y = np.asarray(getattr(prices, "y", prices), dtype=float)
    if y.ndim != 1:
        raise DataError("prices must be one-dimensional")
    if not np.all(np.isfinite(y)):
        raise DataError("prices contain non-finite values")
    return y


def default_window(m: int, theta: float = 1.0) -> int:
    if m < 4:
        raise ConfigError("default_window needs m >= 4")
    return max(2, math.ceil(theta * math.sqrt(m) - 1e-12))


def noise_variance(prices) -> float:
    """Microstructure noise variance from the first-order return autocovariance."""
    dy = np.diff(_as_prices(prices))
    return max(0.0, -float(np.dot(dy[:-1], dy[1:])) / (dy.shape[0] - 1))


@lru_cache(maxsize=64)
def _window_moments(k_max: int, n_win: int, kind: str):
    """Per-k constants of the constant-volatility MSE of the estimator.

    For ``k = 2..k_max`` returns ``phi_k``, ``psi_k = sum (g_l - g_{l-1})^2`` and
    ``S_xy = sum_{|h| < N} (N - |h|) x_h y_h`` for the lag sums
    ``A_h = sum g_l g_{l+h}`` and ``B_h = sum dg_l dg_{l+h}``.
    """
    ks = np.arange(2, k_max + 1)
    out = np.empty((ks.shape[0], 5))
    for row, k in enumerate(ks):
        g = weight_g(np.arange(k + 1) / k, kind)
        dg = np.diff(g)
        A = np.correlate(g, g, mode="full")[k:]
        B = np.correlate(dg, dg, mode="full")[k - 1:]
        h = min(n_win, A.shape[0])
        wA = np.full(h, 2.0 * n_win) - 2.0 * np.arange(h)
        wA[0] = n_win
        A, B = A[:h], np.pad(B, (0, max(0, h - B.shape[0])))[:h]
        out[row] = (
            float(np.sum(g * g)),
            float(np.sum(dg * dg)),
            float(np.sum(wA * A * A)),
            float(np.sum(wA * A * B)),
            float(np.sum(wA * B * B)),
        )
    return ks, out


def plugin_window(prices, bandwidth: float, kind: str = "skewed") -> int:
    """Window minimising the estimator's relative MSE at the day's noise level.

    Treats volatility as locally constant and noise as iid Gaussian; the
    squared bias is ``(psi_k / (2 phi_k))^2`` and the variance is that of an
    average of ``N = b m`` overlapping squared pre-averaged returns. The
    noise-to-signal ratio ``m * omega^2 / sigma^2`` is estimated from the day.
    """
    y = _as_prices(prices)
    m = y.shape[0] - 1
    n_win = max(1, int(round(bandwidth * m)))
    k_max = max(2, min(m // 2, 4 * math.ceil(math.sqrt(m))))
    bpv = kernels.bipower(np.diff(y))
    noise = m * noise_variance(y)
    # BPV carries roughly 2 m omega^2 of noise; keep a floor for noise-dominated days
    signal = max(bpv - 2.0 * noise, 0.05 * bpv)
    kappa = noise / signal if signal > 0 else 0.0
    ks, mom = _window_moments(k_max, n_win, kind)
    phi_k, psi_k, s_aa, s_ab, s_bb = mom.T
    bias = psi_k / (2.0 * phi_k)
    var = 2.0 / (phi_k * n_win) ** 2 * (s_aa + 2.0 * kappa * s_ab + kappa ** 2 * s_bb)
    return int(ks[np.argmin(bias ** 2 + var)])


def preaverage(prices, s: int, k_m: int, kind: str = "skewed") -> tuple[float, float]:
    """Pre-averaged return ``Ybar_s`` and its noise correction ``Yhat_s``.

    ``s`` is 1-based, ``1 <= s <= m - k_m + 1``. The last ``Yhat`` term needs
    the increment ``s + k_m`` and is dropped when it falls past the day end.
    """
    y = _as_prices(prices)
    m = y.shape[0] - 1
    if not (1 <= s <= m - k_m + 1):
        raise IndexError(f"s={s} outside 1..{m - k_m + 1}")
    ybar = 0.0
    yhat = 0.0
    for l in range(1, k_m + 1):
        if s + l > m:
            break
        d = y[s + l] - y[s + l - 1]
        g_l = weight_g(l / k_m, kind)
        if l < k_m:
            ybar += g_l * d
        yhat += (g_l - weight_g((l - 1) / k_m, kind)) ** 2 * d * d
    return ybar, yhat


def bipower_variation(prices) -> float:
    y = _as_prices(prices)
    if y.shape[0] < 3:
        raise DataError("bipower variation needs at least 3 prices")
    return kernels.bipower(np.diff(y))


def truncation_threshold(bpv: float, k_m: int, m: int, cfg: PreAvgConfig | None = None) -> float:
    cfg = cfg or PreAvgConfig()
    if bpv < 0:
        raise ValueError("BPV must be >= 0")
    return cfg.trunc_const * math.sqrt(bpv) * (k_m / m) ** cfg.trunc_exp


def _snap(v: float) -> float:
    r = round(v)
    return float(r) if abs(v - r) < 1e-9 else v


def kernel_window(tau_frac: float, m: int, k_m: int, cfg: PreAvgConfig, n: int | None = None):
    """Half-open index range ``[lo, hi)`` of pre-averaged returns in the kernel support.

    Pre-averaged return ``i`` (0-based, ``i = s - 1``) sits at time ``i / m``.
    """
    count = m - k_m + 1
    if cfg.bandwidth is not None:
        b = cfg.bandwidth
    elif n is not None:
        b = 1.0 / n
    else:
        raise ConfigError("bandwidth unset and no grid size n to default from")
    if cfg.kernel == "uniform-symmetric":
        lo = math.ceil(_snap(m * (tau_frac - b / 2)))
        hi = math.ceil(_snap(m * (tau_frac + b / 2)))
    else:
        lo = math.floor(_snap(m * (tau_frac - b))) + 1
        hi = math.floor(_snap(m * tau_frac)) + 1
    width = hi - lo
    if cfg.boundary_renormalize and width <= count:
        if lo < 0:
            lo, hi = 0, width
        elif hi > count:
            lo, hi = count - width, count
    lo, hi = max(lo, 0), min(hi, count)
    if hi <= lo:
        raise EmptyWindowError(
            f"no pre-averaged return inside the kernel window at tau={tau_frac:.6g} (b={b:.6g})"
        )
    return lo, hi, b


def kernel_weights(tau_frac: float, m: int, k_m: int, cfg: PreAvgConfig, n: int | None = None) -> np.ndarray:
    """Weights ``K_b(t_{s-1} - tau) / m`` over all pre-averaged returns."""
    lo, hi, b = kernel_window(tau_frac, m, k_m, cfg, n)
    w = np.zeros(m - k_m + 1)
    w[lo:hi] = 1.0 / (hi - lo) if cfg.boundary_renormalize else 1.0 / (b * m)
    return w


def _contributions(y: np.ndarray, k_m: int, cfg: PreAvgConfig):
    m = y.shape[0] - 1
    dy = np.diff(y)
    gvec, hvec = _weight_vectors(k_m, cfg.weight)
    ybar, yhat = kernels.preaverage_all(dy, gvec, hvec)
    bpv = kernels.bipower(dy)
    nu = truncation_threshold(bpv, k_m, m, cfg)
    contrib = ybar * ybar - 0.5 * yhat
    truncated = 0
    if cfg.truncate:
        keep = np.abs(ybar) <= nu
        truncated = int(keep.size - keep.sum())
        contrib = np.where(keep, contrib, 0.0)
    return contrib, bpv, nu, truncated


def _windows(grid, m, k_m, cfg, n):
    lo = np.empty(len(grid), dtype=np.int64)
    hi = np.empty(len(grid), dtype=np.int64)
    scale = np.empty(len(grid))
    for t, tau in enumerate(grid):
        a, c, b = kernel_window(float(tau), m, k_m, cfg, n)
        lo[t], hi[t] = a, c
        scale[t] = 1.0 / (c - a) if cfg.boundary_renormalize else 1.0 / (b * m)
    return lo, hi, scale


def spot_estimate(prices, tau_frac: float, cfg: PreAvgConfig | None = None, n: int = 78) -> float:
    """Spot variance at intraday time ``tau_frac``; ``n`` sets the default bandwidth ``1/n``."""
    cfg = cfg or PreAvgConfig()
    y = _as_prices(prices)
    m = y.shape[0] - 1
    cfg.validate(m)
    k_m = cfg.window(y, n)
    contrib, _, _, _ = _contributions(y, k_m, cfg)
    lo, hi, scale = _windows([tau_frac], m, k_m, cfg, n)
    value = m / phi(k_m, cfg.weight) * scale[0] * kernels.window_sums(contrib, lo, hi)[0]
    return max(float(value), cfg.floor_eps)


def spot_curve(day, n: int = 78, cfg: PreAvgConfig | None = None) -> SpotCurve:
    """Estimates at ``tau / n`` for ``tau = 1..n``; the threshold uses the day's BPV."""
    cfg = cfg or PreAvgConfig()
    y = _as_prices(day)
    m = y.shape[0] - 1
    cfg.validate(m)
    k_m = cfg.window(y, n)
    contrib, bpv, nu, truncated = _contributions(y, k_m, cfg)
    grid = np.arange(1, n + 1) / n
    lo, hi, scale = _windows(grid, m, k_m, cfg, n)
    raw = m / phi(k_m, cfg.weight) * scale * kernels.window_sums(contrib, lo, hi)
    negatives = int(np.sum(raw < cfg.floor_eps))
    return SpotCurve(
        values=np.maximum(raw, cfg.floor_eps),
        grid=grid,
        k_m=k_m,
        bpv=bpv,
        nu=nu,
        truncated=truncated,
        negatives=negatives,
        raw=raw,
    )


def _curve_job(args):
    return spot_curve(*args)


def spot_matrix(prices, n: int = 78, cfg: PreAvgConfig | None = None, threads: int = 1):
    """Estimated ``D x n`` spot-variance matrix plus per-day diagnostics.

    Days are independent, so ``threads > 1`` farms them out to worker
    processes; results do not depend on ``threads``.
    """
    jobs = [(p, n, cfg) for p in prices]
    if threads > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            rows = list(pool.map(_curve_job, jobs, chunksize=max(1, len(jobs) // (4 * threads))))
    else:
        rows = [_curve_job(j) for j in jobs]
    return np.vstack([r.values for r in rows]), [r.diagnostics() for r in rows]


def intraday_returns(prices, n: int) -> np.ndarray:
    """Log returns over the ``n`` equal intraday intervals, per day."""
    y = np.atleast_2d(np.asarray(prices, dtype=float))
    m = y.shape[1] - 1
    idx = np.concatenate(([0], np.rint(np.arange(1, n + 1) * (m / n)).astype(np.int64)))
    return np.diff(y[:, idx], axis=1)
