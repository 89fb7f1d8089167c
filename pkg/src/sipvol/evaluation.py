"""Forecast losses, Diebold-Mariano comparisons, Benjamini-Hochberg
adjustment and VaR coverage backtests, plus the rolling-window driver.
"""

from __future__ import annotations

import csv
import json
import math
from collections import namedtuple
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from ._ols import ols
from .errors import DataError, DegenerateTestError, NumericalError
from .lowrank import RankPolicy, VolMatrix, predict, split_point

TestResult = namedtuple("TestResult", "statistic pvalue")

FLOOR_EPS = 1e-12


@dataclass
class LossSeries:
    values: np.ndarray
    method: str = ""
    keys: list = field(default_factory=list)


@dataclass
class VarSeries:
    q0: float
    var_values: np.ndarray
    returns: np.ndarray

    @property
    def hits(self) -> np.ndarray:
        return (self.returns < self.var_values).astype(int)


# -- losses ---------------------------------------------------------------

def mspe(pred, truth, normalization: str = "per_n", n: int | None = None) -> float:
    """Squared prediction error of the remaining block.

    ``per_n`` divides the sum by the full grid size ``n`` (defaults to
    ``len(pred)``); ``per_n2`` by the number of predicted points.
    """
    pred = np.asarray(pred, dtype=float)
    truth = np.asarray(truth, dtype=float)
    if pred.shape != truth.shape:
        raise DataError(f"length mismatch: {pred.shape} vs {truth.shape}")
    sq = float(np.sum((pred - truth) ** 2))
    if normalization == "per_n":
        return sq / (n if n is not None else pred.size)
    if normalization == "per_n2":
        return sq / pred.size
    raise ValueError(f"unknown normalization {normalization!r}")


def qlike_terms(pred, proxy) -> np.ndarray:
    pred = np.asarray(pred, dtype=float)
    proxy = np.asarray(proxy, dtype=float)
    if pred.shape != proxy.shape:
        raise DataError("length mismatch")
    if np.any(pred <= 0) or np.any(proxy <= 0):
        raise DataError("QLIKE needs strictly positive inputs")
    return np.log(pred) + proxy / pred


def qlike(pred, proxy) -> float:
    return float(np.mean(qlike_terms(pred, proxy)))


# -- forecast comparison --------------------------------------------------

def newey_west_variance(d, lags: int) -> float:
    d = np.asarray(d, dtype=float)
    T = d.size
    u = d - d.mean()
    var = float(u @ u) / T
    for lag in range(1, lags + 1):
        gamma = float(u[lag:] @ u[:-lag]) / T
        var += 2.0 * (1.0 - lag / (lags + 1.0)) * gamma
    return var


def dm_test(loss_a, loss_b, lags: int | None = None) -> TestResult:
    """Two-sided Diebold-Mariano test on ``loss_a - loss_b``.

    Long-run variance is Newey-West with Bartlett weights and
    ``floor(T ** (1/3))`` lags unless given. Positive statistics mean ``a``
    has the larger loss.
    """
    a = np.asarray(getattr(loss_a, "values", loss_a), dtype=float)
    b = np.asarray(getattr(loss_b, "values", loss_b), dtype=float)
    if a.shape != b.shape:
        raise DataError("loss series are not aligned")
    T = a.size
    if T < 10:
        raise DataError("DM test needs at least 10 paired losses")
    d = a - b
    if lags is None:
        lags = int(math.floor(T ** (1.0 / 3.0) + 1e-12))
    mean = float(d.mean())
    var = newey_west_variance(d, lags)
    if var <= 0.0:
        if mean == 0.0:
            return TestResult(0.0, 1.0)
        raise DegenerateTestError("zero long-run variance with a nonzero mean loss differential")
    stat = mean / math.sqrt(var / T)
    return TestResult(stat, float(2.0 * stats.norm.sf(abs(stat))))


def bh_adjust(pvalues, alpha: float = 0.05):
    """Benjamini-Hochberg adjusted p-values and rejection flags, in input order."""
    p = np.asarray(pvalues, dtype=float)
    if p.size == 0:
        return p.copy(), np.zeros(0, dtype=bool)
    if np.any((p < 0) | (p > 1)) or np.any(np.isnan(p)):
        raise ValueError("p-values must lie in [0, 1]")
    M = p.size
    order = np.argsort(p, kind="mergesort")
    scaled = p[order] * M / np.arange(1, M + 1)
    adj_sorted = np.minimum(np.minimum.accumulate(scaled[::-1])[::-1], 1.0)
    adjusted = np.empty(M)
    adjusted[order] = adj_sorted
    return adjusted, adjusted <= alpha


# -- VaR ------------------------------------------------------------------

def standardize(returns, vols, n: int) -> np.ndarray:
    """Returns over one of ``n`` equal intraday intervals divided by ``sqrt(vol / n)``."""
    r = np.asarray(returns, dtype=float)
    v = np.asarray(vols, dtype=float)
    if r.shape != v.shape:
        raise DataError("returns and vols are not aligned")
    if np.any(v <= 0):
        raise DataError("volatilities must be positive")
    return r / np.sqrt(v / n)


def var_quantiles(insample_returns, insample_vols, q0_list, n: int = 78) -> np.ndarray:
    z = standardize(insample_returns, insample_vols, n).ravel()
    if z.size == 0:
        raise DataError("empty in-sample period")
    return np.quantile(z, np.asarray(q0_list, dtype=float), method="linear")


def var_forecast(pred_vols, quantile: float, n: int = 78) -> np.ndarray:
    v = np.asarray(pred_vols, dtype=float)
    if np.any(v <= 0):
        raise DataError("predicted volatilities must be positive")
    return quantile * np.sqrt(v / n)


def _bernoulli_loglik(x: int, T: int, p: float) -> float:
    return _xlogy(x, p) + _xlogy(T - x, 1.0 - p)


def _xlogy(x, y) -> float:
    return 0.0 if x == 0 else float(x * math.log(y))


def lruc_test(hits, q0: float) -> TestResult:
    """Kupiec unconditional coverage LR, chi-squared(1)."""
    h = np.asarray(hits, dtype=int)
    T = h.size
    if T < 1:
        raise DataError("no observations")
    x = int(h.sum())
    phat = x / T
    lr = -2.0 * (_bernoulli_loglik(x, T, q0) - _bernoulli_loglik(x, T, phat))
    lr = max(lr, 0.0)
    return TestResult(lr, float(stats.chi2.sf(lr, 1)))


def transition_counts(hits):
    h = np.asarray(hits, dtype=int)
    prev, cur = h[:-1], h[1:]
    n00 = int(np.sum((prev == 0) & (cur == 0)))
    n01 = int(np.sum((prev == 0) & (cur == 1)))
    n10 = int(np.sum((prev == 1) & (cur == 0)))
    n11 = int(np.sum((prev == 1) & (cur == 1)))
    return n00, n01, n10, n11


def lr_independence(hits) -> float:
    n00, n01, n10, n11 = transition_counts(hits)
    total = n00 + n01 + n10 + n11
    pi = (n01 + n11) / total
    pi01 = n01 / (n00 + n01) if n00 + n01 else 0.0
    pi11 = n11 / (n10 + n11) if n10 + n11 else 0.0
    restricted = _xlogy(n00 + n10, 1.0 - pi) + _xlogy(n01 + n11, pi)
    unrestricted = (
        _xlogy(n00, 1.0 - pi01) + _xlogy(n01, pi01) + _xlogy(n10, 1.0 - pi11) + _xlogy(n11, pi11)
    )
    return max(-2.0 * (restricted - unrestricted), 0.0)


def lrcc_test(hits, q0: float) -> TestResult:
    """Christoffersen conditional coverage: Kupiec LR plus Markov independence LR, chi-squared(2)."""
    h = np.asarray(hits, dtype=int)
    if h.size < 2:
        raise DataError("LRcc needs at least 2 observations")
    lr = lruc_test(h, q0).statistic + lr_independence(h)
    return TestResult(lr, float(stats.chi2.sf(lr, 2)))


def dq_design(hits, q0: float, var_values, lags: int = 4):
    """Demeaned hit series and regressors ``[1, Hit_{t-1..t-lags}, VaR_t]``.

    Pre-sample lagged hits are set to zero, their mean under the null.
    """
    hit = np.asarray(hits, dtype=float) - q0
    var_values = np.asarray(var_values, dtype=float)
    T = hit.size
    if var_values.shape != hit.shape:
        raise DataError("hits and VaR series are not aligned")
    cols = [np.ones(T)]
    for lag in range(1, lags + 1):
        lagged = np.zeros(T)
        lagged[lag:] = hit[:-lag]
        cols.append(lagged)
    cols.append(var_values)
    return hit, np.column_stack(cols)


def dq_test(hits, q0: float, var_values, lags: int = 4) -> TestResult:
    """Engle-Manganelli dynamic quantile test; dof is the rank of the design."""
    T = np.asarray(hits).size
    if T <= lags + 2:
        raise DataError(f"DQ test needs more than {lags + 2} observations")
    hit, X = dq_design(hits, q0, var_values, lags)
    beta, kept = ols(X, hit)
    fitted = X @ beta
    dq = float(hit @ fitted) / (q0 * (1.0 - q0))
    dq = max(dq, 0.0)
    return TestResult(dq, float(stats.chi2.sf(dq, int(kept.sum()))))


COVERAGE_TESTS = {
    "LRuc": lambda hits, q0, var: lruc_test(hits, q0),
    "LRcc": lambda hits, q0, var: lrcc_test(hits, q0),
    "DQ": lambda hits, q0, var: dq_test(hits, q0, var),
}


# -- rolling backtest -----------------------------------------------------

@dataclass
class BacktestReport:
    window: int
    n: int
    losses: list = field(default_factory=list)
    dm: list = field(default_factory=list)
    coverage: list = field(default_factory=list)
    failures: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "window": self.window,
            "n": self.n,
            "losses": self.losses,
            "dm": self.dm,
            "coverage": self.coverage,
            "failures": self.failures,
        }

    def to_json(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(_jsonable(self.to_dict()), fh, indent=2)

    def table_rows(self) -> list:
        """Flat rows (method, metric, omega, D, value, p_adj) in the layout of the loss and coverage tables."""
        p_adj = {(r["method"], r["metric"], r["omega"]): r["p_adj"] for r in self.dm}
        rows = []
        for r in self.losses:
            rows.append({
                "method": r["method"],
                "metric": r["metric"],
                "omega": r["omega"],
                "D": self.window,
                "value": r["value"],
                "p_adj": p_adj.get((r["method"], r["metric"], r["omega"]), ""),
            })
        for r in self.coverage:
            rows.append({
                "method": r["method"],
                "metric": f"{r['test']}@{r['q0']:g}",
                "omega": r["omega"],
                "D": self.window,
                "value": r["statistic"],
                "p_adj": r["p_adj"],
            })
        return rows

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.DictWriter(fh, fieldnames=["method", "metric", "omega", "D", "value", "p_adj"])
            writer.writeheader()
            writer.writerows(self.table_rows())


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, float) and not math.isfinite(obj):
        return None
    return obj


def run_backtest(
    vols,
    returns,
    methods=("sip", "ave", "ar1", "pc", "har_d"),
    omega_list=(0.1, 0.5, 0.9),
    window: int = 63,
    q0_list=(0.01, 0.02, 0.05, 0.1, 0.2),
    rank: RankPolicy | int | None = None,
    alpha: float = 0.05,
) -> BacktestReport:
    """Rolling-window evaluation on estimated spot variances and intraday returns.

    Each out-of-sample day ``d`` uses rows ``d-window+1..d``; the last row's
    first ``n1`` entries are observed and the rest are both the prediction
    target and, since true variance is unobservable, the loss proxy. All
    p-values in the report form one family for the BH adjustment.
    """
    vols = np.asarray(vols, dtype=float)
    returns = np.asarray(returns, dtype=float)
    if vols.shape != returns.shape:
        raise DataError("vols and returns must have the same shape")
    D_total, n = vols.shape
    if D_total < window or window < 2:
        raise DataError(f"need at least window={window} days, have {D_total}")
    methods = list(dict.fromkeys(methods))
    floored = np.maximum(vols, FLOOR_EPS)

    sq = {}
    ql = {}
    var_acc = {}
    failures = []
    for d in range(window - 1, D_total):
        block = vols[d - window + 1 : d + 1]
        for omega in omega_list:
            n1 = split_point(n, omega)
            vm = VolMatrix(block, n1)
            proxy = floored[d, n1:]
            z_hist = standardize(returns[d - window + 1 : d], floored[d - window + 1 : d], n)
            z_today = standardize(returns[d, :n1], floored[d, :n1], n)
            quantiles = np.quantile(np.concatenate([z_hist.ravel(), z_today]), q0_list, method="linear")
            for method in methods:
                key = (method, omega)
                try:
                    pred = predict(method, vm, rank).values
                except (NumericalError, DataError) as exc:
                    failures.append({"day": d, "method": method, "omega": omega, "error": str(exc)})
                    pred = np.full(n - n1, np.nan)
                p = np.maximum(np.where(np.isfinite(pred), pred, np.nan), FLOOR_EPS)
                sq.setdefault(key, []).append((pred - vols[d, n1:]) ** 2)
                ql.setdefault(key, []).append(np.log(p) + proxy / p)
                for q0, qz in zip(q0_list, quantiles):
                    acc = var_acc.setdefault((method, omega, q0), ([], []))
                    acc[0].append(qz * np.sqrt(p / n))
                    acc[1].append(returns[d, n1:])

    report = BacktestReport(window=window, n=n, failures=failures)
    losses = {}
    for (method, omega), chunks in sq.items():
        losses[(method, omega, "MSPE")] = np.concatenate(chunks)
        losses[(method, omega, "QLIKE")] = np.concatenate(ql[(method, omega)])
    for (method, omega, metric), vals in sorted(losses.items(), key=lambda kv: (kv[0][1], kv[0][2], methods.index(kv[0][0]))):
        report.losses.append({
            "method": method, "omega": omega, "metric": metric, "value": float(np.nanmean(vals)),
        })

    pvals = []
    if "sip" in methods:
        for omega in omega_list:
            for metric in ("MSPE", "QLIKE"):
                base = losses[("sip", omega, metric)]
                for method in methods:
                    if method == "sip":
                        continue
                    other = losses[(method, omega, metric)]
                    ok = np.isfinite(base) & np.isfinite(other)
                    try:
                        res = dm_test(other[ok], base[ok])
                    except (DataError, DegenerateTestError) as exc:
                        failures.append({"method": method, "omega": omega, "metric": metric, "error": str(exc)})
                        continue
                    row = {"method": method, "omega": omega, "metric": metric,
                           "statistic": res.statistic, "pvalue": res.pvalue}
                    report.dm.append(row)
                    pvals.append(row)

    for (method, omega, q0), (vv, rr) in var_acc.items():
        var_values = np.concatenate(vv)
        rets = np.concatenate(rr)
        ok = np.isfinite(var_values)
        hits = (rets[ok] < var_values[ok]).astype(int)
        for name, fn in COVERAGE_TESTS.items():
            try:
                res = fn(hits, q0, var_values[ok])
            except (DataError, NumericalError) as exc:
                failures.append({"method": method, "omega": omega, "q0": q0, "test": name, "error": str(exc)})
                continue
            row = {"method": method, "omega": omega, "q0": q0, "test": name,
                   "statistic": res.statistic, "pvalue": res.pvalue,
                   "violations": int(hits.sum()), "T": int(hits.size)}
            report.coverage.append(row)
            pvals.append(row)

    if pvals:
        adjusted, reject = bh_adjust([r["pvalue"] for r in pvals], alpha)
        for row, p_adj, rej in zip(pvals, adjusted, reject):
            row["p_adj"] = float(p_adj)
            row["reject"] = bool(rej)
    return report
