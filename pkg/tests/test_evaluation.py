import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import stats

from sipvol.errors import DataError, DegenerateTestError
from sipvol.evaluation import (
    bh_adjust,
    dm_test,
    dq_design,
    dq_test,
    lr_independence,
    lrcc_test,
    lruc_test,
    mspe,
    qlike,
    qlike_terms,
    run_backtest,
    standardize,
    transition_counts,
    var_forecast,
    var_quantiles,
)


# -- losses -----------------------------------------------------------------

def test_mspe_examples():
    x = np.array([0.3, 0.7])
    assert mspe(x, x) == 0.0
    assert mspe([1.0, 1.0], [0.0, 0.0], "per_n", n=4) == 0.5
    assert mspe([1.0, 1.0], [0.0, 0.0], "per_n2") == 1.0
    with pytest.raises(DataError):
        mspe([1.0], [1.0, 2.0])


def test_mspe_matches_naive_loop():
    rng = np.random.default_rng(0)
    a, b = rng.normal(size=30), rng.normal(size=30)
    acc = 0.0
    for i in range(30):
        acc += (a[i] - b[i]) ** 2
    assert mspe(a, b, "per_n", n=78) == pytest.approx(acc / 78, rel=1e-13)
    assert mspe(a, b, "per_n2") == pytest.approx(acc / 30, rel=1e-13)


def test_qlike_examples():
    assert qlike(np.ones(5), np.ones(5)) == 1.0
    assert qlike(np.full(3, math.e), np.full(3, math.e)) == pytest.approx(2.0, rel=1e-15)
    with pytest.raises(DataError):
        qlike([1.0, 0.0], [1.0, 1.0])


@settings(max_examples=50, deadline=None)
@given(c=st.floats(1e-4, 1e4))
def test_qlike_minimised_at_proxy(c):
    at = qlike_terms([c], [c])[0]
    for f in (0.9, 0.95, 1.05, 1.1):
        assert qlike_terms([f * c], [c])[0] > at


# -- Diebold-Mariano --------------------------------------------------------

def test_dm_identical_series():
    x = np.random.default_rng(1).normal(size=50)
    assert tuple(dm_test(x, x)) == (0.0, 1.0)


def test_dm_alternating_differential():
    d = np.tile([1.0, -1.0], 20)
    res = dm_test(d, np.zeros_like(d))
    assert res.statistic == 0.0
    assert res.pvalue == 1.0


def test_dm_matches_direct_newey_west():
    rng = np.random.default_rng(2)
    a, b = rng.normal(size=200), rng.normal(size=200) + 0.1
    d = a - b
    T = d.size
    L = int(T ** (1 / 3))
    dbar = d.mean()
    gamma = [sum((d[t] - dbar) * (d[t - k] - dbar) for t in range(k, T)) / T for k in range(L + 1)]
    lrv = gamma[0] + 2 * sum((1 - k / (L + 1)) * gamma[k] for k in range(1, L + 1))
    stat = dbar / math.sqrt(lrv / T)
    res = dm_test(a, b)
    assert L == 5
    assert res.statistic == pytest.approx(stat, rel=1e-10)
    assert res.pvalue == pytest.approx(2 * stats.norm.sf(abs(stat)), rel=1e-10)


def test_dm_antisymmetric():
    rng = np.random.default_rng(3)
    a, b = rng.normal(size=60), rng.normal(size=60)
    ab, ba = dm_test(a, b), dm_test(b, a)
    assert ab.statistic == pytest.approx(-ba.statistic, rel=1e-14)
    assert ab.pvalue == pytest.approx(ba.pvalue, rel=1e-14)


def test_dm_errors():
    with pytest.raises(DataError):
        dm_test(np.ones(5), np.ones(5))
    with pytest.raises(DegenerateTestError):
        dm_test(np.ones(20), np.zeros(20))


# -- Benjamini-Hochberg -----------------------------------------------------

def brute_bh(p):
    M = len(p)
    order = sorted(range(M), key=lambda i: p[i])
    adj = [0.0] * M
    for rank, i in enumerate(order, start=1):
        adj[i] = min(1.0, min(M * p[order[j - 1]] / j for j in range(rank, M + 1)))
    return adj


def test_bh_examples():
    adj, rej = bh_adjust([0.01, 0.02, 0.03, 0.04])
    np.testing.assert_allclose(adj, 0.04, atol=1e-12)
    assert rej.all()
    adj, _ = bh_adjust([0.3])
    assert adj[0] == 0.3
    with pytest.raises(ValueError):
        bh_adjust([0.5, 1.2])


@settings(max_examples=60, deadline=None)
@given(p=st.lists(st.floats(0.0, 1.0), min_size=1, max_size=30), seed=st.integers(0, 1000))
def test_bh_properties(p, seed):
    p = np.asarray(p)
    adj, rej = bh_adjust(p)
    np.testing.assert_allclose(adj, brute_bh(list(p)), rtol=1e-12, atol=1e-15)
    assert np.all(adj >= p - 1e-15) and np.all(adj <= 1.0)
    order = np.argsort(p, kind="mergesort")
    assert np.all(np.diff(adj[order]) >= -1e-15)
    perm = np.random.default_rng(seed).permutation(p.size)
    adj_perm, _ = bh_adjust(p[perm])
    np.testing.assert_allclose(adj_perm, adj[perm], rtol=1e-14)
    _, loose = bh_adjust(p, alpha=0.2)
    assert np.all(loose[rej])  # reject set grows with alpha


# -- VaR --------------------------------------------------------------------

def test_var_quantiles_symmetric_sample():
    z = np.tile([-1.0, 1.0], 50)
    assert var_quantiles(z, np.full(100, 78.0), [0.5], n=78)[0] == 0.0


def test_standardization_definition():
    r = np.array([0.01, -0.02, 0.005])
    np.testing.assert_allclose(standardize(r, np.full(3, 2e-4), 78), r / math.sqrt(2e-4 / 78))
    with pytest.raises(DataError):
        standardize(r, np.zeros(3), 78)


def test_var_quantiles_match_sort_oracle():
    rng = np.random.default_rng(4)
    r = rng.normal(size=237)
    v = rng.uniform(0.5, 2.0, 237)
    z = np.sort(r / np.sqrt(v / 78))
    for q in (0.01, 0.05, 0.2, 0.5):
        h = (z.size - 1) * q
        lo = math.floor(h)
        oracle = z[lo] + (h - lo) * (z[min(lo + 1, z.size - 1)] - z[lo])
        assert var_quantiles(r, v, [q], 78)[0] == pytest.approx(oracle, rel=1e-12)
    with pytest.raises(DataError):
        var_quantiles([], [], [0.05])


def test_var_forecast():
    assert var_forecast([78.0], -1.645, 78)[0] == pytest.approx(-1.645)
    v = np.array([0.3, 1.1])
    np.testing.assert_allclose(var_forecast(2 * v, -2.0, 78), math.sqrt(2) * var_forecast(v, -2.0, 78))
    np.testing.assert_allclose(var_forecast(v, -2.0, 78), -2.0 * np.sqrt(v / 78))


# -- coverage tests ---------------------------------------------------------

def test_lruc_examples():
    hits = np.zeros(100, dtype=int)
    hits[:5] = 1
    res = lruc_test(hits, 0.05)
    assert res.statistic == 0.0 and res.pvalue == 1.0
    res = lruc_test(np.zeros(100, dtype=int), 0.05)
    assert res.statistic == pytest.approx(-200 * math.log(0.95), rel=1e-12)
    assert res.statistic == pytest.approx(10.258, abs=1e-3)
    res = lruc_test(np.ones(40, dtype=int), 0.05)
    assert res.statistic == pytest.approx(-80 * math.log(0.05), rel=1e-12)


def test_lrcc_with_marginal_transition_rates():
    # transitions (00, 01, 10, 11) = (4, 2, 2, 1): P(1 | 0) = P(1 | 1) = 1/3 = marginal rate
    seq = np.array([0, 0, 0, 0, 0, 1, 0, 1, 1, 0])
    assert transition_counts(seq) == (4, 2, 2, 1)
    assert lr_independence(seq) == pytest.approx(0.0, abs=1e-12)
    assert lrcc_test(seq, 0.2).statistic == pytest.approx(lruc_test(seq, 0.2).statistic, abs=1e-12)


def test_lrind_all_zero_hits():
    assert lr_independence(np.zeros(50, dtype=int)) == 0.0


def test_lrcc_matches_count_oracle():
    hits = (np.random.default_rng(5).uniform(size=300) < 0.1).astype(int)
    n = {(0, 0): 0, (0, 1): 0, (1, 0): 0, (1, 1): 0}
    for a, b in zip(hits[:-1], hits[1:]):
        n[(a, b)] += 1

    def xl(x, p):
        return 0.0 if x == 0 else x * math.log(p)

    p01 = n[(0, 1)] / (n[(0, 0)] + n[(0, 1)])
    p11 = n[(1, 1)] / (n[(1, 0)] + n[(1, 1)])
    p = (n[(0, 1)] + n[(1, 1)]) / (len(hits) - 1)
    lrind = -2 * (
        xl(n[(0, 0)] + n[(1, 0)], 1 - p) + xl(n[(0, 1)] + n[(1, 1)], p)
        - xl(n[(0, 0)], 1 - p01) - xl(n[(0, 1)], p01) - xl(n[(1, 0)], 1 - p11) - xl(n[(1, 1)], p11)
    )
    x, T = hits.sum(), hits.size
    lruc = -2 * (xl(T - x, 0.95) + xl(x, 0.05) - xl(T - x, 1 - x / T) - xl(x, x / T))
    res = lrcc_test(hits, 0.05)
    assert res.statistic == pytest.approx(lruc + lrind, rel=1e-10)
    assert res.pvalue == pytest.approx(stats.chi2.sf(lruc + lrind, 2), rel=1e-10)


def test_dq_zero_hits_constant_var():
    res = dq_test(np.zeros(100, dtype=int), 0.05, np.full(100, -0.02))
    assert res.statistic == pytest.approx(100 * 0.05 / 0.95, abs=1e-9)


def test_dq_orthogonal_hits_give_zero():
    T, q0 = 60, 0.5
    # hit - q0 alternates +-0.5; regressors [1, lags, VaR] with VaR constant
    hits = np.tile([1, 0], T // 2)
    hit, X = dq_design(hits, q0, np.full(T, -1.0))
    # the demeaned hit has zero mean, so it is orthogonal to the intercept
    assert float(np.ones(T) @ hit) == 0.0
    res = dq_test(hits, q0, np.full(T, -1.0), lags=0)
    assert res.statistic == pytest.approx(0.0, abs=1e-12)


def test_dq_matches_projection_oracle():
    rng = np.random.default_rng(6)
    T, q0 = 250, 0.05
    hits = (rng.uniform(size=T) < 0.08).astype(int)
    var = -0.02 * rng.uniform(0.5, 1.5, T)
    h = hits - q0
    X = np.ones((T, 6))
    for lag in range(1, 5):
        X[lag:, lag] = h[:-lag]
        X[:lag, lag] = 0.0
    X[:, 5] = var
    beta = np.linalg.solve(X.T @ X, X.T @ h)
    oracle = float(h @ X @ beta) / (q0 * (1 - q0))
    res = dq_test(hits, q0, var)
    assert res.statistic == pytest.approx(oracle, rel=1e-8)
    assert res.pvalue == pytest.approx(stats.chi2.sf(oracle, 6), rel=1e-8)


def test_dq_needs_enough_observations():
    with pytest.raises(DataError):
        dq_test(np.zeros(6, dtype=int), 0.05, np.ones(6))


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 10_000), T=st.integers(10, 200), q0=st.sampled_from([0.01, 0.05, 0.1, 0.2]))
def test_statistics_nonnegative_pvalues_in_unit_interval(seed, T, q0):
    rng = np.random.default_rng(seed)
    hits = (rng.uniform(size=T) < rng.uniform(0, 0.4)).astype(int)
    var = -rng.uniform(0.01, 0.03, T)
    for res in (lruc_test(hits, q0), lrcc_test(hits, q0), dq_test(hits, q0, var)):
        assert res.statistic >= 0.0
        assert 0.0 <= res.pvalue <= 1.0
    a, b = rng.normal(size=T), rng.normal(size=T)
    res = dm_test(a, b)
    assert 0.0 <= res.pvalue <= 1.0


# -- rolling backtest -------------------------------------------------------

def _panel(D=80, n=26, seed=7):
    rng = np.random.default_rng(seed)
    daily = np.exp(0.3 * rng.normal(size=D))
    shape = 1 + (np.arange(1, n + 1) / n - 0.6) ** 2
    vols = 1e-4 * np.outer(daily, shape) * np.exp(0.1 * rng.normal(size=(D, n)))
    returns = np.sqrt(vols / n) * rng.standard_normal((D, n))
    return vols, returns


def test_backtest_layout_and_family_adjustment():
    vols, returns = _panel()
    report = run_backtest(vols, returns, ["sip", "ave", "pc"], (0.1, 0.5), window=63)
    assert len(report.losses) == 3 * 2 * 2
    assert len(report.dm) == 2 * 2 * 2
    assert len(report.coverage) == 3 * 2 * 5 * 3
    rows = report.dm + report.coverage
    adjusted, _ = bh_adjust([r["pvalue"] for r in rows])
    np.testing.assert_allclose([r["p_adj"] for r in rows], adjusted)
    assert all(r["T"] == (80 - 63 + 1) * (26 - (3 if r["omega"] == 0.1 else 13)) for r in report.coverage)


def test_backtest_single_method_has_no_dm():
    vols, returns = _panel()
    report = run_backtest(vols, returns, ["sip"], (0.5,), window=63)
    assert report.dm == []
    assert report.coverage


def test_backtest_outputs(tmp_path):
    vols, returns = _panel()
    report = run_backtest(vols, returns, ["sip", "ave"], (0.5,), window=63)
    report.to_json(tmp_path / "r.json")
    report.to_csv(tmp_path / "r.csv")
    header = (tmp_path / "r.csv").read_text().splitlines()[0]
    assert header == "method,metric,omega,D,value,p_adj"


def test_backtest_needs_window():
    vols, returns = _panel(D=30)
    with pytest.raises(DataError):
        run_backtest(vols, returns, ["sip"], (0.5,), window=63)
