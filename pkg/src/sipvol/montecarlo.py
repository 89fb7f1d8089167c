"""Monte Carlo comparison of predictors on simulated panels.

Each replication simulates ``max(D_grid)`` days, estimates the spot-variance
matrix once, and scores every (method, D, omega) cell on the last ``D`` days
against the true spot variance of the final day.
"""

from __future__ import annotations

import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .errors import NumericalError, DataError
from .evaluation import mspe
from .lowrank import RankPolicy, VolMatrix, predict
from .simulate import DgpParams, gen_panel
from .spot_vol import PreAvgConfig, spot_matrix

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class MCSettings:
    params: DgpParams = DgpParams()
    spot: PreAvgConfig = PreAvgConfig()
    rank: RankPolicy = RankPolicy()
    D_grid: tuple = (50, 100, 150, 200)
    omega_grid: tuple = (0.1, 0.5)
    methods: tuple = ("sip", "ave", "ar1", "pc", "har_d")
    reps: int = 500
    seed: int = 0
    normalization: str = "per_n"


@dataclass
class MCResult:
    settings: MCSettings
    # (rep, method, D, omega) -> MSPE; NaN where the method failed
    records: list = field(default_factory=list)

    def table(self):
        """One row per (method, D, omega): mean, standard error, successful reps."""
        cells = {}
        for rep, method, D, omega, value in self.records:
            cells.setdefault((method, D, omega), []).append(value)
        rows = []
        for (method, D, omega), vals in sorted(cells.items()):
            arr = np.asarray(vals, dtype=float)
            ok = arr[np.isfinite(arr)]
            se = float(ok.std(ddof=1) / np.sqrt(ok.size)) if ok.size > 1 else float("nan")
            rows.append({
                "method": method,
                "D": D,
                "omega": omega,
                "mspe": float(ok.mean()) if ok.size else float("nan"),
                "se": se,
                "reps": int(ok.size),
            })
        return rows

    def mean(self, method, D, omega) -> float:
        for row in self.table():
            if row["method"] == method and row["D"] == D and row["omega"] == omega:
                return row["mspe"]
        raise KeyError((method, D, omega))

    def per_rep(self, method, D, omega) -> np.ndarray:
        vals = sorted((r, v) for r, m, d, o, v in self.records if (m, d, o) == (method, D, omega))
        return np.array([v for _, v in vals])


def replication_rng(seed: int, rep: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(rep,)))


def run_replication(settings: MCSettings, rep: int) -> list:
    params = settings.params.replace(D_total=max(settings.D_grid))
    panel = gen_panel(params, replication_rng(settings.seed, rep))
    est, _ = spot_matrix(panel.prices, params.n, settings.spot)
    truth = panel.true_vol[-1]
    out = []
    for D in settings.D_grid:
        block = est[-D:]
        for omega in settings.omega_grid:
            vm = VolMatrix.from_omega(block, omega)
            for method in settings.methods:
                try:
                    pred = predict(method, vm, settings.rank)
                    value = mspe(pred.values, truth[vm.n1:], settings.normalization, n=params.n)
                except (NumericalError, DataError) as exc:
                    logger.warning("rep %d %s D=%d omega=%g failed: %s", rep, method, D, omega, exc)
                    value = float("nan")
                out.append((rep, method, D, omega, value))
    return out


def _run_one(args):
    return run_replication(*args)


def run(settings: MCSettings, threads: int = 1) -> MCResult:
    """Run all replications; output does not depend on ``threads``."""
    jobs = [(settings, rep) for rep in range(settings.reps)]
    if threads > 1:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            chunks = list(pool.map(_run_one, jobs))
    else:
        chunks = [_run_one(j) for j in jobs]
    return MCResult(settings, [rec for chunk in chunks for rec in chunk])
