"""Intraday spot-volatility prediction by low-rank block completion.

Pipeline: simulate or load tick prices, estimate the day x intraday
spot-variance matrix with a jump-robust pre-averaging estimator, then
predict the unobserved remainder of the last day.
"""

__version__ = "0.1.0"

from .errors import (
    ConfigError,
    DataError,
    DegenerateTestError,
    EmptyWindowError,
    IllConditionedError,
    NonstationaryHARError,
    NumericalError,
    PositivityError,
    SipvolError,
)
from .evaluation import (
    BacktestReport,
    bh_adjust,
    dm_test,
    dq_test,
    lrcc_test,
    lruc_test,
    mspe,
    qlike,
    run_backtest,
)
from .lowrank import (
    Prediction,
    RankPolicy,
    VolMatrix,
    ave_predict,
    ar1_predict,
    har_d_predict,
    pc_predict,
    predict,
    select_rank,
    sip_predict,
    truncated_svd,
)
from .simulate import DgpParams, SimPanel, gen_panel
from .spot_vol import PreAvgConfig, SpotCurve, spot_curve, spot_estimate, spot_matrix

__all__ = [name for name in dir() if not name.startswith("_")]
