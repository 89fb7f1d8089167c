"""``sipvol`` command line: simulate, spot, predict, backtest.

Exit codes: 0 success, 2 usage or configuration error, 3 data error,
4 numerical error.
"""

from __future__ import annotations

import argparse
import logging
import sys
import time
from pathlib import Path

from . import __version__, io, montecarlo
from .config import RunConfig, load
from .errors import ConfigError, DataError, NumericalError, SipvolError
from .evaluation import run_backtest
from .lowrank import VolMatrix, predict, resolve_rank
from .simulate import gen_panel
from .spot_vol import intraday_returns, spot_matrix

logger = logging.getLogger("sipvol")


def _csv_list(cast):
    def parse(text):
        try:
            return tuple(cast(p.strip()) for p in text.split(",") if p.strip())
        except ValueError as exc:
            raise argparse.ArgumentTypeError(str(exc)) from exc
    return parse


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise ConfigError(message)


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="INI-style run configuration")
    common.add_argument("--set", action="append", default=[], metavar="SECTION.KEY=VALUE",
                        help="override one configuration entry (repeatable)")
    common.add_argument("--out-dir", help="output directory (env SIPVOL_OUT_DIR)")
    common.add_argument("--threads", type=int, help="worker processes (env SIPVOL_THREADS)")
    common.add_argument("--seed", type=int, help="master seed")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = _Parser(prog="sipvol", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"sipvol {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("simulate", parents=[common], help="simulate a tick panel")
    p.add_argument("--days", type=int, help="number of trading days")
    p.add_argument("--ticks", type=int, help="ticks per day (m)")
    p.add_argument("--grid", type=int, help="intraday grid size (n)")

    p = sub.add_parser("spot", parents=[common], help="estimate the spot-variance matrix")
    p.add_argument("--ticks", dest="ticks_path", help="tick CSV (default OUT_DIR/ticks.csv)")
    p.add_argument("--grid", type=int, help="intraday grid size (n)")
    p.add_argument("--k", type=int, help="fixed pre-averaging window")

    p = sub.add_parser("predict", parents=[common], help="predict the rest of the last day")
    p.add_argument("--volmatrix", help="volatility matrix CSV (default OUT_DIR/volmatrix.csv)")
    p.add_argument("--omega", type=float, default=0.5, help="observed fraction of the last day")
    p.add_argument("--methods", type=_csv_list(str))
    p.add_argument("--days", type=int, help="use only the last D rows")
    p.add_argument("--rank", help="fixed rank, or 'ratio' / 'gap'")
    p.add_argument("--r-max", type=int)

    p = sub.add_parser("backtest", parents=[common], help="Monte Carlo grid or rolling evaluation")
    p.add_argument("--mode", choices=("montecarlo", "rolling"), default="montecarlo")
    p.add_argument("--reps", type=int)
    p.add_argument("--D-grid", dest="D_grid", type=_csv_list(int))
    p.add_argument("--omega-grid", type=_csv_list(float))
    p.add_argument("--ticks", type=int, help="ticks per day (m) for simulated panels")
    p.add_argument("--grid", type=int, help="intraday grid size (n) for simulated panels")
    p.add_argument("--methods", type=_csv_list(str))
    p.add_argument("--volmatrix", help="rolling mode: volatility matrix CSV")
    p.add_argument("--tick-file", help="rolling mode: tick CSV used for returns")
    p.add_argument("--window", type=int)
    return parser


def _flag_overrides(args) -> dict:
    out = {}
    for item in args.set:
        key, sep, value = item.partition("=")
        if not sep or "." not in key:
            raise ConfigError(f"--set expects SECTION.KEY=VALUE, got {item!r}")
        out[key.strip()] = value
    simple = {
        "out_dir": "run.out_dir", "threads": "run.threads", "seed": "run.seed",
        "days": "dgp.D_total", "grid": "dgp.n", "k": "spot.k_m", "r_max": "rank.r_max",
        "reps": "run.reps", "D_grid": "run.D_grid", "window": "run.window", "methods": "run.methods",
    }
    for attr, key in simple.items():
        value = getattr(args, attr, None)
        if value is not None:
            out[key] = value
    if args.command == "predict" and args.days is not None:
        out.pop("dgp.D_total")
    if args.command in ("simulate", "backtest") and isinstance(getattr(args, "ticks", None), int):
        out["dgp.m"] = args.ticks
    if getattr(args, "omega_grid", None) is not None:
        out["run.mc_omega_grid"] = args.omega_grid
    rank = getattr(args, "rank", None)
    if rank is not None:
        if rank in ("ratio", "gap"):
            out["rank.mode"] = rank
        else:
            out["rank.mode"] = "fixed"
            out["rank.r"] = rank
    return out


def _out_dir(cfg: RunConfig) -> Path:
    return io.ensure_dir(cfg.run.out_dir)


def cmd_simulate(cfg: RunConfig, args) -> int:
    params = cfg.params
    panel = gen_panel(params)
    out = _out_dir(cfg)
    io.write_ticks(out / "ticks.csv", panel.prices)
    io.write_volmatrix(out / "true_vol.csv", panel.true_vol)
    io.write_json(out / "params.json", {
        "seed": cfg.run.seed,
        "dgp": params.to_dict(),
        "digest": panel.digest(),
        "jumps_per_day": [len(j) for j in panel.jump_times],
        "daily_factor": panel.daily_factor,
        "version": __version__,
    })
    logger.info("wrote %d days x %d ticks to %s", params.D_total, params.m, out)
    return 0


def cmd_spot(cfg: RunConfig, args) -> int:
    out = _out_dir(cfg)
    path = args.ticks_path or out / "ticks.csv"
    prices = io.read_ticks(path)
    n = cfg.dgp.n
    sidecar = Path(path).with_name("params.json")
    if args.grid is None and not any(k.startswith("dgp.n=") for k in args.set) and sidecar.exists():
        n = int(io.read_json(sidecar)["dgp"]["n"])
    if prices.shape[1] - 1 < n:
        raise ConfigError(f"grid size n={n} exceeds ticks per day m={prices.shape[1] - 1}")
    matrix, diags = spot_matrix(prices, n, cfg.spot, threads=cfg.run.threads)
    io.write_volmatrix(out / "volmatrix.csv", matrix)
    io.write_json(out / "spot_diagnostics.json", {
        "seed": cfg.run.seed,
        "source": str(path),
        "n": n,
        "m": prices.shape[1] - 1,
        "config": cfg.spot.__dict__,
        "days": [dict(day=i, **d) for i, d in enumerate(diags)],
    })
    logger.info("estimated %d x %d spot-variance matrix", *matrix.shape)
    return 0


def cmd_predict(cfg: RunConfig, args) -> int:
    out = _out_dir(cfg)
    matrix, grid, days = io.read_volmatrix(args.volmatrix or out / "volmatrix.csv")
    if args.days is not None:
        if not (2 <= args.days <= matrix.shape[0]):
            raise ConfigError(f"--days must lie in 2..{matrix.shape[0]}")
        matrix, days = matrix[-args.days:], days[-args.days:]
    vm = VolMatrix.from_omega(matrix, args.omega)
    results, failures, last_exc = [], [], None
    for method in cfg.run.methods:
        try:
            pred = predict(method, vm, cfg.rank)
        except (DataError, NumericalError) as exc:
            logger.warning("%s failed: %s", method, exc)
            failures.append({"method": method, "error": str(exc)})
            last_exc = exc
            continue
        row = pred.to_dict()
        row["grid"] = grid[vm.n1:]
        results.append(row)
    if not results:
        raise last_exc
    io.write_json(out / "predictions.json", {
        "seed": cfg.run.seed,
        "omega": args.omega,
        "n1": vm.n1,
        "D": vm.D,
        "target_day": days[-1],
        "rank_policy": cfg.rank.__dict__,
        "selected_rank": resolve_rank(vm, cfg.rank),
        "predictions": results,
        "failures": failures,
    })
    return 0


MC_COLUMNS = ["method", "metric", "omega", "D", "value", "p_adj", "se", "reps"]


def _mc_rows(result, keep):
    rows = []
    for r in result.table():
        if keep(r):
            rows.append([r["method"], "MSPE", r["omega"], r["D"], r["mspe"], "", r["se"], r["reps"]])
    return rows


def cmd_backtest(cfg: RunConfig, args) -> int:
    out = _out_dir(cfg)
    run = cfg.run
    if args.mode == "rolling":
        matrix, _, _ = io.read_volmatrix(args.volmatrix or out / "volmatrix.csv")
        prices = io.read_ticks(args.tick_file or out / "ticks.csv")
        n = matrix.shape[1]
        if prices.shape[0] != matrix.shape[0]:
            raise ConfigError("tick file and volatility matrix cover different numbers of days")
        returns = intraday_returns(prices, n)
        report = run_backtest(matrix, returns, run.methods, run.omega_list, run.window,
                              run.q0_list, cfg.rank)
        payload = report.to_dict()
        payload["seed"] = run.seed
        io.write_json(out / "report.json", payload)
        report.to_csv(out / "report_tables.csv")
        return 0

    omegas = tuple(sorted(set(run.mc_omega_grid) | set(run.plot_omega)))
    Ds = tuple(sorted(set(run.D_grid) | set(run.plot_D)))
    settings = montecarlo.MCSettings(
        params=cfg.params, spot=cfg.spot, rank=cfg.rank, D_grid=Ds, omega_grid=omegas,
        methods=run.methods, reps=run.reps, seed=run.seed, normalization=run.normalization,
    )
    start = time.perf_counter()
    result = montecarlo.run(settings, threads=run.threads)
    logger.info("%d replications in %.1f s", run.reps, time.perf_counter() - start)
    io.write_rows(out / "mspe_grid.csv", _mc_rows(result, lambda r: True), MC_COLUMNS)
    io.write_rows(out / "mspe_vs_D.csv", _mc_rows(result, lambda r: r["omega"] in run.plot_omega), MC_COLUMNS)
    io.write_rows(out / "mspe_vs_omega.csv", _mc_rows(result, lambda r: r["D"] in run.plot_D), MC_COLUMNS)
    io.write_json(out / "montecarlo.json", {
        "seed": run.seed,
        "reps": run.reps,
        "dgp": settings.params.to_dict(),
        "D_grid": Ds,
        "omega_grid": omegas,
        "methods": run.methods,
        "normalization": run.normalization,
    })
    return 0


COMMANDS = {
    "simulate": cmd_simulate,
    "spot": cmd_spot,
    "predict": cmd_predict,
    "backtest": cmd_backtest,
}


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        logging.basicConfig(
            level=logging.INFO if args.verbose else logging.WARNING,
            format="%(levelname)s %(name)s: %(message)s",
        )
        cfg = load(args.config, _flag_overrides(args))
        return COMMANDS[args.command](cfg, args)
    except SipvolError as exc:
        print(f"sipvol: error: {exc}", file=sys.stderr)
        return exc.exit_code
    except OSError as exc:
        print(f"sipvol: error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
