"""Synthetic high-frequency panels: HAR daily factor, diurnal spot variance,
Euler-discretised jump diffusion observed with Gaussian noise.

One trading day is the unit interval with ``m`` ticks at ``t_s = s / m``;
all variances are in daily units.
"""

from __future__ import annotations

import dataclasses
import hashlib
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, NonstationaryHARError, PositivityError


@dataclass(frozen=True)
class DgpParams:
    mu: float = 0.05 / 252
    gamma0: float = 0.04 / 252
    gamma1: float = 0.5 / 252
    b0: float = 0.5
    b1: float = 0.372
    b2: float = 0.343
    b3: float = 0.224
    zeta_sd: float = 1.0
    noise_sd: float = 0.0005
    jump_mean: float = -0.01
    jump_sd: float = 0.02
    jump_intensity: float = 36 / 252
    eps_scale_sd: float = 0.01
    m: int = 23_400
    n: int = 78
    D_total: int = 200
    seed: int = 0
    burn_in: int = 500
    x0: float = 1.0
    # "tick": redraw only the non-positive entries; "day": redraw the whole day
    positivity: str = "tick"
    max_retries: int = 10_000

    def validate(self) -> "DgpParams":
        if not (self.m >= self.n >= 2):
            raise ConfigError(f"need m >= n >= 2, got m={self.m}, n={self.n}")
        if self.D_total < 1:
            raise ConfigError("D_total must be >= 1")
        if self.burn_in < 22:
            raise ConfigError("burn_in must be >= 22 (HAR uses 22 lags)")
        for name in ("zeta_sd", "noise_sd", "jump_sd", "eps_scale_sd", "jump_intensity"):
            if getattr(self, name) < 0:
                raise ConfigError(f"{name} must be >= 0")
        if self.positivity not in ("tick", "day"):
            raise ConfigError("positivity must be 'tick' or 'day'")
        if self.max_retries < 1:
            raise ConfigError("max_retries must be >= 1")
        return self

    def replace(self, **changes) -> "DgpParams":
        return dataclasses.replace(self, **changes)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


@dataclass(frozen=True)
class TickDay:
    """Noisy log prices ``y`` and latent log prices ``x`` on ``s = 0..m``."""

    day: int
    y: np.ndarray
    x: np.ndarray
    jumps: tuple = ()

    @property
    def m(self) -> int:
        return self.y.shape[0] - 1

    @property
    def times(self) -> np.ndarray:
        return np.arange(self.m + 1) / self.m


@dataclass(frozen=True)
class SimPanel:
    params: DgpParams
    ticks: tuple
    true_vol: np.ndarray
    daily_factor: np.ndarray
    jump_times: tuple = field(default=())

    @property
    def prices(self) -> np.ndarray:
        """``D_total x (m + 1)`` array of observed log prices."""
        return np.vstack([d.y for d in self.ticks])

    def digest(self) -> str:
        h = hashlib.sha256()
        for d in self.ticks:
            h.update(np.ascontiguousarray(d.y).tobytes())
        h.update(np.ascontiguousarray(self.true_vol).tobytes())
        h.update(np.ascontiguousarray(self.daily_factor).tobytes())
        return h.hexdigest()


def diurnal(t, params: DgpParams):
    t = np.asarray(t, dtype=float)
    return params.gamma0 + params.gamma1 * (t - 0.6) ** 2


def eps_scale(t):
    """q(t): the standard deviation multiplier of the spot-variance noise."""
    t = np.asarray(t, dtype=float)
    return np.sqrt(0.1 + 0.5 * (2.0 * t - 1.0) ** 2)


def har_mean(params: DgpParams) -> float:
    persistence = params.b1 + params.b2 + params.b3
    if persistence >= 1.0:
        raise NonstationaryHARError(
            f"b1 + b2 + b3 = {persistence:.6g} >= 1: HAR recursion is not stationary"
        )
    return params.b0 / (1.0 - persistence)


def gen_har_factor(params: DgpParams, rng: np.random.Generator) -> np.ndarray:
    """Daily factor sigma~_i from the HAR(1, 5, 22) recursion.

    History starts at the unconditional mean and the first ``burn_in``
    values are discarded.
    """
    mean = har_mean(params)
    total = params.burn_in + params.D_total
    shocks = params.zeta_sd * rng.standard_normal(total)
    hist = np.full(22 + total, mean)
    for i in range(total):
        pos = 22 + i
        hist[pos] = (
            params.b0
            + params.b1 * hist[pos - 1]
            + params.b2 * hist[pos - 5:pos].mean()
            + params.b3 * hist[pos - 22:pos].mean()
            + shocks[i]
        )
    return hist[22 + params.burn_in:].copy()


def gen_spot_vol_day(sigma_tilde: float, params: DgpParams, rng: np.random.Generator) -> np.ndarray:
    """Spot variance at every tick: ``sigma~^2 h(t) + q(t) xi``, all > 0."""
    t = np.arange(params.m + 1) / params.m
    base = sigma_tilde ** 2 * diurnal(t, params)
    scale = eps_scale(t) * params.eps_scale_sd
    vol = base + scale * rng.standard_normal(t.shape[0])
    bad = vol <= 0.0
    if not bad.any():
        return vol
    if params.eps_scale_sd == 0.0:
        raise PositivityError("non-positive diurnal level and no noise to redraw")
    for _ in range(params.max_retries):
        if params.positivity == "day":
            vol = base + scale * rng.standard_normal(t.shape[0])
            bad = vol <= 0.0
        else:
            idx = np.flatnonzero(bad)
            vol[idx] = base[idx] + scale[idx] * rng.standard_normal(idx.shape[0])
            bad = vol <= 0.0
        if not bad.any():
            return vol
    raise PositivityError(
        f"spot variance still non-positive after {params.max_retries} redraws "
        f"(sigma_tilde={sigma_tilde:.4g}, mode={params.positivity})"
    )


def gen_tick_day(
    vol_path: np.ndarray,
    params: DgpParams,
    rng: np.random.Generator,
    x_start: float | None = None,
    day: int = 0,
) -> TickDay:
    m = params.m
    vol_path = np.asarray(vol_path, dtype=float)
    if vol_path.shape != (m + 1,):
        raise ConfigError(f"vol_path must have length m + 1 = {m + 1}")
    dt = 1.0 / m
    x_start = params.x0 if x_start is None else x_start

    z = rng.standard_normal(m)
    counts = rng.poisson(params.jump_intensity * dt, m)
    n_jumps = int(counts.sum())
    sizes = rng.normal(params.jump_mean, params.jump_sd, n_jumps) if n_jumps else np.empty(0)
    noise = params.noise_sd * rng.standard_normal(m + 1)

    sig2 = vol_path[:-1]
    incr = (params.mu - 0.5 * sig2) * dt + np.sqrt(sig2 * dt) * z
    jumps = ()
    if n_jumps:
        steps = np.repeat(np.arange(m), counts)
        np.add.at(incr, steps, sizes)
        jumps = tuple(((s + 1) / m, float(j)) for s, j in zip(steps, sizes))

    x = np.empty(m + 1)
    x[0] = x_start
    np.cumsum(incr, out=x[1:])
    x[1:] += x_start
    return TickDay(day=day, y=x + noise, x=x, jumps=jumps)


def grid_index(m: int, n: int) -> np.ndarray:
    """Tick indices of the intraday grid ``t_j = j / n``, ``j = 1..n``."""
    return np.rint(np.arange(1, n + 1) * (m / n)).astype(np.int64)


def gen_panel(params: DgpParams, rng: np.random.Generator | None = None) -> SimPanel:
    params.validate()
    if rng is None:
        rng = np.random.default_rng(params.seed)
    factor = gen_har_factor(params, rng)
    grid = grid_index(params.m, params.n)
    ticks = []
    true_vol = np.empty((params.D_total, params.n))
    x_prev = params.x0
    for i, sig in enumerate(factor):
        vol = gen_spot_vol_day(sig, params, rng)
        day = gen_tick_day(vol, params, rng, x_start=x_prev, day=i)
        x_prev = day.x[-1]
        ticks.append(day)
        true_vol[i] = vol[grid]
    return SimPanel(
        params=params,
        ticks=tuple(ticks),
        true_vol=true_vol,
        daily_factor=factor,
        jump_times=tuple(d.jumps for d in ticks),
    )
