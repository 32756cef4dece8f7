"""Synthetic epidemics with a prescribed or random infection rate.

Four scenario kinds are supported:

* ``random_walk`` - beta follows the same Wiener-increment random walk the
  filter assumes, so every static parameter has a ground truth.
* ``seasonal`` - beta is a one-year sinusoid.
* ``lockdown`` - beta drops sharply then relaxes slowly (two logistic steps).
* ``constant`` - beta never changes.

Compartments are integrated with forward Euler on the ``dt`` grid and
observed once per day through ``rho * i * (1 + eps)``.
"""
from __future__ import annotations

import datetime
import logging
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.special import expit

from .errors import ConfigError
from .filtering import steps_per_day
from .model import DEFAULT_DT, DEFAULT_GAMMA
from .observations import ObservationSeries

log = logging.getLogger(__name__)

KINDS = ("random_walk", "seasonal", "lockdown", "constant")


@dataclass(frozen=True)
class ScenarioConfig:
    kind: str = "random_walk"
    duration: int = 365
    obs_per_day: int = 1
    rho_true: float = 0.25
    q_eps_true: float = 0.05
    i0: float = 1e-3
    gamma: float = DEFAULT_GAMMA
    dt: float = DEFAULT_DT
    seed: int = 0
    start_date: datetime.date = datetime.date(2020, 4, 1)
    # random_walk / constant
    beta0: float = 0.12
    q_xi_true: float = 0.005
    # seasonal: beta(t) = offset + amplitude * sin(2 pi t / period + phase)
    seasonal_beta0: float = 0.1551
    amplitude: float = 0.04
    period: float = 365.0
    phase: float = 0.0
    # lockdown: beta(t) = base - drop * (sig((t - t1) / w1) - sig((t - t2) / w2))
    lockdown_beta0: float = 0.14
    drop: float = 0.07
    t1: float = 60.0
    w1: float = 2.0
    t2: float = 180.0
    w2: float = 30.0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigError(f"kind must be one of {KINDS}, got {self.kind!r}")
        if self.duration < 1:
            raise ConfigError(f"duration must be >= 1, got {self.duration}")
        if self.obs_per_day < 1:
            raise ConfigError(f"obs_per_day must be >= 1, got {self.obs_per_day}")
        for name in ("rho_true", "q_eps_true", "i0", "gamma", "beta0", "q_xi_true", "period", "w1", "w2"):
            if getattr(self, name) < 0:
                raise ConfigError(f"{name} must be non-negative, got {getattr(self, name)}")
        if not self.dt > 0:
            raise ConfigError(f"dt must be positive, got {self.dt}")
        if not 0 <= self.i0 <= 1:
            raise ConfigError(f"i0 must lie in [0, 1], got {self.i0}")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["start_date"] = self.start_date.isoformat()
        return d


@dataclass
class SyntheticTruth:
    """Ground-truth trajectory on the grid plus daily observations."""

    config: ScenarioConfig
    times: np.ndarray  # grid times, days
    states: np.ndarray  # (n_grid, 4): s, i, r, beta
    observations: ObservationSeries
    eps: np.ndarray  # recorded measurement-noise draws
    obs_index: np.ndarray  # grid index of each observation
    n_clipped: int = 0
    extra: dict = field(default_factory=dict)

    def daily(self) -> tuple[np.ndarray, np.ndarray]:
        per_day = steps_per_day(self.config.dt)
        idx = np.arange(0, len(self.times), per_day)
        return self.times[idx], self.states[idx]


def seasonal_beta(t, cfg: ScenarioConfig):
    offset = cfg.seasonal_beta0 - cfg.amplitude * np.sin(cfg.phase)
    return offset + cfg.amplitude * np.sin(2.0 * np.pi * np.asarray(t) / cfg.period + cfg.phase)


def lockdown_beta(t, cfg: ScenarioConfig):
    t = np.asarray(t, dtype=float)
    base = lockdown_base(cfg)
    return base - cfg.drop * (expit((t - cfg.t1) / cfg.w1) - expit((t - cfg.t2) / cfg.w2))


def lockdown_base(cfg: ScenarioConfig) -> float:
    """Baseline rate chosen so that ``beta(0)`` equals ``lockdown_beta0`` exactly."""
    return cfg.lockdown_beta0 + cfg.drop * (expit(-cfg.t1 / cfg.w1) - expit(-cfg.t2 / cfg.w2))


def integrate_sir(s0, i0, r0, beta, gamma, dt):
    """Forward-Euler SIR with a prescribed beta per step; returns (n+1, 3)."""
    n = len(beta)
    out = np.empty((n + 1, 3))
    s, i, r = s0, i0, r0
    out[0] = s, i, r
    for k in range(n):
        infection = dt * beta[k] * s * i
        removal = dt * gamma * i
        s, i, r = s - infection, i + infection - removal, r + removal
        out[k + 1] = s, i, r
    return out


def _n_steps(cfg: ScenarioConfig) -> int:
    return cfg.duration * steps_per_day(cfg.dt)


def _random_walk_path(cfg: ScenarioConfig, rng: np.random.Generator) -> tuple[np.ndarray, int]:
    n = _n_steps(cfg)
    draws = rng.standard_normal(n)
    beta = np.empty(n + 1)
    beta[0] = cfg.beta0
    scale = cfg.q_xi_true * np.sqrt(cfg.dt)
    clipped = 0
    for k in range(n):
        b = beta[k] + scale * draws[k]
        if b < 0.0:
            b = 0.0
            clipped += 1
        beta[k + 1] = b
    if clipped:
        log.warning("beta clipped at 0 on %d of %d steps (seed %d)", clipped, n, cfg.seed)
    return beta, clipped


def _build(cfg: ScenarioConfig, beta: np.ndarray, rng: np.random.Generator, n_clipped=0) -> SyntheticTruth:
    if np.any(beta < 0):
        raise ConfigError(f"scenario parameters make beta negative (min {beta.min():.4g})")
    comps = integrate_sir(1.0 - cfg.i0, cfg.i0, 0.0, beta[:-1], cfg.gamma, cfg.dt)
    states = np.column_stack([comps, beta])
    times = np.arange(len(beta)) * cfg.dt
    obs = observe_truth(states, cfg.rho_true, cfg.q_eps_true, rng, cfg.dt, cfg.obs_per_day, cfg.duration)
    series, eps, obs_index = obs
    series = ObservationSeries(series.times, series.values, cfg.start_date)
    return SyntheticTruth(cfg, times, states, series, eps, obs_index, n_clipped)


def observe_truth(
    states: np.ndarray,
    rho_true: float,
    q_eps_true: float,
    seed_or_rng,
    dt: float = DEFAULT_DT,
    obs_per_day: int = 1,
    n_days: int | None = None,
) -> tuple[ObservationSeries, np.ndarray, np.ndarray]:
    """Noisy partial observations of the infectious fraction.

    Observations are taken ``obs_per_day`` times a day starting at day 0 and
    ending before ``n_days`` (default: every whole day in the trajectory).
    Returns the series, the recorded noise draws and the grid indices.
    """
    states = np.asarray(states, dtype=float)
    if len(states) == 0:
        raise ConfigError("cannot observe an empty trajectory")
    rng = np.random.default_rng(seed_or_rng)
    per_day = steps_per_day(dt)
    stride = per_day // obs_per_day
    if stride * obs_per_day != per_day:
        raise ConfigError(f"obs_per_day={obs_per_day} does not divide the {per_day} steps per day")
    if n_days is None:
        n_days = (len(states) - 1) // per_day + 1
    idx = np.arange(0, min(n_days * per_day, len(states)), stride)
    eps = q_eps_true * rng.standard_normal(idx.size)
    values = rho_true * states[idx, 1] * (1.0 + eps)
    return ObservationSeries(idx * dt, values), eps, idx


def generate_random_walk(cfg: ScenarioConfig) -> SyntheticTruth:
    rng = np.random.default_rng(cfg.seed)
    beta, clipped = _random_walk_path(cfg, rng)
    return _build(cfg, beta, rng, clipped)


def generate_constant(cfg: ScenarioConfig) -> SyntheticTruth:
    rng = np.random.default_rng(cfg.seed)
    beta = np.full(_n_steps(cfg) + 1, cfg.beta0)
    return _build(cfg, beta, rng)


def generate_seasonal(cfg: ScenarioConfig) -> SyntheticTruth:
    if cfg.seasonal_beta0 - cfg.amplitude * np.sin(cfg.phase) - abs(cfg.amplitude) < 0:
        raise ConfigError("seasonal amplitude makes beta negative")
    rng = np.random.default_rng(cfg.seed)
    t = np.arange(_n_steps(cfg) + 1) * cfg.dt
    return _build(cfg, seasonal_beta(t, cfg), rng)


def generate_lockdown(cfg: ScenarioConfig) -> SyntheticTruth:
    if lockdown_base(cfg) - cfg.drop < 0:
        raise ConfigError("lockdown drop makes beta negative")
    rng = np.random.default_rng(cfg.seed)
    t = np.arange(_n_steps(cfg) + 1) * cfg.dt
    return _build(cfg, lockdown_beta(t, cfg), rng)


_GENERATORS = {
    "random_walk": generate_random_walk,
    "seasonal": generate_seasonal,
    "lockdown": generate_lockdown,
    "constant": generate_constant,
}


def generate(cfg: ScenarioConfig) -> SyntheticTruth:
    return _GENERATORS[cfg.kind](cfg)
