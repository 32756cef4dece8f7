"""Extended Kalman filter over the augmented SIR state.

:func:`run_filter` keeps the full belief history; :func:`batch_log_likelihood`
only accumulates the likelihood, through a compiled kernel, and is what the
sampler calls for a whole stage of parameter draws at once.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import AlignmentError, DegenerateUpdateError, DivergenceError, ParameterError
from .model import BETA, I, S, STATE_DIM, StaticParams
from ._fastfilter import loglik_rows
from .observations import ObservationSeries

LOG_2PI = math.log(2.0 * math.pi)


@dataclass
class GaussianBelief:
    mean: np.ndarray
    cov: np.ndarray
    time_index: int = 0

    def __post_init__(self):
        self.mean = np.asarray(self.mean, dtype=float).reshape(STATE_DIM)
        self.cov = np.asarray(self.cov, dtype=float).reshape(STATE_DIM, STATE_DIM)

    @property
    def std(self) -> np.ndarray:
        return np.sqrt(np.clip(np.diag(self.cov), 0.0, None))


@dataclass(frozen=True)
class InitialBeliefConfig:
    """Prior spread of the initial augmented state.

    Absolute standard deviations win when given; otherwise ``sigma_i`` is
    ``i_rel * i0_mean``, ``sigma_s`` equals ``sigma_i`` and ``sigma_beta`` is
    ``beta_rel * beta0_mean``. The removed compartment always starts at 0
    with no uncertainty.
    """

    i_rel: float = 0.5
    beta_rel: float = 0.25
    sigma_s: float | None = None
    sigma_i: float | None = None
    sigma_beta: float | None = None

    def __post_init__(self):
        for name in ("i_rel", "beta_rel", "sigma_s", "sigma_i", "sigma_beta"):
            v = getattr(self, name)
            if v is not None and v < 0:
                raise ParameterError(f"{name} must be non-negative, got {v}")

    def stds(self, i0_mean, beta0_mean):
        """Return ``(sigma_s, sigma_i, sigma_beta)``; broadcasts over arrays."""
        sigma_i = self.i_rel * i0_mean if self.sigma_i is None else self.sigma_i + 0 * i0_mean
        sigma_s = sigma_i if self.sigma_s is None else self.sigma_s + 0 * i0_mean
        sigma_b = self.beta_rel * beta0_mean if self.sigma_beta is None else self.sigma_beta + 0 * beta0_mean
        return sigma_s, sigma_i, sigma_b


@dataclass
class FilterRun:
    """Full history of one filter pass on the computational grid.

    Row ``k`` of the ``forecast_*`` arrays is the belief at grid index ``k``
    before any observation there is assimilated; ``analysis_*`` is after
    (identical rows where there is no observation).
    """

    dt: float
    forecast_means: np.ndarray
    forecast_covs: np.ndarray
    analysis_means: np.ndarray
    analysis_covs: np.ndarray
    loglik: float
    innovation_index: np.ndarray
    innovations: np.ndarray
    innovation_vars: np.ndarray
    loglik_increments: np.ndarray = field(repr=False)

    @property
    def times(self) -> np.ndarray:
        return np.arange(len(self.analysis_means)) * self.dt

    @property
    def beliefs(self) -> list[GaussianBelief]:
        return [
            GaussianBelief(m, c, k)
            for k, (m, c) in enumerate(zip(self.analysis_means, self.analysis_covs))
        ]

    @property
    def final_belief(self) -> GaussianBelief:
        k = len(self.analysis_means) - 1
        return GaussianBelief(self.analysis_means[k].copy(), self.analysis_covs[k].copy(), k)

    def daily(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Analysis means/covariances at whole-day grid points: ``(days, means, covs)``."""
        per_day = steps_per_day(self.dt)
        idx = np.arange(0, len(self.analysis_means), per_day)
        return idx * self.dt, self.analysis_means[idx], self.analysis_covs[idx]


def steps_per_day(dt: float) -> int:
    n = round(1.0 / dt)
    if n < 1 or abs(n * dt - 1.0) > 1e-9:
        raise AlignmentError(f"dt={dt} does not divide one day into whole steps")
    return n


def grid_indices(times, dt: float) -> np.ndarray:
    """Map observation times (days) onto grid indices, checking alignment."""
    times = np.asarray(times, dtype=float)
    idx = np.rint(times / dt)
    bad = np.abs(idx * dt - times) > 1e-9 * np.maximum(1.0, np.abs(times))
    if np.any(bad):
        raise AlignmentError(f"observation time {times[bad][0]} is off the dt={dt} grid")
    if np.any(idx < 0):
        raise AlignmentError("observation times must be non-negative")
    return idx.astype(np.int64)


def _symmetrize(cov):
    return 0.5 * (cov + np.swapaxes(cov, -1, -2))


def propagate(mean, cov, dt, gamma, q_xi):
    s, i, r, beta = mean[..., 0], mean[..., 1], mean[..., 2], mean[..., 3]
    with np.errstate(over="ignore", invalid="ignore"):
        infection = dt * beta * s * i
    removal = dt * gamma * i
    new_mean = np.stack([s - infection, i + infection - removal, r + removal, beta], axis=-1)

    a = np.zeros(mean.shape[:-1] + (STATE_DIM, STATE_DIM))
    a[..., 0, 0] = 1.0 - dt * i * beta
    a[..., 0, 1] = -dt * s * beta
    a[..., 0, 3] = -dt * s * i
    a[..., 1, 0] = dt * i * beta
    a[..., 1, 1] = 1.0 + dt * (s * beta - gamma)
    a[..., 1, 3] = dt * s * i
    a[..., 2, 1] = dt * gamma
    a[..., 2, 2] = 1.0
    a[..., 3, 3] = 1.0

    with np.errstate(over="ignore", invalid="ignore"):
        new_cov = a @ cov @ np.swapaxes(a, -1, -2)
    # B Q B^T with Q = 1 only touches the beta diagonal entry
    new_cov[..., BETA, BETA] += q_xi * q_xi * dt
    return new_mean, _symmetrize(new_cov)


def assimilate(mean, cov, d, rho, q_eps, printed_form=False):
    """Scalar-observation EKF analysis. Returns ``(mean, cov, residual, variance, loglik)``."""
    c_scale = 1.0 if printed_form else rho
    i_f = mean[..., I]
    predicted = rho * i_f
    noise_jac = c_scale * i_f
    pct = np.asarray(c_scale)[..., None] * cov[..., :, I]  # P C^T, shape (..., 4)
    variance = c_scale * pct[..., I] + noise_jac * noise_jac * q_eps * q_eps
    residual = d - predicted
    with np.errstate(divide="ignore", invalid="ignore"):
        gain = pct / variance[..., None]
        loglik = -0.5 * (LOG_2PI + np.log(variance) + residual * residual / variance)
    new_mean = mean + gain * residual[..., None]
    # (I - K C) P = P - K (C P), and C P = (P C^T)^T for symmetric P
    new_cov = cov - gain[..., :, None] * pct[..., None, :]
    return new_mean, _symmetrize(new_cov), residual, variance, loglik


def initial_belief(p: StaticParams, init_cfg: InitialBeliefConfig | None = None) -> GaussianBelief:
    init_cfg = init_cfg or InitialBeliefConfig()
    if not 0.0 <= p.i0_mean <= 1.0:
        raise ParameterError(f"i0_mean must lie in [0, 1], got {p.i0_mean}")
    sigma_s, sigma_i, sigma_b = init_cfg.stds(p.i0_mean, p.beta0_mean)
    mean = np.array([1.0 - p.i0_mean, p.i0_mean, 0.0, p.beta0_mean])
    cov = np.diag([sigma_s**2, sigma_i**2, 0.0, sigma_b**2])
    return GaussianBelief(mean, cov, 0)


def ekf_forecast(belief: GaussianBelief, p: StaticParams) -> GaussianBelief:
    mean, cov = propagate(belief.mean, belief.cov, p.dt, p.gamma, p.q_xi)
    k = belief.time_index + 1
    if not (np.all(np.isfinite(mean)) and np.all(np.isfinite(cov))):
        raise DivergenceError("non-finite forecast", step=k)
    return GaussianBelief(mean, cov, k)


def ekf_update(
    belief: GaussianBelief, d: float, p: StaticParams, printed_form: bool = False
) -> tuple[GaussianBelief, float]:
    """Assimilate one observation; returns the analysis belief and ``log p(d | past)``."""
    mean, cov, _, variance, loglik = assimilate(
        belief.mean, belief.cov, float(d), p.rho, p.q_eps, printed_form
    )
    if not (variance > 0 and np.isfinite(variance)):
        raise DegenerateUpdateError(
            f"innovation variance {variance!r} at grid index {belief.time_index}"
        )
    return GaussianBelief(mean, cov, belief.time_index), float(loglik)


def run_filter(
    p: StaticParams,
    obs: ObservationSeries,
    init: GaussianBelief,
    n_steps: int | None = None,
    printed_form: bool = False,
) -> FilterRun:
    """Forecast along the grid and assimilate each observation at its grid index.

    The run covers grid indices ``0 .. n_steps``; by default it stops at the
    last observation.
    """
    obs_idx = grid_indices(obs.times, p.dt)
    if len(obs_idx) and np.any(np.diff(obs_idx) < 0):
        raise AlignmentError("observation times must be sorted")
    last = int(obs_idx[-1]) if len(obs_idx) else 0
    if n_steps is None:
        n_steps = last
    if n_steps < last:
        raise AlignmentError(f"n_steps={n_steps} ends before the last observation at index {last}")

    n = n_steps + 1
    f_means = np.empty((n, STATE_DIM))
    f_covs = np.empty((n, STATE_DIM, STATE_DIM))
    a_means = np.empty((n, STATE_DIM))
    a_covs = np.empty((n, STATE_DIM, STATE_DIM))
    n_obs = len(obs_idx)
    residuals = np.empty(n_obs)
    variances = np.empty(n_obs)
    increments = np.empty(n_obs)

    mean = np.asarray(init.mean, dtype=float).copy()
    cov = np.asarray(init.cov, dtype=float).copy()
    j = 0
    for k in range(n):
        if k > 0:
            mean, cov = propagate(mean, cov, p.dt, p.gamma, p.q_xi)
            if not (np.all(np.isfinite(mean)) and np.all(np.isfinite(cov))):
                raise DivergenceError("non-finite forecast", step=k)
        f_means[k] = mean
        f_covs[k] = cov
        while j < n_obs and obs_idx[j] == k:
            mean, cov, residuals[j], variances[j], increments[j] = assimilate(
                mean, cov, obs.values[j], p.rho, p.q_eps, printed_form
            )
            if not (variances[j] > 0 and np.isfinite(variances[j])):
                raise DegenerateUpdateError(
                    f"innovation variance {variances[j]!r} at grid index {k}"
                )
            j += 1
        a_means[k] = mean
        a_covs[k] = cov

    return FilterRun(
        dt=p.dt,
        forecast_means=f_means,
        forecast_covs=f_covs,
        analysis_means=a_means,
        analysis_covs=a_covs,
        loglik=float(increments.sum()),
        innovation_index=obs_idx,
        innovations=residuals,
        innovation_vars=variances,
        loglik_increments=increments,
    )


def batch_log_likelihood(
    theta: np.ndarray,
    obs: ObservationSeries,
    base: StaticParams,
    init_cfg: InitialBeliefConfig | None = None,
    printed_form: bool = False,
) -> np.ndarray:
    """Filter log-likelihood for each row ``(rho, q_xi, beta0_mean, i0_mean)`` of ``theta``.

    ``gamma``, ``q_eps`` and ``dt`` come from ``base``. Rows that diverge or
    hit a non-positive innovation variance get ``-inf``.
    """
    init_cfg = init_cfg or InitialBeliefConfig()
    theta = np.ascontiguousarray(np.atleast_2d(theta), dtype=float)
    out = np.full(len(theta), -np.inf)
    rows = np.flatnonzero(np.isfinite(theta).all(axis=1) & (theta[:, 3] >= 0) & (theta[:, 3] <= 1))
    if rows.size == 0:
        return out
    sub = np.ascontiguousarray(theta[rows])
    sigma_s, sigma_i, sigma_b = init_cfg.stds(sub[:, 3], sub[:, 2])
    obs_idx = grid_indices(obs.times, base.dt)
    last = int(obs_idx[-1]) if len(obs_idx) else 0
    out[rows] = loglik_rows(
        sub,
        np.ascontiguousarray(sigma_s**2, dtype=float),
        np.ascontiguousarray(sigma_i**2, dtype=float),
        np.ascontiguousarray(sigma_b**2, dtype=float),
        obs_idx,
        np.ascontiguousarray(obs.values),
        last,
        base.dt,
        base.gamma,
        base.q_eps,
        printed_form,
    )
    return out
