"""Open-loop forecasts: propagate a belief with no further observations."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import DivergenceError, ParameterError
from .filtering import GaussianBelief, propagate, steps_per_day
from .model import StaticParams, re_moments


@dataclass
class ForecastResult:
    times: np.ndarray  # days, absolute
    means: np.ndarray  # (n, 4)
    covs: np.ndarray  # (n, 4, 4)
    re_mean: np.ndarray
    re_var: np.ndarray

    def __len__(self):
        return len(self.times)

    @property
    def stds(self) -> np.ndarray:
        return np.sqrt(np.clip(np.diagonal(self.covs, axis1=1, axis2=2), 0.0, None))

    def beliefs(self) -> list[GaussianBelief]:
        return [GaussianBelief(m, c) for m, c in zip(self.means, self.covs)]


def forecast(belief: GaussianBelief, p: StaticParams, horizon_days: int) -> ForecastResult:
    """Propagate ``belief`` for ``horizon_days`` days, keeping one belief per day.

    The mean follows the noise-free model (so beta stays constant) while the
    covariance keeps growing through the random-walk term.
    """
    if horizon_days < 1:
        raise ParameterError(f"horizon_days must be >= 1, got {horizon_days}")
    per_day = steps_per_day(p.dt)
    mean = np.asarray(belief.mean, dtype=float).copy()
    cov = np.asarray(belief.cov, dtype=float).copy()
    t0 = belief.time_index * p.dt

    means = np.empty((horizon_days, 4))
    covs = np.empty((horizon_days, 4, 4))
    for day in range(horizon_days):
        for sub in range(per_day):
            mean, cov = propagate(mean, cov, p.dt, p.gamma, p.q_xi)
            if not (np.all(np.isfinite(mean)) and np.all(np.isfinite(cov))):
                raise DivergenceError("non-finite forecast", step=belief.time_index + day * per_day + sub + 1)
        means[day] = mean
        covs[day] = cov
    re_mean, re_var = re_moments(means, covs, p.gamma)
    times = t0 + np.arange(1, horizon_days + 1, dtype=float)
    return ForecastResult(times, means, covs, re_mean, re_var)


def forecast_ensemble(
    members: Sequence[tuple[GaussianBelief, StaticParams]], horizon_days: int
) -> ForecastResult:
    """Equal-weight mixture of forecasts, one per posterior draw.

    Each member pairs the final analysis belief obtained under one static
    parameter draw with that draw. Moments are combined with the law of
    total variance, so the result also carries static-parameter spread.
    """
    if not members:
        raise ParameterError("empty ensemble")
    runs = [forecast(b, p, horizon_days) for b, p in members]
    means = np.stack([r.means for r in runs])
    mix_mean = means.mean(axis=0)
    dev = means - mix_mean
    mix_cov = np.stack([r.covs for r in runs]).mean(axis=0) + np.einsum("mti,mtj->tij", dev, dev) / len(runs)
    re_means = np.stack([r.re_mean for r in runs])
    re_mean = re_means.mean(axis=0)
    re_var = np.stack([r.re_var for r in runs]).mean(axis=0) + re_means.var(axis=0)
    return ForecastResult(runs[0].times, mix_mean, mix_cov, re_mean, re_var)
