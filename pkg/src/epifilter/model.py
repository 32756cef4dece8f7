"""Stochastic SIR model with a random-walk infection rate.

The augmented state is ``(s, i, r, beta)`` with compartments stored as
population fractions. Everything here is a pure function of its inputs.
"""
from __future__ import annotations

from dataclasses import dataclass, replace
from typing import NamedTuple

import numpy as np

from .errors import InvalidStateError, ParameterError

S, I, R, BETA = 0, 1, 2, 3
STATE_DIM = 4

DEFAULT_GAMMA = 1.0 / 14.0
DEFAULT_Q_EPS = 0.05
DEFAULT_DT = 0.1

SAMPLED_PARAMS = ("rho", "q_xi", "beta0_mean", "i0_mean")


class AugmentedState(NamedTuple):
    s: float
    i: float
    r: float
    beta: float

    def to_array(self) -> np.ndarray:
        return np.array(self, dtype=float)


@dataclass(frozen=True)
class StaticParams:
    """Time-invariant parameters of the filter.

    ``rho``, ``q_xi``, ``beta0_mean`` and ``i0_mean`` are inferred; ``gamma``,
    ``q_eps`` and ``dt`` are fixed constants.
    """

    rho: float
    q_xi: float
    beta0_mean: float
    i0_mean: float
    gamma: float = DEFAULT_GAMMA
    q_eps: float = DEFAULT_Q_EPS
    dt: float = DEFAULT_DT

    def __post_init__(self):
        if not self.dt > 0:
            raise ParameterError(f"dt must be positive, got {self.dt}")
        if not self.gamma > 0:
            raise ParameterError(f"gamma must be positive, got {self.gamma}")
        if self.q_eps < 0:
            raise ParameterError(f"q_eps must be non-negative, got {self.q_eps}")

    @classmethod
    def from_vector(cls, theta, **fixed) -> "StaticParams":
        """Build from ``(rho, q_xi, beta0_mean, i0_mean)`` plus fixed constants."""
        return cls(*(float(v) for v in theta), **fixed)

    def to_vector(self) -> np.ndarray:
        return np.array([getattr(self, k) for k in SAMPLED_PARAMS])

    def with_values(self, **kw) -> "StaticParams":
        return replace(self, **kw)


class ModelJacobians(NamedTuple):
    a: np.ndarray  # (4, 4)
    b: np.ndarray  # (4, 1)


class MeasurementJacobians(NamedTuple):
    c: np.ndarray  # (1, 4)
    d: np.ndarray  # (1, 1)


def _check_finite(x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != STATE_DIM:
        raise InvalidStateError(f"state must have {STATE_DIM} components, got shape {x.shape}")
    if not np.all(np.isfinite(x)):
        raise InvalidStateError(f"non-finite state {x}")
    return x


def step_model(x, p: StaticParams, noise: float = 0.0) -> AugmentedState:
    """One forward-Euler step of the augmented SIR dynamics.

    ``noise`` is the standard-normal draw driving the infection-rate random
    walk; pass 0 for the mean (noise-free) propagation.
    """
    s, i, r, beta = _check_finite(x)
    dt = p.dt
    infection = dt * beta * s * i
    removal = dt * p.gamma * i
    return AugmentedState(
        s - infection,
        i + infection - removal,
        r + removal,
        beta + p.q_xi * np.sqrt(dt) * noise,
    )


def jacobians_model(x, p: StaticParams) -> ModelJacobians:
    s, i, _, beta = _check_finite(x)
    dt = p.dt
    a = np.array(
        [
            [1.0 - dt * i * beta, -dt * s * beta, 0.0, -dt * s * i],
            [dt * i * beta, 1.0 + dt * (s * beta - p.gamma), 0.0, dt * s * i],
            [0.0, dt * p.gamma, 1.0, 0.0],
            [0.0, 0.0, 0.0, 1.0],
        ]
    )
    b = np.array([[0.0], [0.0], [0.0], [p.q_xi * np.sqrt(dt)]])
    return ModelJacobians(a, b)


def measure(x, rho: float, eps: float = 0.0) -> float:
    """Detected active-case fraction ``rho * i * (1 + eps)``."""
    return rho * x[I] * (1.0 + eps)


def jacobians_measurement(x_forecast, rho: float, printed_form: bool = False) -> MeasurementJacobians:
    """Jacobians of :func:`measure` with respect to the state and the noise.

    With ``printed_form=True`` the detection ratio is dropped from both
    matrices, i.e. ``C = (0, 1, 0, 0)`` and ``D = (i)``, which is only
    consistent with the measurement operator when ``rho == 1``.
    """
    scale = 1.0 if printed_form else rho
    c = np.array([[0.0, scale, 0.0, 0.0]])
    d = np.array([[scale * x_forecast[I]]])
    return MeasurementJacobians(c, d)


def effective_reproduction(s, beta, gamma):
    if np.any(np.asarray(gamma) <= 0):
        raise ParameterError(f"gamma must be positive, got {gamma}")
    return s * beta / gamma


def re_moments(mean, cov, gamma: float) -> tuple[float, float]:
    """First-order mean and variance of ``R_e = S * beta / gamma``.

    ``mean`` and ``cov`` describe a Gaussian belief over the augmented state.
    Also works on stacked beliefs with shapes ``(..., 4)`` and ``(..., 4, 4)``.
    """
    if gamma <= 0:
        raise ParameterError(f"gamma must be positive, got {gamma}")
    mean = np.asarray(mean, dtype=float)
    cov = np.asarray(cov, dtype=float)
    s, beta = mean[..., S], mean[..., BETA]
    p_ss = cov[..., S, S]
    p_bb = cov[..., BETA, BETA]
    p_sb = cov[..., S, BETA]
    re_mean = s * beta / gamma
    re_var = (beta**2 * p_ss + s**2 * p_bb + 2.0 * s * beta * p_sb) / gamma**2
    return re_mean, re_var
