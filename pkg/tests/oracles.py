"""Reference implementations kept independent of the package code."""
import numpy as np

from epifilter.filtering import GaussianBelief
from epifilter.model import StaticParams
from epifilter.observations import ObservationSeries


def textbook_kalman(m0, P0, F, Q, H, noise_var, observations, n_steps):
    """Plain linear Kalman filter with matrix inverses.

    ``observations`` maps grid index -> scalar value. ``noise_var`` is called
    with the forecast mean to get the (possibly state-dependent) observation
    variance. Returns analysis means, analysis covariances and the total
    log marginal likelihood.
    """
    m = np.array(m0, dtype=float)
    P = np.array(P0, dtype=float)
    H = np.atleast_2d(H)
    means, covs, total = [], [], 0.0
    for k in range(n_steps + 1):
        if k > 0:
            m = F @ m
            P = F @ P @ F.T + Q
        if k in observations:
            y = np.atleast_1d(observations[k])
            S = H @ P @ H.T + np.atleast_2d(noise_var(m))
            K = P @ H.T @ np.linalg.inv(S)
            v = y - H @ m
            total += -0.5 * (len(y) * np.log(2 * np.pi) + np.log(np.linalg.det(S)) + v @ np.linalg.solve(S, v))
            m = m + K @ v
            P = (np.eye(len(m)) - K @ H) @ P
        means.append(m.copy())
        covs.append(P.copy())
    return np.array(means), np.array(covs), total


def random_spd(rng, n, scale):
    a = rng.normal(size=(n, n))
    return scale * (a @ a.T + n * np.eye(n)) / n


def linear_instance(rng, n_days=30):
    """EKF instance that is exactly linear: S and beta start at 0, uncorrelated with I and R.

    All bilinear terms then vanish along the whole run, so the EKF must
    reproduce a plain Kalman filter with the constant transition matrix.
    Observations are drawn around the model's own mean path. Returns
    ``(params, belief, observations, F, Q)``.
    """
    dt = float(rng.choice([0.1, 0.25, 0.5, 1.0]))
    gamma = rng.uniform(0.02, 0.3)
    p = StaticParams(
        rho=rng.uniform(0.1, 1.0), q_xi=rng.uniform(0.001, 0.05), beta0_mean=0.0, i0_mean=0.0,
        gamma=gamma, q_eps=rng.uniform(0.01, 0.2), dt=dt,
    )
    mean = np.array([0.0, rng.uniform(0.01, 0.2), rng.uniform(0.0, 0.3), 0.0])
    cov = np.zeros((4, 4))
    cov[np.ix_([1, 2], [1, 2])] = random_spd(rng, 2, 1e-4)
    cov[np.ix_([0, 3], [0, 3])] = random_spd(rng, 2, 1e-4)
    F = np.eye(4)
    F[1, 1] = 1 - dt * gamma
    F[2, 1] = dt * gamma
    Q = np.zeros((4, 4))
    Q[3, 3] = p.q_xi**2 * dt
    days = np.sort(rng.choice(np.arange(n_days), size=n_days // 2, replace=False)).astype(float)
    steps = np.rint(days / dt).astype(int)
    i_path = mean[1] * (1 - dt * gamma) ** steps
    values = p.rho * i_path * (1 + p.q_eps * rng.standard_normal(days.size))
    return p, GaussianBelief(mean, cov), ObservationSeries(days, values), F, Q
