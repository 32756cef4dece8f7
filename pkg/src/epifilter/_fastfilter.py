"""Compiled per-sample EKF likelihood used by the sampler.

Same arithmetic as the numpy kernels in :mod:`epifilter.filtering`, written
out for the sparse model Jacobian so one pass over the grid costs a few
dozen flops per step.
"""
import math

import numpy as np
from numba import njit

_LOG_2PI = math.log(2.0 * math.pi)


@njit(cache=True)
def _loglik_one(rho, q_xi, beta0, i0, var_s, var_i, var_b, obs_idx, obs_val, last, dt, gamma, q_eps, printed_form):
    s = 1.0 - i0
    i = i0
    r = 0.0
    b = beta0
    P = np.zeros((4, 4))
    P[0, 0] = var_s
    P[1, 1] = var_i
    P[3, 3] = var_b
    M = np.empty((4, 4))
    qq = q_xi * q_xi * dt
    q2 = q_eps * q_eps
    cs = 1.0 if printed_form else rho
    total = 0.0
    j = 0
    n_obs = obs_idx.shape[0]
    for k in range(last + 1):
        if k > 0:
            a00 = 1.0 - dt * i * b
            a01 = -dt * s * b
            a03 = -dt * s * i
            a10 = dt * i * b
            a11 = 1.0 + dt * (s * b - gamma)
            a13 = dt * s * i
            a21 = dt * gamma
            infection = dt * b * s * i
            removal = dt * gamma * i
            s, i, r = s - infection, i + infection - removal, r + removal
            # M = A P
            for c in range(4):
                p0 = P[0, c]
                p1 = P[1, c]
                p3 = P[3, c]
                M[0, c] = a00 * p0 + a01 * p1 + a03 * p3
                M[1, c] = a10 * p0 + a11 * p1 + a13 * p3
                M[2, c] = a21 * p1 + P[2, c]
                M[3, c] = p3
            # P = M A^T
            for rr in range(4):
                m0 = M[rr, 0]
                m1 = M[rr, 1]
                m3 = M[rr, 3]
                P[rr, 0] = m0 * a00 + m1 * a01 + m3 * a03
                P[rr, 1] = m0 * a10 + m1 * a11 + m3 * a13
                P[rr, 2] = m1 * a21 + M[rr, 2]
                P[rr, 3] = m3
            P[3, 3] += qq
            for rr in range(4):
                for c in range(rr + 1, 4):
                    v = 0.5 * (P[rr, c] + P[c, rr])
                    P[rr, c] = v
                    P[c, rr] = v
            if not (math.isfinite(i) and math.isfinite(P[1, 1]) and math.isfinite(b)):
                return -np.inf
        while j < n_obs and obs_idx[j] == k:
            h = rho * i
            dj = cs * i
            variance = cs * cs * P[1, 1] + dj * dj * q2
            if not (variance > 0.0) or not math.isfinite(variance):
                return -np.inf
            resid = obs_val[j] - h
            total += -0.5 * (_LOG_2PI + math.log(variance) + resid * resid / variance)
            g0 = cs * P[0, 1] / variance
            g1 = cs * P[1, 1] / variance
            g2 = cs * P[2, 1] / variance
            g3 = cs * P[3, 1] / variance
            s += g0 * resid
            i += g1 * resid
            r += g2 * resid
            b += g3 * resid
            pc0 = cs * P[0, 1]
            pc1 = cs * P[1, 1]
            pc2 = cs * P[2, 1]
            pc3 = cs * P[3, 1]
            g = (g0, g1, g2, g3)
            pc = (pc0, pc1, pc2, pc3)
            for rr in range(4):
                for c in range(4):
                    P[rr, c] -= g[rr] * pc[c]
            for rr in range(4):
                for c in range(rr + 1, 4):
                    v = 0.5 * (P[rr, c] + P[c, rr])
                    P[rr, c] = v
                    P[c, rr] = v
            j += 1
    if not math.isfinite(total):
        return -np.inf
    return total


@njit(cache=True)
def loglik_rows(theta, var_s, var_i, var_b, obs_idx, obs_val, last, dt, gamma, q_eps, printed_form):
    n = theta.shape[0]
    out = np.empty(n)
    for row in range(n):
        rho = theta[row, 0]
        out[row] = _loglik_one(
            rho, theta[row, 1], theta[row, 2], theta[row, 3],
            var_s[row], var_i[row], var_b[row],
            obs_idx, obs_val, last, dt, gamma, q_eps,
            printed_form,
        )
    return out
