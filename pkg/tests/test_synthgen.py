import logging

import numpy as np
import pytest

from epifilter.errors import ConfigError
from epifilter.synthgen import (
    ScenarioConfig,
    generate,
    integrate_sir,
    lockdown_base,
    lockdown_beta,
    observe_truth,
    seasonal_beta,
)


def refined_removed(beta_coarse, cfg, factor=10):
    """Independent integration on a grid ``factor`` times finer, beta held per coarse step."""
    h = cfg.dt / factor
    s, i, r = 1.0 - cfg.i0, cfg.i0, 0.0
    for b in beta_coarse:
        for _ in range(factor):
            s, i, r = s - h * b * s * i, i + h * (b * s * i - cfg.gamma * i), r + h * cfg.gamma * i
    return r


class TestRandomWalk:
    def test_zero_noise_is_constant(self):
        truth = generate(ScenarioConfig(kind="random_walk", q_xi_true=0.0, seed=1))
        assert np.all(truth.states[:, 3] == 0.12)

    def test_conservation(self):
        for seed in range(3):
            truth = generate(ScenarioConfig(kind="random_walk", seed=seed))
            assert np.abs(truth.states[:, :3].sum(axis=1) - 1).max() <= 1e-14

    def test_refinement_oracle(self):
        cfg = ScenarioConfig(kind="random_walk", seed=3)
        truth = generate(cfg)
        fine = refined_removed(truth.states[:-1, 3], cfg)
        assert abs(truth.states[-1, 2] - fine) <= 1e-3

    def test_seed_determinism(self):
        a = generate(ScenarioConfig(kind="random_walk", seed=5))
        b = generate(ScenarioConfig(kind="random_walk", seed=5))
        assert a.states.tobytes() == b.states.tobytes()
        assert a.observations.values.tobytes() == b.observations.values.tobytes()
        c = generate(ScenarioConfig(kind="random_walk", seed=6))
        assert not np.array_equal(a.states, c.states)

    def test_clipping_logged(self, caplog):
        with caplog.at_level(logging.WARNING):
            truth = generate(ScenarioConfig(kind="random_walk", beta0=0.001, q_xi_true=0.05, seed=0))
        assert truth.n_clipped > 0
        assert np.all(truth.states[:, 3] >= 0)
        assert "clipped" in caplog.text


class TestSeasonal:
    def test_initial_value(self):
        assert seasonal_beta(0.0, ScenarioConfig(kind="seasonal")) == pytest.approx(0.1551, abs=1e-15)

    def test_peak(self):
        cfg = ScenarioConfig(kind="seasonal")
        assert seasonal_beta(365 / 4, cfg) == pytest.approx(0.1551 + 0.04, abs=1e-15)

    def test_zero_amplitude(self):
        truth = generate(ScenarioConfig(kind="seasonal", amplitude=0.0))
        np.testing.assert_array_equal(truth.states[:, 3], 0.1551)

    def test_phase_keeps_initial_value(self):
        cfg = ScenarioConfig(kind="seasonal", phase=1.0)
        assert seasonal_beta(0.0, cfg) == pytest.approx(0.1551, abs=1e-15)

    def test_negative_rate_rejected(self):
        with pytest.raises(ConfigError):
            generate(ScenarioConfig(kind="seasonal", amplitude=0.2))


class TestLockdown:
    def test_initial_value(self):
        cfg = ScenarioConfig(kind="lockdown")
        assert abs(lockdown_beta(0.0, cfg) - 0.14) <= 1e-4
        assert generate(cfg).states[0, 3] == pytest.approx(0.14, abs=1e-4)

    def test_zero_drop(self):
        truth = generate(ScenarioConfig(kind="lockdown", drop=0.0))
        np.testing.assert_allclose(truth.states[:, 3], 0.14, rtol=0, atol=1e-15)

    def test_late_times_return_to_base(self):
        cfg = ScenarioConfig(kind="lockdown")
        assert abs(lockdown_beta(2000.0, cfg) - lockdown_base(cfg)) <= 1e-3

    def test_shape(self):
        cfg = ScenarioConfig(kind="lockdown")
        assert lockdown_beta(100.0, cfg) < lockdown_beta(0.0, cfg) - 0.06
        assert lockdown_beta(300.0, cfg) > lockdown_beta(120.0, cfg)

    def test_negative_rate_rejected(self):
        with pytest.raises(ConfigError):
            generate(ScenarioConfig(kind="lockdown", drop=0.5))


class TestObservations:
    def test_recorded_noise_reproduces_data(self):
        for kind in ("random_walk", "seasonal", "lockdown", "constant"):
            truth = generate(ScenarioConfig(kind=kind, seed=2))
            i = truth.states[truth.obs_index, 1]
            np.testing.assert_array_equal(truth.observations.values, 0.25 * i * (1 + truth.eps))

    def test_daily_grid_alignment(self):
        truth = generate(ScenarioConfig(kind="constant", duration=30))
        np.testing.assert_array_equal(truth.obs_index, np.arange(30) * 10)
        np.testing.assert_allclose(truth.observations.times, np.arange(30.0))
        assert len(truth.times) == 301

    def test_noise_free(self):
        states = generate(ScenarioConfig(kind="constant", duration=20)).states
        series, _, idx = observe_truth(states, 0.25, 0.0, 0)
        np.testing.assert_array_equal(series.values, 0.25 * states[idx, 1])

    def test_zero_detection(self):
        states = generate(ScenarioConfig(kind="constant", duration=20)).states
        series, _, _ = observe_truth(states, 0.0, 0.05, 0)
        assert np.all(series.values == 0)

    def test_noise_variance(self):
        truth = generate(ScenarioConfig(kind="random_walk", seed=3))
        i = truth.states[truth.obs_index, 1]
        ratio = truth.observations.values / (0.25 * i) - 1
        assert len(ratio) == 365
        assert ratio.var(ddof=1) == pytest.approx(0.05**2, rel=0.3)

    def test_sub_daily(self):
        truth = generate(ScenarioConfig(kind="constant", duration=3, obs_per_day=2))
        np.testing.assert_allclose(truth.observations.times, [0, 0.5, 1, 1.5, 2, 2.5])
        with pytest.raises(ConfigError):
            generate(ScenarioConfig(kind="constant", duration=3, obs_per_day=3))

    def test_empty_trajectory(self):
        with pytest.raises(ConfigError):
            observe_truth(np.empty((0, 4)), 0.25, 0.05, 0)


def test_integrate_sir_matches_hand_step():
    out = integrate_sir(0.999, 0.001, 0.0, [0.12], 1 / 14, 1.0)
    np.testing.assert_allclose(out[1], [0.99888012, 0.00104845, 0.00007143], atol=5e-9)


def test_config_validation():
    with pytest.raises(ConfigError):
        ScenarioConfig(kind="sawtooth")
    with pytest.raises(ConfigError):
        ScenarioConfig(duration=0)
    with pytest.raises(ConfigError):
        ScenarioConfig(rho_true=-0.1)
