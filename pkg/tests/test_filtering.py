import numpy as np
import pytest
from scipy.stats import norm

from epifilter.errors import AlignmentError, DegenerateUpdateError, DivergenceError, ParameterError
from epifilter.filtering import (
    GaussianBelief,
    InitialBeliefConfig,
    batch_log_likelihood,
    ekf_forecast,
    ekf_update,
    initial_belief,
    run_filter,
)
from epifilter.model import StaticParams, step_model
from epifilter.observations import ObservationSeries
from epifilter.synthgen import ScenarioConfig, generate

from oracles import linear_instance, random_spd, textbook_kalman

TRUE = StaticParams(rho=0.25, q_xi=0.005, beta0_mean=0.12, i0_mean=1e-3)


class TestForecast:
    def test_deterministic_limit(self):
        p = TRUE.with_values(q_xi=0.0)
        b = GaussianBelief([0.9, 0.05, 0.05, 0.2], np.zeros((4, 4)))
        out = ekf_forecast(b, p)
        np.testing.assert_array_equal(out.cov, np.zeros((4, 4)))
        np.testing.assert_allclose(out.mean, step_model(b.mean, p, 0.0), rtol=0, atol=0)
        assert out.time_index == 1

    def test_process_noise_only_on_beta(self):
        p = TRUE.with_values(dt=1.0)
        out = ekf_forecast(GaussianBelief([1, 0, 0, 0.12], np.zeros((4, 4))), p)
        expected = np.zeros((4, 4))
        expected[3, 3] = 2.5e-5
        np.testing.assert_allclose(out.cov, expected, rtol=1e-14, atol=0)

    def test_matches_linear_kalman_forecast(self):
        rng = np.random.default_rng(3)
        p, b, _, F, Q = linear_instance(rng)
        out = ekf_forecast(b, p)
        np.testing.assert_allclose(out.mean, F @ b.mean, atol=1e-12)
        np.testing.assert_allclose(out.cov, F @ b.cov @ F.T + Q, atol=1e-12)

    def test_divergence_reports_index(self):
        b = GaussianBelief([0.5, 0.5, 0.0, 1e308], np.eye(4), time_index=7)
        with pytest.raises(DivergenceError) as exc:
            ekf_forecast(b, TRUE)
        assert exc.value.step == 8


class TestUpdate:
    def test_confident_prior_leaves_belief(self):
        b = GaussianBelief([0.9, 0.004, 0.096, 0.1], np.zeros((4, 4)))
        out, ll = ekf_update(b, 0.0011, TRUE)
        np.testing.assert_array_equal(out.mean, b.mean)
        sd = 0.25 * 0.004 * 0.05
        assert ll == pytest.approx(norm.logpdf(0.0011, 0.001, sd), rel=1e-12)

    def test_uninformative_observation(self):
        b = GaussianBelief([0.9, 0.004, 0.096, 0.1], np.diag([1e-6, 1e-6, 0, 1e-4]))
        out, _ = ekf_update(b, 0.5, TRUE.with_values(q_eps=1e9))
        np.testing.assert_allclose(out.mean, b.mean, atol=1e-12)
        np.testing.assert_allclose(out.cov, b.cov, atol=1e-15)

    def test_scalar_closed_form(self):
        rng = np.random.default_rng(8)
        for _ in range(20):
            mean = np.array([0.6, rng.uniform(0.001, 0.1), 0.1, 0.2])
            cov = random_spd(rng, 4, 1e-4)
            rho, q_eps = rng.uniform(0.05, 1), rng.uniform(0.01, 0.3)
            p = TRUE.with_values(rho=rho, q_eps=q_eps)
            d = rng.uniform(0, 0.1)
            H = np.array([[0, rho, 0, 0]])
            m_ref, c_ref, ll_ref = textbook_kalman(
                mean, cov, np.eye(4), np.zeros((4, 4)), H,
                lambda m: (rho * m[1] * q_eps) ** 2, {0: d}, 0,
            )
            out, ll = ekf_update(GaussianBelief(mean, cov), d, p)
            np.testing.assert_allclose(out.mean, m_ref[0], rtol=0, atol=1e-12)
            np.testing.assert_allclose(out.cov, c_ref[0], rtol=0, atol=1e-12)
            assert ll == pytest.approx(ll_ref, abs=1e-12)

    def test_observed_variance_shrinks(self):
        rng = np.random.default_rng(4)
        for _ in range(50):
            cov = random_spd(rng, 4, 1e-3)
            b = GaussianBelief([0.6, rng.uniform(0.001, 0.2), 0.1, 0.2], cov)
            out, _ = ekf_update(b, 0.01, TRUE)
            assert out.cov[1, 1] <= b.cov[1, 1]

    def test_degenerate_variance(self):
        b = GaussianBelief([1.0, 0.0, 0.0, 0.1], np.zeros((4, 4)))
        with pytest.raises(DegenerateUpdateError):
            ekf_update(b, 0.01, TRUE)


class TestInitialBelief:
    def test_mean(self):
        b = initial_belief(TRUE)
        np.testing.assert_allclose(b.mean, [0.999, 0.001, 0.0, 0.12], rtol=1e-15)

    def test_default_spread(self):
        b = initial_belief(TRUE)
        assert b.std[1] == pytest.approx(5e-4)
        assert b.std[0] == pytest.approx(5e-4)
        assert b.std[3] == pytest.approx(0.03)
        assert b.cov[2, 2] == 0

    def test_zero_spread(self):
        b = initial_belief(TRUE, InitialBeliefConfig(sigma_s=0, sigma_i=0, sigma_beta=0))
        np.testing.assert_array_equal(b.cov, np.zeros((4, 4)))
        b = initial_belief(TRUE, InitialBeliefConfig(i_rel=0, beta_rel=0))
        np.testing.assert_array_equal(b.cov, np.zeros((4, 4)))

    def test_rejects_bad_values(self):
        with pytest.raises(ParameterError):
            initial_belief(TRUE.with_values(i0_mean=1.5))
        with pytest.raises(ParameterError):
            InitialBeliefConfig(sigma_i=-1)


class TestRunFilter:
    def test_no_data_is_pure_forecast(self):
        run = run_filter(TRUE, ObservationSeries([], []), initial_belief(TRUE), n_steps=50)
        assert run.loglik == 0
        np.testing.assert_array_equal(run.analysis_means, run.forecast_means)
        b = initial_belief(TRUE)
        for _ in range(50):
            b = ekf_forecast(b, TRUE)
        np.testing.assert_array_equal(run.analysis_means[-1], b.mean)
        np.testing.assert_array_equal(run.analysis_covs[-1], b.cov)

    def test_self_consistent_observation(self):
        p = TRUE.with_values(q_eps=1e-6)
        obs = ObservationSeries([0.0], [p.rho * p.i0_mean])
        run = run_filter(p, obs, initial_belief(p))
        assert run.analysis_means[0, 1] == pytest.approx(p.i0_mean, rel=1e-9)

    def test_off_grid_observation(self):
        with pytest.raises(AlignmentError):
            run_filter(TRUE, ObservationSeries([0.0, 1.05], [0.1, 0.1]), initial_belief(TRUE))

    def test_linear_gaussian_oracle(self):
        rng = np.random.default_rng(17)
        for _ in range(5):
            p, b, obs, F, Q = linear_instance(rng)
            idx = np.rint(obs.times / p.dt).astype(int)
            n_steps = int(idx[-1]) + 3
            H = np.array([[0, p.rho, 0, 0]])
            m_ref, c_ref, ll_ref = textbook_kalman(
                b.mean, b.cov, F, Q, H, lambda m: (p.rho * m[1] * p.q_eps) ** 2,
                dict(zip(idx, obs.values)), n_steps,
            )
            run = run_filter(p, obs, b, n_steps=n_steps)
            np.testing.assert_allclose(run.analysis_means, m_ref, rtol=0, atol=1e-10)
            np.testing.assert_allclose(run.analysis_covs, c_ref, rtol=0, atol=1e-10)
            assert run.loglik == pytest.approx(ll_ref, rel=1e-12)

    def test_symmetry_and_determinism(self, case1):
        obs = case1.observations
        run1 = run_filter(TRUE, obs, initial_belief(TRUE))
        run2 = run_filter(TRUE, obs, initial_belief(TRUE))
        assert run1.loglik == run2.loglik
        np.testing.assert_array_equal(run1.analysis_covs, run2.analysis_covs)
        for covs in (run1.analysis_covs, run1.forecast_covs):
            asym = np.abs(covs - np.swapaxes(covs, 1, 2)).max()
            assert asym <= 1e-12
        assert len(run1.innovations) == len(obs)
        assert np.all(run1.analysis_covs[run1.innovation_index, 1, 1]
                      <= run1.forecast_covs[run1.innovation_index, 1, 1])

    def test_tracks_true_beta(self, case1):
        run = run_filter(TRUE, case1.observations, initial_belief(TRUE))
        n = len(run.analysis_means)
        truth = case1.states[:n]
        sd = np.sqrt(run.analysis_covs[:, 3, 3])
        inside = np.abs(run.analysis_means[:, 3] - truth[:, 3]) <= 3 * sd
        assert inside.mean() >= 0.99

    def test_batch_matches_run_filter(self, case1):
        obs = case1.observations
        thetas = np.array([
            [0.25, 0.005, 0.12, 1e-3],
            [0.30, 0.008, 0.10, 2e-3],
            [0.20, 0.002, 0.15, 5e-4],
            [0.90, 0.100, 0.50, 1e-2],
        ])
        batch = batch_log_likelihood(thetas, obs, TRUE)
        for th, ll in zip(thetas, batch):
            p = StaticParams.from_vector(th)
            ref = run_filter(p, obs, initial_belief(p)).loglik
            assert ll == pytest.approx(ref, rel=1e-10, abs=1e-8)
        for th, ll in zip(thetas, batch_log_likelihood(thetas, obs, TRUE, printed_form=True)):
            p = StaticParams.from_vector(th)
            ref = run_filter(p, obs, initial_belief(p), printed_form=True).loglik
            assert ll == pytest.approx(ref, rel=1e-10, abs=1e-8)

    def test_batch_marks_infeasible_rows(self, case1):
        out = batch_log_likelihood(
            np.array([[0.25, 0.005, 0.12, 1.5], [np.nan, 0.005, 0.12, 1e-3], [0.25, 0.005, 0.12, 0.0]]),
            case1.observations, TRUE,
        )
        assert np.all(out == -np.inf)


@pytest.fixture(scope="module")
def case1():
    return generate(ScenarioConfig(kind="random_walk", seed=3))
