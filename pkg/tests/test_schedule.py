import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from diffcast.errors import ConfigError
from diffcast.schedule import (
    build_cosine_schedule,
    denoise_step_data,
    denoise_step_noise,
    forward_sample,
    noise_pred_from_data_pred,
    posterior_mean,
    recover_x0,
    schedule_from_beta,
    strided_subschedule,
)


@pytest.fixture(scope="module")
def sched():
    return build_cosine_schedule(100)


class TestBuildSchedule:
    def test_endpoints_exact(self, sched):
        assert sched.beta[1] == 1e-4
        assert sched.beta[100] == 0.1

    def test_midpoint_for_k3(self):
        s = build_cosine_schedule(3)
        assert s.beta[2] == pytest.approx(0.05005, abs=1e-12)

    def test_alpha_bar_first_step(self, sched):
        assert sched.alpha_bar[1] == 1.0 - 1e-4

    def test_monotonicity_and_range(self, sched):
        assert np.all(np.diff(sched.beta[1:]) > 0)
        assert np.all((sched.beta[1:] > 0) & (sched.beta[1:] < 1))
        assert np.all(np.diff(sched.alpha_bar) < 0)
        assert sched.sigma[1] == 0.0
        assert sched.beta_tilde[1] == 0.0

    def test_invalid_endpoints_rejected(self):
        with pytest.raises(ConfigError):
            build_cosine_schedule(10, 0.1, 0.1)
        with pytest.raises(ConfigError):
            build_cosine_schedule(10, -1e-4, 0.1)
        with pytest.raises(ConfigError):
            build_cosine_schedule(1)

    @settings(max_examples=30, deadline=None)
    @given(k=st.integers(2, 300),
           start=st.floats(1e-6, 1e-2),
           spread=st.floats(1.5, 100.0))
    def test_monotone_for_any_valid_endpoints(self, k, start, spread):
        end = min(start * spread, 0.999)
        s = build_cosine_schedule(k, start, end)
        assert np.all(np.diff(s.beta[1:]) > 0)
        assert np.all(np.diff(s.alpha_bar) < 0)
        assert np.all((s.alpha_bar > 0) & (s.alpha_bar <= 1))


class TestForwardAndRecover:
    def test_zero_noise_limit(self, sched):
        x0 = np.array([2.0, -1.0])
        out = forward_sample(x0, 7, sched, np.zeros(2))
        np.testing.assert_allclose(out, np.sqrt(sched.alpha_bar[7]) * x0)

    def test_scalar_direct_arithmetic(self):
        # custom two-step schedule whose first alpha_bar is exactly 0.25
        s = schedule_from_beta(np.array([0.75, 0.9]))
        assert s.alpha_bar[1] == pytest.approx(0.25)
        out = forward_sample(np.array(1.0), 1, s, np.array(1.0))
        assert out == pytest.approx(0.5 + np.sqrt(0.75), abs=1e-12)

    def test_terminal_step_mostly_noise(self, sched):
        assert np.sqrt(sched.alpha_bar[100]) < 0.1

    def test_round_trip_inverse_at_every_step(self, sched):
        rng = np.random.default_rng(0)
        x0 = rng.standard_normal((3, 5))
        eps = rng.standard_normal((3, 5))
        worst = max(np.abs(recover_x0(forward_sample(x0, k, sched, eps), k, sched, eps) - x0).max()
                    for k in range(1, 101))
        assert worst < 1e-10

    def test_recover_with_zero_noise(self, sched):
        xk = np.array([1.0, 2.0])
        np.testing.assert_allclose(recover_x0(xk, 9, sched, np.zeros(2)),
                                   xk / np.sqrt(sched.alpha_bar[9]))

    def test_step_out_of_range(self, sched):
        with pytest.raises(ConfigError):
            forward_sample(np.zeros(2), 0, sched, np.zeros(2))
        with pytest.raises(ConfigError):
            forward_sample(np.zeros(2), 101, sched, np.zeros(2))


class TestPosteriorMean:
    def test_first_step_collapses_to_x0(self, sched):
        x0 = np.array([3.0, -1.0])
        np.testing.assert_allclose(posterior_mean(x0, np.array([9.0, 9.0]), 1, sched), x0, atol=1e-12)

    def test_scalar_evaluation_against_direct_formula(self, sched):
        k, v = 42, 1.7
        ab_k, ab_prev = sched.alpha_bar[k], sched.alpha_bar[k - 1]
        expected = v * (np.sqrt(ab_prev) * sched.beta[k] + np.sqrt(sched.alpha[k]) * (1 - ab_prev)) / (1 - ab_k)
        assert posterior_mean(np.array(v), np.array(v), k, sched) == pytest.approx(expected, rel=1e-14)

    def test_linearity(self, sched):
        rng = np.random.default_rng(1)
        x0, xk = rng.standard_normal(4), rng.standard_normal(4)
        np.testing.assert_allclose(posterior_mean(2 * x0, 2 * xk, 10, sched),
                                   2 * posterior_mean(x0, xk, 10, sched), rtol=1e-12)


class TestDenoiseSteps:
    def test_k1_with_oracle_returns_x0_exactly(self, sched):
        rng = np.random.default_rng(2)
        x0 = rng.standard_normal(5)
        out = denoise_step_data(rng.standard_normal(5), 1, x0, sched, None)
        np.testing.assert_allclose(out, x0, atol=1e-12)

    def test_oracle_iteration_reconstructs_x0(self, sched):
        rng = np.random.default_rng(3)
        x0 = rng.standard_normal((2, 4))
        x = rng.standard_normal((2, 4))
        for k in range(100, 0, -1):
            x = denoise_step_data(x, k, x0, sched, None)
        assert np.abs(x - x0).max() < 1e-8

    def test_zero_prediction_single_term(self, sched):
        xk = np.array([1.0, -2.0])
        k = 30
        coef = np.sqrt(sched.alpha[k]) * (1 - sched.alpha_bar[k - 1]) / (1 - sched.alpha_bar[k])
        np.testing.assert_allclose(denoise_step_data(xk, k, np.zeros(2), sched, None), coef * xk)

    def test_noise_step_zero_prediction(self, sched):
        xk = np.array([2.0])
        np.testing.assert_allclose(denoise_step_noise(xk, 5, np.zeros(1), sched, None),
                                   xk / np.sqrt(sched.alpha[5]))

    def test_noise_step_zero_everything(self, sched):
        assert denoise_step_noise(np.zeros(3), 10, np.zeros(3), sched, None).max() == 0.0

    def test_parameterization_equivalence_at_every_step(self, sched):
        # converting a data prediction into its implied noise must give the
        # same backward mean under either parameterization
        rng = np.random.default_rng(4)
        worst = 0.0
        for k in range(1, 101):
            xk = rng.standard_normal(3)
            x0p = rng.standard_normal(3)
            eps_p = noise_pred_from_data_pred(xk, k, x0p, sched)
            mean_noise = denoise_step_noise(xk, k, eps_p, sched, None)
            mean_data = posterior_mean(x0p, xk, k, sched)
            worst = max(worst, np.abs(mean_noise - mean_data).max())
        assert worst < 1e-10

    def test_composite_jump_matches_two_single_steps_for_oracle(self, sched):
        # with the oracle prediction and no noise, jumping k -> k-2 equals
        # two consecutive exact steps
        rng = np.random.default_rng(5)
        x0 = rng.standard_normal(4)
        xk = rng.standard_normal(4)
        two = denoise_step_data(denoise_step_data(xk, 50, x0, sched, None), 49, x0, sched, None)
        one = denoise_step_data(xk, 50, x0, sched, None, k_to=48)
        np.testing.assert_allclose(one, two, atol=1e-10)


class TestStridedSubschedule:
    def test_full_identity(self, sched):
        assert strided_subschedule(sched, 100) == list(range(100, 0, -1))

    def test_two_steps_keeps_endpoints(self, sched):
        assert strided_subschedule(sched, 2) == [100, 1]

    def test_even_spacing_example(self, sched):
        assert strided_subschedule(sched, 4) == [100, 67, 34, 1]

    def test_too_many_steps_rejected(self, sched):
        with pytest.raises(ConfigError):
            strided_subschedule(sched, 101)

    @settings(max_examples=50, deadline=None)
    @given(k=st.integers(2, 200), data=st.data())
    def test_strictly_decreasing_with_endpoints(self, k, data):
        steps = data.draw(st.integers(2, k))
        s = build_cosine_schedule(k)
        ks = strided_subschedule(s, steps)
        assert ks[0] == k and ks[-1] == 1
        assert all(a > b for a, b in zip(ks, ks[1:]))
